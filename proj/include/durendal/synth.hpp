#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "durendal/errors.hpp"
#include "durendal/graph.hpp"
#include "durendal/rng.hpp"

namespace durendal::synth {

struct SynthNodeType {
    std::string name;
    std::size_t count = 0;
};

struct SynthRelation {
    std::string name;
    std::string src_type;
    std::string dst_type;
    bool directed = true;
};

/// Trigger edge (u,v) under `trigger` at snapshot t implies a `target` edge
/// (u,v) at t+1 with the given probability. Snapshot 1 bootstraps the rule
/// from its own trigger edges so the signal exists from the first test
/// snapshot onwards.
struct SynthRule {
    std::string trigger;
    std::string target;
    double probability = 1.0;
};

struct SynthSpec {
    std::vector<SynthNodeType> node_types;
    std::vector<SynthRelation> relations;
    int snapshots = 6;
    SynthRule rule;
    double noise_rate = 0.0;                 // extra uniform edges, as a fraction of the
                                             // structured edges per (relation, snapshot)
    std::map<std::string, int> periods;      // relation -> period (default 1 = every snapshot)
    std::size_t triggers_per_src = 3;        // activity edges drawn per source node
    std::size_t feature_dim = 16;            // identifying per-node features (0 = none)
    std::uint64_t seed = 1;

    void validate() const {
        if (node_types.empty()) throw ConfigError("synth: no node types");
        for (const auto& nt : node_types)
            if (nt.count == 0) throw ConfigError("synth: node type '" + nt.name + "' has count 0");
        if (relations.size() < 2)
            throw ConfigError("synth: need at least 2 relations to meet the heterogeneity "
                              "requirement");
        if (snapshots < 4)
            throw ConfigError("synth: need at least 4 snapshots to meet the temporality "
                              "requirement, got " + std::to_string(snapshots));
        if (rule.probability < 0.0 || rule.probability > 1.0)
            throw ConfigError("synth: rule probability must lie in [0,1]");
        if (rule.trigger == rule.target)
            throw ConfigError("synth: rule trigger and target must be distinct relations");
        auto find_rel = [&](const std::string& n) -> const SynthRelation* {
            for (const auto& r : relations)
                if (r.name == n) return &r;
            return nullptr;
        };
        const SynthRelation* trig = find_rel(rule.trigger);
        const SynthRelation* targ = find_rel(rule.target);
        if (!trig) throw ConfigError("synth: rule trigger '" + rule.trigger + "' not declared");
        if (!targ) throw ConfigError("synth: rule target '" + rule.target + "' not declared");
        if (trig->src_type != targ->src_type || trig->dst_type != targ->dst_type)
            throw ConfigError("synth: rule trigger and target must share endpoint types");
        if (noise_rate < 0.0) throw ConfigError("synth: noise rate must be non-negative");
        for (const auto& [name, p] : periods) {
            if (p < 1) throw ConfigError("synth: period for '" + name + "' must be >= 1");
            if (!find_rel(name)) throw ConfigError("synth: period for undeclared relation '" +
                                                   name + "'");
        }
    }
};

/// Which candidate pairs the rule implied per snapshot, and which of those
/// actually materialized. Index 0 corresponds to snapshot 1.
struct SynthOracle {
    std::vector<std::vector<Edge>> implied;
    std::vector<std::vector<Edge>> fired;
};

struct SynthResult {
    TemporalHeteroGraph graph;
    SynthOracle oracle;
};

namespace detail {

inline std::vector<Edge> draw_activity(const SynthSpec& spec, const SynthRelation& rel,
                                       std::size_t n_src, std::size_t n_dst, int t) {
    std::vector<Edge> edges;
    std::size_t k = std::min(spec.triggers_per_src, n_dst);
    for (std::uint32_t u = 0; u < n_src; ++u) {
        RngStream rng(spec.seed, "activity/" + rel.name + "/" + std::to_string(t) + "/" +
                                     std::to_string(u));
        std::set<std::uint32_t> picked;
        int guard = 0;
        while (picked.size() < k && guard++ < 200)
            picked.insert(static_cast<std::uint32_t>(rng.next_below(n_dst)));
        for (std::uint32_t v : picked) edges.push_back({u, v});
    }
    return edges;
}

inline void add_noise(const SynthSpec& spec, const SynthRelation& rel, std::size_t n_src,
                      std::size_t n_dst, int t, std::vector<Edge>& edges) {
    std::size_t structured = edges.size();
    std::size_t want = static_cast<std::size_t>(
        std::llround(spec.noise_rate * static_cast<double>(structured)));
    if (want == 0) return;
    std::set<Edge> seen(edges.begin(), edges.end());
    RngStream rng(spec.seed, "noise/" + rel.name + "/" + std::to_string(t));
    std::size_t added = 0, tries = 0;
    while (added < want && tries++ < want * 20) {
        Edge e{static_cast<std::uint32_t>(rng.next_below(n_src)),
               static_cast<std::uint32_t>(rng.next_below(n_dst))};
        if (seen.insert(e).second) {
            edges.push_back(e);
            ++added;
        }
    }
}

}  // namespace detail

/// Deterministic planted-rule generator. Structure is decided with integer
/// draws from per-(relation, snapshot) streams, so output is identical
/// regardless of thread count or platform.
inline SynthResult synth_generate(const SynthSpec& spec, unsigned threads = 1) {
    spec.validate();
    SynthResult out;
    TemporalHeteroGraph& g = out.graph;
    for (const auto& nt : spec.node_types)
        g.node_types.push_back({static_cast<int>(g.node_types.size()), nt.name,
                                spec.feature_dim});
    for (const auto& r : spec.relations)
        g.relations.push_back({static_cast<int>(g.relations.size()), r.name,
                               g.type_id(r.src_type), g.type_id(r.dst_type), r.directed});
    g.time_granularity_label = "synthetic";

    for (int t = 1; t <= spec.snapshots; ++t) {
        HeteroSnapshot s;
        s.index = t;
        for (const auto& nt : spec.node_types) s.node_count.push_back(nt.count);
        s.features.resize(g.node_types.size());
        s.edges.resize(g.relations.size());
        g.snapshots.push_back(std::move(s));
    }

    if (spec.feature_dim > 0)
        for (const auto& nt : g.node_types) {
            Tensor f = Tensor::zeros(spec.node_types[nt.id].count, spec.feature_dim);
            RngStream rng(spec.seed, "features/" + nt.name);
            for (auto& v : f.values) v = rng.next_double(-1.0, 1.0);
            for (auto& s : g.snapshots) s.features[nt.id] = f;
        }

    auto period_of = [&](const std::string& name) {
        auto it = spec.periods.find(name);
        return it == spec.periods.end() ? 1 : it->second;
    };
    auto active = [&](const SynthRelation& r, int t) {
        return (t - 1) % period_of(r.name) == 0;
    };

    // Phase 1: every relation except the rule target draws activity edges.
    int target_rid = g.relation_id(spec.rule.target);
    int trigger_rid = g.relation_id(spec.rule.trigger);
    std::vector<int> phase1;
    for (const auto& r : g.relations)
        if (r.id != target_rid) phase1.push_back(r.id);

    auto run_phase1 = [&](int rid) {
        const SynthRelation& rel = spec.relations[rid];
        std::size_t n_src = g.snapshots[0].node_count[g.relations[rid].src_type];
        std::size_t n_dst = g.snapshots[0].node_count[g.relations[rid].dst_type];
        for (int t = 1; t <= spec.snapshots; ++t) {
            if (!active(rel, t)) continue;
            std::vector<Edge> edges = detail::draw_activity(spec, rel, n_src, n_dst, t);
            detail::add_noise(spec, rel, n_src, n_dst, t, edges);
            std::sort(edges.begin(), edges.end());
            edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
            g.snapshots[t - 1].edges[rid] = std::move(edges);
        }
    };
    if (threads > 1 && phase1.size() > 1) {
        std::vector<std::thread> pool;
        std::size_t stride = std::max<std::size_t>(1, threads);
        for (std::size_t w = 0; w < stride; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < phase1.size(); i += stride) run_phase1(phase1[i]);
            });
        for (auto& th : pool) th.join();
    } else {
        for (int rid : phase1) run_phase1(rid);
    }

    // Phase 2: the target relation fires off the trigger edges of the
    // previous snapshot (snapshot 1 bootstraps from its own triggers).
    const SynthRelation& target_rel = spec.relations[target_rid];
    std::size_t tn_src = g.snapshots[0].node_count[g.relations[target_rid].src_type];
    std::size_t tn_dst = g.snapshots[0].node_count[g.relations[target_rid].dst_type];
    out.oracle.implied.resize(spec.snapshots);
    out.oracle.fired.resize(spec.snapshots);
    for (int t = 1; t <= spec.snapshots; ++t) {
        if (!active(target_rel, t)) continue;
        int source_t = t == 1 ? 1 : t - 1;
        const std::vector<Edge>& triggers = g.snapshots[source_t - 1].edges[trigger_rid];
        std::vector<Edge> fired;
        RngStream rng(spec.seed, "rule/" + std::to_string(t));
        for (const Edge& e : triggers) {
            out.oracle.implied[t - 1].push_back(e);
            if (rng.next_double() < spec.rule.probability) fired.push_back(e);
        }
        out.oracle.fired[t - 1] = fired;
        detail::add_noise(spec, target_rel, tn_src, tn_dst, t, fired);
        std::sort(fired.begin(), fired.end());
        fired.erase(std::unique(fired.begin(), fired.end()), fired.end());
        g.snapshots[t - 1].edges[target_rid] = std::move(fired);
    }

    g.validate();
    return out;
}

/// Brute-force planted-rule predictor: score 1 when the trigger edge held
/// in the previous snapshot, else 0. The known-optimal baseline for
/// acceptance experiments.
class RulePredictor {
public:
    RulePredictor(const TemporalHeteroGraph& g, int trigger_relation)
        : sets_(g.num_snapshots()) {
        for (std::size_t t = 0; t < g.num_snapshots(); ++t)
            for (const Edge& e : g.snapshots[t].edges[trigger_relation])
                sets_[t].insert((static_cast<std::uint64_t>(e.src) << 32) | e.dst);
    }

    /// Score for a candidate (u,v) edge in snapshot t (1-based).
    double score(int t, std::uint32_t u, std::uint32_t v) const {
        int prev = t - 1;
        if (prev < 1) return 0.0;
        const auto& s = sets_[prev - 1];
        return s.count((static_cast<std::uint64_t>(u) << 32) | v) ? 1.0 : 0.0;
    }

private:
    std::vector<std::unordered_set<std::uint64_t>> sets_;
};

}  // namespace durendal::synth
