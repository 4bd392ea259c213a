#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "durendal/errors.hpp"
#include "durendal/tensor.hpp"

namespace durendal {

struct NodeType {
    int id = 0;
    std::string name;
    std::size_t feature_dim = 0;  // 0 = featureless
};

struct Relation {
    int id = 0;
    std::string name;
    int src_type = 0;
    int dst_type = 0;
    bool directed = true;
};

struct Edge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// One time slice: per-type node counts, per-type optional feature
/// matrices, per-relation edge lists. Node identity is global and stable;
/// new nodes append, so counts are non-decreasing across snapshots.
struct HeteroSnapshot {
    int index = 1;  // 1-based
    std::vector<std::size_t> node_count;            // by node-type id
    std::vector<std::optional<Tensor>> features;    // by node-type id
    std::vector<std::vector<Edge>> edges;           // by relation id

    friend bool operator==(const HeteroSnapshot& a, const HeteroSnapshot& b) {
        if (a.index != b.index || a.node_count != b.node_count || a.edges != b.edges) return false;
        if (a.features.size() != b.features.size()) return false;
        for (std::size_t i = 0; i < a.features.size(); ++i) {
            if (a.features[i].has_value() != b.features[i].has_value()) return false;
            if (!a.features[i]) continue;
            const Tensor& x = *a.features[i];
            const Tensor& y = *b.features[i];
            if (x.shape != y.shape) return false;
            if (std::memcmp(x.values.data(), y.values.data(), x.values.size() * sizeof(double)))
                return false;  // bit-exact, round-trips must not drift
        }
        return true;
    }
};

/// Which endpoint of a relation a queried node index refers to.
enum class EndpointSide { Src, Dst };

struct TemporalHeteroGraph {
    std::vector<NodeType> node_types;
    std::vector<Relation> relations;
    std::vector<HeteroSnapshot> snapshots;
    std::string time_granularity_label;

    std::size_t num_types() const { return node_types.size(); }
    std::size_t num_relations() const { return relations.size(); }
    std::size_t num_snapshots() const { return snapshots.size(); }

    const HeteroSnapshot& snapshot(int t) const {
        if (t < 1 || static_cast<std::size_t>(t) > snapshots.size())
            throw IndexError("snapshot index " + std::to_string(t) + " out of 1.." +
                             std::to_string(snapshots.size()));
        return snapshots[static_cast<std::size_t>(t) - 1];
    }

    int type_id(const std::string& name) const {
        for (const auto& nt : node_types)
            if (nt.name == name) return nt.id;
        throw SchemaError("unknown node type '" + name + "'");
    }

    int relation_id(const std::string& name) const {
        for (const auto& r : relations)
            if (r.name == name) return r.id;
        throw SchemaError("unknown relation '" + name + "'");
    }

    /// Checks every structural invariant; throws ValidationError on the
    /// first violation.
    void validate() const {
        for (std::size_t i = 0; i < node_types.size(); ++i) {
            if (node_types[i].id != static_cast<int>(i))
                throw ValidationError("node type ids must be dense 0..|A|-1");
            for (std::size_t j = 0; j < i; ++j)
                if (node_types[j].name == node_types[i].name)
                    throw ValidationError("duplicate node type name '" + node_types[i].name + "'");
        }
        for (std::size_t i = 0; i < relations.size(); ++i) {
            const Relation& r = relations[i];
            if (r.id != static_cast<int>(i))
                throw ValidationError("relation ids must be dense 0..|R|-1");
            if (r.src_type < 0 || r.src_type >= static_cast<int>(node_types.size()) ||
                r.dst_type < 0 || r.dst_type >= static_cast<int>(node_types.size()))
                throw ValidationError("relation '" + r.name + "' references an unknown node type");
            for (std::size_t j = 0; j < i; ++j)
                if (relations[j].name == r.name && relations[j].src_type == r.src_type &&
                    relations[j].dst_type == r.dst_type)
                    throw ValidationError("duplicate relation '" + r.name + "'");
        }
        std::vector<std::size_t> prev_counts(node_types.size(), 0);
        for (std::size_t si = 0; si < snapshots.size(); ++si) {
            const HeteroSnapshot& s = snapshots[si];
            if (s.index != static_cast<int>(si) + 1)
                throw ValidationError("snapshots must be ordered and contiguous from 1");
            if (s.node_count.size() != node_types.size() || s.edges.size() != relations.size() ||
                s.features.size() != node_types.size())
                throw ValidationError("snapshot " + std::to_string(s.index) +
                                      ": per-type/per-relation arrays have wrong length");
            for (std::size_t a = 0; a < node_types.size(); ++a) {
                if (s.node_count[a] < prev_counts[a])
                    throw ValidationError("node count of type '" + node_types[a].name +
                                          "' decreases at snapshot " + std::to_string(s.index));
                prev_counts[a] = s.node_count[a];
                if (s.features[a]) {
                    if (node_types[a].feature_dim == 0)
                        throw ValidationError("features given for featureless type '" +
                                              node_types[a].name + "'");
                    if (s.features[a]->rows() != s.node_count[a] ||
                        s.features[a]->cols() != node_types[a].feature_dim)
                        throw ValidationError("feature matrix of type '" + node_types[a].name +
                                              "' at snapshot " + std::to_string(s.index) +
                                              " is " + s.features[a]->shape_str() + ", want " +
                                              std::to_string(s.node_count[a]) + "x" +
                                              std::to_string(node_types[a].feature_dim));
                }
            }
            for (const Relation& r : relations) {
                std::unordered_set<std::uint64_t> seen;
                for (const Edge& e : s.edges[r.id]) {
                    if (e.src >= s.node_count[r.src_type] || e.dst >= s.node_count[r.dst_type])
                        throw ValidationError("edge (" + std::to_string(e.src) + "," +
                                              std::to_string(e.dst) + ") of relation '" + r.name +
                                              "' out of node range at snapshot " +
                                              std::to_string(s.index));
                    std::uint64_t key = (static_cast<std::uint64_t>(e.src) << 32) | e.dst;
                    if (!seen.insert(key).second)
                        throw ValidationError("duplicate edge (" + std::to_string(e.src) + "," +
                                              std::to_string(e.dst) + ") of relation '" + r.name +
                                              "' at snapshot " + std::to_string(s.index));
                }
            }
        }
    }

    /// Distinct (relation, src, dst) triples across all snapshots.
    std::size_t distinct_edge_count() const {
        std::unordered_set<std::uint64_t> seen;
        for (const auto& s : snapshots)
            for (std::size_t r = 0; r < s.edges.size(); ++r)
                for (const Edge& e : s.edges[r])
                    seen.insert((static_cast<std::uint64_t>(r) << 48) ^
                                (static_cast<std::uint64_t>(e.src) << 24) ^ e.dst);
        return seen.size();
    }

    friend bool operator==(const TemporalHeteroGraph& a, const TemporalHeteroGraph& b) {
        auto type_eq = [](const NodeType& x, const NodeType& y) {
            return x.id == y.id && x.name == y.name && x.feature_dim == y.feature_dim;
        };
        auto rel_eq = [](const Relation& x, const Relation& y) {
            return x.id == y.id && x.name == y.name && x.src_type == y.src_type &&
                   x.dst_type == y.dst_type && x.directed == y.directed;
        };
        return std::equal(a.node_types.begin(), a.node_types.end(), b.node_types.begin(),
                          b.node_types.end(), type_eq) &&
               std::equal(a.relations.begin(), a.relations.end(), b.relations.begin(),
                          b.relations.end(), rel_eq) &&
               a.snapshots == b.snapshots &&
               a.time_granularity_label == b.time_granularity_label;
    }
};

struct DatasetMetrics {
    int heterogeneity = 0;
    int temporality = 0;
    double evolutivity_raw = 0.0;
    double evolutivity_normalized = 0.0;
    bool meets_requirements = false;
};

inline int heterogeneity(const TemporalHeteroGraph& g) {
    return static_cast<int>(g.num_relations());
}

inline int temporality(const TemporalHeteroGraph& g) {
    return static_cast<int>(g.num_snapshots());
}

/// Average links per snapshot: (sum_t |E_t|) / (T-1), and that divided by
/// the number of distinct edges overall.
inline std::pair<double, double> evolutivity(const TemporalHeteroGraph& g) {
    std::size_t T = g.num_snapshots();
    if (T < 2) throw UndefinedMetricError("evolutivity needs at least 2 snapshots");
    std::size_t total = 0;
    for (const auto& s : g.snapshots)
        for (const auto& es : s.edges) total += es.size();
    double raw = static_cast<double>(total) / static_cast<double>(T - 1);
    std::size_t distinct = g.distinct_edge_count();
    double normalized = distinct == 0 ? 0.0 : raw / static_cast<double>(distinct);
    return {raw, normalized};
}

/// Alternative reading counting only previously unseen links, averaged over
/// T-1 and divided by |E|. Diagnostic only; requirements use the literal
/// formula above.
inline double evolutivity_novel(const TemporalHeteroGraph& g) {
    std::size_t T = g.num_snapshots();
    if (T < 2) throw UndefinedMetricError("evolutivity needs at least 2 snapshots");
    std::unordered_set<std::uint64_t> seen;
    std::size_t novel = 0;
    for (const auto& s : g.snapshots)
        for (std::size_t r = 0; r < s.edges.size(); ++r)
            for (const Edge& e : s.edges[r])
                if (seen.insert((static_cast<std::uint64_t>(r) << 48) ^
                                (static_cast<std::uint64_t>(e.src) << 24) ^ e.dst)
                        .second)
                    ++novel;
    double raw = static_cast<double>(novel) / static_cast<double>(T - 1);
    return seen.empty() ? 0.0 : raw / static_cast<double>(seen.size());
}

/// Reports, never throws: heterogeneity >= 2, temporality >= 4, and
/// timestamped edges (evolutivity defined, >= 0).
inline DatasetMetrics check_requirements(const TemporalHeteroGraph& g) {
    DatasetMetrics m;
    m.heterogeneity = heterogeneity(g);
    m.temporality = temporality(g);
    if (m.temporality >= 2) {
        auto [raw, norm] = evolutivity(g);
        m.evolutivity_raw = raw;
        m.evolutivity_normalized = norm;
    } else {
        m.evolutivity_raw = std::nan("");
        m.evolutivity_normalized = std::nan("");
    }
    m.meets_requirements = m.heterogeneity >= 2 && m.temporality >= 4 &&
                           std::isfinite(m.evolutivity_raw) && m.evolutivity_raw >= 0.0;
    return m;
}

/// Neighbourhood of node v under relation r at snapshot t, from the message
/// -receiver view by default: sources of edges ending at v. For undirected
/// relations the edge list is mirrored, so a node sees both endpoints; when
/// the two endpoint types differ, `side` says which endpoint space v's
/// index lives in.
inline std::vector<std::uint32_t> neighborhood(const TemporalHeteroGraph& g, int t, int r,
                                               std::uint32_t v,
                                               EndpointSide side = EndpointSide::Dst) {
    if (r < 0 || r >= static_cast<int>(g.num_relations()))
        throw IndexError("relation id " + std::to_string(r) + " out of range");
    const HeteroSnapshot& s = g.snapshot(t);
    const Relation& rel = g.relations[r];
    std::size_t limit = side == EndpointSide::Dst ? s.node_count[rel.dst_type]
                                                  : s.node_count[rel.src_type];
    if (v >= limit)
        throw IndexError("node index " + std::to_string(v) + " out of range for relation '" +
                         rel.name + "'");
    std::vector<std::uint32_t> out;
    bool same_type = rel.src_type == rel.dst_type;
    for (const Edge& e : s.edges[r]) {
        if (side == EndpointSide::Dst) {
            if (e.dst == v) out.push_back(e.src);
            if (!rel.directed && same_type && e.src == v) out.push_back(e.dst);
        } else {
            if (e.src == v) out.push_back(e.dst);
            if (!rel.directed && same_type && e.dst == v) out.push_back(e.src);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace durendal
