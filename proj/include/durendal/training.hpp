#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "durendal/decoders.hpp"
#include "durendal/metrics.hpp"
#include "durendal/temporal.hpp"

namespace durendal::train {

struct LiveUpdateConfig {
    double validation_fraction = 0.2;
    int patience = 3;
    int max_epochs = 50;
    int negative_ratio = 1;
    bool multirelational = false;
    int target_relation = -1;  // monorelational tasks
    std::uint64_t seed = 1;
    unsigned threads = 1;

    void validate() const {
        if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
            throw ConfigError("config: validation fraction must lie in (0,1)");
        if (patience < 1) throw ConfigError("config: patience must be >= 1");
        if (max_epochs < 0) throw ConfigError("config: max epochs must be >= 0");
        if (negative_ratio < 1) throw ConfigError("config: negative ratio must be >= 1");
        if (!multirelational && target_relation < 0)
            throw ConfigError("config: monorelational runs need target_relation");
    }
};

// ---------------------------------------------------------------------------
// Negative sampling: corrupt the destination endpoint, excluding the
// snapshot's positive set for the relation. Layout is per-positive: entry
// i*ratio+j is the j-th negative of positive i.
// ---------------------------------------------------------------------------

inline std::vector<Edge> sample_negatives(const TemporalHeteroGraph& g, int t, int relation,
                                          std::span<const Edge> positives, int ratio,
                                          std::uint64_t seed, const std::string& label) {
    if (positives.empty()) throw ContractError("sample_negatives: no positives given");
    const HeteroSnapshot& s = g.snapshot(t);
    const Relation& rel = g.relations[relation];
    std::size_t n_dst = s.node_count[rel.dst_type];
    std::unordered_set<std::uint64_t> known;
    std::vector<std::size_t> out_degree(s.node_count[rel.src_type], 0);
    for (const Edge& e : s.edges[relation]) {
        known.insert((static_cast<std::uint64_t>(e.src) << 32) | e.dst);
        ++out_degree[e.src];
    }
    RngStream rng(seed, label);
    std::vector<Edge> negatives;
    negatives.reserve(positives.size() * static_cast<std::size_t>(ratio));
    for (const Edge& pos : positives) {
        if (out_degree[pos.src] >= n_dst)
            throw SamplingError("sample_negatives: node " + std::to_string(pos.src) +
                                " of relation '" + rel.name + "' has no free destination");
        for (int j = 0; j < ratio; ++j) {
            std::uint32_t dst = 0;
            while (true) {
                dst = static_cast<std::uint32_t>(rng.next_below(n_dst));
                if (!known.count((static_cast<std::uint64_t>(pos.src) << 32) | dst)) break;
            }
            negatives.push_back({pos.src, dst});
        }
    }
    return negatives;
}

// ---------------------------------------------------------------------------
// Scoring. Training scores live on the tape (gradients flow); evaluation
// goes through a plain Scorer so oracles and baselines share the same
// metric pipeline.
// ---------------------------------------------------------------------------

using Scorer = std::function<std::vector<double>(int relation, std::span<const Edge> pairs)>;

/// Candidate scores as probabilities, on the tape. HadamardMLP scores pair
/// embeddings directly; the ComplEx decoder splits encoder outputs into
/// real/imaginary halves and scores the Hermitian product with learned
/// relation embeddings, squashed through a sigmoid.
inline Var scores_on_tape(Tape& t, ParamLease& P, DurendalModel& m, const std::map<int, Var>& h,
                          int relation, std::span<const Edge> pairs) {
    const Relation& rel = m.relations()[relation];
    std::vector<std::size_t> srcs, dsts;
    srcs.reserve(pairs.size());
    dsts.reserve(pairs.size());
    for (const Edge& e : pairs) {
        srcs.push_back(e.src);
        dsts.push_back(e.dst);
    }
    Var hu = t.gather_rows(h.at(rel.src_type), srcs);
    Var hv = t.gather_rows(h.at(rel.dst_type), dsts);
    if (m.spec().decoder == DecoderKind::HadamardMlp) {
        decoders::HadamardMlpVars dv{P["dec/had/w1"], P["dec/had/b1"], P["dec/had/w2"],
                                     P["dec/had/b2"]};
        return decoders::hadamard_mlp_scores(t, dv, hu, hv);
    }
    std::size_t half = m.spec().dim / 2;
    Var s_re = t.slice_cols(hu, 0, half);
    Var s_im = t.slice_cols(hu, half, 2 * half);
    Var o_re = t.slice_cols(hv, 0, half);
    Var o_im = t.slice_cols(hv, half, 2 * half);
    std::size_t n = pairs.size();
    Var r_re = t.broadcast_rows(t.gather_rows(P["dec/cx/rel_re"], {static_cast<std::size_t>(
                                                                      relation)}),
                                n);
    Var r_im = t.broadcast_rows(t.gather_rows(P["dec/cx/rel_im"], {static_cast<std::size_t>(
                                                                      relation)}),
                                n);
    Var raw = decoders::complex_trilinear_rows(t, s_re, s_im, r_re, r_im, o_re, o_im);
    return t.sigmoid(raw);
}

/// Scorer over frozen per-type embedding matrices (the post-training state
/// of a snapshot). Nodes beyond the matrices' rows are unseen at scoring
/// time and contribute zero embeddings.
inline Scorer make_embedding_scorer(DurendalModel& m, std::map<int, Tensor> embeddings) {
    auto emb = std::make_shared<std::map<int, Tensor>>(std::move(embeddings));
    return [&m, emb](int relation, std::span<const Edge> pairs) {
        Tape t;
        ParamLease P(t, m);
        std::map<int, Var> h;
        const Relation& rel = m.relations()[relation];
        for (int type : {rel.src_type, rel.dst_type}) {
            Tensor mat = emb->at(type);
            std::size_t need = 0;
            for (const Edge& e : pairs)
                need = std::max<std::size_t>(
                    need, 1 + (type == rel.src_type ? e.src : e.dst));
            if (mat.rows() < need) {
                mat.values.resize(need * mat.cols(), 0.0);
                mat.shape[0] = need;
            }
            h[type] = t.constant(std::move(mat));
        }
        Var scores = scores_on_tape(t, P, m, h, relation, pairs);
        return t.val(scores).values;
    };
}

// ---------------------------------------------------------------------------
// Per-relation evaluation on one snapshot.
// ---------------------------------------------------------------------------

struct RelationEval {
    int relation = -1;
    double auprc = 0.0;
    double mrr = 0.0;
    std::size_t positives = 0;
};

inline RelationEval evaluate_relation(const Scorer& scorer, const TemporalHeteroGraph& g,
                                      int t_eval, int relation, int ratio, std::uint64_t seed) {
    const std::vector<Edge>& positives = g.snapshot(t_eval).edges[relation];
    RelationEval out;
    out.relation = relation;
    out.positives = positives.size();
    if (positives.empty()) return out;
    std::vector<Edge> negatives =
        sample_negatives(g, t_eval, relation, positives, ratio, seed,
                         "evalneg/t" + std::to_string(t_eval) + "/r" + std::to_string(relation));
    std::vector<double> pos_scores = scorer(relation, positives);
    std::vector<double> neg_scores = scorer(relation, negatives);
    std::vector<double> scores = pos_scores;
    scores.insert(scores.end(), neg_scores.begin(), neg_scores.end());
    std::vector<double> labels(pos_scores.size(), 1.0);
    labels.resize(scores.size(), 0.0);
    out.auprc = metrics::auprc(scores, labels);
    std::vector<metrics::RankGroup> groups(positives.size());
    for (std::size_t i = 0; i < positives.size(); ++i) {
        groups[i].positive_score = pos_scores[i];
        for (int j = 0; j < ratio; ++j)
            groups[i].negative_scores.push_back(neg_scores[i * ratio + j]);
    }
    out.mrr = metrics::mrr(groups);
    return out;
}

struct MultirelationalResult {
    std::vector<RelationEval> per_relation;  // only relations with positives
    double avg_auprc = 0.0;
    double avg_mrr = 0.0;
};

/// Per-relation metrics on a test snapshot, averaged with equal weight over
/// the relations that have at least one positive. Relations empty in the
/// snapshot are excluded from the average.
inline MultirelationalResult multirelational_eval(const Scorer& scorer,
                                                  const TemporalHeteroGraph& g, int t_eval,
                                                  int ratio, std::uint64_t seed) {
    MultirelationalResult out;
    std::size_t total_edges = 0;
    for (const auto& es : g.snapshot(t_eval).edges) total_edges += es.size();
    if (total_edges == 0)
        throw UndefinedMetricError("multirelational_eval: snapshot " + std::to_string(t_eval) +
                                   " has no edges");
    for (const Relation& rel : g.relations) {
        RelationEval e = evaluate_relation(scorer, g, t_eval, rel.id, ratio, seed);
        if (e.positives == 0) continue;
        out.per_relation.push_back(e);
    }
    for (const RelationEval& e : out.per_relation) {
        out.avg_auprc += e.auprc;
        out.avg_mrr += e.mrr;
    }
    out.avg_auprc /= static_cast<double>(out.per_relation.size());
    out.avg_mrr /= static_cast<double>(out.per_relation.size());
    return out;
}

// ---------------------------------------------------------------------------
// Snapshot training with early stopping.
// ---------------------------------------------------------------------------

struct TrainResult {
    int epochs = 0;
    std::map<int, Tensor> embeddings;  // post-training state of the snapshot
};

namespace detail {

struct SupervisedRelation {
    int relation = -1;
    std::vector<Edge> train_pos;
    std::vector<Edge> val_pos;
    std::vector<Edge> val_neg;
};

inline double validation_auprc(Tape& t, ParamLease& P, DurendalModel& m,
                               const std::map<int, Var>& h,
                               const std::vector<SupervisedRelation>& sup) {
    double acc = 0.0;
    int counted = 0;
    for (const auto& sr : sup) {
        if (sr.val_pos.empty()) continue;
        std::vector<double> scores =
            t.val(scores_on_tape(t, P, m, h, sr.relation, sr.val_pos)).values;
        std::vector<double> neg =
            t.val(scores_on_tape(t, P, m, h, sr.relation, sr.val_neg)).values;
        scores.insert(scores.end(), neg.begin(), neg.end());
        std::vector<double> labels(sr.val_pos.size(), 1.0);
        labels.resize(scores.size(), 0.0);
        acc += metrics::auprc(scores, labels);
        ++counted;
    }
    return counted == 0 ? 0.0 : acc / counted;
}

}  // namespace detail

/// Live-update step 1-2 on snapshot t: split the snapshot's supervised
/// edges 80/20, optimize BCE on the train split with fresh negatives each
/// epoch, early-stop on validation AUPRC, restore the best parameters, then
/// advance the store through t and return the resulting embeddings.
inline TrainResult train_snapshot(DurendalModel& m, NodeStateStore& store,
                                  const TemporalHeteroGraph& g, int t_snap,
                                  const LiveUpdateConfig& cfg) {
    cfg.validate();
    if (store.scheme() != m.spec().scheme)
        throw ContractError("train_snapshot: store/model scheme mismatch");

    std::vector<int> relations;
    if (cfg.multirelational) {
        for (const Relation& r : m.relations()) relations.push_back(r.id);
    } else {
        relations.push_back(cfg.target_relation);
    }

    std::vector<detail::SupervisedRelation> sup;
    for (int rid : relations) {
        const std::vector<Edge>& edges = g.snapshot(t_snap).edges[rid];
        if (edges.empty()) continue;
        detail::SupervisedRelation sr;
        sr.relation = rid;
        std::vector<Edge> shuffled = edges;
        RngStream rng(cfg.seed, "split/t" + std::to_string(t_snap) + "/r" + std::to_string(rid));
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
        std::size_t n_val =
            static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(edges.size()));
        sr.val_pos.assign(shuffled.begin(), shuffled.begin() + n_val);
        sr.train_pos.assign(shuffled.begin() + n_val, shuffled.end());
        if (!sr.val_pos.empty())
            sr.val_neg = sample_negatives(g, t_snap, rid, sr.val_pos, cfg.negative_ratio,
                                          cfg.seed,
                                          "valneg/t" + std::to_string(t_snap) + "/r" +
                                              std::to_string(rid));
        sup.push_back(std::move(sr));
    }

    TrainResult result;
    bool any_train = false;
    for (const auto& sr : sup) any_train |= !sr.train_pos.empty();

    if (any_train && cfg.max_epochs > 0) {
        std::map<std::string, AdamState> adam;
        std::map<std::string, AdagradState> adagrad;
        double best_val = -1.0;
        std::map<std::string, std::vector<double>> best_params;
        int bad_epochs = 0;

        for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            Tape t;
            StoreStates states(store, false);
            ParamLease P(t, m);
            std::map<int, Var> h = model_forward(t, m, g, t_snap, states);

            std::vector<Var> score_parts;
            std::vector<double> labels;
            for (const auto& sr : sup) {
                if (sr.train_pos.empty()) continue;
                std::vector<Edge> neg = sample_negatives(
                    g, t_snap, sr.relation, sr.train_pos, cfg.negative_ratio, cfg.seed,
                    "trainneg/t" + std::to_string(t_snap) + "/r" + std::to_string(sr.relation) +
                        "/e" + std::to_string(epoch));
                score_parts.push_back(scores_on_tape(t, P, m, h, sr.relation, sr.train_pos));
                labels.insert(labels.end(), sr.train_pos.size(), 1.0);
                score_parts.push_back(scores_on_tape(t, P, m, h, sr.relation, neg));
                labels.insert(labels.end(), neg.size(), 0.0);
            }
            Var loss = t.bce_loss(t.concat_rows(score_parts), labels);
            m.zero_grad();
            t.backward(loss);

            for (auto& [label, param] : m.parameters()) {
                if (m.spec().optimizer == OptimizerKind::Adam) {
                    AdamState& s = adam[label];
                    if (s.m.empty()) {
                        s.lr = m.spec().learning_rate;
                        s.weight_decay = m.spec().weight_decay;
                    }
                    adam_step(s, *param, param->grad);
                } else {
                    AdagradState& s = adagrad[label];
                    if (s.accum.empty()) {
                        s.lr = m.spec().learning_rate;
                        s.weight_decay = m.spec().weight_decay;
                    }
                    adagrad_step(s, *param, param->grad);
                }
            }
            result.epochs = epoch;

            Tape vt;
            StoreStates vstates(store, false);
            ParamLease VP(vt, m);
            std::map<int, Var> vh = model_forward(vt, m, g, t_snap, vstates);
            double val = detail::validation_auprc(vt, VP, m, vh, sup);
            if (val > best_val) {
                best_val = val;
                best_params = m.values_snapshot();
                bad_epochs = 0;
            } else if (++bad_epochs >= cfg.patience) {
                break;
            }
        }
        if (!best_params.empty()) m.restore(best_params);
    }

    result.embeddings = forward_embeddings(m, g, t_snap, store, /*commit=*/true);
    return result;
}

// ---------------------------------------------------------------------------
// The live-update protocol and its report.
// ---------------------------------------------------------------------------

struct SnapshotMetrics {
    int snapshot = 0;  // evaluated snapshot (t+1)
    bool skipped = false;
    double auprc = 0.0;
    double mrr = 0.0;
    std::vector<RelationEval> per_relation;  // multirelational runs
    int epochs = 0;
    double seconds = 0.0;
};

struct RunReport {
    std::map<std::string, std::string> config_echo;
    std::uint64_t seed = 0;
    std::vector<SnapshotMetrics> snapshots;
    double avg_auprc = 0.0;
    double avg_mrr = 0.0;

    /// Canonical serialization: deterministic given seed and inputs (no
    /// timing). Bit-identity comparisons use exactly these bytes.
    nlohmann::ordered_json to_json(bool include_timing) const {
        nlohmann::ordered_json j;
        j["seed"] = seed;
        j["config"] = config_echo;
        j["snapshots"] = nlohmann::ordered_json::array();
        for (const SnapshotMetrics& s : snapshots) {
            nlohmann::ordered_json e;
            e["snapshot"] = s.snapshot;
            e["skipped"] = s.skipped;
            if (!s.skipped) {
                e["auprc"] = s.auprc;
                e["mrr"] = s.mrr;
                e["epochs"] = s.epochs;
                if (!s.per_relation.empty()) {
                    nlohmann::ordered_json pr = nlohmann::ordered_json::array();
                    for (const RelationEval& r : s.per_relation) {
                        nlohmann::ordered_json re;
                        re["relation"] = r.relation;
                        re["auprc"] = r.auprc;
                        re["mrr"] = r.mrr;
                        re["positives"] = r.positives;
                        pr.push_back(re);
                    }
                    e["per_relation"] = pr;
                }
                if (include_timing) e["seconds"] = s.seconds;
            }
            j["snapshots"].push_back(e);
        }
        j["averages"] = {{"auprc", avg_auprc}, {"mrr", avg_mrr}};
        return j;
    }

    std::string canonical_json() const { return to_json(false).dump(2) + "\n"; }
    std::string full_json() const { return to_json(true).dump(2) + "\n"; }

    /// Flat rows for plotting; skipped snapshots carry no row.
    std::string to_csv() const {
        std::string out = "snapshot,auprc,mrr,epochs,seconds\n";
        char buf[160];
        for (const SnapshotMetrics& s : snapshots) {
            if (s.skipped) continue;
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d,%.3f\n", s.snapshot, s.auprc,
                          s.mrr, s.epochs, s.seconds);
            out += buf;
        }
        return out;
    }
};

inline std::map<std::string, std::string> config_echo(const ModelSpec& spec,
                                                      const LiveUpdateConfig& cfg,
                                                      const TemporalHeteroGraph& g) {
    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%g", v);
        return std::string(buf);
    };
    std::map<std::string, std::string> e;
    e["scheme"] = spec.scheme == Scheme::Uta ? "uta" : "atu";
    e["layers"] = std::to_string(spec.num_layers);
    e["dim"] = std::to_string(spec.dim);
    e["featureless_dim"] = std::to_string(spec.input_width_featureless());
    e["aggregation"] = spec.aggregation == Aggregation::Sum ? "sum" : "attention";
    e["attention_dim"] = std::to_string(spec.attention_dim);
    e["neighbor_mean"] = spec.neighbor_mean ? "1" : "0";
    e["update"] = spec.update == UpdateKind::Gru
                      ? "gru"
                      : (spec.update == UpdateKind::ConcatMlp ? "mlp" : "avg");
    e["alpha"] = fmt(spec.alpha);
    e["decoder"] = spec.decoder == DecoderKind::HadamardMlp ? "hadamard" : "complex";
    e["optimizer"] = spec.optimizer == OptimizerKind::Adam ? "adam" : "adagrad";
    e["lr"] = fmt(spec.learning_rate);
    e["weight_decay"] = fmt(spec.weight_decay);
    e["val_fraction"] = fmt(cfg.validation_fraction);
    e["patience"] = std::to_string(cfg.patience);
    e["max_epochs"] = std::to_string(cfg.max_epochs);
    e["neg_ratio"] = std::to_string(cfg.negative_ratio);
    e["task"] = cfg.multirelational ? "multi" : "mono";
    e["target_relation"] =
        cfg.multirelational ? "" : g.relations[cfg.target_relation].name;
    e["seed"] = std::to_string(cfg.seed);
    return e;
}

/// Live-update steps 1-5: for t = 1..T-1, fine-tune on snapshot t, then
/// score snapshot t+1's edges with the post-t embeddings. Test snapshots
/// without target positives are marked skipped. Averages run over the
/// evaluated snapshots.
inline RunReport live_update_run(const ModelSpec& spec, const TemporalHeteroGraph& g,
                                 const LiveUpdateConfig& cfg) {
    cfg.validate();
    spec.validate();
    int T = temporality(g);
    if (T < 2) throw ContractError("live_update_run: need at least 2 snapshots");
    if (T < 4)
        std::fprintf(stderr,
                     "warning: temporality %d is below the dataset requirement of 4\n", T);

    DurendalModel model(spec, g, cfg.seed);
    NodeStateStore store(spec.scheme);
    RunReport report;
    report.seed = cfg.seed;
    report.config_echo = config_echo(spec, cfg, g);

    for (int t = 1; t <= T - 1; ++t) {
        auto t0 = std::chrono::steady_clock::now();
        TrainResult tr = train_snapshot(model, store, g, t, cfg);
        // Prediction on t+1 conditions on the post-t states and the test
        // snapshot's own message passing (the store does not advance; the
        // next training step owns that).
        std::map<int, Tensor> eval_emb = forward_embeddings(model, g, t + 1, store, false);
        Scorer scorer = make_embedding_scorer(model, eval_emb);

        SnapshotMetrics sm;
        sm.snapshot = t + 1;
        sm.epochs = tr.epochs;
        if (cfg.multirelational) {
            std::size_t total = 0;
            for (const auto& es : g.snapshot(t + 1).edges) total += es.size();
            if (total == 0) {
                sm.skipped = true;
            } else {
                MultirelationalResult r =
                    multirelational_eval(scorer, g, t + 1, cfg.negative_ratio, cfg.seed);
                sm.auprc = r.avg_auprc;
                sm.mrr = r.avg_mrr;
                sm.per_relation = r.per_relation;
            }
        } else {
            RelationEval r = evaluate_relation(scorer, g, t + 1, cfg.target_relation,
                                               cfg.negative_ratio, cfg.seed);
            if (r.positives == 0) {
                sm.skipped = true;
            } else {
                sm.auprc = r.auprc;
                sm.mrr = r.mrr;
            }
        }
        sm.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.snapshots.push_back(std::move(sm));
    }

    int counted = 0;
    for (const SnapshotMetrics& s : report.snapshots) {
        if (s.skipped) continue;
        report.avg_auprc += s.auprc;
        report.avg_mrr += s.mrr;
        ++counted;
    }
    if (counted > 0) {
        report.avg_auprc /= counted;
        report.avg_mrr /= counted;
    }
    return report;
}

}  // namespace durendal::train
