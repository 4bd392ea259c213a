#pragma once

#include <functional>
#include <string>
#include <vector>

#include "durendal/decoders.hpp"
#include "durendal/layers.hpp"
#include "durendal/temporal.hpp"
#include "durendal/training.hpp"

namespace durendal::gradcheck {

struct Entry {
    std::string name;
    std::function<double()> run;  // max relative error vs central differences
};

namespace detail {

inline Tensor seeded(std::size_t r, std::size_t c, std::uint64_t seed, const std::string& label) {
    Tensor t = Tensor::zeros(r, c, true);
    RngStream rng(seed, label);
    for (auto& v : t.values) v = rng.next_double(-0.8, 0.8);
    return t;
}

inline Var weighted_sum(Tape& t, Var v, std::uint64_t seed, const std::string& label) {
    const Tensor& x = t.val(v);
    Tensor w = Tensor::zeros(x.rows(), x.cols());
    RngStream rng(seed, label);
    for (auto& e : w.values) e = rng.next_double(-1.0, 1.0);
    return t.sum(t.elementwise_mul(v, t.constant(std::move(w))));
}

inline double check(const std::function<Var(Tape&, std::vector<Var>&)>& build,
                    std::vector<Tensor>& params) {
    auto run = [&](bool with_grad) {
        Tape t;
        std::vector<Var> leased;
        leased.reserve(params.size());
        for (Tensor& p : params) leased.push_back(t.param(p));
        Var loss = build(t, leased);
        if (with_grad) t.backward(loss);
        return t.val(loss).values[0];
    };
    std::vector<Tensor*> ptrs;
    for (Tensor& p : params) ptrs.push_back(&p);
    return grad_check(run, ptrs, 1e-5);
}

inline TemporalHeteroGraph toy_graph() {
    TemporalHeteroGraph g;
    g.node_types = {{0, "a", 3}, {1, "b", 0}};
    g.relations = {{0, "r0", 0, 1, true}, {1, "r1", 0, 1, false}};
    g.time_granularity_label = "toy";
    for (int t = 1; t <= 2; ++t) {
        HeteroSnapshot s;
        s.index = t;
        s.node_count = {3, 2};
        s.features.resize(2);
        Tensor f = Tensor::zeros(3, 3);
        RngStream rng(5, "toyfeat");
        for (auto& v : f.values) v = rng.next_double(-1.0, 1.0);
        s.features[0] = std::move(f);
        s.edges.resize(2);
        if (t == 1) {
            s.edges[0] = {{0, 1}, {2, 0}};
            s.edges[1] = {{1, 0}};
        } else {
            s.edges[0] = {{1, 1}};
            s.edges[1] = {{0, 0}, {2, 1}};
        }
        g.snapshots.push_back(std::move(s));
    }
    g.validate();
    return g;
}

/// Whole-model check: forward both snapshots with tape-resident states, so
/// gradients flow through time, plus a decoder term over a few pairs.
inline double check_model(Scheme scheme) {
    ModelSpec spec;
    spec.scheme = scheme;
    spec.num_layers = 2;
    spec.dim = 4;
    spec.featureless_dim = 4;
    spec.aggregation = Aggregation::SemanticAttention;
    spec.attention_dim = 4;
    spec.update = UpdateKind::Gru;
    spec.decoder = DecoderKind::HadamardMlp;
    TemporalHeteroGraph g = toy_graph();
    DurendalModel model(spec, g, 23);

    auto run = [&](bool with_grad) {
        Tape t;
        ChainStates states;
        Var loss;
        for (int snap = 1; snap <= 2; ++snap) {
            std::map<int, Var> h = model_forward(t, model, g, snap, states);
            for (auto& [type, v] : h) {
                Var part = weighted_sum(t, v, 31 + snap, "w/" + std::to_string(type));
                loss = loss.valid() ? t.add(loss, part) : part;
            }
            if (snap == 2) {
                ParamLease P(t, model);
                std::vector<Edge> pairs = {{0, 1}, {2, 0}};
                Var scores = train::scores_on_tape(t, P, model, h, 0, pairs);
                loss = t.add(loss, t.mean(scores));
            }
        }
        if (with_grad) t.backward(loss);
        return t.val(loss).values[0];
    };
    std::vector<Tensor*> ptrs;
    for (auto& [label, p] : model.parameters()) ptrs.push_back(p);
    return grad_check(run, ptrs, 1e-5);
}

}  // namespace detail

/// One check per parameterized component, on toy shapes.
inline std::vector<Entry> registry() {
    using detail::check;
    using detail::seeded;
    std::vector<Entry> out;

    out.push_back({"relation_conv", [] {
        std::vector<Tensor> params = {seeded(3, 4, 1, "root"), seeded(3, 4, 1, "neigh"),
                                      seeded(1, 4, 1, "bias"), seeded(5, 3, 1, "h")};
        return check(
            [](Tape& t, std::vector<Var>& p) {
                std::vector<std::size_t> srcs = {0, 2, 4, 2};
                std::vector<std::size_t> dsts = {1, 0, 3, 3};
                Var conv = layers::relation_conv(t, p[0], p[1], p[2], p[3], p[3], srcs, dsts, 5);
                return detail::weighted_sum(t, conv, 2, "conv");
            },
            params);
    }});

    out.push_back({"semantic_attention", [] {
        std::vector<Tensor> params = {seeded(4, 3, 3, "w"),  seeded(1, 3, 3, "b"),
                                      seeded(3, 1, 3, "q"),  seeded(5, 4, 3, "z0"),
                                      seeded(5, 4, 3, "z1"), seeded(5, 4, 3, "z2")};
        return check(
            [](Tape& t, std::vector<Var>& p) {
                auto att = layers::semantic_attention_aggregate(t, p[0], p[1], p[2],
                                                                {p[3], p[4], p[5]});
                return detail::weighted_sum(t, att.aggregated, 4, "att");
            },
            params);
    }});

    out.push_back({"update_gru", [] {
        std::vector<Tensor> params;
        for (const char* n : {"wz", "uz", "wr", "ur", "wh", "uh"})
            params.push_back(seeded(4, 4, 7, n));
        for (const char* n : {"bz", "br", "bh"}) params.push_back(seeded(1, 4, 7, n));
        params.push_back(seeded(5, 4, 7, "cur"));
        params.push_back(seeded(5, 4, 7, "past"));
        return check(
            [](Tape& t, std::vector<Var>& p) {
                UpdateVars u;
                u.kind = UpdateKind::Gru;
                u.wz = p[0];
                u.uz = p[1];
                u.wr = p[2];
                u.ur = p[3];
                u.wh = p[4];
                u.uh = p[5];
                u.bz = p[6];
                u.br = p[7];
                u.bh = p[8];
                return detail::weighted_sum(t, apply_update(t, u, p[9], p[10]), 8, "gru");
            },
            params);
    }});

    out.push_back({"update_concat_mlp", [] {
        std::vector<Tensor> params = {seeded(8, 4, 9, "w1"), seeded(1, 4, 9, "b1"),
                                      seeded(4, 4, 9, "w2"), seeded(1, 4, 9, "b2"),
                                      seeded(5, 4, 9, "cur"), seeded(5, 4, 9, "past")};
        return check(
            [](Tape& t, std::vector<Var>& p) {
                UpdateVars u;
                u.kind = UpdateKind::ConcatMlp;
                u.w1 = p[0];
                u.b1 = p[1];
                u.w2 = p[2];
                u.b2 = p[3];
                return detail::weighted_sum(t, apply_update(t, u, p[4], p[5]), 10, "mlp");
            },
            params);
    }});

    out.push_back({"update_weighted_average", [] {
        std::vector<Tensor> params = {seeded(5, 4, 11, "cur"), seeded(5, 4, 11, "past")};
        return check(
            [](Tape& t, std::vector<Var>& p) {
                UpdateVars u;
                u.kind = UpdateKind::WeightedAverage;
                u.alpha = 0.3;
                return detail::weighted_sum(t, apply_update(t, u, p[0], p[1]), 12, "avg");
            },
            params);
    }});

    out.push_back({"uta_end_to_end", [] { return detail::check_model(Scheme::Uta); }});
    out.push_back({"atu_end_to_end", [] { return detail::check_model(Scheme::Atu); }});

    out.push_back({"decoder_hadamard_mlp", [] {
        std::vector<Tensor> params = {seeded(4, 4, 13, "w1"), seeded(1, 4, 13, "b1"),
                                      seeded(4, 1, 13, "w2"), seeded(1, 1, 13, "b2"),
                                      seeded(6, 4, 13, "hu"), seeded(6, 4, 13, "hv")};
        return check(
            [](Tape& t, std::vector<Var>& p) {
                decoders::HadamardMlpVars d{p[0], p[1], p[2], p[3]};
                return detail::weighted_sum(t, decoders::hadamard_mlp_scores(t, d, p[4], p[5]),
                                            14, "had");
            },
            params);
    }});

    out.push_back({"decoder_complex", [] {
        decoders::ComplExParams cx(5, 3, 4, 17);
        auto run = [&](bool with_grad) {
            Tape t;
            auto v = decoders::lease(t, cx);
            Var loss = t.add(decoders::complex_score(t, v, 0, 1, 3),
                             t.scale(decoders::complex_score(t, v, 4, 2, 2), 0.7));
            if (with_grad) t.backward(loss);
            return t.val(loss).values[0];
        };
        std::vector<Tensor*> ptrs = {&cx.ent_re, &cx.ent_im, &cx.rel_re, &cx.rel_im};
        return grad_check(run, ptrs, 1e-5);
    }});

    out.push_back({"decoder_tnt_complex", [] {
        decoders::TntComplExParams tnt(4, 2, 3, 5, 19);
        auto run = [&](bool with_grad) {
            Tape t;
            auto v = decoders::lease(t, tnt);
            Var loss = t.add(decoders::tnt_score(t, v, 0, 1, 3, 3),
                             t.scale(decoders::tnt_score(t, v, 2, 0, 1, 1), -0.4));
            if (with_grad) t.backward(loss);
            return t.val(loss).values[0];
        };
        std::vector<Tensor*> ptrs = tnt.parameters();
        return grad_check(run, ptrs, 1e-5);
    }});

    return out;
}

}  // namespace durendal::gradcheck
