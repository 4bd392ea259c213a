#pragma once

#include <string>
#include <vector>

#include "durendal/errors.hpp"
#include "durendal/optim.hpp"
#include "durendal/tensor.hpp"

namespace durendal::decoders {

// ---------------------------------------------------------------------------
// HadamardMLP: sigmoid(MLP(h_u (*) h_v)), two layers with a rectifier
// between them. Scores land in (0,1).
// ---------------------------------------------------------------------------

struct HadamardMlpVars {
    Var w1, b1, w2, b2;
};

/// Batch scores for row-aligned embedding matrices (n x d each) -> n x 1.
inline Var hadamard_mlp_scores(Tape& t, const HadamardMlpVars& p, Var h_u, Var h_v) {
    Var prod = t.elementwise_mul(h_u, h_v);
    Var hidden = t.relu(t.add_rowvec(t.matmul(prod, p.w1), p.b1));
    return t.sigmoid(t.add_rowvec(t.matmul(hidden, p.w2), p.b2));
}

// ---------------------------------------------------------------------------
// Complex trilinear machinery shared by the ComplEx decoder and the FM
// baselines. Embeddings are carried as split real/imaginary matrices.
// Row-wise score: Re(sum_k s_k r_k conj(o_k)).
// ---------------------------------------------------------------------------

inline Var complex_trilinear_rows(Tape& t, Var s_re, Var s_im, Var r_re, Var r_im, Var o_re,
                                  Var o_im) {
    Var sr_rr = t.elementwise_mul(s_re, r_re);
    Var si_ri = t.elementwise_mul(s_im, r_im);
    Var sr_ri = t.elementwise_mul(s_re, r_im);
    Var si_rr = t.elementwise_mul(s_im, r_re);
    Var real_part = t.sub(sr_rr, si_ri);     // Re(s * r)
    Var imag_part = t.add(sr_ri, si_rr);     // Im(s * r)
    Var term = t.add(t.elementwise_mul(real_part, o_re), t.elementwise_mul(imag_part, o_im));
    return t.row_sum(term);
}

// ---------------------------------------------------------------------------
// Standalone ComplEx factorization (transductive baseline): per-entity and
// per-relation complex embeddings, Hermitian dot product scoring.
// ---------------------------------------------------------------------------

struct ComplExParams {
    Tensor ent_re, ent_im;  // |V| x d
    Tensor rel_re, rel_im;  // |R| x d

    ComplExParams() = default;
    ComplExParams(std::size_t n_entities, std::size_t n_relations, std::size_t d,
                  std::uint64_t seed) {
        ent_re = Tensor::zeros(n_entities, d, true);
        ent_im = Tensor::zeros(n_entities, d, true);
        rel_re = Tensor::zeros(n_relations, d, true);
        rel_im = Tensor::zeros(n_relations, d, true);
        init_uniform_fanin(ent_re, d, seed, "cx/ent_re");
        init_uniform_fanin(ent_im, d, seed, "cx/ent_im");
        init_uniform_fanin(rel_re, d, seed, "cx/rel_re");
        init_uniform_fanin(rel_im, d, seed, "cx/rel_im");
    }

    std::size_t dim() const { return ent_re.cols(); }
};

struct ComplExVars {
    Var ent_re, ent_im, rel_re, rel_im;
};

inline ComplExVars lease(Tape& t, ComplExParams& p) {
    return {t.param(p.ent_re), t.param(p.ent_im), t.param(p.rel_re), t.param(p.rel_im)};
}

/// Score of one (subject, relation, object) triple.
inline Var complex_score(Tape& t, const ComplExVars& v, std::size_t s, std::size_t r,
                         std::size_t o) {
    Var s_re = t.gather_rows(v.ent_re, {s});
    Var s_im = t.gather_rows(v.ent_im, {s});
    Var r_re = t.gather_rows(v.rel_re, {r});
    Var r_im = t.gather_rows(v.rel_im, {r});
    Var o_re = t.gather_rows(v.ent_re, {o});
    Var o_im = t.gather_rows(v.ent_im, {o});
    return complex_trilinear_rows(t, s_re, s_im, r_re, r_im, o_re, o_im);
}

// ---------------------------------------------------------------------------
// TNTComplEx with a recurrent timestamp generator: the timestamp embedding
// t_l comes from l gated recurrent steps on a zero input followed by a
// linear head, so unseen timestamps extrapolate by stepping once more.
// Relations keep separate temporal and static components.
// ---------------------------------------------------------------------------

struct TntComplExParams {
    ComplExParams entities;     // rel_* inside are the temporal components
    Tensor rel_s_re, rel_s_im;  // static relation components, |R| x d
    // Gated recurrent step on zero input (hidden size m) plus linear head
    // mapping the hidden state to a 2d timestamp embedding (re ++ im).
    Tensor h0;                      // 1 x m, learnable initial hidden state
    Tensor uz, bz, ur, br, uh, bh;  // m x m gates, 1 x m biases
    Tensor w_out, b_out;            // m x 2d, 1 x 2d

    TntComplExParams() = default;
    TntComplExParams(std::size_t n_entities, std::size_t n_relations, std::size_t d,
                     std::size_t hidden, std::uint64_t seed)
        : entities(n_entities, n_relations, d, seed) {
        rel_s_re = Tensor::zeros(n_relations, d, true);
        rel_s_im = Tensor::zeros(n_relations, d, true);
        init_uniform_fanin(rel_s_re, d, seed, "tnt/rel_s_re");
        init_uniform_fanin(rel_s_im, d, seed, "tnt/rel_s_im");
        h0 = Tensor::zeros(1, hidden, true);
        init_uniform_fanin(h0, hidden, seed, "tnt/h0");
        auto gate = [&](Tensor& w, std::size_t r, std::size_t c, const char* name) {
            w = Tensor::zeros(r, c, true);
            init_uniform_fanin(w, hidden, seed, std::string("tnt/") + name);
        };
        gate(uz, hidden, hidden, "uz");
        gate(ur, hidden, hidden, "ur");
        gate(uh, hidden, hidden, "uh");
        gate(bz, 1, hidden, "bz");
        gate(br, 1, hidden, "br");
        gate(bh, 1, hidden, "bh");
        w_out = Tensor::zeros(hidden, 2 * d, true);
        init_uniform_fanin(w_out, hidden, seed, "tnt/w_out");
        b_out = Tensor::zeros(1, 2 * d, true);
        init_uniform_fanin(b_out, hidden, seed, "tnt/b_out");
    }

    std::size_t dim() const { return entities.dim(); }

    std::vector<Tensor*> parameters() {
        return {&entities.ent_re, &entities.ent_im, &entities.rel_re, &entities.rel_im,
                &rel_s_re,        &rel_s_im,        &h0,              &uz,
                &bz,              &ur,              &br,              &uh,
                &bh,              &w_out,           &b_out};
    }
};

struct TntVars {
    ComplExVars base;  // temporal relation components live in base.rel_*
    Var rel_s_re, rel_s_im;
    Var h0, uz, bz, ur, br, uh, bh, w_out, b_out;
};

inline TntVars lease(Tape& t, TntComplExParams& p) {
    return {lease(t, p.entities), t.param(p.rel_s_re), t.param(p.rel_s_im), t.param(p.h0),
            t.param(p.uz),        t.param(p.bz),       t.param(p.ur),       t.param(p.br),
            t.param(p.uh),        t.param(p.bh),       t.param(p.w_out),    t.param(p.b_out)};
}

/// One gated recurrent step on zero input: h' = cand + z (*) (h - cand)
/// with z = sigma(h Uz + bz), r = sigma(h Ur + br),
/// cand = tanh((r (*) h) Uh + bh).
inline Var tnt_recurrent_step(Tape& t, const TntVars& v, Var h) {
    Var z = t.sigmoid(t.add_rowvec(t.matmul(h, v.uz), v.bz));
    Var r = t.sigmoid(t.add_rowvec(t.matmul(h, v.ur), v.br));
    Var cand = t.tanh(t.add_rowvec(t.matmul(t.elementwise_mul(r, h), v.uh), v.bh));
    return t.add(cand, t.elementwise_mul(z, t.sub(h, cand)));
}

/// Timestamp embedding t_l (1 x 2d) after l >= 1 recurrent steps from h0.
inline Var tnt_timestamp_embed(Tape& t, const TntVars& v, int l) {
    if (l < 1) throw ContractError("tnt_timestamp_embed: timestamp index must be >= 1");
    Var h = v.h0;
    for (int step = 0; step < l; ++step) h = tnt_recurrent_step(t, v, h);
    return t.add_rowvec(t.matmul(h, v.w_out), v.b_out);
}

/// Re(sum_k e_s (w_temporal t_l + w_static) conj(e_o)) at timestamp l.
inline Var tnt_score(Tape& t, const TntVars& v, std::size_t s, std::size_t r, std::size_t o,
                     int l) {
    std::size_t d = t.val(v.rel_s_re).cols();
    Var tl = tnt_timestamp_embed(t, v, l);
    Var tl_re = t.slice_cols(tl, 0, d);
    Var tl_im = t.slice_cols(tl, d, 2 * d);
    Var rt_re = t.gather_rows(v.base.rel_re, {r});
    Var rt_im = t.gather_rows(v.base.rel_im, {r});
    // Complex product of the temporal relation component with t_l.
    Var w_re = t.sub(t.elementwise_mul(rt_re, tl_re), t.elementwise_mul(rt_im, tl_im));
    Var w_im = t.add(t.elementwise_mul(rt_re, tl_im), t.elementwise_mul(rt_im, tl_re));
    w_re = t.add(w_re, t.gather_rows(v.rel_s_re, {r}));
    w_im = t.add(w_im, t.gather_rows(v.rel_s_im, {r}));
    Var s_re = t.gather_rows(v.base.ent_re, {s});
    Var s_im = t.gather_rows(v.base.ent_im, {s});
    Var o_re = t.gather_rows(v.base.ent_re, {o});
    Var o_im = t.gather_rows(v.base.ent_im, {o});
    return complex_trilinear_rows(t, s_re, s_im, w_re, w_im, o_re, o_im);
}

}  // namespace durendal::decoders
