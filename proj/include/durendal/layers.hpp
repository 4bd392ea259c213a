#pragma once

#include <string>
#include <utility>
#include <vector>

#include "durendal/errors.hpp"
#include "durendal/graph.hpp"
#include "durendal/tensor.hpp"

namespace durendal::layers {

/// A directed message lane derived from the declared relations. Directed
/// relations map to one channel. Undirected relations between distinct
/// types get a second, reversed channel (so both endpoint types receive
/// messages); undirected same-type relations stay a single channel whose
/// edge list is mirrored.
struct Channel {
    int id = 0;
    int relation = 0;
    bool reversed = false;
    int src_type = 0;
    int dst_type = 0;
    std::string label;  // stable key for parameter/state addressing
};

inline std::vector<Channel> build_channels(const TemporalHeteroGraph& g) {
    std::vector<Channel> out;
    for (const Relation& r : g.relations) {
        out.push_back({static_cast<int>(out.size()), r.id, false, r.src_type, r.dst_type,
                       r.name});
        if (!r.directed && r.src_type != r.dst_type)
            out.push_back({static_cast<int>(out.size()), r.id, true, r.dst_type, r.src_type,
                           r.name + "~rev"});
    }
    return out;
}

/// Endpoint index lists (sources, destinations) for one channel at
/// snapshot t, in channel orientation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> channel_edges(
    const TemporalHeteroGraph& g, int t, const Channel& c) {
    const HeteroSnapshot& s = g.snapshot(t);
    const Relation& rel = g.relations[c.relation];
    const std::vector<Edge>& es = s.edges[rel.id];
    std::vector<std::size_t> srcs, dsts;
    srcs.reserve(es.size());
    dsts.reserve(es.size());
    bool mirror_same_type = !rel.directed && rel.src_type == rel.dst_type;
    for (const Edge& e : es) {
        if (c.reversed) {
            srcs.push_back(e.dst);
            dsts.push_back(e.src);
        } else {
            srcs.push_back(e.src);
            dsts.push_back(e.dst);
            if (mirror_same_type && e.src != e.dst) {
                srcs.push_back(e.dst);
                dsts.push_back(e.src);
            }
        }
    }
    return {std::move(srcs), std::move(dsts)};
}

/// GraphConv-style per-relation operator:
///   out_v = H_dst[v] W_root + (sum_{w in N(v)} H_src[w]) W_neigh + bias.
/// With `mean_neighbors` the neighbour sum is divided by the in-degree.
/// Channels with no edges produce the root term plus bias.
inline Var relation_conv(Tape& t, Var w_root, Var w_neigh, Var bias, Var h_src, Var h_dst,
                         const std::vector<std::size_t>& srcs,
                         const std::vector<std::size_t>& dsts, std::size_t n_dst,
                         bool mean_neighbors = false) {
    Var out = t.add_rowvec(t.matmul(h_dst, w_root), bias);
    if (!srcs.empty()) {
        Var msgs = t.gather_rows(h_src, srcs);
        Var agg = t.scatter_add_rows(msgs, dsts, n_dst);
        if (mean_neighbors) {
            Tensor inv_deg = Tensor::zeros(n_dst, 1);
            for (std::size_t d : dsts) inv_deg.values[d] += 1.0;
            for (auto& v : inv_deg.values) v = v > 0.0 ? 1.0 / v : 0.0;
            agg = t.mul_colvec(agg, t.constant(std::move(inv_deg)));
        }
        out = t.add(out, t.matmul(agg, w_neigh));
    }
    return out;
}

/// Elementwise sum over per-relation partial embeddings.
inline Var sum_aggregate(Tape& t, const std::vector<Var>& partials) {
    if (partials.empty()) throw ContractError("sum_aggregate: no partial embeddings");
    Var acc = partials[0];
    for (std::size_t i = 1; i < partials.size(); ++i) acc = t.add(acc, partials[i]);
    return acc;
}

struct AttentionOutput {
    Var aggregated;
    Var beta;  // 1 x R, on the probability simplex
};

/// Semantic-level attention over per-relation partials:
///   w_r = mean_v q^T tanh(W z_v^(r) + b),  beta = softmax(w),
///   out = sum_r beta_r Z^(r).
/// The mean runs over the destination-type nodes present in the snapshot.
/// With zero nodes the partials are empty and attention degenerates to a
/// uniform, constant beta.
inline AttentionOutput semantic_attention_aggregate(Tape& t, Var w, Var b, Var q,
                                                    const std::vector<Var>& partials) {
    if (partials.empty()) throw ContractError("semantic_attention_aggregate: no partials");
    std::size_t n = t.val(partials[0]).rows();
    std::size_t r = partials.size();
    if (n == 0) {
        Var beta = t.constant(Tensor::full(1, r, 1.0 / static_cast<double>(r)));
        return {partials[0], beta};
    }
    std::vector<Var> scores;
    scores.reserve(r);
    for (Var z : partials)
        scores.push_back(t.mean(t.matmul(t.tanh(t.add_rowvec(t.matmul(z, w), b)), q)));
    Var beta = t.row_softmax(t.concat_cols(scores));
    Var out;
    for (std::size_t i = 0; i < r; ++i) {
        Var scaled = t.mul_scalar(partials[i], t.slice_cols(beta, i, i + 1));
        out = i == 0 ? scaled : t.add(out, scaled);
    }
    return {out, beta};
}

/// Learnable scalars in one GraphConv parameter set.
inline std::size_t conv_param_count(std::size_t d_in_src, std::size_t d_in_dst,
                                    std::size_t d_out) {
    return d_in_src * d_out + d_in_dst * d_out + d_out;
}

inline std::size_t attention_param_count(std::size_t d, std::size_t d_att) {
    return d * d_att + d_att + d_att;
}

}  // namespace durendal::layers
