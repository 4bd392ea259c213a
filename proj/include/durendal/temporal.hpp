#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "durendal/errors.hpp"
#include "durendal/model.hpp"

namespace durendal {

// ---------------------------------------------------------------------------
// Embedding update modules. `past` is the hidden state carried from the
// previous snapshot, `current` the fresh message-passing output.
// ---------------------------------------------------------------------------

struct UpdateVars {
    UpdateKind kind = UpdateKind::WeightedAverage;
    double alpha = 0.0;
    // GRU gates.
    Var wz, uz, bz, wr, ur, br, wh, uh, bh;
    // ConcatMLP layers.
    Var w1, b1, w2, b2;
};

/// Apply one update module: GRU gated update, two-layer MLP on the row-wise
/// concatenation [current ++ past], or the convex combination
/// (1-alpha) current + alpha past.
inline Var apply_update(Tape& t, const UpdateVars& u, Var current, Var past) {
    if (t.val(current).shape != t.val(past).shape)
        throw DimensionError("update: current " + t.val(current).shape_str() + " vs past " +
                             t.val(past).shape_str());
    switch (u.kind) {
        case UpdateKind::Gru: {
            Var z = t.sigmoid(
                t.add_rowvec(t.add(t.matmul(current, u.wz), t.matmul(past, u.uz)), u.bz));
            Var r = t.sigmoid(
                t.add_rowvec(t.add(t.matmul(current, u.wr), t.matmul(past, u.ur)), u.br));
            Var cand = t.tanh(t.add_rowvec(
                t.add(t.matmul(current, u.wh), t.matmul(t.elementwise_mul(r, past), u.uh)),
                u.bh));
            // (1-z) cand + z past
            return t.add(cand, t.elementwise_mul(z, t.sub(past, cand)));
        }
        case UpdateKind::ConcatMlp: {
            Var cat = t.concat_cols({current, past});
            Var hidden = t.relu(t.add_rowvec(t.matmul(cat, u.w1), u.b1));
            return t.add_rowvec(t.matmul(hidden, u.w2), u.b2);
        }
        case UpdateKind::WeightedAverage:
            return t.add(t.scale(current, 1.0 - u.alpha), t.scale(past, u.alpha));
    }
    throw ContractError("update: unknown module kind");
}

inline UpdateVars lease_update(ParamLease& P, const ModelSpec& spec, int layer, int slot) {
    UpdateVars u;
    u.kind = spec.update;
    u.alpha = spec.alpha;
    auto L = [&](const char* part) { return P[DurendalModel::upd_label(layer, slot, part)]; };
    switch (spec.update) {
        case UpdateKind::Gru:
            u.wz = L("wz");
            u.uz = L("uz");
            u.bz = L("bz");
            u.wr = L("wr");
            u.ur = L("ur");
            u.br = L("br");
            u.wh = L("wh");
            u.uh = L("uh");
            u.bh = L("bh");
            break;
        case UpdateKind::ConcatMlp:
            u.w1 = L("w1");
            u.b1 = L("b1");
            u.w2 = L("w2");
            u.b2 = L("b2");
            break;
        case UpdateKind::WeightedAverage:
            break;
    }
    return u;
}

// ---------------------------------------------------------------------------
// Hierarchical node states carried across snapshots. Under UTA one matrix
// per (layer, channel); under ATU one aggregated matrix per (layer,
// receiving node type). Matrices grow by appending zero rows when new nodes
// appear.
// ---------------------------------------------------------------------------

class NodeStateStore {
public:
    explicit NodeStateStore(Scheme scheme = Scheme::Uta) : scheme_(scheme) {}

    Scheme scheme() const { return scheme_; }

    bool has(int layer, int slot) const { return states_.count({layer, slot}) != 0; }

    /// State for (layer, slot), grown with zero rows to at least `rows`.
    const Tensor& get(int layer, int slot, std::size_t rows, std::size_t dim) {
        auto key = std::make_pair(layer, slot);
        auto it = states_.find(key);
        if (it == states_.end())
            it = states_.emplace(key, Tensor::zeros(rows, dim)).first;
        Tensor& s = it->second;
        if (s.cols() != dim)
            throw ContractError("state store: entry (" + std::to_string(layer) + "," +
                                std::to_string(slot) + ") has width " + std::to_string(s.cols()) +
                                ", model wants " + std::to_string(dim));
        if (s.rows() < rows) {
            s.values.resize(rows * dim, 0.0);
            s.shape[0] = rows;
        }
        return s;
    }

    void put(int layer, int slot, Tensor value) { states_[{layer, slot}] = std::move(value); }

    const std::map<std::pair<int, int>, Tensor>& entries() const { return states_; }

    friend bool operator==(const NodeStateStore& a, const NodeStateStore& b) {
        if (a.scheme_ != b.scheme_) return false;
        if (a.states_.size() != b.states_.size()) return false;
        for (auto ia = a.states_.begin(), ib = b.states_.begin(); ia != a.states_.end();
             ++ia, ++ib) {
            if (ia->first != ib->first || ia->second.shape != ib->second.shape) return false;
            if (std::memcmp(ia->second.values.data(), ib->second.values.data(),
                            ia->second.values.size() * sizeof(double)) != 0)
                return false;
        }
        return true;
    }

    /// Checkpoint layout: magic, scheme byte, entry count, then per entry
    /// (layer, slot, rows, cols, row-major doubles). Slot is the channel id
    /// under UTA and the receiving node-type id ("agg" states) under ATU.
    /// Bit-exact round-trip; little-endian doubles.
    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        const char magic[4] = {'D', 'S', 'S', '1'};
        out.write(magic, 4);
        std::uint8_t scheme_byte = scheme_ == Scheme::Uta ? 0 : 1;
        out.write(reinterpret_cast<const char*>(&scheme_byte), 1);
        std::uint32_t count = static_cast<std::uint32_t>(states_.size());
        out.write(reinterpret_cast<const char*>(&count), 4);
        for (const auto& [key, t] : states_) {
            std::int32_t layer = key.first, slot = key.second;
            std::uint64_t rows = t.rows(), cols = t.cols();
            out.write(reinterpret_cast<const char*>(&layer), 4);
            out.write(reinterpret_cast<const char*>(&slot), 4);
            out.write(reinterpret_cast<const char*>(&rows), 8);
            out.write(reinterpret_cast<const char*>(&cols), 8);
            out.write(reinterpret_cast<const char*>(t.values.data()),
                      static_cast<std::streamsize>(t.values.size() * sizeof(double)));
        }
        if (!out) throw IoError("short write to '" + path.string() + "'");
    }

    static NodeStateStore load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path.string() + "'");
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "DSS1", 4) != 0)
            throw ParseError("'" + path.string() + "' is not a state-store checkpoint");
        std::uint8_t scheme_byte = 0;
        in.read(reinterpret_cast<char*>(&scheme_byte), 1);
        NodeStateStore store(scheme_byte == 0 ? Scheme::Uta : Scheme::Atu);
        std::uint32_t count = 0;
        in.read(reinterpret_cast<char*>(&count), 4);
        for (std::uint32_t i = 0; i < count; ++i) {
            std::int32_t layer = 0, slot = 0;
            std::uint64_t rows = 0, cols = 0;
            in.read(reinterpret_cast<char*>(&layer), 4);
            in.read(reinterpret_cast<char*>(&slot), 4);
            in.read(reinterpret_cast<char*>(&rows), 8);
            in.read(reinterpret_cast<char*>(&cols), 8);
            if (!in) throw ParseError("truncated state-store checkpoint");
            Tensor t = Tensor::zeros(rows, cols);
            in.read(reinterpret_cast<char*>(t.values.data()),
                    static_cast<std::streamsize>(t.values.size() * sizeof(double)));
            if (!in) throw ParseError("truncated state-store checkpoint");
            store.states_[{layer, slot}] = std::move(t);
        }
        return store;
    }

private:
    Scheme scheme_;
    std::map<std::pair<int, int>, Tensor> states_;
};

// ---------------------------------------------------------------------------
// State access during a forward pass. The store-backed provider feeds
// detached constants (training truncates gradients at snapshot borders);
// the chain provider keeps states on the tape so whole-model gradient
// checks can differentiate through time.
// ---------------------------------------------------------------------------

struct StateProvider {
    virtual ~StateProvider() = default;
    virtual Var past(Tape& t, int layer, int slot, std::size_t rows, std::size_t dim) = 0;
    virtual void commit(Tape& t, int layer, int slot, Var value) = 0;
};

class StoreStates final : public StateProvider {
public:
    StoreStates(NodeStateStore& store, bool commit) : store_(store), commit_(commit) {}

    Var past(Tape& t, int layer, int slot, std::size_t rows, std::size_t dim) override {
        return t.constant(store_.get(layer, slot, rows, dim));
    }

    void commit(Tape& t, int layer, int slot, Var value) override {
        if (commit_) store_.put(layer, slot, t.val(value));
    }

private:
    NodeStateStore& store_;
    bool commit_;
};

class ChainStates final : public StateProvider {
public:
    Var past(Tape& t, int layer, int slot, std::size_t rows, std::size_t dim) override {
        auto it = vars_.find({layer, slot});
        if (it == vars_.end()) return t.constant(Tensor::zeros(rows, dim));
        Var v = it->second;
        std::size_t have = t.val(v).rows();
        if (have < rows)
            v = t.concat_rows({v, t.constant(Tensor::zeros(rows - have, dim))});
        return v;
    }

    void commit(Tape&, int layer, int slot, Var value) override {
        vars_[{layer, slot}] = value;
    }

private:
    std::map<std::pair<int, int>, Var> vars_;
};

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

namespace detail {

inline Var aggregate_partials(Tape& t, ParamLease& P, const DurendalModel& m, int layer,
                              int type, const std::vector<Var>& partials) {
    if (m.spec().aggregation == Aggregation::Sum) return layers::sum_aggregate(t, partials);
    const std::string& tn = m.node_types()[type].name;
    auto att = layers::semantic_attention_aggregate(
        t, P[DurendalModel::att_label(layer, tn, "w")], P[DurendalModel::att_label(layer, tn, "b")],
        P[DurendalModel::att_label(layer, tn, "q")], partials);
    return att.aggregated;
}

}  // namespace detail

/// Layer-0 inputs: snapshot features for featured types, the learned shared
/// row for featureless ones.
inline std::map<int, Var> input_embeddings(Tape& t, ParamLease& P, const DurendalModel& m,
                                           const HeteroSnapshot& s) {
    std::map<int, Var> h;
    for (const NodeType& nt : m.node_types()) {
        std::size_t n = s.node_count[nt.id];
        if (nt.feature_dim > 0) {
            if (!s.features[nt.id])
                throw ContractError("snapshot " + std::to_string(s.index) +
                                    " lacks features for type '" + nt.name + "'");
            h[nt.id] = t.constant(*s.features[nt.id]);
        } else {
            h[nt.id] = t.broadcast_rows(P[DurendalModel::input_label(nt.name)], n);
        }
    }
    return h;
}

/// Full DURENDAL forward on snapshot t: L temporal layers, each combining
/// per-channel GraphConv with the scheme's update placement. Returns the
/// final-layer embeddings per node type. `channel_filter`, when given,
/// restricts which channels advance (UTA partial updates); excluded
/// channels contribute their stored state unchanged.
inline std::map<int, Var> model_forward(Tape& t, DurendalModel& m, const TemporalHeteroGraph& g,
                                        int snapshot, StateProvider& states,
                                        const std::vector<bool>* channel_filter = nullptr) {
    const ModelSpec& spec = m.spec();
    const HeteroSnapshot& s = g.snapshot(snapshot);
    ParamLease P(t, m);
    std::map<int, Var> h = input_embeddings(t, P, m, s);
    std::size_t d = spec.dim;

    for (int l = 1; l <= spec.num_layers; ++l) {
        // Per-channel lanes: conv, plus the per-relation update under UTA.
        std::map<int, Var> lane;  // by channel id
        for (const layers::Channel& c : m.channels()) {
            std::size_t n_dst = s.node_count[c.dst_type];
            if (channel_filter && !(*channel_filter)[c.id]) {
                if (spec.scheme != Scheme::Uta)
                    throw UnsupportedSchemeError("partial updates need the UTA scheme");
                lane[c.id] = states.past(t, l, c.id, n_dst, d);
                continue;
            }
            auto [srcs, dsts] = layers::channel_edges(g, snapshot, c);
            Var conv = layers::relation_conv(
                t, P[DurendalModel::conv_label(l, c, "root")],
                P[DurendalModel::conv_label(l, c, "neigh")],
                P[DurendalModel::conv_label(l, c, "bias")], h[c.src_type], h[c.dst_type], srcs,
                dsts, n_dst, spec.neighbor_mean);
            if (spec.scheme == Scheme::Uta) {
                Var past = states.past(t, l, c.id, n_dst, d);
                Var updated = apply_update(t, lease_update(P, spec, l, c.id), conv, past);
                states.commit(t, l, c.id, updated);
                lane[c.id] = updated;
            } else {
                lane[c.id] = conv;
            }
        }
        // Semantic aggregation per receiving type; ATU updates afterwards.
        std::map<int, Var> next;
        for (const NodeType& nt : m.node_types()) {
            const std::vector<int>& incoming = m.channels_into(nt.id);
            std::size_t n = s.node_count[nt.id];
            if (incoming.empty()) {
                // No message lane targets this type; it carries no layer
                // state and contributes zeros downstream.
                next[nt.id] = t.constant(Tensor::zeros(n, d));
                continue;
            }
            std::vector<Var> partials;
            partials.reserve(incoming.size());
            for (int cid : incoming) partials.push_back(lane[cid]);
            Var agg = detail::aggregate_partials(t, P, m, l, nt.id, partials);
            if (spec.scheme == Scheme::Atu) {
                Var past = states.past(t, l, nt.id, n, d);
                Var updated = apply_update(t, lease_update(P, spec, l, nt.id), agg, past);
                states.commit(t, l, nt.id, updated);
                next[nt.id] = updated;
            } else {
                next[nt.id] = agg;
            }
        }
        h = std::move(next);
    }
    return h;
}

/// Forward snapshot t against `store`, returning the final embeddings as
/// plain matrices. With `commit` the store advances to the post-t states.
inline std::map<int, Tensor> forward_embeddings(DurendalModel& m, const TemporalHeteroGraph& g,
                                                int snapshot, NodeStateStore& store,
                                                bool commit) {
    if (store.scheme() != m.spec().scheme)
        throw ContractError("state store scheme does not match the model spec");
    Tape t;
    StoreStates states(store, commit);
    std::map<int, Var> h = model_forward(t, m, g, snapshot, states);
    std::map<int, Tensor> out;
    for (auto& [type, v] : h) out.emplace(type, t.val(v));
    return out;
}

/// Advance only the lanes of the given relations (UTA only). Other store
/// entries are untouched.
inline void partial_update(DurendalModel& m, const TemporalHeteroGraph& g, int snapshot,
                           NodeStateStore& store, const std::vector<int>& relation_subset) {
    if (m.spec().scheme != Scheme::Uta)
        throw UnsupportedSchemeError("partial_update: only the UTA scheme keeps per-relation "
                                     "states");
    if (store.scheme() != Scheme::Uta)
        throw ContractError("partial_update: store does not use the UTA layout");
    std::vector<bool> filter(m.channels().size(), false);
    for (const layers::Channel& c : m.channels())
        for (int r : relation_subset)
            if (c.relation == r) filter[c.id] = true;
    Tape t;
    StoreStates states(store, true);
    model_forward(t, m, g, snapshot, states, &filter);
}

}  // namespace durendal
