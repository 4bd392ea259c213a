#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "durendal/errors.hpp"
#include "durendal/graph.hpp"
#include "durendal/layers.hpp"
#include "durendal/optim.hpp"
#include "durendal/tensor.hpp"

namespace durendal {

enum class Scheme { Uta, Atu };
enum class Aggregation { Sum, SemanticAttention };
enum class UpdateKind { Gru, ConcatMlp, WeightedAverage };
enum class DecoderKind { HadamardMlp, ComplEx };
enum class OptimizerKind { Adam, Adagrad };

/// Declarative model configuration. Dimensions come from a fixed menu: the
/// search-space values plus smaller desk-scale sizes for toy runs.
struct ModelSpec {
    Scheme scheme = Scheme::Uta;
    int num_layers = 2;
    std::size_t dim = 64;
    std::size_t featureless_dim = 0;  // input width for featureless types; 0 = dim
    Aggregation aggregation = Aggregation::SemanticAttention;
    std::size_t attention_dim = 16;
    bool neighbor_mean = false;
    UpdateKind update = UpdateKind::Gru;
    double alpha = 0.1;  // past coefficient of the weighted-average update
    DecoderKind decoder = DecoderKind::HadamardMlp;
    std::size_t decoder_hidden = 0;  // HadamardMLP hidden width; 0 = dim
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 0.01;
    double weight_decay = 5e-3;

    static constexpr std::array<std::size_t, 7> kDims = {4, 8, 16, 32, 64, 128, 256};

    static bool allowed_dim(std::size_t d) {
        for (std::size_t k : kDims)
            if (k == d) return true;
        return false;
    }

    std::size_t input_width_featureless() const {
        return featureless_dim == 0 ? dim : featureless_dim;
    }

    std::size_t hadamard_hidden() const { return decoder_hidden == 0 ? dim : decoder_hidden; }

    void validate() const {
        if (num_layers < 1 || num_layers > 2)
            throw ConfigError("model: layers must be 1 or 2, got " + std::to_string(num_layers));
        if (!allowed_dim(dim))
            throw ConfigError("model: dim " + std::to_string(dim) + " not in the declared list");
        if (featureless_dim != 0 && !allowed_dim(featureless_dim))
            throw ConfigError("model: featureless_dim " + std::to_string(featureless_dim) +
                              " not in the declared list");
        if (attention_dim == 0) throw ConfigError("model: attention_dim must be positive");
        if (alpha < 0.0 || alpha > 1.0)
            throw ConfigError("model: alpha must lie in [0,1], got " + std::to_string(alpha));
        if (decoder == DecoderKind::ComplEx && dim % 2 != 0)
            throw ConfigError("model: the ComplEx decoder needs an even dim");
    }
};

/// All learnable state of a DURENDAL model, keyed by stable labels. Init is
/// a pure function of (seed, label), so two models sharing a label get
/// identical values for it no matter what else they contain.
class DurendalModel {
public:
    DurendalModel(ModelSpec spec, const TemporalHeteroGraph& g, std::uint64_t seed)
        : spec_(spec),
          node_types_(g.node_types),
          relations_(g.relations),
          channels_(layers::build_channels(g)) {
        spec_.validate();
        channels_into_.assign(node_types_.size(), {});
        for (const auto& c : channels_) channels_into_[c.dst_type].push_back(c.id);
        build(seed);
    }

    const ModelSpec& spec() const { return spec_; }
    const std::vector<NodeType>& node_types() const { return node_types_; }
    const std::vector<Relation>& relations() const { return relations_; }
    const std::vector<layers::Channel>& channels() const { return channels_; }
    const std::vector<int>& channels_into(int type) const { return channels_into_[type]; }

    /// Input width of a node type at layer 0.
    std::size_t input_dim(int type) const {
        std::size_t f = node_types_[type].feature_dim;
        return f > 0 ? f : spec_.input_width_featureless();
    }

    /// Input width of layer l (1-based) for a node type.
    std::size_t layer_in_dim(int layer, int type) const {
        return layer == 1 ? input_dim(type) : spec_.dim;
    }

    /// Update-module slots: one per channel under UTA, one per receiving
    /// node type under ATU.
    std::vector<int> update_slots(int /*layer*/) const {
        std::vector<int> slots;
        if (spec_.scheme == Scheme::Uta) {
            for (const auto& c : channels_) slots.push_back(c.id);
        } else {
            for (std::size_t a = 0; a < node_types_.size(); ++a)
                if (!channels_into_[a].empty()) slots.push_back(static_cast<int>(a));
        }
        return slots;
    }

    static std::string conv_label(int layer, const layers::Channel& c, const char* part) {
        return "conv/l" + std::to_string(layer) + "/" + c.label + "/" + part;
    }
    static std::string att_label(int layer, const std::string& type_name, const char* part) {
        return "att/l" + std::to_string(layer) + "/" + type_name + "/" + part;
    }
    static std::string upd_label(int layer, int slot, const char* part) {
        return "upd/l" + std::to_string(layer) + "/s" + std::to_string(slot) + "/" + part;
    }
    static std::string input_label(const std::string& type_name) { return "input/" + type_name; }

    bool has_param(const std::string& label) const { return params_.count(label) != 0; }

    Tensor& param(const std::string& label) {
        auto it = params_.find(label);
        if (it == params_.end()) throw ContractError("model: no parameter '" + label + "'");
        return it->second;
    }

    /// Stable (label-sorted) view of every parameter.
    std::vector<std::pair<std::string, Tensor*>> parameters() {
        std::vector<std::pair<std::string, Tensor*>> out;
        out.reserve(params_.size());
        for (auto& [label, t] : params_) out.emplace_back(label, &t);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [label, t] : params_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [label, t] : params_) t.zero_grad();
    }

    std::map<std::string, std::vector<double>> values_snapshot() const {
        std::map<std::string, std::vector<double>> out;
        for (const auto& [label, t] : params_) out[label] = t.values;
        return out;
    }

    void restore(const std::map<std::string, std::vector<double>>& snap) {
        for (auto& [label, t] : params_) t.values = snap.at(label);
    }

    /// Raw parameter bytes, for bit-identity probes.
    std::string values_bytes() const {
        std::string out;
        for (const auto& [label, t] : params_) {
            out += label;
            out += '\0';
            out.append(reinterpret_cast<const char*>(t.values.data()),
                       t.values.size() * sizeof(double));
        }
        return out;
    }

private:
    void add_param(const std::string& label, std::size_t r, std::size_t c, std::size_t fan_in,
                   std::uint64_t seed) {
        Tensor t = Tensor::zeros(r, c, true);
        init_uniform_fanin(t, fan_in, seed, label);
        params_.emplace(label, std::move(t));
    }

    void build(std::uint64_t seed) {
        std::size_t d = spec_.dim;
        for (const auto& nt : node_types_)
            if (nt.feature_dim == 0) {
                std::size_t f = spec_.input_width_featureless();
                add_param(input_label(nt.name), 1, f, f, seed);
            }
        for (int l = 1; l <= spec_.num_layers; ++l) {
            for (const auto& c : channels_) {
                std::size_t din_src = layer_in_dim(l, c.src_type);
                std::size_t din_dst = layer_in_dim(l, c.dst_type);
                add_param(conv_label(l, c, "root"), din_dst, d, din_dst, seed);
                add_param(conv_label(l, c, "neigh"), din_src, d, din_src, seed);
                add_param(conv_label(l, c, "bias"), 1, d, din_dst, seed);
            }
            if (spec_.aggregation == Aggregation::SemanticAttention)
                for (std::size_t a = 0; a < node_types_.size(); ++a) {
                    if (channels_into_[a].empty()) continue;
                    std::size_t da = spec_.attention_dim;
                    add_param(att_label(l, node_types_[a].name, "w"), d, da, d, seed);
                    add_param(att_label(l, node_types_[a].name, "b"), 1, da, da, seed);
                    add_param(att_label(l, node_types_[a].name, "q"), da, 1, da, seed);
                }
            for (int slot : update_slots(l)) {
                switch (spec_.update) {
                    case UpdateKind::Gru:
                        for (const char* g : {"wz", "uz", "wr", "ur", "wh", "uh"})
                            add_param(upd_label(l, slot, g), d, d, d, seed);
                        for (const char* g : {"bz", "br", "bh"})
                            add_param(upd_label(l, slot, g), 1, d, d, seed);
                        break;
                    case UpdateKind::ConcatMlp:
                        add_param(upd_label(l, slot, "w1"), 2 * d, d, 2 * d, seed);
                        add_param(upd_label(l, slot, "b1"), 1, d, 2 * d, seed);
                        add_param(upd_label(l, slot, "w2"), d, d, d, seed);
                        add_param(upd_label(l, slot, "b2"), 1, d, d, seed);
                        break;
                    case UpdateKind::WeightedAverage:
                        break;  // alpha is a hyperparameter, not learned
                }
            }
        }
        if (spec_.decoder == DecoderKind::HadamardMlp) {
            std::size_t dh = spec_.hadamard_hidden();
            add_param("dec/had/w1", d, dh, d, seed);
            add_param("dec/had/b1", 1, dh, d, seed);
            add_param("dec/had/w2", dh, 1, dh, seed);
            add_param("dec/had/b2", 1, 1, dh, seed);
        } else {
            std::size_t half = d / 2;
            add_param("dec/cx/rel_re", relations_.size(), half, half, seed);
            add_param("dec/cx/rel_im", relations_.size(), half, half, seed);
        }
    }

    ModelSpec spec_;
    std::vector<NodeType> node_types_;
    std::vector<Relation> relations_;
    std::vector<layers::Channel> channels_;
    std::vector<std::vector<int>> channels_into_;
    std::map<std::string, Tensor> params_;
};

/// Caches param() leases so each parameter appears once per tape.
class ParamLease {
public:
    ParamLease(Tape& t, DurendalModel& m) : tape_(t), model_(m) {}

    Var operator[](const std::string& label) {
        auto it = cache_.find(label);
        if (it != cache_.end()) return it->second;
        Var v = tape_.param(model_.param(label));
        cache_.emplace(label, v);
        return v;
    }

private:
    Tape& tape_;
    DurendalModel& model_;
    std::map<std::string, Var> cache_;
};

}  // namespace durendal
