// durendal: dataset statistics, synthetic generation, live-update training,
// and gradient self-checks for temporal heterogeneous networks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "durendal/gradcheck.hpp"
#include "durendal/io.hpp"
#include "durendal/synth.hpp"
#include "durendal/training.hpp"

namespace fs = std::filesystem;
using namespace durendal;

namespace {

struct KvLine {
    std::string key;
    std::string value;
    int line_no = 0;
};

/// `key = value` lines, UTF-8, '#' comments. Repeated keys allowed; the
/// consumer decides whether that is legal.
std::vector<KvLine> parse_kv_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path.string() + "'");
    std::vector<KvLine> out;
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");
        KvLine kv;
        kv.key = trim(t.substr(0, eq));
        kv.value = trim(t.substr(eq + 1));
        kv.line_no = line_no;
        if (kv.key.empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty key");
        out.push_back(std::move(kv));
    }
    return out;
}

long to_long(const KvLine& kv) {
    return io::parse_long(kv.value, kv.line_no);
}

double to_double(const KvLine& kv) {
    return io::parse_double(kv.value, kv.line_no);
}

std::vector<std::string> words(const std::string& s) {
    std::istringstream ss(s);
    std::vector<std::string> out;
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

// -------------------------------------------------------------------------
// Train configuration: ModelSpec + LiveUpdateConfig from a config file with
// command-line overrides. Unknown keys are rejected by name.
// -------------------------------------------------------------------------

struct TrainConfig {
    ModelSpec model;
    train::LiveUpdateConfig run;
    std::string target_relation_name;
    bool target_named = false;
};

TrainConfig parse_train_config(const std::vector<KvLine>& lines) {
    TrainConfig c;
    c.model.num_layers = 2;
    c.model.dim = 64;
    for (const KvLine& kv : lines) {
        const std::string& k = kv.key;
        if (k == "scheme") {
            if (kv.value == "uta")
                c.model.scheme = Scheme::Uta;
            else if (kv.value == "atu")
                c.model.scheme = Scheme::Atu;
            else
                throw ConfigError("scheme must be uta or atu, got '" + kv.value + "'");
        } else if (k == "layers") {
            c.model.num_layers = static_cast<int>(to_long(kv));
        } else if (k == "dim") {
            c.model.dim = static_cast<std::size_t>(to_long(kv));
        } else if (k == "featureless_dim") {
            c.model.featureless_dim = static_cast<std::size_t>(to_long(kv));
        } else if (k == "aggregation") {
            if (kv.value == "sum")
                c.model.aggregation = Aggregation::Sum;
            else if (kv.value == "attention")
                c.model.aggregation = Aggregation::SemanticAttention;
            else
                throw ConfigError("aggregation must be sum or attention");
        } else if (k == "attention_dim") {
            c.model.attention_dim = static_cast<std::size_t>(to_long(kv));
        } else if (k == "neighbor_mean") {
            c.model.neighbor_mean = to_long(kv) != 0;
        } else if (k == "update") {
            if (kv.value == "gru")
                c.model.update = UpdateKind::Gru;
            else if (kv.value == "mlp")
                c.model.update = UpdateKind::ConcatMlp;
            else if (kv.value == "avg")
                c.model.update = UpdateKind::WeightedAverage;
            else
                throw ConfigError("update must be gru, mlp or avg");
        } else if (k == "alpha") {
            c.model.alpha = to_double(kv);
        } else if (k == "decoder") {
            if (kv.value == "hadamard")
                c.model.decoder = DecoderKind::HadamardMlp;
            else if (kv.value == "complex")
                c.model.decoder = DecoderKind::ComplEx;
            else
                throw ConfigError("decoder must be hadamard or complex");
        } else if (k == "decoder_hidden") {
            c.model.decoder_hidden = static_cast<std::size_t>(to_long(kv));
        } else if (k == "optimizer") {
            if (kv.value == "adam")
                c.model.optimizer = OptimizerKind::Adam;
            else if (kv.value == "adagrad")
                c.model.optimizer = OptimizerKind::Adagrad;
            else
                throw ConfigError("optimizer must be adam or adagrad");
        } else if (k == "lr") {
            c.model.learning_rate = to_double(kv);
        } else if (k == "weight_decay") {
            c.model.weight_decay = to_double(kv);
        } else if (k == "val_fraction") {
            c.run.validation_fraction = to_double(kv);
        } else if (k == "patience") {
            c.run.patience = static_cast<int>(to_long(kv));
        } else if (k == "max_epochs") {
            c.run.max_epochs = static_cast<int>(to_long(kv));
        } else if (k == "neg_ratio") {
            c.run.negative_ratio = static_cast<int>(to_long(kv));
        } else if (k == "task") {
            if (kv.value == "mono")
                c.run.multirelational = false;
            else if (kv.value == "multi")
                c.run.multirelational = true;
            else
                throw ConfigError("task must be mono or multi");
        } else if (k == "target_relation") {
            c.target_relation_name = kv.value;
            c.target_named = true;
        } else if (k == "seed") {
            c.run.seed = static_cast<std::uint64_t>(to_long(kv));
        } else if (k == "threads") {
            c.run.threads = static_cast<unsigned>(to_long(kv));
        } else {
            throw ConfigError("unknown config key '" + k + "' (line " +
                              std::to_string(kv.line_no) + ")");
        }
    }
    return c;
}

synth::SynthSpec parse_synth_spec(const std::vector<KvLine>& lines) {
    synth::SynthSpec spec;
    bool have_rule = false;
    for (const KvLine& kv : lines) {
        const std::string& k = kv.key;
        if (k == "seed") {
            spec.seed = static_cast<std::uint64_t>(to_long(kv));
        } else if (k == "snapshots") {
            spec.snapshots = static_cast<int>(to_long(kv));
        } else if (k == "feature_dim") {
            spec.feature_dim = static_cast<std::size_t>(to_long(kv));
        } else if (k == "triggers_per_src") {
            spec.triggers_per_src = static_cast<std::size_t>(to_long(kv));
        } else if (k == "noise") {
            spec.noise_rate = to_double(kv);
        } else if (k == "nodetype") {
            auto w = words(kv.value);
            if (w.size() != 2)
                throw ConfigError("nodetype wants '<name> <count>' (line " +
                                  std::to_string(kv.line_no) + ")");
            spec.node_types.push_back(
                {w[0], static_cast<std::size_t>(io::parse_long(w[1], kv.line_no))});
        } else if (k == "relation") {
            auto w = words(kv.value);
            if (w.size() != 4)
                throw ConfigError("relation wants '<name> <src> <dst> <directed:0|1>' (line " +
                                  std::to_string(kv.line_no) + ")");
            spec.relations.push_back(
                {w[0], w[1], w[2], io::parse_long(w[3], kv.line_no) != 0});
        } else if (k == "rule") {
            auto w = words(kv.value);
            if (w.size() != 3)
                throw ConfigError("rule wants '<trigger> <target> <probability>' (line " +
                                  std::to_string(kv.line_no) + ")");
            spec.rule = {w[0], w[1], io::parse_double(w[2], kv.line_no)};
            have_rule = true;
        } else if (k == "period") {
            auto w = words(kv.value);
            if (w.size() != 2)
                throw ConfigError("period wants '<relation> <period>' (line " +
                                  std::to_string(kv.line_no) + ")");
            spec.periods[w[0]] = static_cast<int>(io::parse_long(w[1], kv.line_no));
        } else {
            throw ConfigError("unknown synth key '" + k + "' (line " +
                              std::to_string(kv.line_no) + ")");
        }
    }
    if (!have_rule) throw ConfigError("synth spec needs a 'rule' line");
    return spec;
}

// -------------------------------------------------------------------------
// Subcommands.
// -------------------------------------------------------------------------

int cmd_stats(const std::string& data_dir) {
    TemporalHeteroGraph g = io::load_dataset(data_dir);
    DatasetMetrics m = check_requirements(g);
    std::printf("heterogeneity          %d\n", m.heterogeneity);
    std::printf("temporality            %d\n", m.temporality);
    std::printf("evolutivity_raw        %s\n", io::format_double(m.evolutivity_raw).c_str());
    std::printf("evolutivity_normalized %s\n",
                io::format_double(m.evolutivity_normalized).c_str());
    if (m.temporality >= 2)
        std::printf("evolutivity_novel      %s\n",
                    io::format_double(evolutivity_novel(g)).c_str());
    std::printf("requirements           %s\n", m.meets_requirements ? "PASS" : "FAIL");
    return m.meets_requirements ? 0 : 2;
}

double rule_oracle_auprc(const TemporalHeteroGraph& g, const synth::SynthSpec& spec,
                         std::uint64_t seed) {
    int trigger = g.relation_id(spec.rule.trigger);
    int target = g.relation_id(spec.rule.target);
    synth::RulePredictor pred(g, trigger);
    double acc = 0.0;
    int counted = 0;
    for (int t = 2; t <= temporality(g); ++t) {
        if (g.snapshot(t).edges[target].empty()) continue;
        train::Scorer scorer = [&, t](int, std::span<const Edge> pairs) {
            std::vector<double> out;
            out.reserve(pairs.size());
            for (const Edge& e : pairs) out.push_back(pred.score(t, e.src, e.dst));
            return out;
        };
        acc += train::evaluate_relation(scorer, g, t, target, 1, seed).auprc;
        ++counted;
    }
    if (counted == 0) throw UndefinedMetricError("no target edges in any test snapshot");
    return acc / counted;
}

int cmd_synth(const std::string& spec_file, const std::string& out_dir, long seed_override,
              unsigned threads) {
    synth::SynthSpec spec = parse_synth_spec(parse_kv_file(spec_file));
    if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
    synth::SynthResult r = synth::synth_generate(spec, threads);
    io::save_dataset(r.graph, out_dir);
    DatasetMetrics m = check_requirements(r.graph);
    std::printf("generated %s: |A|=%zu |R|=%zu T=%d requirements=%s\n", out_dir.c_str(),
                r.graph.num_types(), r.graph.num_relations(), temporality(r.graph),
                m.meets_requirements ? "PASS" : "FAIL");
    double oracle = rule_oracle_auprc(r.graph, spec, spec.seed);
    std::printf("rule-oracle AUPRC %s\n", io::format_double(oracle).c_str());
    return 0;
}

int cmd_train(const std::string& config_file, const std::string& data_dir,
              const std::string& out_base, const std::map<std::string, std::string>& overrides) {
    std::vector<KvLine> lines;
    if (!config_file.empty()) lines = parse_kv_file(config_file);
    for (const auto& [k, v] : overrides) lines.push_back({k, v, 0});
    TrainConfig cfg = parse_train_config(lines);

    TemporalHeteroGraph g = io::load_dataset(data_dir);
    if (!cfg.run.multirelational) {
        if (!cfg.target_named)
            throw ConfigError("monorelational runs need the 'target_relation' key");
        cfg.run.target_relation = g.relation_id(cfg.target_relation_name);
    }
    cfg.model.validate();
    cfg.run.validate();

    train::RunReport report = train::live_update_run(cfg.model, g, cfg.run);
    io::atomic_write(out_base + ".json", report.full_json());
    io::atomic_write(out_base + ".csv", report.to_csv());
    std::printf("average AUPRC %s MRR %s over %zu test snapshots\n",
                io::format_double(report.avg_auprc).c_str(),
                io::format_double(report.avg_mrr).c_str(), report.snapshots.size());
    std::printf("wrote %s.json and %s.csv\n", out_base.c_str(), out_base.c_str());
    return 0;
}

int cmd_gradcheck() {
    bool all_ok = true;
    for (const auto& entry : gradcheck::registry()) {
        double err = entry.run();
        bool ok = err < 1e-4;
        all_ok &= ok;
        std::printf("%-24s %-4s max_rel_err=%s\n", entry.name.c_str(), ok ? "PASS" : "FAIL",
                    io::format_double(err).c_str());
    }
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DURENDAL: temporal heterogeneous graph learning at desk scale"};
    app.require_subcommand(1);

    std::string data_dir, out_path, config_file, spec_file;
    std::string scheme, update, task, relation;
    double alpha = -1.0;
    long seed = -1;
    unsigned threads = 1;

    CLI::App* stats = app.add_subcommand("stats", "dataset metrics and requirement verdict");
    stats->add_option("--data", data_dir, "dataset directory")->required();

    CLI::App* synth = app.add_subcommand("synth", "generate a planted-rule synthetic dataset");
    synth->add_option("--config", spec_file, "synth spec file (key = value)")->required();
    synth->add_option("--out", out_path, "output dataset directory")->required();
    synth->add_option("--seed", seed, "override the spec seed");
    synth->add_option("--threads", threads, "worker cap for per-relation generation");

    CLI::App* tr = app.add_subcommand("train", "live-update training and evaluation");
    tr->add_option("--config", config_file, "run config file (key = value)");
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", out_path, "report path base (.json/.csv appended)")->required();
    tr->add_option("--seed", seed, "override the config seed");
    tr->add_option("--threads", threads, "worker cap");
    tr->add_option("--scheme", scheme, "uta|atu")->check(CLI::IsMember({"uta", "atu"}));
    tr->add_option("--update", update, "gru|mlp|avg")->check(CLI::IsMember({"gru", "mlp", "avg"}));
    tr->add_option("--alpha", alpha, "weighted-average past coefficient");
    tr->add_option("--task", task, "mono|multi")->check(CLI::IsMember({"mono", "multi"}));
    tr->add_option("--relation", relation, "target relation for mono tasks");

    app.add_subcommand("gradcheck", "finite-difference check of every component");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (stats->parsed()) return cmd_stats(data_dir);
        if (synth->parsed()) return cmd_synth(spec_file, out_path, seed, threads);
        if (tr->parsed()) {
            std::map<std::string, std::string> overrides;
            if (!scheme.empty()) overrides["scheme"] = scheme;
            if (!update.empty()) overrides["update"] = update;
            if (alpha >= 0.0) overrides["alpha"] = io::format_double(alpha);
            if (!task.empty()) overrides["task"] = task;
            if (!relation.empty()) overrides["target_relation"] = relation;
            if (seed >= 0) overrides["seed"] = std::to_string(seed);
            if (threads != 1) overrides["threads"] = std::to_string(threads);
            return cmd_train(config_file, data_dir, out_path, overrides);
        }
        return cmd_gradcheck();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
