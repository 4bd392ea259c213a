#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "durendal/errors.hpp"
#include "durendal/graph.hpp"

namespace durendal::io {

namespace fs = std::filesystem;

inline constexpr const char* kSchemaFile = "schema.txt";
inline constexpr const char* kEdgeFile = "edges.tsv";

inline std::string feature_file_name(const std::string& type_name) {
    return "features_" + type_name + ".csv";
}

/// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, int line_no) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad number '" + std::string(s) +
                         "'");
    return v;
}

inline long parse_long(std::string_view s, int line_no) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + std::string(s) +
                         "'");
    return v;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

/// Write-then-rename so a crashed run never leaves a partial file behind.
inline void atomic_write(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename '" + tmp.string() + "' -> '" + path.string() + "': " +
                          ec.message());
}

struct DatasetManifest {
    fs::path schema_path;
    fs::path edge_path;
    std::map<std::string, fs::path> feature_paths;  // by node-type name
    std::vector<NodeType> node_types;
    std::vector<Relation> relations;
    int snapshot_count = 0;
    std::vector<std::vector<std::size_t>> node_counts;  // [type][snapshot]
    std::string time_granularity_label;
};

/// Parses the schema file of a dataset directory. Line kinds:
///   nodetype <name> <feature_dim>
///   relation <name> <src_type> <dst_type> <directed:0|1>
///   snapshots <T>
///   nodecounts <type> <c_1> ... <c_T>
///   granularity <label>
inline DatasetManifest load_manifest(const fs::path& dir) {
    DatasetManifest m;
    m.schema_path = dir / kSchemaFile;
    m.edge_path = dir / kEdgeFile;
    std::ifstream in(m.schema_path);
    if (!in) throw IoError("cannot open schema file '" + m.schema_path.string() + "'");
    std::string line;
    int line_no = 0;
    std::vector<std::vector<std::string>> count_lines;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string kind;
        ss >> kind;
        if (kind == "nodetype") {
            std::string name;
            long dim = -1;
            ss >> name >> dim;
            if (name.empty() || dim < 0)
                throw ParseError("line " + std::to_string(line_no) + ": bad nodetype line");
            m.node_types.push_back({static_cast<int>(m.node_types.size()), name,
                                    static_cast<std::size_t>(dim)});
        } else if (kind == "relation") {
            std::string name, src, dst;
            int directed = -1;
            ss >> name >> src >> dst >> directed;
            if (name.empty() || (directed != 0 && directed != 1))
                throw ParseError("line " + std::to_string(line_no) + ": bad relation line");
            int sid = -1, did = -1;
            for (const auto& nt : m.node_types) {
                if (nt.name == src) sid = nt.id;
                if (nt.name == dst) did = nt.id;
            }
            if (sid < 0 || did < 0)
                throw SchemaError("line " + std::to_string(line_no) + ": relation '" + name +
                                  "' uses undeclared node type");
            m.relations.push_back({static_cast<int>(m.relations.size()), name, sid, did,
                                   directed == 1});
        } else if (kind == "snapshots") {
            ss >> m.snapshot_count;
            if (m.snapshot_count < 1)
                throw ParseError("line " + std::to_string(line_no) + ": bad snapshots line");
        } else if (kind == "nodecounts") {
            std::vector<std::string> toks;
            std::string tok;
            while (ss >> tok) toks.push_back(tok);
            toks.insert(toks.begin(), std::to_string(line_no));
            count_lines.push_back(std::move(toks));
        } else if (kind == "granularity") {
            std::string rest;
            std::getline(ss, rest);
            std::size_t p = rest.find_first_not_of(' ');
            m.time_granularity_label = p == std::string::npos ? "" : rest.substr(p);
        } else {
            throw ParseError("line " + std::to_string(line_no) + ": unknown schema keyword '" +
                             kind + "'");
        }
    }
    if (m.snapshot_count < 1) throw SchemaError("schema file declares no snapshots");
    m.node_counts.assign(m.node_types.size(),
                         std::vector<std::size_t>(m.snapshot_count, 0));
    for (const auto& toks : count_lines) {
        int ln = static_cast<int>(parse_long(toks[0], 0));
        if (toks.size() != 2 + static_cast<std::size_t>(m.snapshot_count))
            throw ParseError("line " + std::to_string(ln) + ": nodecounts needs " +
                             std::to_string(m.snapshot_count) + " values");
        int tid = -1;
        for (const auto& nt : m.node_types)
            if (nt.name == toks[1]) tid = nt.id;
        if (tid < 0)
            throw SchemaError("line " + std::to_string(ln) + ": nodecounts for undeclared type '" +
                              toks[1] + "'");
        for (int t = 0; t < m.snapshot_count; ++t)
            m.node_counts[tid][t] = static_cast<std::size_t>(parse_long(toks[2 + t], ln));
    }
    for (const auto& nt : m.node_types) {
        fs::path f = dir / feature_file_name(nt.name);
        if (nt.feature_dim > 0) {
            if (!fs::exists(f))
                throw IoError("missing feature file '" + f.string() + "' for type '" + nt.name +
                              "'");
            m.feature_paths[nt.name] = f;
        }
    }
    if (!fs::exists(m.edge_path)) throw IoError("missing edge file '" + m.edge_path.string() + "'");
    return m;
}

inline TemporalHeteroGraph load_dataset(const fs::path& dir) {
    DatasetManifest m = load_manifest(dir);
    TemporalHeteroGraph g;
    g.node_types = m.node_types;
    g.relations = m.relations;
    g.time_granularity_label = m.time_granularity_label;
    g.snapshots.resize(m.snapshot_count);
    for (int t = 0; t < m.snapshot_count; ++t) {
        HeteroSnapshot& s = g.snapshots[t];
        s.index = t + 1;
        s.node_count.resize(g.node_types.size());
        for (std::size_t a = 0; a < g.node_types.size(); ++a)
            s.node_count[a] = m.node_counts[a][t];
        s.features.resize(g.node_types.size());
        s.edges.resize(g.relations.size());
    }

    // Edge file: src_type \t src \t relation \t dst_type \t dst \t snapshot.
    {
        std::ifstream in(m.edge_path);
        if (!in) throw IoError("cannot open edge file '" + m.edge_path.string() + "'");
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto f = split(line, '\t');
            if (f.size() != 6)
                throw ParseError("line " + std::to_string(line_no) + ": want 6 tab-separated " +
                                 "fields, got " + std::to_string(f.size()));
            int rid = -1;
            for (const auto& r : g.relations)
                if (r.name == f[2]) rid = r.id;
            if (rid < 0)
                throw SchemaError("line " + std::to_string(line_no) + ": undeclared relation '" +
                                  f[2] + "'");
            const Relation& rel = g.relations[rid];
            if (g.node_types[rel.src_type].name != f[0] ||
                g.node_types[rel.dst_type].name != f[3])
                throw SchemaError("line " + std::to_string(line_no) +
                                  ": endpoint types do not match relation '" + rel.name + "'");
            long src = parse_long(f[1], line_no);
            long dst = parse_long(f[4], line_no);
            long t = parse_long(f[5], line_no);
            if (t < 1 || t > m.snapshot_count)
                throw ParseError("line " + std::to_string(line_no) + ": snapshot index " +
                                 std::to_string(t) + " out of 1.." +
                                 std::to_string(m.snapshot_count));
            if (src < 0 || dst < 0)
                throw ParseError("line " + std::to_string(line_no) + ": negative node index");
            g.snapshots[t - 1].edges[rid].push_back(
                {static_cast<std::uint32_t>(src), static_cast<std::uint32_t>(dst)});
        }
    }

    // Feature files: CSV, header names the columns, row i = node i. Features
    // are static per node; snapshot t sees the first node_count(t) rows.
    for (const auto& nt : g.node_types) {
        if (nt.feature_dim == 0) continue;
        const fs::path& path = m.feature_paths.at(nt.name);
        std::ifstream in(path);
        if (!in) throw IoError("cannot open feature file '" + path.string() + "'");
        std::string line;
        int line_no = 0;
        std::vector<double> data;
        if (!std::getline(in, line))
            throw ParseError("feature file '" + path.string() + "' is empty");
        ++line_no;
        if (split(line, ',').size() != nt.feature_dim)
            throw ValidationError("feature file '" + path.string() + "': header declares " +
                                  std::to_string(split(line, ',').size()) + " columns, schema " +
                                  "says " + std::to_string(nt.feature_dim));
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto f = split(line, ',');
            if (f.size() != nt.feature_dim)
                throw ParseError("line " + std::to_string(line_no) + ": want " +
                                 std::to_string(nt.feature_dim) + " values, got " +
                                 std::to_string(f.size()));
            for (const auto& tok : f) data.push_back(parse_double(tok, line_no));
        }
        std::size_t rows = data.size() / nt.feature_dim;
        std::size_t final_count = g.snapshots.back().node_count[nt.id];
        if (rows != final_count)
            throw ValidationError("feature file '" + path.string() + "' has " +
                                  std::to_string(rows) + " rows, final node count is " +
                                  std::to_string(final_count));
        for (auto& s : g.snapshots) {
            std::size_t n = s.node_count[nt.id];
            Tensor fmat({n, nt.feature_dim},
                        std::vector<double>(data.begin(),
                                            data.begin() + n * nt.feature_dim));
            s.features[nt.id] = std::move(fmat);
        }
    }

    g.validate();
    return g;
}

/// Writes schema/edges/features into `dir`. Feature matrices must be
/// prefix-consistent across snapshots (static per node); evolving features
/// have no on-disk representation here.
inline void save_dataset(const TemporalHeteroGraph& g, const fs::path& dir) {
    g.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

    std::ostringstream schema;
    for (const auto& nt : g.node_types)
        schema << "nodetype " << nt.name << ' ' << nt.feature_dim << '\n';
    for (const auto& r : g.relations)
        schema << "relation " << r.name << ' ' << g.node_types[r.src_type].name << ' '
               << g.node_types[r.dst_type].name << ' ' << (r.directed ? 1 : 0) << '\n';
    schema << "snapshots " << g.num_snapshots() << '\n';
    for (const auto& nt : g.node_types) {
        schema << "nodecounts " << nt.name;
        for (const auto& s : g.snapshots) schema << ' ' << s.node_count[nt.id];
        schema << '\n';
    }
    if (!g.time_granularity_label.empty())
        schema << "granularity " << g.time_granularity_label << '\n';
    atomic_write(dir / kSchemaFile, schema.str());

    std::ostringstream edges;
    for (const auto& s : g.snapshots)
        for (const auto& r : g.relations)
            for (const Edge& e : s.edges[r.id])
                edges << g.node_types[r.src_type].name << '\t' << e.src << '\t' << r.name << '\t'
                      << g.node_types[r.dst_type].name << '\t' << e.dst << '\t' << s.index
                      << '\n';
    atomic_write(dir / kEdgeFile, edges.str());

    for (const auto& nt : g.node_types) {
        if (nt.feature_dim == 0) continue;
        const HeteroSnapshot& last = g.snapshots.back();
        if (!last.features[nt.id])
            throw ValidationError("type '" + nt.name + "' declares features but the last " +
                                  "snapshot carries none");
        const Tensor& full = *last.features[nt.id];
        for (const auto& s : g.snapshots) {
            if (!s.features[nt.id])
                throw ValidationError("type '" + nt.name + "' is missing features at snapshot " +
                                      std::to_string(s.index));
            const Tensor& f = *s.features[nt.id];
            if (std::memcmp(f.values.data(), full.values.data(),
                            f.values.size() * sizeof(double)) != 0)
                throw ValidationError("features of type '" + nt.name + "' change over time; " +
                                      "the on-disk format stores static per-node features only");
        }
        std::ostringstream csv;
        for (std::size_t j = 0; j < nt.feature_dim; ++j) csv << (j ? "," : "") << 'f' << j;
        csv << '\n';
        for (std::size_t i = 0; i < full.rows(); ++i) {
            for (std::size_t j = 0; j < nt.feature_dim; ++j)
                csv << (j ? "," : "") << format_double(full.at(i, j));
            csv << '\n';
        }
        atomic_write(dir / feature_file_name(nt.name), csv.str());
    }
}

}  // namespace durendal::io
