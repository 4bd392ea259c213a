#include <gtest/gtest.h>

#include <fstream>

#include "durendal/io.hpp"
#include "durendal/synth.hpp"
#include "test_util.hpp"

using namespace durendal;
using testutil::TempDir;

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

synth::SynthSpec taobao_like_spec(std::uint64_t seed = 7) {
    synth::SynthSpec spec;
    spec.node_types = {{"user", 40}, {"item", 20}};
    spec.relations = {{"pageview", "user", "item", false}, {"buy", "user", "item", false}};
    spec.snapshots = 5;
    spec.rule = {"pageview", "buy", 0.9};
    spec.noise_rate = 0.05;
    spec.triggers_per_src = 2;
    spec.feature_dim = 4;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST(IoLoad, MinimalDatasetLoads) {
    TempDir dir;
    write_file(dir.path() / "schema.txt",
               "nodetype n 0\n"
               "relation r n n 1\n"
               "snapshots 4\n"
               "nodecounts n 3 3 3 3\n");
    write_file(dir.path() / "edges.tsv",
               "n\t0\tr\tn\t1\t1\n"
               "n\t1\tr\tn\t2\t2\n"
               "n\t2\tr\tn\t0\t4\n");
    TemporalHeteroGraph g = io::load_dataset(dir.path());
    EXPECT_EQ(temporality(g), 4);
    EXPECT_EQ(g.snapshot(1).edges[0].size(), 1u);
    EXPECT_EQ(g.snapshot(3).edges[0].size(), 0u);
}

TEST(IoLoad, UndeclaredRelationIsSchemaError) {
    TempDir dir;
    write_file(dir.path() / "schema.txt",
               "nodetype n 0\nrelation r n n 1\nsnapshots 2\nnodecounts n 3 3\n");
    write_file(dir.path() / "edges.tsv", "n\t0\tmystery\tn\t1\t1\n");
    EXPECT_THROW(io::load_dataset(dir.path()), SchemaError);
}

TEST(IoLoad, FeatureRowCountMismatchIsValidationError) {
    TempDir dir;
    write_file(dir.path() / "schema.txt",
               "nodetype n 2\nrelation r n n 1\nsnapshots 2\nnodecounts n 3 3\n");
    write_file(dir.path() / "edges.tsv", "");
    write_file(dir.path() / "features_n.csv", "f0,f1\n1,2\n3,4\n");  // 2 rows, 3 nodes
    EXPECT_THROW(io::load_dataset(dir.path()), ValidationError);
}

TEST(IoLoad, MalformedLineReportsLineNumber) {
    TempDir dir;
    write_file(dir.path() / "schema.txt",
               "nodetype n 0\nrelation r n n 1\nsnapshots 2\nnodecounts n 3 3\n");
    write_file(dir.path() / "edges.tsv", "n\t0\tr\tn\t1\t1\nn\t0\tr\tn\n");
    try {
        io::load_dataset(dir.path());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(IoLoad, DuplicateEdgeIsValidationError) {
    TempDir dir;
    write_file(dir.path() / "schema.txt",
               "nodetype n 0\nrelation r n n 1\nsnapshots 2\nnodecounts n 3 3\n");
    write_file(dir.path() / "edges.tsv", "n\t0\tr\tn\t1\t1\nn\t0\tr\tn\t1\t1\n");
    EXPECT_THROW(io::load_dataset(dir.path()), ValidationError);
}

TEST(IoLoad, MissingSchemaIsIoError) {
    TempDir dir;
    EXPECT_THROW(io::load_dataset(dir.path()), IoError);
}

TEST(IoRoundTrip, RandomGraphsSurviveExactly) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        TemporalHeteroGraph g = testutil::random_graph(seed, 2, 4, 10, seed % 2 ? 3 : 0);
        TempDir dir;
        io::save_dataset(g, dir.path());
        TemporalHeteroGraph back = io::load_dataset(dir.path());
        EXPECT_EQ(g, back) << "seed " << seed;
    }
}

TEST(IoRoundTrip, FeaturesAreBitExact) {
    TemporalHeteroGraph g = testutil::random_graph(42, 1, 3, 6, 5);
    // Awkward doubles: denormal-ish, negative zero, long fractions.
    Tensor& f = *g.snapshots[0].features[0];
    f.values[0] = -0.0;
    f.values[1] = 0.1 + 0.2;
    f.values[2] = 1e-300;
    f.values[3] = -1.0 / 3.0;
    for (auto& s : g.snapshots) s.features[0] = f;  // keep static
    TempDir dir;
    io::save_dataset(g, dir.path());
    TemporalHeteroGraph back = io::load_dataset(dir.path());
    EXPECT_EQ(g, back);
}

TEST(IoRoundTrip, EmptySnapshotsSurvive) {
    TemporalHeteroGraph g = testutil::simple_graph(2, 5, 4);
    g.snapshots[1].edges[0].push_back({0, 1});  // all other snapshots empty
    g.validate();
    TempDir dir;
    io::save_dataset(g, dir.path());
    EXPECT_EQ(g, io::load_dataset(dir.path()));
}

TEST(IoRoundTrip, GrowingNodeCountsSurvive) {
    TemporalHeteroGraph g = testutil::simple_graph(2, 4, 3);
    for (int t = 0; t < 4; ++t) g.snapshots[t].node_count[0] = 3 + t;
    g.snapshots[3].edges[1].push_back({5, 0});
    g.validate();
    TempDir dir;
    io::save_dataset(g, dir.path());
    EXPECT_EQ(g, io::load_dataset(dir.path()));
}

TEST(IoSave, EvolvingFeaturesAreRejected) {
    TemporalHeteroGraph g = testutil::random_graph(3, 1, 3, 6, 2);
    (*g.snapshots[1].features[0]).values[0] += 1.0;
    TempDir dir;
    EXPECT_THROW(io::save_dataset(g, dir.path()), ValidationError);
}

TEST(Synth, SameSeedIsByteIdentical) {
    synth::SynthSpec spec = taobao_like_spec();
    synth::SynthResult a = synth::synth_generate(spec);
    synth::SynthResult b = synth::synth_generate(spec, 4);  // threads must not matter
    EXPECT_EQ(a.graph, b.graph);

    TempDir da, db;
    io::save_dataset(a.graph, da.path());
    io::save_dataset(b.graph, db.path());
    for (const char* name : {"schema.txt", "edges.tsv", "features_user.csv"})
        EXPECT_EQ(testutil::slurp(da.path() / name), testutil::slurp(db.path() / name)) << name;
}

TEST(Synth, CertainRuleFiresEveryTrigger) {
    synth::SynthSpec spec = taobao_like_spec();
    spec.rule.probability = 1.0;
    spec.noise_rate = 0.0;
    synth::SynthResult r = synth::synth_generate(spec);
    int buy = r.graph.relation_id("buy");
    int pv = r.graph.relation_id("pageview");
    for (int t = 2; t <= spec.snapshots; ++t) {
        std::vector<Edge> want = r.graph.snapshot(t - 1).edges[pv];
        std::sort(want.begin(), want.end());
        EXPECT_EQ(r.graph.snapshot(t).edges[buy], want) << "snapshot " << t;
    }
    // The predictor reproduces the target exactly.
    synth::RulePredictor pred(r.graph, pv);
    for (int t = 2; t <= spec.snapshots; ++t)
        for (const Edge& e : r.graph.snapshot(t).edges[buy])
            EXPECT_EQ(pred.score(t, e.src, e.dst), 1.0);
}

TEST(Synth, ZeroRuleMeansNoTargetsAfterFirstSnapshot) {
    synth::SynthSpec spec = taobao_like_spec();
    spec.rule.probability = 0.0;
    spec.noise_rate = 0.0;
    synth::SynthResult r = synth::synth_generate(spec);
    int buy = r.graph.relation_id("buy");
    for (int t = 2; t <= spec.snapshots; ++t)
        EXPECT_TRUE(r.graph.snapshot(t).edges[buy].empty());
}

TEST(Synth, GeneratedSetsMeetRequirements) {
    for (std::uint64_t seed : {1ull, 5ull, 9ull}) {
        synth::SynthSpec spec = taobao_like_spec(seed);
        synth::SynthResult r = synth::synth_generate(spec);
        EXPECT_TRUE(check_requirements(r.graph).meets_requirements);
    }
}

TEST(Synth, TooFewSnapshotsRejected) {
    synth::SynthSpec spec = taobao_like_spec();
    spec.snapshots = 3;
    EXPECT_THROW(synth::synth_generate(spec), ConfigError);
}

TEST(Synth, PeriodicRelationSkipsSnapshots) {
    synth::SynthSpec spec = taobao_like_spec();
    spec.relations.push_back({"restock", "user", "item", true});
    spec.periods["restock"] = 2;
    synth::SynthResult r = synth::synth_generate(spec);
    int rid = r.graph.relation_id("restock");
    for (int t = 1; t <= spec.snapshots; ++t) {
        bool active = (t - 1) % 2 == 0;
        EXPECT_EQ(!r.graph.snapshot(t).edges[rid].empty(), active) << "snapshot " << t;
    }
}
