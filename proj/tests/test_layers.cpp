#include <gtest/gtest.h>

#include "durendal/layers.hpp"
#include "test_util.hpp"

using namespace durendal;
using namespace durendal::layers;

namespace {

Tensor rand_mat(std::size_t r, std::size_t c, std::uint64_t seed, const char* label) {
    Tensor t = Tensor::zeros(r, c);
    RngStream rng(seed, label);
    for (auto& v : t.values) v = rng.next_double(-1.0, 1.0);
    return t;
}

}  // namespace

TEST(RelationConv, IdentityWeightsAddNeighborFeatures) {
    Tape t;
    Var id = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    Var zero_bias = t.constant(Tensor::zeros(1, 2));
    // Node 0 has features [1,0]; node 1 (its only neighbor) has [0,1].
    Var h = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    Var out = relation_conv(t, id, id, zero_bias, h, h, {1}, {0}, 2);
    EXPECT_DOUBLE_EQ(t.val(out).at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(t.val(out).at(0, 1), 1.0);
}

TEST(RelationConv, IsolatedNodeGetsRootTermPlusBias) {
    Tape t;
    Var w_root = t.constant(Tensor::matrix({{2, 0}, {0, 2}}));
    Var w_neigh = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    Var bias = t.constant(Tensor::matrix({{0.5, -0.5}}));
    Var h = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    Var out = relation_conv(t, w_root, w_neigh, bias, h, h, {}, {}, 2);
    EXPECT_DOUBLE_EQ(t.val(out).at(0, 0), 2.5);
    EXPECT_DOUBLE_EQ(t.val(out).at(0, 1), 3.5);
    EXPECT_DOUBLE_EQ(t.val(out).at(1, 0), 6.5);
    EXPECT_DOUBLE_EQ(t.val(out).at(1, 1), 7.5);
}

TEST(RelationConv, NeighborSumAggregation) {
    Tape t;
    Var zero = t.constant(Tensor::zeros(2, 2));
    Var id = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    Var bias = t.constant(Tensor::zeros(1, 2));
    // Two neighbors with features [1,0] each feed node 2.
    Var h = t.constant(Tensor::matrix({{1, 0}, {1, 0}, {9, 9}}));
    Var out = relation_conv(t, zero, id, bias, h, h, {0, 1}, {2, 2}, 3);
    EXPECT_DOUBLE_EQ(t.val(out).at(2, 0), 2.0);
    EXPECT_DOUBLE_EQ(t.val(out).at(2, 1), 0.0);
}

TEST(RelationConv, MeanFlagDividesByDegree) {
    Tape t;
    Var zero = t.constant(Tensor::zeros(1, 1));
    Var id = t.constant(Tensor::matrix({{1}}));
    Var bias = t.constant(Tensor::zeros(1, 1));
    Var h = t.constant(Tensor::matrix({{2}, {4}, {0}}));
    Var out = relation_conv(t, zero, id, bias, h, h, {0, 1}, {2, 2}, 3, true);
    EXPECT_DOUBLE_EQ(t.val(out).at(2, 0), 3.0);  // mean of 2 and 4
}

TEST(RelationConv, LinearInInputsWithZeroBias) {
    Tape t;
    Var w_root = t.constant(rand_mat(3, 2, 1, "root"));
    Var w_neigh = t.constant(rand_mat(3, 2, 1, "neigh"));
    Var bias = t.constant(Tensor::zeros(1, 2));
    Tensor x = rand_mat(4, 3, 2, "x"), y = rand_mat(4, 3, 3, "y");
    double a = 0.7, b = -1.3;
    Tensor mix = x;
    for (std::size_t i = 0; i < mix.values.size(); ++i)
        mix.values[i] = a * x.values[i] + b * y.values[i];
    std::vector<std::size_t> srcs = {0, 1, 3}, dsts = {2, 0, 2};
    auto conv = [&](const Tensor& m) {
        Var h = t.constant(m);
        return t.val(relation_conv(t, w_root, w_neigh, bias, h, h, srcs, dsts, 4)).values;
    };
    auto cx = conv(x), cy = conv(y), cmix = conv(mix);
    for (std::size_t i = 0; i < cmix.size(); ++i)
        EXPECT_NEAR(cmix[i], a * cx[i] + b * cy[i], 1e-12);
}

TEST(SumAggregate, Examples) {
    Tape t;
    Tensor m = rand_mat(3, 2, 4, "m");
    Var vm = t.constant(m);
    EXPECT_EQ(t.val(sum_aggregate(t, {vm})).values, m.values);
    auto twice = t.val(sum_aggregate(t, {vm, vm})).values;
    for (std::size_t i = 0; i < twice.size(); ++i) EXPECT_DOUBLE_EQ(twice[i], 2 * m.values[i]);
    Var neg = t.scale(vm, -1.0);
    for (double v : t.val(sum_aggregate(t, {vm, neg})).values) EXPECT_DOUBLE_EQ(v, 0.0);
    EXPECT_THROW(sum_aggregate(t, {}), ContractError);
}

TEST(SemanticAttention, IdenticalPartialsGetUniformWeights) {
    Tape t;
    Var w = t.constant(rand_mat(3, 2, 5, "w"));
    Var b = t.constant(rand_mat(1, 2, 5, "b"));
    Var q = t.constant(rand_mat(2, 1, 5, "q"));
    Var z = t.constant(rand_mat(4, 3, 5, "z"));
    auto att = semantic_attention_aggregate(t, w, b, q, {z, z});
    EXPECT_DOUBLE_EQ(t.val(att.beta).values[0], 0.5);
    EXPECT_DOUBLE_EQ(t.val(att.beta).values[1], 0.5);
}

TEST(SemanticAttention, SingleRelationIsIdentity) {
    Tape t;
    Var w = t.constant(rand_mat(3, 2, 6, "w"));
    Var b = t.constant(rand_mat(1, 2, 6, "b"));
    Var q = t.constant(rand_mat(2, 1, 6, "q"));
    Tensor z = rand_mat(4, 3, 6, "z");
    auto att = semantic_attention_aggregate(t, w, b, q, {t.constant(z)});
    EXPECT_DOUBLE_EQ(t.val(att.beta).values[0], 1.0);
    EXPECT_EQ(t.val(att.aggregated).values, z.values);
}

// Direct re-evaluation of the attention formula, independent of the tape.
TEST(SemanticAttention, MatchesDirectOracle) {
    std::uint64_t seed = 7;
    Tensor w = rand_mat(3, 2, seed, "w"), b = rand_mat(1, 2, seed, "b"),
           q = rand_mat(2, 1, seed, "q");
    std::vector<Tensor> zs = {rand_mat(5, 3, seed, "z0"), rand_mat(5, 3, seed, "z1"),
                              rand_mat(5, 3, seed, "z2")};
    Tape t;
    std::vector<Var> vz;
    for (const Tensor& z : zs) vz.push_back(t.constant(z));
    auto att = semantic_attention_aggregate(t, t.constant(w), t.constant(b), t.constant(q), vz);

    // Oracle: straight loops.
    std::vector<double> scores;
    for (const Tensor& z : zs) {
        double acc = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t k = 0; k < 2; ++k) {
                double pre = b.values[k];
                for (std::size_t j = 0; j < 3; ++j) pre += z.at(i, j) * w.at(j, k);
                dot += std::tanh(pre) * q.values[k];
            }
            acc += dot;
        }
        scores.push_back(acc / static_cast<double>(z.rows()));
    }
    double mx = *std::max_element(scores.begin(), scores.end());
    double zsum = 0.0;
    std::vector<double> beta;
    for (double s : scores) zsum += std::exp(s - mx);
    for (double s : scores) beta.push_back(std::exp(s - mx) / zsum);

    double beta_total = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_NEAR(t.val(att.beta).values[r], beta[r], 1e-12);
        beta_total += t.val(att.beta).values[r];
    }
    EXPECT_NEAR(beta_total, 1.0, 1e-12);
    for (std::size_t i = 0; i < zs[0].numel(); ++i) {
        double want = 0.0;
        for (std::size_t r = 0; r < 3; ++r) want += beta[r] * zs[r].values[i];
        EXPECT_NEAR(t.val(att.aggregated).values[i], want, 1e-12);
    }
}

TEST(SemanticAttention, PermutingRelationsPermutesBeta) {
    std::uint64_t seed = 8;
    Tensor w = rand_mat(3, 2, seed, "w"), b = rand_mat(1, 2, seed, "b"),
           q = rand_mat(2, 1, seed, "q");
    std::vector<Tensor> zs = {rand_mat(4, 3, seed, "za"), rand_mat(4, 3, seed, "zb"),
                              rand_mat(4, 3, seed, "zc")};
    Tape t;
    auto run = [&](std::vector<int> order) {
        std::vector<Var> vz;
        for (int i : order) vz.push_back(t.constant(zs[i]));
        return semantic_attention_aggregate(t, t.constant(w), t.constant(b), t.constant(q), vz);
    };
    auto fwd = run({0, 1, 2});
    auto rev = run({2, 0, 1});
    EXPECT_DOUBLE_EQ(t.val(fwd.beta).values[0], t.val(rev.beta).values[1]);
    EXPECT_DOUBLE_EQ(t.val(fwd.beta).values[1], t.val(rev.beta).values[2]);
    EXPECT_DOUBLE_EQ(t.val(fwd.beta).values[2], t.val(rev.beta).values[0]);
    for (std::size_t i = 0; i < t.val(fwd.aggregated).numel(); ++i)
        EXPECT_NEAR(t.val(fwd.aggregated).values[i], t.val(rev.aggregated).values[i], 1e-12);
}

TEST(Channels, UndirectedCrossTypeGetsReverseLane) {
    TemporalHeteroGraph g;
    g.node_types = {{0, "u", 0}, {1, "i", 0}};
    g.relations = {{0, "view", 0, 1, false}, {1, "buy", 0, 1, true}};
    HeteroSnapshot s;
    s.index = 1;
    s.node_count = {2, 2};
    s.features.resize(2);
    s.edges = {{{0, 1}}, {{1, 0}}};
    g.snapshots.push_back(s);
    g.validate();

    auto chans = build_channels(g);
    ASSERT_EQ(chans.size(), 3u);
    EXPECT_EQ(chans[0].label, "view");
    EXPECT_EQ(chans[1].label, "view~rev");
    EXPECT_TRUE(chans[1].reversed);
    EXPECT_EQ(chans[1].src_type, 1);
    EXPECT_EQ(chans[1].dst_type, 0);
    EXPECT_EQ(chans[2].label, "buy");

    auto [fs, fd] = channel_edges(g, 1, chans[0]);
    EXPECT_EQ(fs, (std::vector<std::size_t>{0}));
    EXPECT_EQ(fd, (std::vector<std::size_t>{1}));
    auto [rs, rd] = channel_edges(g, 1, chans[1]);
    EXPECT_EQ(rs, (std::vector<std::size_t>{1}));
    EXPECT_EQ(rd, (std::vector<std::size_t>{0}));
}

TEST(Channels, UndirectedSameTypeMirrorsEdges) {
    TemporalHeteroGraph g = testutil::simple_graph(1, 1, 3);
    g.relations[0].directed = false;
    g.snapshots[0].edges[0] = {{0, 1}};
    g.validate();
    auto chans = build_channels(g);
    ASSERT_EQ(chans.size(), 1u);
    auto [srcs, dsts] = channel_edges(g, 1, chans[0]);
    EXPECT_EQ(srcs, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(dsts, (std::vector<std::size_t>{1, 0}));
}

TEST(Params, CountFormulas) {
    EXPECT_EQ(conv_param_count(3, 5, 4), 3u * 4 + 5u * 4 + 4);
    EXPECT_EQ(attention_param_count(8, 3), 8u * 3 + 3 + 3);
}

// Forward cost recorded on the tape grows linearly with the edge count.
TEST(Flops, LinearInEdges) {
    auto flops_for = [](std::size_t n_edges) {
        Tape t;
        Var w_root = t.constant(rand_mat(4, 4, 9, "root"));
        Var w_neigh = t.constant(rand_mat(4, 4, 9, "neigh"));
        Var bias = t.constant(Tensor::zeros(1, 4));
        Var h = t.constant(rand_mat(30, 4, 9, "h"));
        std::vector<std::size_t> srcs, dsts;
        RngStream rng(10, "edges");
        for (std::size_t e = 0; e < n_edges; ++e) {
            srcs.push_back(rng.next_below(30));
            dsts.push_back(rng.next_below(30));
        }
        relation_conv(t, w_root, w_neigh, bias, h, h, srcs, dsts, 30);
        return t.flops();
    };
    std::uint64_t f1 = flops_for(100), f2 = flops_for(200), f3 = flops_for(300);
    EXPECT_EQ(f2 - f1, f3 - f2);
    EXPECT_GT(f2, f1);
}
