#include <gtest/gtest.h>

#include <cmath>

#include "durendal/metrics.hpp"
#include "durendal/rng.hpp"

using namespace durendal;
using metrics::RankGroup;

namespace {

// O(n^2) rank-counting oracle for step-wise AP: no sorting, direct
// pairwise comparisons with the same (score desc, index asc) tie key.
double auprc_oracle(const std::vector<double>& s, const std::vector<double>& y) {
    std::size_t n = s.size();
    double ap = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (y[i] <= 0.5) continue;
        ++positives;
        std::size_t rank = 1, tp = 1;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            bool ahead = s[j] > s[i] || (s[j] == s[i] && j < i);
            if (ahead) {
                ++rank;
                if (y[j] > 0.5) ++tp;
            }
        }
        ap += static_cast<double>(tp) / static_cast<double>(rank);
    }
    return ap / static_cast<double>(positives);
}

// Independent MRR route: explicit sorted positions, average of the tied
// block's first and last position.
double mrr_oracle(const std::vector<RankGroup>& groups) {
    double acc = 0.0;
    for (const RankGroup& g : groups) {
        std::vector<double> all = g.negative_scores;
        all.push_back(g.positive_score);
        std::sort(all.begin(), all.end(), std::greater<double>());
        std::size_t first = 0;
        while (all[first] != g.positive_score) ++first;
        std::size_t last = first;
        while (last + 1 < all.size() && all[last + 1] == g.positive_score) ++last;
        acc += 1.0 / ((static_cast<double>(first + 1) + static_cast<double>(last + 1)) / 2.0);
    }
    return acc / static_cast<double>(groups.size());
}

}  // namespace

TEST(Auprc, TabulatedExamples) {
    EXPECT_DOUBLE_EQ(metrics::auprc(std::vector<double>{0.9, 0.1}, std::vector<double>{1, 0}),
                     1.0);
    EXPECT_NEAR(metrics::auprc(std::vector<double>{0.9, 0.8, 0.7, 0.6},
                               std::vector<double>{1, 0, 1, 0}),
                5.0 / 6.0, 1e-12);
    EXPECT_DOUBLE_EQ(metrics::auprc(std::vector<double>{0.9, 0.1}, std::vector<double>{0, 1}),
                     0.5);
}

TEST(Auprc, NoPositivesIsUndefined) {
    EXPECT_THROW(metrics::auprc(std::vector<double>{0.5, 0.3}, std::vector<double>{0, 0}),
                 UndefinedMetricError);
}

TEST(Auprc, SizeMismatchThrows) {
    EXPECT_THROW(metrics::auprc(std::vector<double>{1.0}, std::vector<double>{1, 0}),
                 DimensionError);
}

TEST(Auprc, PerfectAndReversedSeparation) {
    std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
    EXPECT_DOUBLE_EQ(metrics::auprc(s, std::vector<double>{1, 1, 0, 0}), 1.0);
    // Single positive ranked last among n candidates: AP = 1/n.
    std::vector<double> one_pos(6, 0.0);
    one_pos[5] = 1.0;
    std::vector<double> desc = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
    EXPECT_DOUBLE_EQ(metrics::auprc(desc, one_pos), 1.0 / 6.0);
}

TEST(Auprc, MatchesBruteForceOracleOnRandomVectors) {
    RngStream rng(1, "auprc");
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 2 + rng.next_below(40);
        std::vector<double> s(n), y(n, 0.0);
        for (auto& v : s) v = rng.next_double();
        // Inject score ties to exercise the tie key.
        if (n > 4) s[1] = s[3];
        std::size_t pos = 1 + rng.next_below(n);
        for (std::size_t k = 0; k < pos; ++k) y[rng.next_below(n)] = 1.0;
        if (std::count(y.begin(), y.end(), 1.0) == 0) y[0] = 1.0;
        EXPECT_NEAR(metrics::auprc(s, y), auprc_oracle(s, y), 1e-12) << "trial " << trial;
    }
}

TEST(Auprc, InvariantUnderMonotoneTransforms) {
    RngStream rng(2, "mono");
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 3 + rng.next_below(20);
        std::vector<double> s(n), y(n, 0.0);
        for (auto& v : s) v = rng.next_double();
        y[rng.next_below(n)] = 1.0;
        y[rng.next_below(n)] = 1.0;
        double base = metrics::auprc(s, y);
        std::vector<double> exp_s = s, affine = s;
        for (auto& v : exp_s) v = std::exp(v);
        for (auto& v : affine) v = 3.0 * v + 11.0;
        EXPECT_DOUBLE_EQ(metrics::auprc(exp_s, y), base);
        EXPECT_DOUBLE_EQ(metrics::auprc(affine, y), base);
    }
}

TEST(Mrr, TabulatedExamples) {
    std::vector<RankGroup> top = {{0.9, {0.1, 0.2, 0.3}}};
    EXPECT_DOUBLE_EQ(metrics::mrr(top), 1.0);
    std::vector<RankGroup> third = {{0.5, {0.9, 0.8, 0.1}}};
    EXPECT_DOUBLE_EQ(metrics::mrr(third), 1.0 / 3.0);
    std::vector<RankGroup> two = {{0.9, {0.1}}, {0.3, {0.7}}};
    EXPECT_DOUBLE_EQ(metrics::mrr(two), 0.75);
}

TEST(Mrr, TiesUseAverageRank) {
    // Positive tied with one negative: positions 1 and 2, average 1.5.
    std::vector<RankGroup> tie = {{0.5, {0.5}}};
    EXPECT_DOUBLE_EQ(metrics::mrr(tie), 1.0 / 1.5);
    std::vector<RankGroup> tie2 = {{0.5, {0.5, 0.5, 0.1}}};
    EXPECT_DOUBLE_EQ(metrics::mrr(tie2), 1.0 / 2.0);  // rank 1 + 0 + 2/2
}

TEST(Mrr, ContractErrors) {
    EXPECT_THROW(metrics::mrr(std::vector<RankGroup>{}), ContractError);
    std::vector<RankGroup> empty_negs = {{0.5, {}}};
    EXPECT_THROW(metrics::mrr(empty_negs), ContractError);
}

TEST(Mrr, MatchesPositionalOracleOnRandomGroups) {
    RngStream rng(3, "mrr");
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n_groups = 1 + rng.next_below(8);
        std::vector<RankGroup> groups(n_groups);
        for (auto& g : groups) {
            g.positive_score = rng.next_double();
            std::size_t negs = 1 + rng.next_below(6);
            for (std::size_t k = 0; k < negs; ++k) {
                double v = rng.next_double();
                if (rng.next_below(4) == 0) v = g.positive_score;  // force ties
                g.negative_scores.push_back(v);
            }
        }
        EXPECT_NEAR(metrics::mrr(groups), mrr_oracle(groups), 1e-12) << "trial " << trial;
    }
}

TEST(Mrr, BoundsAndPerfection) {
    RngStream rng(4, "bounds");
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<RankGroup> groups(1 + rng.next_below(5));
        bool all_top = true;
        for (auto& g : groups) {
            g.positive_score = rng.next_double();
            for (std::size_t k = 0; k < 3; ++k) g.negative_scores.push_back(rng.next_double());
            for (double v : g.negative_scores) all_top &= g.positive_score > v;
        }
        double v = metrics::mrr(groups);
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_EQ(v == 1.0, all_top);
    }
}
