#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "durendal/errors.hpp"

namespace durendal::metrics {

/// Step-wise average precision (area under the precision-recall curve).
/// Candidates sort by descending score, ties broken by ascending candidate
/// index; AP = mean over positives of precision at their rank.
inline double auprc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size())
        throw DimensionError("auprc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    std::size_t n = scores.size();
    std::size_t positives = 0;
    for (double l : labels) positives += l > 0.5 ? 1 : 0;
    if (positives == 0) throw UndefinedMetricError("auprc: no positive labels");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[order[k]] > 0.5) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(k + 1);
        }
    return ap / static_cast<double>(positives);
}

/// One positive with its own sampled negatives.
struct RankGroup {
    double positive_score = 0.0;
    std::vector<double> negative_scores;
};

/// Mean reciprocal rank with average-rank tie handling:
/// rank = 1 + #{stronger negatives} + #{tied negatives} / 2.
inline double mrr(std::span<const RankGroup> groups) {
    if (groups.empty()) throw ContractError("mrr: no rank groups");
    double acc = 0.0;
    for (const RankGroup& g : groups) {
        if (g.negative_scores.empty())
            throw ContractError("mrr: every group needs at least one negative");
        std::size_t greater = 0, tied = 0;
        for (double s : g.negative_scores) {
            if (s > g.positive_score)
                ++greater;
            else if (s == g.positive_score)
                ++tied;
        }
        double rank = 1.0 + static_cast<double>(greater) + static_cast<double>(tied) / 2.0;
        acc += 1.0 / rank;
    }
    return acc / static_cast<double>(groups.size());
}

}  // namespace durendal::metrics
