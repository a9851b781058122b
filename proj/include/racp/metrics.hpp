#pragma once

#include <algorithm>
#include <map>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "racp/errors.hpp"

namespace racp {

struct ScoredExample {
    double score = 0.0;
    int label = 0;
    std::string page_key;
};

namespace detail {

/// Mann-Whitney U statistic times two (integral), plus class counts.
struct RankStat {
    double twice_u = 0.0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

template <class ScoreOf, class LabelOf>
RankStat rank_stat(std::size_t n, ScoreOf score, LabelOf label) {
    for (std::size_t i = 0; i < n; ++i)
        if (std::isnan(score(i))) throw MetricError("auc: score " + std::to_string(i) + " is NaN");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score(a) < score(b); });
    RankStat st;
    // Doubled ranks keep tie-averaged ranks integral, so the sum is exact.
    double twice_rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && score(order[j]) == score(order[i])) ++j;
        const double twice_avg_rank = static_cast<double>(i + 1 + j);  // 2 * (i+1 + j) / 2
        for (std::size_t k = i; k < j; ++k) {
            if (label(order[k])) {
                twice_rank_sum += twice_avg_rank;
                ++st.positives;
            } else {
                ++st.negatives;
            }
        }
        i = j;
    }
    const double p = static_cast<double>(st.positives);
    st.twice_u = twice_rank_sum - p * (p + 1.0);
    return st;
}

}  // namespace detail

/**
 * Probability that a random positive outranks a random negative, ties
 * counted one half. O(n log n) sort-and-rank.
 */
inline double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
    const auto st = detail::rank_stat(
        scores.size(), [&](std::size_t i) { return scores[i]; }, [&](std::size_t i) { return labels[i] != 0; });
    if (st.positives == 0 || st.negatives == 0) throw MetricError("auc: needs both positive and negative examples");
    return st.twice_u / (2.0 * static_cast<double>(st.positives) * static_cast<double>(st.negatives));
}

inline double auc(std::span<const ScoredExample> examples) {
    std::vector<double> s;
    std::vector<int> l;
    for (const auto& e : examples) {
        s.push_back(e.score);
        l.push_back(e.label);
    }
    return auc(s, l);
}

struct PageAuc {
    std::string page_key;
    double auc = 0.0;
    std::size_t examples = 0;
};

/// AUC of every page that holds both classes, in ascending page_key order.
inline std::vector<PageAuc> per_page_auc(std::span<const ScoredExample> examples) {
    std::map<std::string, std::vector<const ScoredExample*>> pages;
    for (const auto& e : examples) pages[e.page_key].push_back(&e);
    std::vector<PageAuc> out;
    for (const auto& [key, items] : pages) {
        const auto st = detail::rank_stat(
            items.size(), [&](std::size_t i) { return items[i]->score; },
            [&](std::size_t i) { return items[i]->label != 0; });
        if (st.positives == 0 || st.negatives == 0) continue;
        out.push_back({key, st.twice_u / (2.0 * static_cast<double>(st.positives) * static_cast<double>(st.negatives)),
                       items.size()});
    }
    return out;
}

/// Mean intra-page AUC; single-class pages are excluded entirely.
inline double pv_auc(std::span<const ScoredExample> examples) {
    const auto pages = per_page_auc(examples);
    if (pages.empty()) throw MetricError("pv_auc: no page contains both classes");
    double total = 0.0;
    for (const auto& p : pages) total += p.auc;
    return total / static_cast<double>(pages.size());
}

/// (auc_measured - 0.5) / (auc_base - 0.5) - 1
inline double rela_impr(double auc_measured, double auc_base) {
    if (auc_base == 0.5) throw MetricError("rela_impr: base AUC of exactly 0.5");
    return (auc_measured - 0.5) / (auc_base - 0.5) - 1.0;
}

}  // namespace racp
