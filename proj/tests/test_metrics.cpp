#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "racp/metrics.hpp"
#include "racp/rng.hpp"

using namespace racp;

namespace {

// O(n^2) pair counting: (wins + ties / 2) / (P * N), with the numerator
// accumulated in half-units so it is exact.
double brute_auc(const std::vector<double>& s, const std::vector<int>& l) {
    double twice = 0.0, p = 0.0, n = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (l[i]) p += 1;
        else n += 1;
    }
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (l[i] && !l[j]) twice += s[i] > s[j] ? 2.0 : (s[i] == s[j] ? 1.0 : 0.0);
    return twice / (2.0 * p * n);
}

std::vector<ScoredExample> random_examples(Rng& rng, std::size_t n, std::size_t pages, bool coarse) {
    std::vector<ScoredExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = coarse ? static_cast<double>(rng.uniform_int(8)) / 8.0 : rng.uniform();
        out.push_back({s, rng.bernoulli(0.4) ? 1 : 0, "p" + std::to_string(rng.uniform_int(pages))});
    }
    return out;
}

}  // namespace

TEST(Auc, PerfectRanking) {
    EXPECT_EQ(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
}

TEST(Auc, TieCountsHalf) {
    EXPECT_EQ(auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), 0.5);
}

TEST(Auc, SingleClassIsUndefined) {
    EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), MetricError);
}

TEST(Auc, MatchesPairwiseBruteForceExactly) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        auto ex = random_examples(rng, 200, 1, trial % 2 == 0);
        std::vector<double> s;
        std::vector<int> l;
        for (auto& e : ex) {
            s.push_back(e.score);
            l.push_back(e.label);
        }
        EXPECT_EQ(auc(s, l), brute_auc(s, l));
    }
}

TEST(AucProperty, InvariantUnderIncreasingTransform) {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        auto ex = random_examples(rng, 100, 1, false);
        std::vector<double> s, t;
        std::vector<int> l;
        for (auto& e : ex) {
            s.push_back(e.score);
            t.push_back(std::exp(3.0 * e.score) - 7.0);
            l.push_back(e.label);
        }
        EXPECT_EQ(auc(s, l), auc(t, l));
    }
}

TEST(AucProperty, FlippedLabelsComplementWithoutTies) {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        auto ex = random_examples(rng, 100, 1, false);
        std::vector<double> s;
        std::vector<int> l, f;
        for (auto& e : ex) {
            s.push_back(e.score);
            l.push_back(e.label);
            f.push_back(1 - e.label);
        }
        EXPECT_NEAR(auc(s, f), 1.0 - auc(s, l), 1e-12);
    }
}

TEST(PvAuc, SinglePerfectPage) {
    std::vector<ScoredExample> ex{{0.9, 1, "a"}, {0.1, 0, "a"}};
    EXPECT_EQ(pv_auc(ex), 1.0);
}

TEST(PvAuc, MeanOfPages) {
    std::vector<ScoredExample> ex{{0.9, 1, "a"}, {0.1, 0, "a"}, {0.1, 1, "b"}, {0.9, 0, "b"}};
    EXPECT_EQ(pv_auc(ex), 0.5);
}

TEST(PvAuc, SingleClassPagesExcluded) {
    std::vector<ScoredExample> ex{{0.9, 1, "a"}, {0.1, 0, "a"}, {0.5, 1, "b"}, {0.7, 1, "b"}};
    EXPECT_EQ(pv_auc(ex), 1.0);
    std::vector<ScoredExample> none{{0.5, 1, "b"}, {0.7, 0, "c"}};
    EXPECT_THROW(pv_auc(none), MetricError);
}

TEST(PvAuc, MatchesPerPageBruteForce) {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        auto ex = random_examples(rng, 300, 20, trial % 3 == 0);
        std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> pages;
        for (auto& e : ex) {
            pages[e.page_key].first.push_back(e.score);
            pages[e.page_key].second.push_back(e.label);
        }
        double total = 0.0;
        int count = 0;
        for (auto& [k, v] : pages) {
            const bool pos = std::count(v.second.begin(), v.second.end(), 1) > 0;
            const bool neg = std::count(v.second.begin(), v.second.end(), 0) > 0;
            if (!pos || !neg) continue;
            total += brute_auc(v.first, v.second);
            ++count;
        }
        EXPECT_EQ(pv_auc(ex), total / count);
    }
}

TEST(PvAucProperty, OnePairPerPageGivesMeanIndicator) {
    Rng rng(5);
    std::vector<ScoredExample> ex;
    double expected = 0.0;
    const int pages = 40;
    for (int p = 0; p < pages; ++p) {
        const double a = static_cast<double>(rng.uniform_int(3)), b = static_cast<double>(rng.uniform_int(3));
        const std::string key = "page" + std::to_string(p);
        ex.push_back({a, 1, key});
        ex.push_back({b, 0, key});
        expected += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    }
    EXPECT_NEAR(pv_auc(ex), expected / pages, 1e-15);
}

TEST(RelaImpr, TableValues) {
    EXPECT_NEAR(rela_impr(0.7846, 0.7703), 0.0529, 0.0001);
    EXPECT_NEAR(rela_impr(0.7944, 0.7703), 0.0892, 0.0001);
    EXPECT_EQ(rela_impr(0.71, 0.71), 0.0);
    EXPECT_THROW(rela_impr(0.7, 0.5), MetricError);
}

TEST(Auc, NanScoreIsAnError) {
    const std::vector<double> s{0.1, std::nan(""), 0.7};
    const std::vector<int> l{0, 1, 1};
    EXPECT_THROW(auc(s, l), MetricError);
}
