#include <cmath>

#include <gtest/gtest.h>

#include "racp/synth.hpp"

using namespace racp;
using namespace racp::synth;

namespace {

WorldConfig small_world() {
    WorldConfig w;
    w.n_users = 200;
    w.n_items = 300;
    w.n_brands = 30;
    w.n_shops = 40;
    w.n_categories = 5;
    w.n_queries = 20;
    w.n_segments = 50;
    return w;
}

}  // namespace

TEST(Synth, ConvergenceAlphaEndpoints) {
    for (std::size_t t = 1; t <= 6; ++t) {
        EXPECT_EQ(convergence_alpha(0.0, t), 0.0);
        EXPECT_EQ(convergence_alpha(1.0, t), 1.0);
    }
    EXPECT_DOUBLE_EQ(convergence_alpha(0.5, 1), 0.5);
    EXPECT_DOUBLE_EQ(convergence_alpha(0.5, 2), 0.75);
}

TEST(Synth, ComparisonCoefficientIsExactlyLambda) {
    WorldConfig w;
    w.comparison_strength = 0.8;
    w.price_weight = 0.0;
    const std::vector<double> q(3, 0.0), p(3, std::exp(3.0));
    const std::vector<double> a0{0.0, 1.0, -1.0}, a1{0.0, 2.0, -1.0};
    const auto l0 = click_logits(w, a0, q, p), l1 = click_logits(w, a1, q, p);
    // Raising a mate's affinity by 1 moves the page mean by 1/3.
    EXPECT_NEAR(l1[0] - l0[0], -0.8 / 3.0, 1e-12);
    // Item's own derivative is 1 + lambda (1 - 1/n).
    EXPECT_NEAR(l1[1] - l0[1], 1.0 + 0.8 * (2.0 / 3.0), 1e-12);
}

TEST(Synth, ZeroComparisonIgnoresPageMates) {
    WorldConfig w;
    w.comparison_strength = 0.0;
    const std::vector<double> q(3, 0.1), p(3, 20.0);
    const auto l0 = click_logits(w, {0.5, -3.0, -3.0}, q, p);
    const auto l1 = click_logits(w, {0.5, 3.0, 3.0}, q, p);
    EXPECT_EQ(l0[0], l1[0]);
}

TEST(Synth, SymmetricPageHasEqualProbabilities) {
    WorldConfig w;
    const std::vector<double> a(4, 0.7), q(4, 0.2), p(4, 15.0);
    const auto l = click_logits(w, a, q, p);
    for (double x : l) EXPECT_EQ(x, l[0]);
}

TEST(Synth, ComparisonEffectMonteCarlo) {
    WorldConfig w;
    w.comparison_strength = 0.8;
    const std::vector<double> q(5, 0.0), p(5, std::exp(3.0));
    const auto low = click_logits(w, {1.0, -1.0, -1.0, -1.0, -1.0}, q, p);
    const auto high = click_logits(w, {1.0, 2.0, 2.0, 2.0, 2.0}, q, p);
    Rng rng(5);
    int c_low = 0, c_high = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        c_low += rng.bernoulli(logistic(low[0]));
        c_high += rng.bernoulli(logistic(high[0]));
    }
    EXPECT_GT(c_low, c_high);
    const double pl = double(c_low) / trials, ph = double(c_high) / trials;
    const double se = std::sqrt(pl * (1 - pl) / trials + ph * (1 - ph) / trials);
    EXPECT_GT(pl - ph, 3.0 * se);
}

TEST(Synth, UserIndependentIntentWhenRhoZero) {
    auto w = small_world();
    w.convergence_rate = 0.0;
    w.intent_noise = 0.0;
    w.explore_noise = 0.0;
    auto world = build_world(w);
    Rng r1(3), r2(3);
    // Retrieval depends only on intent; with rho = 0 two users see the same pages.
    auto s1 = generate_session(world, 1, 4, r1, 3);
    auto world2 = build_world(w);
    auto s2 = generate_session(world2, 2, 4, r2, 3);
    for (std::size_t t = 0; t < 3; ++t) {
        ASSERT_EQ(s1.pages[t].items.size(), s2.pages[t].items.size());
        for (std::size_t j = 0; j < s1.pages[t].items.size(); ++j) {
            EXPECT_EQ(s1.pages[t].items[j].item.item_id, s2.pages[t].items[j].item.item_id);
            EXPECT_EQ(s1.click_prob[t][j], s2.click_prob[t][j]);
        }
    }
}

TEST(Synth, PagesStayInQueryCategory) {
    auto world = build_world(small_world());
    Rng rng(9);
    auto ds = generate_dataset(world, 500, 5, rng);
    for (const auto& s : ds.samples) {
        EXPECT_EQ(s.target.category_id, s.query.category_id);
        for (const auto& p : s.history) {
            EXPECT_EQ(p.query_category_id, s.query.category_id);
            for (const auto& it : p.items) EXPECT_EQ(it.item.category_id, s.query.category_id);
        }
    }
}

TEST(Synth, HistoryLengthsAndShapes) {
    auto world = build_world(small_world());
    Rng rng(2);
    auto ds = generate_dataset(world, 600, 5, rng);
    ASSERT_EQ(ds.samples.size(), 600u);
    std::vector<int> seen(6, 0);
    for (const auto& s : ds.samples) {
        ASSERT_GE(s.history.size(), 1u);
        ASSERT_LE(s.history.size(), 5u);
        ++seen[s.history.size()];
        for (const auto& p : s.history) EXPECT_EQ(p.items.size(), 5u);
        EXPECT_EQ(s.target.stat_features.size(), 2u);
    }
    for (std::size_t h = 1; h <= 5; ++h) EXPECT_GT(seen[h], 0);
}

TEST(Synth, EmptyDatasetWhenZeroSamples) {
    auto world = build_world(small_world());
    Rng rng(2);
    auto ds = generate_dataset(world, 0, 5, rng);
    EXPECT_TRUE(ds.samples.empty());
    EXPECT_EQ(ds.manifest["samples"], 0);
}

TEST(Synth, DeterministicForFixedSeed) {
    auto w = small_world();
    auto a = build_world(w), b = build_world(w);
    Rng ra(Rng(7).substream("train")), rb(Rng(7).substream("train"));
    auto da = generate_dataset(a, 300, 5, ra), db = generate_dataset(b, 300, 5, rb);
    EXPECT_EQ(serialize_samples(da.samples), serialize_samples(db.samples));
    EXPECT_EQ(da.manifest.dump(), db.manifest.dump());
    w.seed = 8;
    auto c = build_world(w);
    Rng rc(Rng(7).substream("train"));
    EXPECT_NE(serialize_samples(generate_dataset(c, 300, 5, rc).samples), serialize_samples(da.samples));
}

TEST(Synth, BaseRateMatchesClickProbability) {
    WorldConfig w;
    auto world = build_world(w);
    Rng rng(21);
    auto ds = generate_dataset(world, 50000, 5, rng);
    double pos = 0, mean_p = 0, var = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        pos += ds.samples[i].label;
        mean_p += ds.click_prob[i];
        var += ds.click_prob[i] * (1 - ds.click_prob[i]);
    }
    const double n = double(ds.samples.size());
    EXPECT_LE(std::abs(pos - mean_p), 3.0 * std::sqrt(var)) << "rate " << pos / n << " vs " << mean_p / n;
    EXPECT_GT(pos / n, 0.05);
    EXPECT_LT(pos / n, 0.95);
}

TEST(Synth, BalancedLabelsSplitEvenly) {
    auto w = small_world();
    w.balance_labels = true;
    auto world = build_world(w);
    Rng rng(4);
    auto ds = generate_dataset(world, 400, 3, rng);
    EXPECT_EQ(ds.manifest["positives"], 200);
    EXPECT_EQ(ds.manifest["negatives"], 200);
}

TEST(Synth, CountersAccumulateAcrossSessions) {
    auto world = build_world(small_world());
    Rng rng(6);
    auto ds = generate_dataset(world, 2000, 5, rng);
    std::uint64_t max_impr = 0;
    for (const auto& s : ds.samples) {
        EXPECT_LE(s.target.stat_features[1], s.target.stat_features[0]);
        EXPECT_EQ(static_cast<double>(s.target.sales_count), s.target.stat_features[1]);
        max_impr = std::max<std::uint64_t>(max_impr, static_cast<std::uint64_t>(s.target.stat_features[0]));
    }
    EXPECT_GT(max_impr, 0u);
}

TEST(Synth, InvalidKnobsRejected) {
    WorldConfig w;
    w.comparison_strength = 1.5;
    EXPECT_THROW(w.validate(), ConfigError);
    w = {};
    w.convergence_rate = -0.1;
    EXPECT_THROW(w.validate(), ConfigError);
    w = {};
    w.n_items = 20;
    w.n_categories = 10;
    EXPECT_THROW(build_world(w), ConfigError);
}

TEST(Synth, ConfigRoundTripsThroughKeyValues) {
    WorldConfig w = small_world();
    w.comparison_strength = 0.3;
    w.balance_labels = true;
    const auto back = WorldConfig::from_kv(KeyValues::parse(w.to_kv().serialize()));
    EXPECT_EQ(back.to_kv().serialize(), w.to_kv().serialize());
}
