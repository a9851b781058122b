#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "racp/config.hpp"
#include "racp/records.hpp"
#include "racp/rng.hpp"

namespace racp::synth {

/**
 * Knobs of the page-wise search simulator.
 *
 * Click logit of item i on a page:
 *   click_bias + a_i + quality_i + comparison_strength * (a_i - mean_page(a))
 *     - price_weight * (ln price_i - 3)
 * with affinity a_i = affinity_scale * <theta_i, intent_t> and
 * intent_t = normalize(alpha_t theta_u + (1 - alpha_t) theta_q + noise),
 * alpha_t = 1 - (1 - convergence_rate)^t for page t = 1, 2, ...
 */
struct WorldConfig {
    std::size_t n_users = 20000;
    std::size_t n_items = 3000;
    std::size_t n_brands = 150;
    std::size_t n_shops = 300;
    std::size_t n_categories = 10;
    std::size_t n_queries = 200;
    std::size_t n_segments = 500;
    std::size_t latent_dim = 4;
    double comparison_strength = 0.8;  // lambda_cmp
    double convergence_rate = 0.5;     // rho
    std::size_t pages_per_session = 6; // history pages + the target page, upper bound
    std::size_t items_per_page = 5;
    std::size_t targets_per_page = 5;  // target-page items kept as samples
    std::uint64_t seed = 1;

    double affinity_scale = 5.0;
    double click_bias = -1.0;
    double intent_noise = 0.3;
    double explore_noise = 10.0;
    double price_weight = 0.3;
    double quality_sd = 0.5;
    double item_noise = 0.3;  // idiosyncratic part of item latents
    bool balance_labels = false;

    void validate() const {
        for (auto v : {n_users, n_items, n_brands, n_shops, n_categories, n_queries, n_segments, latent_dim,
                       pages_per_session, items_per_page})
            if (v < 1) throw ConfigError("world counts must be >= 1");
        if (!(comparison_strength >= 0.0 && comparison_strength <= 1.0))
            throw ConfigError("comparison_strength must lie in [0, 1]");
        if (!(convergence_rate >= 0.0 && convergence_rate <= 1.0))
            throw ConfigError("convergence_rate must lie in [0, 1]");
        if (targets_per_page < 1 || targets_per_page > items_per_page)
            throw ConfigError("targets_per_page must lie in [1, items_per_page]");
        if (n_items / n_categories < items_per_page)
            throw ConfigError("every category needs at least items_per_page items");
    }

    KeyValues to_kv() const {
        KeyValues kv;
        auto put = [&](const std::string& k, auto v) {
            if constexpr (std::is_same_v<decltype(v), double>) kv.set("world." + k, format_double(v));
            else if constexpr (std::is_same_v<decltype(v), bool>) kv.set("world." + k, v ? "true" : "false");
            else kv.set("world." + k, std::to_string(v));
        };
        put("n_users", n_users);
        put("n_items", n_items);
        put("n_brands", n_brands);
        put("n_shops", n_shops);
        put("n_categories", n_categories);
        put("n_queries", n_queries);
        put("n_segments", n_segments);
        put("latent_dim", latent_dim);
        put("comparison_strength", comparison_strength);
        put("convergence_rate", convergence_rate);
        put("pages_per_session", pages_per_session);
        put("items_per_page", items_per_page);
        put("targets_per_page", targets_per_page);
        put("seed", seed);
        put("affinity_scale", affinity_scale);
        put("click_bias", click_bias);
        put("intent_noise", intent_noise);
        put("explore_noise", explore_noise);
        put("price_weight", price_weight);
        put("quality_sd", quality_sd);
        put("item_noise", item_noise);
        put("balance_labels", balance_labels);
        return kv;
    }

    static WorldConfig from_kv(const KeyValues& kv) {
        WorldConfig w;
        auto get = [&](const std::string& k, auto& field) {
            field = kv.get<std::remove_reference_t<decltype(field)>>("world." + k, field);
        };
        get("n_users", w.n_users);
        get("n_items", w.n_items);
        get("n_brands", w.n_brands);
        get("n_shops", w.n_shops);
        get("n_categories", w.n_categories);
        get("n_queries", w.n_queries);
        get("n_segments", w.n_segments);
        get("latent_dim", w.latent_dim);
        get("comparison_strength", w.comparison_strength);
        get("convergence_rate", w.convergence_rate);
        get("pages_per_session", w.pages_per_session);
        get("items_per_page", w.items_per_page);
        get("targets_per_page", w.targets_per_page);
        get("seed", w.seed);
        get("affinity_scale", w.affinity_scale);
        get("click_bias", w.click_bias);
        get("intent_noise", w.intent_noise);
        get("explore_noise", w.explore_noise);
        get("price_weight", w.price_weight);
        get("quality_sd", w.quality_sd);
        get("item_noise", w.item_noise);
        get("balance_labels", w.balance_labels);
        w.validate();
        return w;
    }
};

using Latent = std::vector<double>;

struct WorldItem {
    ItemRecord record;  // sales_count / stat_features evolve as sessions are generated
    Latent latent;
    double quality = 0.0;
    std::uint64_t impressions = 0;
    std::uint64_t clicks = 0;
};

struct WorldUser {
    UserProfile profile;
    Latent latent;
};

struct WorldQuery {
    QueryProfile profile;
    Latent latent;
};

/// Sampled latent state; ids are 1-based so index 0 stays the missing bucket.
struct LatentWorld {
    WorldConfig config;
    std::vector<WorldItem> items;                          // items[id - 1]
    std::vector<WorldUser> users;                          // users[id - 1]
    std::vector<WorldQuery> queries;                       // queries[id - 1]
    std::vector<std::vector<std::size_t>> category_items;  // category id -> item ids
};

namespace detail {

inline Latent random_unit(std::size_t d, Rng& rng) {
    Latent v(d);
    double n = 0.0;
    do {
        n = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            n += x * x;
        }
    } while (n == 0.0);
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

inline void normalize(Latent& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
        for (auto& x : v) x /= n;
}

inline double dot(const Latent& a, const Latent& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

inline LatentWorld build_world(const WorldConfig& cfg) {
    cfg.validate();
    LatentWorld w;
    w.config = cfg;
    Rng rng = Rng(cfg.seed).substream("world");
    const std::size_t d = cfg.latent_dim;

    std::vector<Latent> anchors;
    for (std::size_t c = 0; c < cfg.n_categories; ++c) anchors.push_back(detail::random_unit(d, rng));
    std::vector<Latent> brand_dir;
    std::vector<std::vector<std::size_t>> brands_of(cfg.n_categories + 1);
    for (std::size_t b = 1; b <= cfg.n_brands; ++b) {
        brand_dir.push_back(detail::random_unit(d, rng));
        brands_of[1 + (b - 1) % cfg.n_categories].push_back(b);
    }

    w.category_items.assign(cfg.n_categories + 1, {});
    for (std::size_t id = 1; id <= cfg.n_items; ++id) {
        WorldItem it;
        const std::size_t cat = 1 + (id - 1) % cfg.n_categories;
        const auto& pool = brands_of[cat];
        const std::size_t brand = pool.empty() ? 0 : pool[rng.uniform_int(pool.size())];
        it.latent.assign(d, 0.0);
        for (std::size_t k = 0; k < d; ++k)
            it.latent[k] = 0.5 * anchors[cat - 1][k] + (brand ? 0.7 * brand_dir[brand - 1][k] : 0.0) + cfg.item_noise * rng.normal();
        detail::normalize(it.latent);
        it.quality = cfg.quality_sd * rng.normal();
        it.record.item_id = id;
        it.record.category_id = cat;
        it.record.brand_id = brand;
        it.record.shop_id = 1 + rng.uniform_int(cfg.n_shops);
        it.record.price = std::exp(3.0 + 0.4 * it.quality + 0.5 * rng.normal());
        it.record.stat_features = {0.0, 0.0};
        w.category_items[cat].push_back(id);
        w.items.push_back(std::move(it));
    }

    for (std::size_t id = 1; id <= cfg.n_queries; ++id) {
        WorldQuery q;
        const std::size_t cat = 1 + (id - 1) % cfg.n_categories;
        q.latent = anchors[cat - 1];
        for (auto& x : q.latent) x += 0.5 * rng.normal() / std::sqrt(static_cast<double>(d));
        detail::normalize(q.latent);
        q.profile.query_id = id;
        q.profile.category_id = cat;
        q.profile.segment_ids = {1 + rng.uniform_int(cfg.n_segments), 1 + rng.uniform_int(cfg.n_segments)};
        w.queries.push_back(std::move(q));
    }

    for (std::size_t id = 1; id <= cfg.n_users; ++id) {
        WorldUser u;
        u.latent = detail::random_unit(d, rng);
        u.profile = {id, 1 + rng.uniform_int(7), 1 + rng.uniform_int(2), 1 + rng.uniform_int(5)};
        w.users.push_back(std::move(u));
    }
    return w;
}

/// Interest-convergence weight of the user preference on page t (1-based).
inline double convergence_alpha(double rho, std::size_t t) { return 1.0 - std::pow(1.0 - rho, static_cast<double>(t)); }

/**
 * Click logits for one page given per-item affinities (already scaled),
 * qualities and prices. The page-relative term enters with coefficient
 * exactly `cfg.comparison_strength`.
 */
inline std::vector<double> click_logits(const WorldConfig& cfg, const std::vector<double>& affinity,
                                        const std::vector<double>& quality, const std::vector<double>& price) {
    const double mean = std::accumulate(affinity.begin(), affinity.end(), 0.0) / static_cast<double>(affinity.size());
    std::vector<double> out(affinity.size());
    for (std::size_t i = 0; i < affinity.size(); ++i)
        out[i] = cfg.click_bias + affinity[i] + quality[i] + cfg.comparison_strength * (affinity[i] - mean) -
                 cfg.price_weight * (std::log(price[i]) - 3.0);
    return out;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Session {
    std::vector<PageRecord> pages;
    std::vector<std::vector<double>> click_prob;  // per page, per item
};

/**
 * Simulates `n_pages` consecutive result pages for one (user, query).
 * Item counters (impressions, clicks -> sales_count, stat_features) are
 * updated after each page, so later sessions see accumulated statistics.
 */
inline Session generate_session(LatentWorld& world, std::size_t user_id, std::size_t query_id, Rng& rng,
                                std::size_t n_pages, std::int64_t start_time = 0) {
    const auto& cfg = world.config;
    const auto& user = world.users.at(user_id - 1);
    const auto& query = world.queries.at(query_id - 1);
    const auto& pool = world.category_items.at(query.profile.category_id);
    if (pool.size() < cfg.items_per_page) throw ConfigError("category has fewer items than items_per_page");
    const std::size_t d = cfg.latent_dim;

    Session s;
    std::vector<std::pair<double, std::size_t>> scored(pool.size());
    for (std::size_t t = 1; t <= n_pages; ++t) {
        const double alpha = convergence_alpha(cfg.convergence_rate, t);
        Latent intent(d);
        for (std::size_t k = 0; k < d; ++k)
            intent[k] = alpha * user.latent[k] + (1.0 - alpha) * query.latent[k] +
                        cfg.intent_noise * rng.normal() / std::sqrt(static_cast<double>(d));
        detail::normalize(intent);

        for (std::size_t i = 0; i < pool.size(); ++i) {
            const auto& it = world.items[pool[i] - 1];
            scored[i] = {cfg.affinity_scale * detail::dot(it.latent, intent) + cfg.explore_noise * rng.gumbel(), pool[i]};
        }
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(cfg.items_per_page),
                          scored.end(), [](const auto& a, const auto& b) {
                              return a.first > b.first || (a.first == b.first && a.second < b.second);
                          });

        std::vector<double> aff, qual, price;
        for (std::size_t j = 0; j < cfg.items_per_page; ++j) {
            const auto& it = world.items[scored[j].second - 1];
            aff.push_back(cfg.affinity_scale * detail::dot(it.latent, intent));
            qual.push_back(it.quality);
            price.push_back(it.record.price);
        }
        const auto logits = click_logits(cfg, aff, qual, price);

        PageRecord page;
        page.query_id = query.profile.query_id;
        page.query_category_id = query.profile.category_id;
        page.timestamp = start_time + static_cast<std::int64_t>(t);
        std::vector<double> probs;
        for (std::size_t j = 0; j < cfg.items_per_page; ++j) {
            auto& it = world.items[scored[j].second - 1];
            const double p = logistic(logits[j]);
            probs.push_back(p);
            const bool click = rng.bernoulli(p);
            ItemRecord rec = it.record;
            rec.sales_count = it.clicks;
            rec.stat_features = {static_cast<double>(it.impressions), static_cast<double>(it.clicks)};
            page.items.push_back({std::move(rec), click ? FeedbackType::Click : FeedbackType::NoClick});
        }
        for (std::size_t j = 0; j < cfg.items_per_page; ++j) {
            auto& it = world.items[scored[j].second - 1];
            ++it.impressions;
            if (is_click(page.items[j].feedback)) ++it.clicks;
        }
        s.pages.push_back(std::move(page));
        s.click_prob.push_back(std::move(probs));
    }
    return s;
}

struct Dataset {
    std::vector<Sample> samples;
    std::vector<double> click_prob;  // generating probability of each sample's label
    nlohmann::ordered_json manifest;
};

/**
 * Sessions with h ~ U{1..max_history} history pages followed by a target
 * page; `targets_per_page` items of the target page become samples sharing the
 * session history (page_key = session). With balance_labels, samples are
 * admitted until each class fills half of n_samples.
 */
inline Dataset generate_dataset(LatentWorld& world, std::size_t n_samples, std::size_t max_history, Rng& rng,
                                const std::string& split = "train") {
    const auto& cfg = world.config;
    Dataset ds;
    std::size_t want_pos = n_samples / 2, want_neg = n_samples - n_samples / 2;
    std::size_t session = 0;
    while (ds.samples.size() < n_samples) {
        Rng srng = rng.substream("session", session);
        const std::size_t user = 1 + srng.uniform_int(cfg.n_users);
        const std::size_t query = 1 + srng.uniform_int(cfg.n_queries);
        const std::size_t h = max_history == 0 ? 0 : 1 + srng.uniform_int(max_history);
        Session s = generate_session(world, user, query, srng, h + 1, static_cast<std::int64_t>(session) * 100);
        const auto& target_page = s.pages.back();
        std::vector<PageRecord> history(s.pages.begin(), s.pages.end() - 1);
        std::vector<std::size_t> picked(target_page.items.size());
        std::iota(picked.begin(), picked.end(), std::size_t{0});
        if (cfg.targets_per_page < picked.size()) {
            for (std::size_t k = 0; k < cfg.targets_per_page; ++k)
                std::swap(picked[k], picked[k + srng.uniform_int(picked.size() - k)]);
            picked.resize(cfg.targets_per_page);
            std::sort(picked.begin(), picked.end());
        }
        for (std::size_t j : picked) {
            if (ds.samples.size() >= n_samples) break;
            Sample smp;
            smp.user = world.users[user - 1].profile;
            smp.query = world.queries[query - 1].profile;
            smp.target = target_page.items[j].item;
            smp.history = history;
            smp.label = is_click(target_page.items[j].feedback) ? 1 : 0;
            smp.page_key = split + "-" + std::to_string(session);
            if (cfg.balance_labels) {
                auto& quota = smp.label ? want_pos : want_neg;
                if (quota == 0) continue;
                --quota;
            }
            ds.samples.push_back(std::move(smp));
            ds.click_prob.push_back(s.click_prob.back()[j]);
        }
        ++session;
    }
    std::size_t pos = 0;
    for (const auto& s : ds.samples) pos += s.label;
    ds.manifest = nlohmann::ordered_json{
        {"source", "synthetic"},
        {"split", split},
        {"seed", cfg.seed},
        {"samples", ds.samples.size()},
        {"sessions", session},
        {"max_history", max_history},
        {"positives", pos},
        {"negatives", ds.samples.size() - pos},
        {"positive_rate", ds.samples.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(ds.samples.size())},
        {"world", cfg.to_kv().entries()}};
    return ds;
}

/// Sets the model vocabularies to cover the world's 1-based id ranges.
inline void apply_world_vocab(ModelConfig& m, const WorldConfig& w) {
    m.n_users = w.n_users + 1;
    m.n_items = w.n_items + 1;
    m.n_categories = w.n_categories + 1;
    m.n_brands = w.n_brands + 1;
    m.n_shops = w.n_shops + 1;
    m.n_queries = w.n_queries + 1;
    m.n_segments = w.n_segments + 1;
    m.n_age = 8;
    m.n_gender = 3;
    m.n_power = 6;
    m.n_stat = 2;
}

}  // namespace racp::synth
