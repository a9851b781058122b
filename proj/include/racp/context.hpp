#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "racp/records.hpp"

namespace racp {

/// Per-item features derived from the page the item was shown on.
struct PageContextFeatures {
    std::size_t page_query_id = 0;
    std::size_t page_query_category = 0;
    std::size_t n_clicks_in_page = 0;
    std::size_t n_same_brand = 1;   // self included
    std::size_t n_same_seller = 1;  // self included
    std::size_t price_rank = 1;     // 1 = cheapest
    std::size_t sales_rank = 1;     // 1 = fewest sales

    friend bool operator==(const PageContextFeatures&, const PageContextFeatures&) = default;
};

namespace detail {

/// 1-based ascending ranks; ties keep item position order.
template <class Key>
std::vector<std::size_t> stable_ranks(std::size_t n, Key key) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    std::vector<std::size_t> rank(n);
    for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r + 1;
    return rank;
}

}  // namespace detail

/**
 * Context features for every item of a page: page query and category,
 * clicks in page, same-brand and same-seller counts (missing id 0 only
 * matches itself), and price / sales-count ranks.
 */
inline std::vector<PageContextFeatures> derive_context_features(const PageRecord& page) {
    const auto& items = page.items;
    const std::size_t n = items.size();
    const std::size_t clicks = page.click_count();
    const auto price_rank = detail::stable_ranks(n, [&](std::size_t i) { return items[i].item.price; });
    const auto sales_rank = detail::stable_ranks(n, [&](std::size_t i) { return items[i].item.sales_count; });

    std::vector<PageContextFeatures> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        auto& f = out[j];
        f.page_query_id = page.query_id;
        f.page_query_category = page.query_category_id;
        f.n_clicks_in_page = clicks;
        f.n_same_brand = 0;
        f.n_same_seller = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const bool self = k == j;
            const auto& a = items[j].item;
            const auto& b = items[k].item;
            if (self || (a.brand_id != 0 && a.brand_id == b.brand_id)) ++f.n_same_brand;
            if (self || (a.shop_id != 0 && a.shop_id == b.shop_id)) ++f.n_same_seller;
        }
        f.price_rank = price_rank[j];
        f.sales_rank = sales_rank[j];
    }
    return out;
}

/// floor(resolution * log2(1 + x)) clipped to [0, n_buckets - 1].
inline std::size_t log_bucket(double x, std::size_t n_buckets, double resolution = 1.0) {
    if (!(x > 0.0)) return 0;
    const double b = std::floor(resolution * std::log2(1.0 + x));
    return static_cast<std::size_t>(std::min(b, static_cast<double>(n_buckets - 1)));
}

inline std::size_t clip_bucket(std::size_t v, std::size_t n_buckets) { return std::min(v, n_buckets - 1); }

}  // namespace racp
