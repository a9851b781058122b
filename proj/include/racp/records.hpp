#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "racp/errors.hpp"

namespace racp {

enum class FeedbackType : std::uint8_t { NoClick = 0, Click = 1 };

inline bool is_click(FeedbackType f) { return f == FeedbackType::Click; }

/// One impressed item. Ids are already bucketed; 0 means missing.
struct ItemRecord {
    std::size_t item_id = 0;
    std::size_t category_id = 0;
    std::size_t brand_id = 0;
    std::size_t shop_id = 0;
    double price = 0.0;
    std::uint64_t sales_count = 0;
    std::vector<double> stat_features;

    friend bool operator==(const ItemRecord&, const ItemRecord&) = default;
};

struct PageItem {
    ItemRecord item;
    FeedbackType feedback = FeedbackType::NoClick;

    friend bool operator==(const PageItem&, const PageItem&) = default;
};

/// One search-result page with per-item feedback.
struct PageRecord {
    std::size_t query_id = 0;
    std::size_t query_category_id = 0;
    std::vector<PageItem> items;
    std::int64_t timestamp = 0;

    std::size_t click_count() const {
        std::size_t n = 0;
        for (const auto& it : items) n += is_click(it.feedback);
        return n;
    }

    friend bool operator==(const PageRecord&, const PageRecord&) = default;
};

struct UserProfile {
    std::size_t user_id = 0;
    std::size_t age_bucket = 0;
    std::size_t gender_bucket = 0;
    std::size_t power_bucket = 0;

    friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct QueryProfile {
    std::size_t query_id = 0;
    std::size_t category_id = 0;
    std::vector<std::size_t> segment_ids;

    friend bool operator==(const QueryProfile&, const QueryProfile&) = default;
};

/// One labeled example: target item under the current query plus the
/// page-wise history (most recent page last).
struct Sample {
    UserProfile user;
    QueryProfile query;
    ItemRecord target;
    std::vector<PageRecord> history;
    int label = 0;
    /// Grouping key for page-level metrics (the page the target was shown on).
    std::string page_key;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// Checks the history-length and category-closure invariants.
inline void check_sample(const Sample& s, std::size_t max_pages) {
    if (s.history.size() > max_pages)
        throw FormatError("sample history has " + std::to_string(s.history.size()) + " pages, limit " +
                          std::to_string(max_pages));
    for (const auto& p : s.history) {
        if (p.query_category_id != s.query.category_id)
            throw FormatError("history page category differs from current query category");
        if (p.items.empty()) throw FormatError("history page without items");
    }
    if (s.label != 0 && s.label != 1) throw FormatError("label must be 0 or 1");
}

// JSON mapping. Field names are the on-disk schema.

inline void to_json(nlohmann::ordered_json& j, const ItemRecord& r) {
    j = nlohmann::ordered_json{{"item_id", r.item_id},   {"category_id", r.category_id},
                               {"brand_id", r.brand_id}, {"shop_id", r.shop_id},
                               {"price", r.price},       {"sales_count", r.sales_count},
                               {"stat_features", r.stat_features}};
}

inline void from_json(const nlohmann::ordered_json& j, ItemRecord& r) {
    j.at("item_id").get_to(r.item_id);
    j.at("category_id").get_to(r.category_id);
    j.at("brand_id").get_to(r.brand_id);
    j.at("shop_id").get_to(r.shop_id);
    j.at("price").get_to(r.price);
    j.at("sales_count").get_to(r.sales_count);
    j.at("stat_features").get_to(r.stat_features);
}

inline void to_json(nlohmann::ordered_json& j, const PageRecord& p) {
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const auto& it : p.items) {
        nlohmann::ordered_json e = it.item;
        e["click"] = is_click(it.feedback) ? 1 : 0;
        items.push_back(std::move(e));
    }
    j = nlohmann::ordered_json{{"query_id", p.query_id},
                               {"query_category_id", p.query_category_id},
                               {"timestamp", p.timestamp},
                               {"items", std::move(items)}};
}

inline void from_json(const nlohmann::ordered_json& j, PageRecord& p) {
    j.at("query_id").get_to(p.query_id);
    j.at("query_category_id").get_to(p.query_category_id);
    j.at("timestamp").get_to(p.timestamp);
    p.items.clear();
    for (const auto& e : j.at("items")) {
        PageItem it;
        e.get_to(it.item);
        it.feedback = e.at("click").get<int>() != 0 ? FeedbackType::Click : FeedbackType::NoClick;
        p.items.push_back(std::move(it));
    }
}

inline void to_json(nlohmann::ordered_json& j, const Sample& s) {
    j = nlohmann::ordered_json{
        {"user",
         {{"user_id", s.user.user_id},
          {"age_bucket", s.user.age_bucket},
          {"gender_bucket", s.user.gender_bucket},
          {"power_bucket", s.user.power_bucket}}},
        {"query",
         {{"query_id", s.query.query_id}, {"category_id", s.query.category_id}, {"segment_ids", s.query.segment_ids}}},
        {"target", s.target},
        {"history", s.history},
        {"label", s.label},
        {"page_key", s.page_key}};
}

inline void from_json(const nlohmann::ordered_json& j, Sample& s) {
    const auto& u = j.at("user");
    u.at("user_id").get_to(s.user.user_id);
    u.at("age_bucket").get_to(s.user.age_bucket);
    u.at("gender_bucket").get_to(s.user.gender_bucket);
    u.at("power_bucket").get_to(s.user.power_bucket);
    const auto& q = j.at("query");
    q.at("query_id").get_to(s.query.query_id);
    q.at("category_id").get_to(s.query.category_id);
    q.at("segment_ids").get_to(s.query.segment_ids);
    j.at("target").get_to(s.target);
    j.at("history").get_to(s.history);
    j.at("label").get_to(s.label);
    j.at("page_key").get_to(s.page_key);
}

/// Newline-delimited JSON, one Sample per line.
inline std::string serialize_samples(const std::vector<Sample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        out += nlohmann::ordered_json(s).dump();
        out += '\n';
    }
    return out;
}

inline void write_samples(const std::string& path, const std::vector<Sample>& samples) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << serialize_samples(samples);
}

inline std::vector<Sample> read_samples(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    std::vector<Sample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::ordered_json::parse(line).get<Sample>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace racp
