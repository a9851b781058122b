#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "racp/config.hpp"
#include "racp/errors.hpp"
#include "racp/records.hpp"
#include "racp/rng.hpp"

namespace racp::ingest {

/// Seed of the id-bucketing hash.
inline constexpr std::uint64_t kBucketSeed = 0x52414350'49445331ULL;

/**
 * Stable bucket of a raw id: 1 + hash(field, raw) mod (n_buckets - 1).
 * Missing ids (empty, "NA", "\N", "null") map to the reserved bucket 0.
 */
inline std::size_t bucket_ids(std::string_view raw, std::string_view field, std::size_t n_buckets) {
    if (n_buckets < 2) throw ConfigError("bucket_ids: n_buckets must be >= 2");
    if (raw.empty() || raw == "NA" || raw == "\\N" || raw == "null") return 0;
    std::uint64_t h = fnv1a64(field, kBucketSeed ^ 0xcbf29ce484222325ULL);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = mix64(fnv1a64(raw, h));
    return 1 + static_cast<std::size_t>(h % (n_buckets - 1));
}

/// One log row; ids stay raw strings until bucketing.
struct RawImpression {
    std::string search_id;
    std::string user_id;
    std::string query_id;
    std::string query_category_id;
    std::string ad_id;
    std::string ad_category_id;
    std::string ad_brand_id;  // optional
    std::string ad_shop_id;   // optional
    double price = 0.0;
    long position = 0;
    int is_click = 0;
    std::int64_t timestamp = 0;
    // optional profile columns
    std::string query_segments;  // space-separated tokens
    std::string user_age, user_gender, user_power;
};

/// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// Integer seconds, `YYYY-MM-DD` or `YYYY-MM-DD HH:MM:SS` (UTC).
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && p == s.data() + s.size()) return v;
    int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    char tail = 0;
    const std::string str(s);
    const int n = std::sscanf(str.c_str(), "%4d-%2d-%2d %2d:%2d:%2d%c", &y, &mo, &d, &hh, &mm, &ss, &tail);
    if (!(n == 3 || n == 6) || str.size() != (n == 3 ? 10u : 19u)) return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh > 23 || mm > 59 || ss > 60) return std::nullopt;
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + hh * 3600 + mm * 60 + ss;
}

struct ParseResult {
    std::vector<RawImpression> rows;
    std::size_t lines = 0;
    std::size_t malformed = 0;
    std::vector<std::string> warnings;  // first few malformed-row messages
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace detail

inline constexpr const char* kRequiredColumns[] = {"search_id", "user_id", "query_id", "query_category_id",
                                                    "ad_id",     "ad_category_id", "price", "position",
                                                    "is_click",  "timestamp"};
inline constexpr const char* kOptionalColumns[] = {"ad_brand_id", "ad_shop_id", "query_segments",
                                                    "user_age",    "user_gender", "user_power"};

/**
 * Parses a tab-separated log with a header row. Rows with a wrong column
 * count or unparseable required fields are skipped and counted; other
 * rows of the same page are kept.
 */
inline ParseResult parse_tsv(std::istream& in) {
    ParseResult res;
    std::string line;
    if (!std::getline(in, line)) throw FormatError("log has no header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_tabs(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[std::string(header[i])] = i;
    for (const char* name : kRequiredColumns)
        if (!col.contains(name)) throw FormatError(std::string("log header lacks column ") + name);
    auto opt = [&](const char* name) -> std::optional<std::size_t> {
        auto it = col.find(name);
        return it == col.end() ? std::nullopt : std::optional(it->second);
    };

    std::size_t lineno = 1;
    auto reject = [&](const std::string& why) {
        ++res.malformed;
        if (res.warnings.size() < 20) res.warnings.push_back("line " + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++res.lines;
        const auto f = detail::split_tabs(line);
        if (f.size() != header.size()) {
            reject("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
            continue;
        }
        auto get = [&](const char* name) { return f[col.at(name)]; };
        RawImpression r;
        r.search_id = get("search_id");
        r.user_id = get("user_id");
        r.query_id = get("query_id");
        r.query_category_id = get("query_category_id");
        r.ad_id = get("ad_id");
        r.ad_category_id = get("ad_category_id");
        if (r.search_id.empty() || r.user_id.empty() || r.ad_id.empty()) {
            reject("missing search_id, user_id or ad_id");
            continue;
        }
        if (!detail::parse_number(get("price"), r.price) || !(r.price >= 0.0)) {
            reject("bad price '" + std::string(get("price")) + "'");
            continue;
        }
        if (!detail::parse_number(get("position"), r.position)) {
            reject("bad position '" + std::string(get("position")) + "'");
            continue;
        }
        if (!detail::parse_number(get("is_click"), r.is_click) || (r.is_click != 0 && r.is_click != 1)) {
            reject("is_click must be 0 or 1, got '" + std::string(get("is_click")) + "'");
            continue;
        }
        const auto ts = parse_timestamp(get("timestamp"));
        if (!ts) {
            reject("bad timestamp '" + std::string(get("timestamp")) + "'");
            continue;
        }
        r.timestamp = *ts;
        if (auto c = opt("ad_brand_id")) r.ad_brand_id = f[*c];
        if (auto c = opt("ad_shop_id")) r.ad_shop_id = f[*c];
        if (auto c = opt("query_segments")) r.query_segments = f[*c];
        if (auto c = opt("user_age")) r.user_age = f[*c];
        if (auto c = opt("user_gender")) r.user_gender = f[*c];
        if (auto c = opt("user_power")) r.user_power = f[*c];
        res.rows.push_back(std::move(r));
    }
    return res;
}

inline ParseResult parse_tsv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read log " + path);
    return parse_tsv(in);
}

/// Vocabulary sizes used for bucketing (taken from the model config).
struct Vocab {
    std::size_t users, items, categories, brands, shops, queries, segments, age, gender, power;

    static Vocab from(const ModelConfig& m) {
        return {m.n_users, m.n_items,    m.n_categories, m.n_brands, m.n_shops,
                m.n_queries, m.n_segments, m.n_age,      m.n_gender, m.n_power};
    }
};

/// A bucketed page with its owner, search id and the rows' profile columns.
struct UserPage {
    std::string search_id;
    PageRecord page;
    UserProfile user;
    QueryProfile query;
};

/// Per-user pages, users in ascending raw-id order, pages by (timestamp, search_id).
using Sessions = std::map<std::string, std::vector<UserPage>>;

/**
 * Groups rows into one page per search_id, items ordered by position.
 * Item statistics (sales_count = clicks so far, stat_features =
 * [impressions so far, clicks so far]) are accumulated over all pages in
 * global (timestamp, search_id) order, counting only earlier pages.
 */
inline Sessions sessionize(const std::vector<RawImpression>& rows, const Vocab& v) {
    std::map<std::string, std::vector<const RawImpression*>> by_search;
    for (const auto& r : rows) by_search[r.search_id].push_back(&r);

    struct Pending {
        std::int64_t time;
        std::string search_id;
        std::vector<const RawImpression*> rows;
    };
    std::vector<Pending> pages;
    for (auto& [sid, rs] : by_search) {
        std::stable_sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->position < b->position; });
        std::int64_t t = rs.front()->timestamp;
        for (auto* r : rs) t = std::min(t, r->timestamp);
        pages.push_back({t, sid, rs});
    }
    std::sort(pages.begin(), pages.end(),
              [](const Pending& a, const Pending& b) { return std::tie(a.time, a.search_id) < std::tie(b.time, b.search_id); });

    std::map<std::size_t, std::pair<std::uint64_t, std::uint64_t>> counts;  // item bucket -> (impressions, clicks)
    Sessions out;
    for (const auto& p : pages) {
        const RawImpression& head = *p.rows.front();
        UserPage up;
        up.search_id = p.search_id;
        up.user = {bucket_ids(head.user_id, "user", v.users), bucket_ids(head.user_age, "age", v.age),
                   bucket_ids(head.user_gender, "gender", v.gender), bucket_ids(head.user_power, "power", v.power)};
        up.query.query_id = bucket_ids(head.query_id, "query", v.queries);
        up.query.category_id = bucket_ids(head.query_category_id, "category", v.categories);
        std::istringstream seg(head.query_segments);
        for (std::string tok; seg >> tok;) up.query.segment_ids.push_back(bucket_ids(tok, "segment", v.segments));
        if (up.query.segment_ids.empty() && !head.query_id.empty())
            up.query.segment_ids.push_back(bucket_ids(head.query_id, "segment", v.segments));
        up.page.query_id = up.query.query_id;
        up.page.query_category_id = up.query.category_id;
        up.page.timestamp = p.time;
        for (const auto* r : p.rows) {
            ItemRecord it;
            it.item_id = bucket_ids(r->ad_id, "item", v.items);
            it.category_id = bucket_ids(r->ad_category_id, "category", v.categories);
            it.brand_id = bucket_ids(r->ad_brand_id, "brand", v.brands);
            it.shop_id = bucket_ids(r->ad_shop_id, "shop", v.shops);
            it.price = r->price;
            const auto [impr, clicks] = counts[it.item_id];
            it.sales_count = clicks;
            it.stat_features = {static_cast<double>(impr), static_cast<double>(clicks)};
            up.page.items.push_back({std::move(it), r->is_click ? FeedbackType::Click : FeedbackType::NoClick});
        }
        for (const auto& pi : up.page.items) {
            auto& c = counts[pi.item.item_id];
            ++c.first;
            c.second += is_click(pi.feedback);
        }
        out[head.user_id].push_back(std::move(up));
    }
    return out;
}

struct SampleOptions {
    std::size_t max_history = 5;  // T
    std::size_t min_pages = 1;    // page k (1-based) is a target page when k > min_pages
    bool same_category = true;
};

struct LabeledSample {
    Sample sample;
    std::int64_t timestamp;  // of the target page
};

/**
 * Every item of every eligible page becomes a sample labeled by its click;
 * history = up to T most recent earlier pages of the same query category.
 */
inline std::vector<LabeledSample> build_samples(const Sessions& sessions, const SampleOptions& opt) {
    std::vector<LabeledSample> out;
    for (const auto& [raw_user, pages] : sessions) {
        for (std::size_t k = 0; k < pages.size(); ++k) {
            if (k + 1 <= opt.min_pages) continue;
            const auto& target = pages[k];
            std::vector<PageRecord> history;
            for (std::size_t i = k; i-- > 0 && history.size() < opt.max_history;)
                if (!opt.same_category || pages[i].page.query_category_id == target.page.query_category_id)
                    history.push_back(pages[i].page);
            std::reverse(history.begin(), history.end());
            for (const auto& pi : target.page.items) {
                LabeledSample ls;
                ls.sample.user = target.user;
                ls.sample.query = target.query;
                ls.sample.target = pi.item;
                ls.sample.history = history;
                ls.sample.label = is_click(pi.feedback) ? 1 : 0;
                ls.sample.page_key = raw_user + "/" + target.search_id;
                ls.timestamp = target.page.timestamp;
                out.push_back(std::move(ls));
            }
        }
    }
    return out;
}

/// Date boundaries: target pages before `val_from` train, before `test_from` validate, the rest test.
struct SplitDates {
    std::string val_from;
    std::string test_from;
};

struct IngestResult {
    std::vector<Sample> train, val, test;
    nlohmann::ordered_json manifest;
};

inline IngestResult ingest_log(const ParseResult& parsed, const Vocab& vocab, const SampleOptions& opt,
                           const SplitDates& dates) {
    auto boundary = [](const std::string& s, std::int64_t fallback) {
        if (s.empty()) return fallback;
        auto t = parse_timestamp(s);
        if (!t) throw ConfigError("bad split date " + s);
        return *t;
    };
    const std::int64_t inf = std::numeric_limits<std::int64_t>::max();
    const std::int64_t val_from = boundary(dates.val_from, inf);
    const std::int64_t test_from = boundary(dates.test_from, inf);
    if (val_from > test_from) throw ConfigError("validation split must start before the test split");

    const auto sessions = sessionize(parsed.rows, vocab);
    auto samples = build_samples(sessions, opt);
    IngestResult res;
    for (auto& ls : samples) {
        auto& dst = ls.timestamp < val_from ? res.train : ls.timestamp < test_from ? res.val : res.test;
        dst.push_back(std::move(ls.sample));
    }
    std::size_t pages = 0;
    for (const auto& [_, p] : sessions) pages += p.size();
    auto positives = [](const std::vector<Sample>& v) {
        std::size_t n = 0;
        for (const auto& s : v) n += s.label;
        return n;
    };
    res.manifest = {{"source", "log"},
                    {"lines", parsed.lines},
                    {"rows", parsed.rows.size()},
                    {"malformed_rows", parsed.malformed},
                    {"warnings", parsed.warnings},
                    {"users", sessions.size()},
                    {"pages", pages},
                    {"max_history", opt.max_history},
                    {"min_pages", opt.min_pages},
                    {"val_from", dates.val_from},
                    {"test_from", dates.test_from},
                    {"train", {{"samples", res.train.size()}, {"positives", positives(res.train)}}},
                    {"val", {{"samples", res.val.size()}, {"positives", positives(res.val)}}},
                    {"test", {{"samples", res.test.size()}, {"positives", positives(res.test)}}}};
    return res;
}

}  // namespace racp::ingest
