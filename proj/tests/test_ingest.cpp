#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "racp/ingest.hpp"

using namespace racp;
using namespace racp::ingest;

namespace {

const std::string kFixture = std::string(RACP_TEST_DATA) + "/search_log_fixture.tsv";
const std::string k100 = std::string(RACP_TEST_DATA) + "/search_log_100rows.tsv";
const std::string kHeader =
    "search_id\tuser_id\tquery_id\tquery_category_id\tad_id\tad_category_id\tad_brand_id\tad_shop_id\tprice\tposition\t"
    "is_click\ttimestamp\n";

Vocab small_vocab() { return Vocab::from(ModelConfig{}); }

std::string row(const std::string& search, const std::string& user, const std::string& cat, const std::string& ad,
                int pos, int click, long ts) {
    return search + "\t" + user + "\tq" + cat + "\t" + cat + "\t" + ad + "\t" + cat + "\t\t\t10.0\t" +
           std::to_string(pos) + "\t" + std::to_string(click) + "\t" + std::to_string(ts) + "\n";
}

ParseResult parse(const std::string& text) {
    std::istringstream in(text);
    return parse_tsv(in);
}

std::vector<std::vector<std::string>> raw_rows(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<std::string>> out;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string x;
        while (std::getline(ss, x, '\t')) f.push_back(x);
        if (!line.empty() && line.back() == '\t') f.emplace_back();
        out.push_back(f);
    }
    return out;
}

}  // namespace

TEST(BucketIds, MissingIsZero) {
    EXPECT_EQ(bucket_ids("", "brand", 100), 0u);
    EXPECT_EQ(bucket_ids("NA", "brand", 100), 0u);
}

TEST(BucketIds, DeterministicAndInRange) {
    for (int i = 0; i < 1000; ++i) {
        const auto id = std::to_string(i);
        const auto b = bucket_ids(id, "item", 37);
        EXPECT_EQ(b, bucket_ids(id, "item", 37));
        EXPECT_GE(b, 1u);
        EXPECT_LT(b, 37u);
    }
    EXPECT_EQ(bucket_ids("x", "f", 2), 1u);
    EXPECT_THROW(bucket_ids("x", "f", 1), ConfigError);
}

TEST(BucketIds, FieldNameSeparatesSpaces) {
    int same = 0;
    for (int i = 0; i < 1000; ++i) same += bucket_ids(std::to_string(i), "brand", 1024) == bucket_ids(std::to_string(i), "shop", 1024);
    EXPECT_LT(same, 10);
}

TEST(BucketIds, LoadBalanceOnTenThousandIds) {
    std::vector<int> load(1024, 0);
    for (int i = 0; i < 10000; ++i) ++load[bucket_ids("ad" + std::to_string(i), "item", 1024)];
    EXPECT_EQ(load[0], 0);
    const double mean = 10000.0 / 1023.0;
    EXPECT_LE(*std::max_element(load.begin(), load.end()), 3.0 * mean);
}

TEST(Timestamp, Formats) {
    EXPECT_EQ(parse_timestamp("1430179200"), 1430179200);
    EXPECT_EQ(parse_timestamp("2015-04-28"), 1430179200);
    EXPECT_EQ(parse_timestamp("2015-04-28 01:02:03"), 1430179200 + 3723);
    EXPECT_EQ(parse_timestamp("1970-01-01"), 0);
    EXPECT_FALSE(parse_timestamp("2015-13-01"));
    EXPECT_FALSE(parse_timestamp("yesterday"));
    EXPECT_FALSE(parse_timestamp("2015-04-28x"));
}

TEST(Sessionize, RowsSharingSearchIdFormOnePage) {
    const auto p = parse(kHeader + row("s1", "u", "1", "a3", 3, 0, 5) + row("s1", "u", "1", "a1", 1, 1, 5) +
                         row("s1", "u", "1", "a2", 2, 0, 5));
    const auto s = sessionize(p.rows, small_vocab());
    ASSERT_EQ(s.size(), 1u);
    ASSERT_EQ(s.at("u").size(), 1u);
    const auto& items = s.at("u")[0].page.items;
    ASSERT_EQ(items.size(), 3u);
    const auto v = small_vocab();
    EXPECT_EQ(items[0].item.item_id, bucket_ids("a1", "item", v.items));
    EXPECT_EQ(items[1].item.item_id, bucket_ids("a2", "item", v.items));
    EXPECT_EQ(items[2].item.item_id, bucket_ids("a3", "item", v.items));
    EXPECT_TRUE(is_click(items[0].feedback));
}

TEST(Sessionize, InterleavedSearchesSeparate) {
    const auto p = parse(kHeader + row("s1", "u", "1", "a", 1, 0, 10) + row("s2", "u", "1", "b", 1, 0, 20) +
                         row("s1", "u", "1", "c", 2, 0, 11) + row("s2", "u", "1", "d", 2, 1, 21));
    const auto s = sessionize(p.rows, small_vocab());
    ASSERT_EQ(s.at("u").size(), 2u);
    EXPECT_EQ(s.at("u")[0].search_id, "s1");
    EXPECT_EQ(s.at("u")[1].search_id, "s2");
    EXPECT_EQ(s.at("u")[0].page.items.size(), 2u);
    EXPECT_EQ(s.at("u")[1].page.items.size(), 2u);
}

TEST(Sessionize, PageCountEqualsDistinctSearchIds) {
    std::set<std::string> ids;
    for (const auto& f : raw_rows(k100)) ids.insert(f[0]);
    const auto p = parse_tsv_file(k100);
    std::size_t pages = 0;
    for (const auto& [_, v] : sessionize(p.rows, small_vocab())) pages += v.size();
    EXPECT_EQ(pages, ids.size());
}

TEST(Sessionize, MissingBrandAndShopMapToReservedBucket) {
    const auto p = parse(kHeader + row("s1", "u", "1", "a", 1, 0, 10));
    const auto s = sessionize(p.rows, small_vocab());
    EXPECT_EQ(s.at("u")[0].page.items[0].item.brand_id, 0u);
    EXPECT_EQ(s.at("u")[0].page.items[0].item.shop_id, 0u);
}

TEST(Sessionize, StatisticsCountOnlyEarlierPages) {
    const auto p = parse(kHeader + row("s1", "u1", "1", "a", 1, 1, 10) + row("s2", "u2", "1", "a", 1, 0, 20) +
                         row("s3", "u1", "1", "a", 1, 0, 30));
    const auto s = sessionize(p.rows, small_vocab());
    EXPECT_EQ(s.at("u1")[0].page.items[0].item.stat_features, (std::vector<double>{0, 0}));
    EXPECT_EQ(s.at("u2")[0].page.items[0].item.stat_features, (std::vector<double>{1, 1}));
    EXPECT_EQ(s.at("u1")[1].page.items[0].item.stat_features, (std::vector<double>{2, 1}));
    EXPECT_EQ(s.at("u1")[1].page.items[0].item.sales_count, 1u);
}

TEST(BuildSamples, SinglePageUserYieldsNothing) {
    const auto p = parse(kHeader + row("s1", "u", "1", "a", 1, 1, 10) + row("s1", "u", "1", "b", 2, 0, 10));
    SampleOptions o;
    o.min_pages = 1;
    EXPECT_TRUE(build_samples(sessionize(p.rows, small_vocab()), o).empty());
}

TEST(BuildSamples, CategoryFilterSkipsOtherCategories) {
    const auto p = parse(kHeader + row("s1", "u", "A", "a", 1, 1, 10) + row("s2", "u", "B", "b", 1, 0, 20) +
                         row("s3", "u", "A", "c", 1, 0, 30) + row("s3", "u", "A", "d", 2, 1, 30));
    SampleOptions o;
    o.min_pages = 2;
    const auto out = build_samples(sessionize(p.rows, small_vocab()), o);
    ASSERT_EQ(out.size(), 2u);
    for (const auto& ls : out) {
        ASSERT_EQ(ls.sample.history.size(), 1u);
        EXPECT_EQ(ls.sample.history[0].items[0].item.item_id, bucket_ids("a", "item", small_vocab().items));
        EXPECT_EQ(ls.sample.page_key, "u/s3");
    }
    EXPECT_EQ(out[0].sample.label, 0);
    EXPECT_EQ(out[1].sample.label, 1);
}

TEST(BuildSamples, HistoryKeepsMostRecentT) {
    std::string text = kHeader;
    for (int i = 0; i < 8; ++i) text += row("s" + std::to_string(i), "u", "1", "a" + std::to_string(i), 1, 0, 10 * i);
    SampleOptions o;
    o.max_history = 3;
    o.min_pages = 7;
    const auto out = build_samples(sessionize(parse(text).rows, small_vocab()), o);
    ASSERT_EQ(out.size(), 1u);
    ASSERT_EQ(out[0].sample.history.size(), 3u);
    const auto v = small_vocab();
    EXPECT_EQ(out[0].sample.history[0].items[0].item.item_id, bucket_ids("a4", "item", v.items));
    EXPECT_EQ(out[0].sample.history[2].items[0].item.item_id, bucket_ids("a6", "item", v.items));
}

TEST(BuildSamples, FixtureSampleCountMatchesScan) {
    // Independent scan: valid rows grouped by user then by search, pages ordered by time.
    std::map<std::string, std::map<std::string, std::pair<long, int>>> per_user;  // user -> search -> (time, items)
    for (const auto& f : raw_rows(kFixture)) {
        if (f.size() != 12) continue;
        const auto ts = parse_timestamp(f[11]);
        if (!ts || (f[10] != "0" && f[10] != "1")) continue;
        try {
            (void)std::stod(f[8]);
        } catch (...) {
            continue;
        }
        if (f[8].find_first_not_of("0123456789.") != std::string::npos) continue;
        auto& e = per_user[f[1]][f[0]];
        e.first = e.second == 0 ? *ts : std::min<long>(e.first, *ts);
        ++e.second;
    }
    for (std::size_t min_pages : {1u, 2u, 3u}) {
        std::size_t expected = 0;
        for (const auto& [u, searches] : per_user) {
            std::vector<std::pair<long, int>> pages;
            for (const auto& [_, v] : searches) pages.push_back(v);
            std::sort(pages.begin(), pages.end());
            for (std::size_t k = min_pages; k < pages.size(); ++k) expected += pages[k].second;
        }
        SampleOptions o;
        o.min_pages = min_pages;
        const auto p = parse_tsv_file(kFixture);
        EXPECT_EQ(build_samples(sessionize(p.rows, small_vocab()), o).size(), expected) << min_pages;
        EXPECT_GT(expected, 0u);
    }
}

TEST(Ingest, FixtureSamplesSatisfyInvariants) {
    const auto p = parse_tsv_file(kFixture);
    SampleOptions o;
    o.max_history = 5;
    const auto r = ingest_log(p, small_vocab(), o, {"2015-05-10", "2015-05-15"});
    EXPECT_GT(r.train.size(), 0u);
    EXPECT_GT(r.val.size(), 0u);
    EXPECT_GT(r.test.size(), 0u);
    for (const auto* split : {&r.train, &r.val, &r.test})
        for (const auto& s : *split) {
            EXPECT_NO_THROW(check_sample(s, o.max_history));
            for (const auto& pg : s.history) EXPECT_EQ(pg.query_category_id, s.query.category_id);
        }
    EXPECT_EQ(r.manifest["users"], 100);
}

TEST(Ingest, MalformedRowsAreCountedAndIsolated) {
    const auto p = parse_tsv_file(kFixture);
    EXPECT_EQ(p.malformed, 4u);
    EXPECT_EQ(p.warnings.size(), 4u);
    // The malformed rows were copies of rows 10, 50 and 90 within valid pages; the pages survive intact.
    const auto raw = raw_rows(kFixture);
    const auto s = sessionize(p.rows, small_vocab());
    for (std::size_t idx : {10u, 51u, 92u}) {
        const auto& f = raw[idx];
        std::size_t valid = 0;
        for (const auto& g : raw)
            if (g.size() == 12 && g[0] == f[0] && g[9] != "9") ++valid;
        bool found = false;
        for (const auto& up : s.at(f[1]))
            if (up.search_id == f[0]) {
                found = true;
                EXPECT_EQ(up.page.items.size(), valid);
            }
        EXPECT_TRUE(found);
    }
}

TEST(Ingest, IdempotentOutputBytes) {
    const auto a = ingest_log(parse_tsv_file(kFixture), small_vocab(), {}, {"2015-05-10", "2015-05-15"});
    const auto b = ingest_log(parse_tsv_file(kFixture), small_vocab(), {}, {"2015-05-10", "2015-05-15"});
    EXPECT_EQ(serialize_samples(a.train), serialize_samples(b.train));
    EXPECT_EQ(serialize_samples(a.test), serialize_samples(b.test));
    EXPECT_EQ(a.manifest.dump(), b.manifest.dump());
}

TEST(Ingest, SplitsFollowDates) {
    const auto p = parse(kHeader + row("s1", "u", "1", "a", 1, 1, 100) + row("s2", "u", "1", "b", 1, 0, 200) +
                         row("s3", "u", "1", "c", 1, 1, 300) + row("s4", "u", "1", "d", 1, 0, 400));
    const auto r = ingest_log(p, small_vocab(), {}, {"250", "350"});
    EXPECT_EQ(r.train.size(), 1u);
    EXPECT_EQ(r.val.size(), 1u);
    EXPECT_EQ(r.test.size(), 1u);
    EXPECT_THROW(ingest_log(p, small_vocab(), {}, {"350", "250"}), ConfigError);
}

TEST(Ingest, MissingColumnIsFormatError) {
    EXPECT_THROW(parse("search_id\tuser_id\n1\t2\n"), FormatError);
    EXPECT_THROW(parse(""), FormatError);
}
