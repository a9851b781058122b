#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "racp/errors.hpp"

namespace racp {

/// Ordered `key = value` pairs; `#` starts a comment.
class KeyValues {
public:
    static KeyValues parse(const std::string& text) {
        KeyValues kv;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return kv;
    }

    static KeyValues load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    /// Applies a `key=value` override.
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool contains(const std::string& key) const { return values_.contains(key); }
    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    template <class T>
    T get(const std::string& key, T fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return convert<T>(key, it->second);
    }

    template <class T>
    std::vector<T> list(const std::string& key, std::vector<T> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<T> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(convert<T>(key, item));
        }
        return out;
    }

    std::string serialize() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
        return os.str();
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    template <class T>
    static T convert(const std::string& key, const std::string& text) {
        if constexpr (std::is_same_v<T, std::string>) {
            return text;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw ConfigError("config key " + key + ": expected boolean, got '" + text + "'");
        } else {
            T value{};
            const auto* end = text.data() + text.size();
            auto [ptr, ec] = std::from_chars(text.data(), end, value);
            if (ec != std::errc{} || ptr != end)
                throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
            return value;
        }
    }

    std::map<std::string, std::string> values_;
};

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

enum class ModelVariant { NoSequenceMLP, MeanPoolClicks, TargetAttentionClicks, SplitClickUnclick, RACP };

inline std::string to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::NoSequenceMLP: return "NoSequenceMLP";
        case ModelVariant::MeanPoolClicks: return "MeanPoolClicks";
        case ModelVariant::TargetAttentionClicks: return "TargetAttentionClicks";
        case ModelVariant::SplitClickUnclick: return "SplitClickUnclick";
        case ModelVariant::RACP: return "RACP";
    }
    return "?";
}

inline ModelVariant parse_variant(const std::string& name) {
    for (auto v : {ModelVariant::NoSequenceMLP, ModelVariant::MeanPoolClicks, ModelVariant::TargetAttentionClicks,
                   ModelVariant::SplitClickUnclick, ModelVariant::RACP})
        if (to_string(v) == name) return v;
    throw ConfigError("unknown model variant: " + name);
}

/// RACP ablation switches.
struct Ablations {
    bool no_action_type = false;
    bool no_unclicked = false;
    bool no_clicked = false;
    bool no_backtracking = false;
    bool flatten_one_layer_attention = false;
    bool mean_pool_pages = false;
    bool hgru_pages = false;

    bool any() const {
        return no_action_type || no_unclicked || no_clicked || no_backtracking || flatten_one_layer_attention ||
               mean_pool_pages || hgru_pages;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        if (no_action_type) out.emplace_back("no_action_type");
        if (no_unclicked) out.emplace_back("no_unclicked");
        if (no_clicked) out.emplace_back("no_clicked");
        if (no_backtracking) out.emplace_back("no_backtracking");
        if (flatten_one_layer_attention) out.emplace_back("flatten_one_layer_attention");
        if (mean_pool_pages) out.emplace_back("mean_pool_pages");
        if (hgru_pages) out.emplace_back("hgru_pages");
        return out;
    }

    void enable(const std::string& name) {
        if (name == "no_action_type") no_action_type = true;
        else if (name == "no_unclicked") no_unclicked = true;
        else if (name == "no_clicked") no_clicked = true;
        else if (name == "no_backtracking") no_backtracking = true;
        else if (name == "flatten_one_layer_attention") flatten_one_layer_attention = true;
        else if (name == "mean_pool_pages") mean_pool_pages = true;
        else if (name == "hgru_pages") hgru_pages = true;
        else throw ConfigError("unknown ablation flag: " + name);
    }
};

/**
 * Model hyperparameters, vocabulary sizes and the variant selection.
 *
 * Every id vocabulary reserves index 0 for missing/padding. Item vectors
 * concatenate (6 + n_stat) fields of width `embed_dim`; context vectors
 * concatenate page query, page query category (width `embed_dim`) and five
 * count/rank fields of width `context_dim`.
 */
struct ModelConfig {
    // vocabularies
    std::size_t n_users = 1001;
    std::size_t n_items = 2001;
    std::size_t n_categories = 21;
    std::size_t n_brands = 201;
    std::size_t n_shops = 201;
    std::size_t n_queries = 201;
    std::size_t n_segments = 501;
    std::size_t n_age = 8;
    std::size_t n_gender = 3;
    std::size_t n_power = 6;
    std::size_t n_price_buckets = 32;
    std::size_t n_sales_buckets = 16;
    std::size_t n_stat_buckets = 16;
    std::size_t n_stat = 2;
    std::size_t max_segments = 4;

    // dimensions
    std::size_t embed_dim = 10;
    std::size_t feedback_dim = 4;
    std::size_t context_dim = 4;
    std::size_t pages = 5;       // T
    std::size_t page_size = 5;   // L_a
    std::size_t hidden = 32;     // K
    std::size_t mlp1 = 200;
    std::size_t mlp2 = 80;

    double leaky_slope = 0.2;
    double dropout = 0.1;
    double learning_rate = 1e-3;
    double init_scale = 0.05;
    std::uint64_t seed = 1;
    std::string backtrack_input = "mean_summary";

    ModelVariant variant = ModelVariant::RACP;
    Ablations ablations;

    std::size_t item_dim() const { return (6 + n_stat) * embed_dim; }
    std::size_t user_dim() const { return 4 * embed_dim; }
    std::size_t query_dim() const { return 3 * embed_dim; }
    std::size_t context_vec_dim() const { return 2 * embed_dim + 5 * context_dim; }
    /// Width of a per-item [x; f; c] vector and of a page vector p_i.
    std::size_t page_vec_dim() const { return item_dim() + feedback_dim + context_vec_dim(); }
    /// Width of the concatenated [q; u; x_t] intent vector.
    std::size_t intent_dim() const { return query_dim() + user_dim() + item_dim(); }
    std::size_t count_buckets() const { return page_size + 1; }

    /// Throws ConfigError on invalid values or flag combinations.
    void validate() const {
        if (hidden == 0) throw ConfigError("model.hidden (K) must be > 0");
        if (pages == 0) throw ConfigError("model.pages (T) must be >= 1");
        if (page_size == 0) throw ConfigError("model.page_size (L_a) must be >= 1");
        if (embed_dim == 0 || feedback_dim == 0 || context_dim == 0 || mlp1 == 0 || mlp2 == 0)
            throw ConfigError("model dimensions must be > 0");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
        for (auto v : {n_users, n_items, n_categories, n_brands, n_shops, n_queries, n_segments, n_age, n_gender,
                       n_power, n_price_buckets, n_sales_buckets, n_stat_buckets})
            if (v < 2) throw ConfigError("vocabulary sizes must be >= 2");
        if (backtrack_input != "mean_summary") throw ConfigError("unsupported backtrack_input: " + backtrack_input);
        if (ablations.any() && variant != ModelVariant::RACP)
            throw ConfigError("ablation flags are only valid with the RACP variant");
        if (ablations.no_clicked && ablations.no_unclicked)
            throw ConfigError("no_clicked and no_unclicked are mutually exclusive");
        const int structural = int(ablations.flatten_one_layer_attention) + int(ablations.mean_pool_pages) +
                               int(ablations.hgru_pages);
        if (structural > 1)
            throw ConfigError("at most one of flatten_one_layer_attention, mean_pool_pages, hgru_pages");
    }

    KeyValues to_kv() const {
        KeyValues kv;
        auto put = [&](const std::string& k, auto v) {
            if constexpr (std::is_same_v<decltype(v), double>) kv.set("model." + k, format_double(v));
            else kv.set("model." + k, std::to_string(v));
        };
        put("n_users", n_users);
        put("n_items", n_items);
        put("n_categories", n_categories);
        put("n_brands", n_brands);
        put("n_shops", n_shops);
        put("n_queries", n_queries);
        put("n_segments", n_segments);
        put("n_age", n_age);
        put("n_gender", n_gender);
        put("n_power", n_power);
        put("n_price_buckets", n_price_buckets);
        put("n_sales_buckets", n_sales_buckets);
        put("n_stat_buckets", n_stat_buckets);
        put("n_stat", n_stat);
        put("max_segments", max_segments);
        put("embed_dim", embed_dim);
        put("feedback_dim", feedback_dim);
        put("context_dim", context_dim);
        put("pages", pages);
        put("page_size", page_size);
        put("hidden", hidden);
        put("mlp1", mlp1);
        put("mlp2", mlp2);
        put("leaky_slope", leaky_slope);
        put("dropout", dropout);
        put("learning_rate", learning_rate);
        put("init_scale", init_scale);
        put("seed", seed);
        kv.set("model.backtrack_input", backtrack_input);
        kv.set("model.variant", to_string(variant));
        std::string abl;
        for (const auto& n : ablations.names()) abl += (abl.empty() ? "" : ",") + n;
        kv.set("model.ablations", abl);
        return kv;
    }

    static ModelConfig from_kv(const KeyValues& kv) { return from_kv(kv, ModelConfig{}); }

    static ModelConfig from_kv(const KeyValues& kv, ModelConfig base) {
        ModelConfig c = base;
        auto get = [&](const std::string& k, auto& field) {
            field = kv.get<std::remove_reference_t<decltype(field)>>("model." + k, field);
        };
        get("n_users", c.n_users);
        get("n_items", c.n_items);
        get("n_categories", c.n_categories);
        get("n_brands", c.n_brands);
        get("n_shops", c.n_shops);
        get("n_queries", c.n_queries);
        get("n_segments", c.n_segments);
        get("n_age", c.n_age);
        get("n_gender", c.n_gender);
        get("n_power", c.n_power);
        get("n_price_buckets", c.n_price_buckets);
        get("n_sales_buckets", c.n_sales_buckets);
        get("n_stat_buckets", c.n_stat_buckets);
        get("n_stat", c.n_stat);
        get("max_segments", c.max_segments);
        get("embed_dim", c.embed_dim);
        get("feedback_dim", c.feedback_dim);
        get("context_dim", c.context_dim);
        get("pages", c.pages);
        get("page_size", c.page_size);
        get("hidden", c.hidden);
        get("mlp1", c.mlp1);
        get("mlp2", c.mlp2);
        get("leaky_slope", c.leaky_slope);
        get("dropout", c.dropout);
        get("learning_rate", c.learning_rate);
        get("init_scale", c.init_scale);
        get("seed", c.seed);
        get("backtrack_input", c.backtrack_input);
        if (kv.contains("model.variant")) c.variant = parse_variant(kv.str("model.variant", ""));
        if (kv.contains("model.ablations")) {
            c.ablations = {};
            for (const auto& name : kv.list<std::string>("model.ablations", {})) c.ablations.enable(name);
        }
        c.validate();
        return c;
    }
};

/// Avito-style defaults (D=10, T=5, L_a=5, lr=1e-3, MLP 200/80).
inline ModelConfig avito_defaults() { return ModelConfig{}; }

/// Taobao-style defaults (T=10, L_a=14, lr=1e-2, K=128).
inline ModelConfig taobao_defaults() {
    ModelConfig c;
    c.pages = 10;
    c.page_size = 14;
    c.learning_rate = 1e-2;
    c.hidden = 128;
    return c;
}

}  // namespace racp
