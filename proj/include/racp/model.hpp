#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "racp/config.hpp"
#include "racp/context.hpp"
#include "racp/ops.hpp"
#include "racp/params.hpp"
#include "racp/records.hpp"

namespace racp {

/**
 * Index tensors for a batch of samples, independent of parameter values.
 *
 * History is right-aligned into `pages` slots (most recent page in the
 * last slot) and each page into `page_size` item slots; absent slots are
 * masked. Item slot (b, t, j) lives at row (b * pages + t) * page_size + j.
 */
struct EncodedBatch {
    std::size_t batch = 0;
    std::size_t pages = 0;
    std::size_t page_size = 0;

    struct ItemFields {
        std::vector<std::size_t> item, category, brand, shop, price, sales;
        std::vector<std::vector<std::size_t>> stat;  // [n_stat][count]

        void resize(std::size_t n, std::size_t n_stat) {
            for (auto* v : {&item, &category, &brand, &shop, &price, &sales}) v->assign(n, 0);
            stat.assign(n_stat, std::vector<std::size_t>(n, 0));
        }
    };

    // per sample
    std::vector<std::size_t> user, age, gender, power, query, query_category;
    std::vector<std::size_t> segments;   // [batch * max_segments]
    Tensor segment_weights;              // [batch x max_segments]
    ItemFields target;
    std::vector<double> labels;

    // per item slot
    ItemFields slot;
    std::vector<std::size_t> feedback, page_query, page_category;
    std::vector<std::size_t> n_clicks, same_brand, same_seller, price_rank, sales_rank;
    std::vector<bool> present;   // slot holds a real item
    std::vector<bool> clicked;   // slot holds a clicked item
    std::vector<bool> item_mask; // slot takes part in intra-page attention (after item drops)

    // per page slot
    std::vector<bool> page_mask; // page has at least one unmasked item

    std::size_t slots() const { return batch * pages * page_size; }
    std::size_t page_slots() const { return batch * pages; }
};

inline void encode_item(const ItemRecord& it, const ModelConfig& cfg, EncodedBatch::ItemFields& f, std::size_t i) {
    f.item[i] = it.item_id;
    f.category[i] = it.category_id;
    f.brand[i] = it.brand_id;
    f.shop[i] = it.shop_id;
    f.price[i] = log_bucket(it.price, cfg.n_price_buckets, 2.0);
    f.sales[i] = log_bucket(static_cast<double>(it.sales_count), cfg.n_sales_buckets);
    for (std::size_t k = 0; k < cfg.n_stat; ++k)
        f.stat[k][i] = k < it.stat_features.size() ? log_bucket(it.stat_features[k], cfg.n_stat_buckets) : 0;
}

/// Builds the index tensors; applies the item-drop and feedback-blinding ablations.
inline EncodedBatch encode_batch(std::span<const Sample* const> samples, const ModelConfig& cfg) {
    EncodedBatch e;
    const std::size_t B = samples.size();
    const std::size_t T = cfg.pages;
    const std::size_t L = cfg.page_size;
    const std::size_t S = std::max<std::size_t>(cfg.max_segments, 1);
    e.batch = B;
    e.pages = T;
    e.page_size = L;
    for (auto* v : {&e.user, &e.age, &e.gender, &e.power, &e.query, &e.query_category}) v->assign(B, 0);
    e.segments.assign(B * S, 0);
    e.segment_weights = Tensor({B, S}, 0.0);
    e.target.resize(B, cfg.n_stat);
    e.labels.assign(B, 0.0);

    const std::size_t N = B * T * L;
    e.slot.resize(N, cfg.n_stat);
    for (auto* v : {&e.feedback, &e.page_query, &e.page_category, &e.n_clicks, &e.same_brand, &e.same_seller,
                    &e.price_rank, &e.sales_rank})
        v->assign(N, 0);
    e.present.assign(N, false);
    e.clicked.assign(N, false);
    e.item_mask.assign(N, false);
    e.page_mask.assign(B * T, false);

    const bool blind = cfg.ablations.no_action_type;
    const std::size_t cb = cfg.count_buckets();
    for (std::size_t b = 0; b < B; ++b) {
        const Sample& s = *samples[b];
        e.user[b] = s.user.user_id;
        e.age[b] = s.user.age_bucket;
        e.gender[b] = s.user.gender_bucket;
        e.power[b] = s.user.power_bucket;
        e.query[b] = s.query.query_id;
        e.query_category[b] = s.query.category_id;
        const std::size_t nseg = std::min(S, s.query.segment_ids.size());
        for (std::size_t k = 0; k < nseg; ++k) {
            e.segments[b * S + k] = s.query.segment_ids[k];
            e.segment_weights[b * S + k] = 1.0 / static_cast<double>(nseg);
        }
        encode_item(s.target, cfg, e.target, b);
        e.labels[b] = static_cast<double>(s.label);

        const std::size_t h = std::min(T, s.history.size());
        const std::size_t first = s.history.size() - h;
        for (std::size_t i = 0; i < h; ++i) {
            PageRecord page = s.history[first + i];
            if (page.items.size() > L) page.items.resize(L);
            const auto ctx = derive_context_features(page);
            const std::size_t t = T - h + i;
            bool any = false;
            for (std::size_t j = 0; j < page.items.size(); ++j) {
                const std::size_t n = (b * T + t) * L + j;
                const auto& it = page.items[j];
                const bool click = is_click(it.feedback);
                encode_item(it.item, cfg, e.slot, n);
                e.present[n] = true;
                e.clicked[n] = click;
                e.feedback[n] = blind ? 0 : static_cast<std::size_t>(it.feedback);
                e.page_query[n] = ctx[j].page_query_id;
                e.page_category[n] = ctx[j].page_query_category;
                e.n_clicks[n] = blind ? 0 : clip_bucket(ctx[j].n_clicks_in_page, cb);
                e.same_brand[n] = clip_bucket(ctx[j].n_same_brand, cb);
                e.same_seller[n] = clip_bucket(ctx[j].n_same_seller, cb);
                e.price_rank[n] = clip_bucket(ctx[j].price_rank, cb);
                e.sales_rank[n] = clip_bucket(ctx[j].sales_rank, cb);
                bool keep = true;
                if (cfg.ablations.no_unclicked && !click) keep = false;
                if (cfg.ablations.no_clicked && click) keep = false;
                e.item_mask[n] = keep;
                any = any || keep;
            }
            e.page_mask[b * T + t] = any;
        }
    }
    return e;
}

/// Traces kept from a forward pass for inspection.
struct ForwardResult {
    Var predictions;     // [B]
    Tensor item_weights; // [B*T x L] intra-page attention (RACP variants)
    Tensor page_weights; // [B x T] page aggregation weights
    Tensor page_queries; // [B*T x K] attention query per page
    Tensor summary;      // [B x K] s
};

/**
 * Forward pass over a parameter store. Parameters are resolved by path,
 * so a store holding a superset of the variant's parameters also works
 * (e.g. evaluating the no-backtracking path with full RACP weights).
 */
class Model {
public:
    Model(ModelConfig cfg, const ParamStore& params) : cfg_(std::move(cfg)), params_(&params) { cfg_.validate(); }

    const ModelConfig& config() const { return cfg_; }
    const ParamStore& params() const { return *params_; }

    const Var& p(const std::string& path) const { return params_->get(path); }

    /// [n x item_dim] concatenation of item attribute embeddings.
    Var embed_items(const EncodedBatch::ItemFields& f) const {
        std::vector<Var> tables;
        std::vector<std::span<const std::size_t>> ids;
        item_fields(f, tables, ids);
        return ops::gather_concat(tables, ids);
    }

    /// [n x (D_x + D_f + D_c)] per-slot [x; f; c] vectors.
    Var embed_slots(const EncodedBatch& e) const {
        std::vector<Var> tables;
        std::vector<std::span<const std::size_t>> ids;
        item_fields(e.slot, tables, ids);
        append_slot_fields(e, tables, ids);
        return ops::gather_concat(tables, ids);
    }

    /// embed_slots restricted to the given slot rows, in that order.
    Var embed_slots(const EncodedBatch& e, std::span<const std::size_t> rows) const {
        std::vector<Var> tables;
        std::vector<std::span<const std::size_t>> full;
        item_fields(e.slot, tables, full);
        append_slot_fields(e, tables, full);
        std::vector<std::vector<std::size_t>> picked(full.size(), std::vector<std::size_t>(rows.size()));
        for (std::size_t f = 0; f < full.size(); ++f)
            for (std::size_t i = 0; i < rows.size(); ++i) picked[f][i] = full[f][rows[i]];
        return ops::gather_concat(tables, std::vector<std::span<const std::size_t>>(picked.begin(), picked.end()));
    }

    void append_slot_fields(const EncodedBatch& e, std::vector<Var>& tables,
                            std::vector<std::span<const std::size_t>>& ids) const {
        auto add = [&](const char* table, const std::vector<std::size_t>& col) {
            tables.push_back(p(table));
            ids.emplace_back(col);
        };
        add("emb.feedback", e.feedback);
        add("emb.query", e.page_query);
        add("emb.category", e.page_category);
        add("emb.ctx.n_clicks", e.n_clicks);
        add("emb.ctx.same_brand", e.same_brand);
        add("emb.ctx.same_seller", e.same_seller);
        add("emb.ctx.price_rank", e.price_rank);
        add("emb.ctx.sales_rank", e.sales_rank);
    }

    Var embed_user(const EncodedBatch& e) const {
        return ops::concat({ops::gather_rows(p("emb.user"), e.user), ops::gather_rows(p("emb.age"), e.age),
                            ops::gather_rows(p("emb.gender"), e.gender), ops::gather_rows(p("emb.power"), e.power)},
                           1);
    }

    Var embed_query(const EncodedBatch& e) const {
        const Var seg = ops::group_weighted_sum(Var::constant(e.segment_weights),
                                                ops::gather_rows(p("emb.segment"), e.segments));
        return ops::concat(
            {ops::gather_rows(p("emb.query"), e.query), ops::gather_rows(p("emb.category"), e.query_category), seg},
            1);
    }

    struct Attention {
        Var weights;  // [groups x n]
        Var pooled;   // [groups x D]
    };

    /**
     * Additive attention with hidden width K: logit = w_out . tanh(W_q q +
     * W_v v + b) over `n` value rows per group, softmax within each group
     * restricted to `mask`. Empty groups give zero weights.
     */
    Attention attend(const std::string& prefix, const Var& queries, const Var& values, const std::vector<bool>& mask,
                     std::size_t n) const {
        const Var hq = ops::matmul(queries, p(prefix + ".w_query"));
        const Var logits = ops::additive_scores(hq, values, p(prefix + ".w_value"), p(prefix + ".b"),
                                                p(prefix + ".w_out"), n);
        Var weights = ops::masked_softmax_rows(logits, mask, true);
        Var pooled = ops::group_weighted_sum(weights, values);
        return {std::move(weights), std::move(pooled)};
    }

    /// GRU cell: r, z gates, candidate n; h' = (1 - z) * n + z * h.
    Var gru_cell(const std::string& prefix, const Var& x, const Var& h) const {
        auto gate = [&](const std::string& g) {
            return ops::add(ops::add_bias(ops::matmul(x, p(prefix + ".w_i" + g)), p(prefix + ".b_i" + g)),
                            ops::add_bias(ops::matmul(h, p(prefix + ".w_h" + g)), p(prefix + ".b_h" + g)));
        };
        const Var r = ops::sigmoid(gate("r"));
        const Var z = ops::sigmoid(gate("z"));
        const Var hn = ops::add_bias(ops::matmul(h, p(prefix + ".w_hn")), p(prefix + ".b_hn"));
        const Var n = ops::tanh(ops::add(ops::add_bias(ops::matmul(x, p(prefix + ".w_in")), p(prefix + ".b_in")),
                                         ops::mul(r, hn)));
        return ops::add(ops::mul(ops::affine(z, -1.0, 1.0), n), ops::mul(z, h));
    }

    /**
     * Backward recurrence over page slots: the last slot uses Q_c, slot t
     * uses gru(summary_t, Q_{t+1}). Returns [B*T x K] ordered (b, t).
     */
    Var backtrack_queries(const Var& q_c, const Var& summaries, std::size_t B, std::size_t T) const {
        std::vector<Var> per_slot(T);
        per_slot[T - 1] = q_c;
        std::vector<std::size_t> rows(B);
        for (std::size_t t = T - 1; t-- > 0;) {
            for (std::size_t b = 0; b < B; ++b) rows[b] = b * T + t;
            per_slot[t] = gru_cell("backtrack", ops::gather_rows(summaries, rows), per_slot[t + 1]);
        }
        std::vector<std::size_t> order(B * T);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < T; ++t) order[b * T + t] = t * B + b;
        return ops::gather_rows(ops::concat(per_slot, 0), order);
    }

    ForwardResult forward(std::span<const Sample* const> samples, bool train, Rng* rng = nullptr) const {
        return forward(encode_batch(samples, cfg_), train, rng);
    }

    ForwardResult forward(std::span<const Sample> samples, bool train, Rng* rng = nullptr) const {
        std::vector<const Sample*> ptrs;
        ptrs.reserve(samples.size());
        for (const auto& s : samples) ptrs.push_back(&s);
        return forward(std::span<const Sample* const>(ptrs), train, rng);
    }

    ForwardResult forward(const EncodedBatch& e, bool train, Rng* rng = nullptr) const {
        if (train && cfg_.dropout > 0.0 && rng == nullptr)
            throw std::invalid_argument("forward: training with dropout requires an rng");
        const std::size_t B = e.batch;
        ForwardResult out;

        const Var x_t = embed_items(e.target);
        const Var u = embed_user(e);
        const Var q = embed_query(e);
        const Var s = summarize(e, x_t, u, q, out);
        out.summary = s.value();

        Var h = ops::concat({s, u, q, x_t}, 1);
        Rng dummy(0);
        Rng& r = rng ? *rng : dummy;
        h = ops::dropout(ops::leaky_relu(ops::add_bias(ops::matmul(h, p("mlp.w1")), p("mlp.b1")), cfg_.leaky_slope),
                         cfg_.dropout, train, r);
        h = ops::dropout(ops::leaky_relu(ops::add_bias(ops::matmul(h, p("mlp.w2")), p("mlp.b2")), cfg_.leaky_slope),
                         cfg_.dropout, train, r);
        const Var logit = ops::add_bias(ops::matmul(h, p("mlp.w3")), p("mlp.b3"));
        out.predictions = ops::reshape(ops::sigmoid(logit), {B});
        return out;
    }

    // Single-page building blocks, exposed for inspection and tests. They
    // share parameters and code paths with the batched forward pass.

    struct PageEmbedding {
        Var items;     // X [n x D_x]
        Var feedback;  // F [n x D_f]
        Var context;   // C [n x D_c]
    };

    PageEmbedding embed_page(const PageRecord& page, const std::vector<PageContextFeatures>& ctx) const {
        const std::size_t n = page.items.size();
        if (n == 0) throw EmptyGroupError("embed_page: empty page");
        if (ctx.size() != n) throw DimensionError("embed_page: context features do not match page items");
        EncodedBatch::ItemFields f;
        f.resize(n, cfg_.n_stat);
        std::vector<std::size_t> fb(n), pq(n), pc(n), nc(n), sb(n), ss(n), pr(n), sr(n);
        const std::size_t cb = cfg_.count_buckets();
        for (std::size_t j = 0; j < n; ++j) {
            encode_item(page.items[j].item, cfg_, f, j);
            fb[j] = cfg_.ablations.no_action_type ? 0 : static_cast<std::size_t>(page.items[j].feedback);
            pq[j] = ctx[j].page_query_id;
            pc[j] = ctx[j].page_query_category;
            nc[j] = cfg_.ablations.no_action_type ? 0 : clip_bucket(ctx[j].n_clicks_in_page, cb);
            sb[j] = clip_bucket(ctx[j].n_same_brand, cb);
            ss[j] = clip_bucket(ctx[j].n_same_seller, cb);
            pr[j] = clip_bucket(ctx[j].price_rank, cb);
            sr[j] = clip_bucket(ctx[j].sales_rank, cb);
        }
        return {embed_items(f), ops::gather_rows(p("emb.feedback"), fb),
                ops::concat({ops::gather_rows(p("emb.query"), pq), ops::gather_rows(p("emb.category"), pc),
                             ops::gather_rows(p("emb.ctx.n_clicks"), nc), ops::gather_rows(p("emb.ctx.same_brand"), sb),
                             ops::gather_rows(p("emb.ctx.same_seller"), ss),
                             ops::gather_rows(p("emb.ctx.price_rank"), pr),
                             ops::gather_rows(p("emb.ctx.sales_rank"), sr)},
                            1)};
    }

    struct PageInterest {
        Var weights;  // a_{i,j} [n]
        Var page;     // p_i [D_p]
    };

    /// Attention of query Q_i [K] over one page's [x; f; c] rows.
    PageInterest intra_page_attention(const Var& x, const Var& f, const Var& c, const Var& query,
                                      const std::vector<bool>& mask) const {
        if (std::none_of(mask.begin(), mask.end(), [](bool m) { return m; }))
            throw EmptyGroupError("intra_page_attention: every item is masked");
        const Var values = ops::concat({x, f, c}, 1);
        const std::size_t n = values.shape()[0];
        auto att = attend("attn.item", ops::reshape(query, {1, query.value().size()}), values, mask, n);
        return {ops::reshape(att.weights, {n}), ops::reshape(att.pooled, {values.shape()[1]})};
    }

    /// Q_1..Q_T for page vectors p_1..p_T (each [D_p]); Q_T = Q_c.
    std::vector<Var> interest_backtracking(const std::vector<Var>& pages, const Var& q_c) const {
        if (pages.empty()) throw EmptyGroupError("interest_backtracking: no pages");
        const std::size_t T = pages.size();
        const std::size_t K = q_c.value().size();
        std::vector<Var> qs(T);
        qs[T - 1] = ops::reshape(q_c, {1, K});
        for (std::size_t t = T - 1; t-- > 0;)
            qs[t] = gru_cell("backtrack", ops::reshape(pages[t], {1, pages[t].value().size()}), qs[t + 1]);
        for (auto& qv : qs) qv = ops::reshape(qv, {K});
        return qs;
    }

    struct Aggregation {
        Var weights;  // beta [T]
        Var summary;  // s [K]
    };

    /// beta over pages from [Q_agg; p_i]; s = projection of sum beta_i p_i. No pages -> s = 0.
    Aggregation page_aggregation(const std::vector<Var>& pages, const Var& q_agg) const {
        const std::size_t K = cfg_.hidden;
        if (pages.empty()) return {Var::constant(Tensor({0})), Var::constant(Tensor({K}, 0.0))};
        std::vector<Var> rows;
        for (const auto& pg : pages) rows.push_back(ops::reshape(pg, {1, pg.value().size()}));
        const Var values = ops::concat(rows, 0);
        const std::size_t T = pages.size();
        auto att = attend("attn.page", ops::reshape(q_agg, {1, q_agg.value().size()}), values,
                          std::vector<bool>(T, true), T);
        return {ops::reshape(att.weights, {T}), ops::reshape(ops::matmul(att.pooled, p("agg.proj")), {K})};
    }

private:
    void item_fields(const EncodedBatch::ItemFields& f, std::vector<Var>& tables,
                     std::vector<std::span<const std::size_t>>& ids) const {
        const std::pair<const char*, const std::vector<std::size_t>*> fields[] = {
            {"emb.item", &f.item},   {"emb.category", &f.category}, {"emb.brand", &f.brand},
            {"emb.shop", &f.shop},   {"emb.price", &f.price},       {"emb.sales", &f.sales}};
        for (const auto& [name, col] : fields) {
            tables.push_back(p(name));
            ids.emplace_back(*col);
        }
        for (std::size_t k = 0; k < cfg_.n_stat; ++k) {
            tables.push_back(p("emb.stat" + std::to_string(k)));
            ids.emplace_back(f.stat[k]);
        }
    }

    /// Sequence-summarization block; returns s as [B x K].
    Var summarize(const EncodedBatch& e, const Var& x_t, const Var& u, const Var& q, ForwardResult& out) const {
        const std::size_t B = e.batch;
        const std::size_t T = e.pages;
        const std::size_t L = e.page_size;
        const std::size_t K = cfg_.hidden;
        const auto& abl = cfg_.ablations;

        switch (cfg_.variant) {
            case ModelVariant::NoSequenceMLP:
                return Var::constant(Tensor({B, K}, 0.0));
            case ModelVariant::MeanPoolClicks: {
                const Var values = embed_slots(e);
                Tensor w({B, T * L}, 0.0);
                for (std::size_t b = 0; b < B; ++b) {
                    std::size_t n = 0;
                    for (std::size_t i = 0; i < T * L; ++i) n += e.clicked[b * T * L + i];
                    for (std::size_t i = 0; i < T * L; ++i)
                        if (e.clicked[b * T * L + i]) w[b * T * L + i] = 1.0 / static_cast<double>(n);
                }
                return ops::matmul(ops::group_weighted_sum(Var::constant(std::move(w)), values), p("agg.proj"));
            }
            case ModelVariant::TargetAttentionClicks: {
                const Var values = embed_slots(e);
                const Var q_c = intent_query(x_t, u, q);
                auto att = attend("attn.item", q_c, values, e.clicked, T * L);
                return ops::matmul(att.pooled, p("agg.proj"));
            }
            case ModelVariant::SplitClickUnclick: {
                const Var values = embed_slots(e);
                const Var q_c = intent_query(x_t, u, q);
                std::vector<bool> unclicked(e.present.size());
                for (std::size_t i = 0; i < unclicked.size(); ++i) unclicked[i] = e.present[i] && !e.clicked[i];
                auto a_click = attend("attn.click", q_c, values, e.clicked, T * L);
                auto a_unclick = attend("attn.unclick", q_c, values, unclicked, T * L);
                return ops::matmul(ops::concat({a_click.pooled, a_unclick.pooled}, 1), p("split.proj"));
            }
            case ModelVariant::RACP:
                break;
        }

        if (abl.flatten_one_layer_attention) {
            const Var q_c = intent_query(x_t, u, q);
            auto att = attend("attn.item", q_c, embed_slots(e), e.item_mask, T * L);
            out.item_weights = att.weights.value().reshaped({B * T, L});
            return ops::matmul(att.pooled, p("agg.proj"));
        }

        if (abl.hgru_pages) return hgru_summary(e, embed_slots(e));

        // Slot rows are built only for pages that take part in attention;
        // the rest contribute zero vectors.
        std::vector<std::size_t> live;  // page slot of each compact page
        for (std::size_t g = 0; g < B * T; ++g)
            if (e.page_mask[g]) live.push_back(g);
        // keep one fully masked page so every parameter stays in the graph
        if (live.empty()) live.push_back(0);
        const std::size_t P = live.size();
        std::vector<std::size_t> where(B * T, P);  // compact row, or P for the zero row
        for (std::size_t i = 0; i < P; ++i) where[live[i]] = i;
        std::vector<std::size_t> rows(P * L);
        std::vector<bool> mask(P * L);
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t j = 0; j < L; ++j) {
                rows[i * L + j] = live[i] * L + j;
                mask[i * L + j] = e.item_mask[live[i] * L + j];
            }
        const std::size_t Dp = cfg_.page_vec_dim();
        auto expand = [&](const Var& compact) {
            return ops::gather_rows(ops::concat({compact, Var::constant(Tensor({1, Dp}, 0.0))}, 0), where);
        };
        const Var values = embed_slots(e, rows);  // [P*L x Dp]

        // Query-independent page summaries feed the backtracking recurrence.
        Tensor mean_w({P, L}, 0.0);
        for (std::size_t i = 0; i < P; ++i) {
            std::size_t n = 0;
            for (std::size_t j = 0; j < L; ++j) n += mask[i * L + j];
            for (std::size_t j = 0; j < L; ++j)
                if (mask[i * L + j]) mean_w[i * L + j] = 1.0 / static_cast<double>(n);
        }
        const Var q_c = intent_query(x_t, u, q);
        Var page_queries;
        if (abl.no_backtracking) {
            std::vector<std::size_t> owner(B * T);
            for (std::size_t i = 0; i < owner.size(); ++i) owner[i] = i / T;
            page_queries = ops::gather_rows(q_c, owner);
        } else {
            const Var summaries = expand(ops::group_weighted_sum(Var::constant(std::move(mean_w)), values));
            page_queries = backtrack_queries(q_c, summaries, B, T);
        }
        out.page_queries = page_queries.value();

        auto item_att = attend("attn.item", ops::gather_rows(page_queries, live), values, mask, L);
        out.item_weights = Tensor({B * T, L}, 0.0);
        for (std::size_t i = 0; i < P; ++i)
            std::copy_n(item_att.weights.value().data() + i * L, L, out.item_weights.data() + live[i] * L);
        const Var pages = expand(item_att.pooled);  // [B*T x D_p]

        Var page_weights;
        if (abl.mean_pool_pages) {
            Tensor w({B, T}, 0.0);
            for (std::size_t b = 0; b < B; ++b) {
                std::size_t n = 0;
                for (std::size_t t = 0; t < T; ++t) n += e.page_mask[b * T + t];
                for (std::size_t t = 0; t < T; ++t)
                    if (e.page_mask[b * T + t]) w[b * T + t] = 1.0 / static_cast<double>(n);
            }
            page_weights = Var::constant(std::move(w));
        } else {
            page_weights = attend("attn.page", ops::concat({q, u, x_t}, 1), pages, e.page_mask, T).weights;
        }
        out.page_weights = page_weights.value();
        return ops::matmul(ops::group_weighted_sum(page_weights, pages), p("agg.proj"));
    }

    /// Q_c: linear projection of [q; u; x_t] to K.
    Var intent_query(const Var& x_t, const Var& u, const Var& q) const {
        return ops::add_bias(ops::matmul(ops::concat({q, u, x_t}, 1), p("intent.proj.w")), p("intent.proj.b"));
    }

    /// Item-level GRU inside each page, page-level GRU across pages.
    Var hgru_summary(const EncodedBatch& e, const Var& values) const {
        const std::size_t B = e.batch;
        const std::size_t T = e.pages;
        const std::size_t L = e.page_size;
        const std::size_t K = cfg_.hidden;
        auto masked_update = [&](const Var& h, const Var& h_new, const std::vector<bool>& keep) {
            Tensor m(h.shape()), inv(h.shape());
            const std::size_t rows = h.shape()[0];
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t k = 0; k < K; ++k) {
                    m[r * K + k] = keep[r] ? 1.0 : 0.0;
                    inv[r * K + k] = keep[r] ? 0.0 : 1.0;
                }
            return ops::add(ops::mul(Var::constant(std::move(m)), h_new), ops::mul(Var::constant(std::move(inv)), h));
        };

        Var h = Var::constant(Tensor({B * T, K}, 0.0));
        std::vector<std::size_t> rows(B * T);
        std::vector<bool> keep(B * T);
        for (std::size_t j = 0; j < L; ++j) {
            for (std::size_t g = 0; g < B * T; ++g) {
                rows[g] = g * L + j;
                keep[g] = e.item_mask[g * L + j];
            }
            h = masked_update(h, gru_cell("hgru.item", ops::gather_rows(values, rows), h), keep);
        }
        Var g = Var::constant(Tensor({B, K}, 0.0));
        std::vector<std::size_t> prow(B);
        std::vector<bool> pkeep(B);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t b = 0; b < B; ++b) {
                prow[b] = b * T + t;
                pkeep[b] = e.page_mask[b * T + t];
            }
            g = masked_update(g, gru_cell("hgru.page", ops::gather_rows(h, prow), g), pkeep);
        }
        return g;
    }

    ModelConfig cfg_;
    const ParamStore* params_;
};

namespace detail {

inline void add_gru_params(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng) {
    for (const char* g : {"r", "z", "n"}) {
        ps.add(prefix + ".w_i" + g, init::glorot(in, hidden, rng));
        ps.add(prefix + ".w_h" + g, init::glorot(hidden, hidden, rng));
        ps.add(prefix + ".b_i" + g, Tensor({hidden}, 0.0));
        ps.add(prefix + ".b_h" + g, Tensor({hidden}, 0.0));
    }
}

inline void add_attention_params(ParamStore& ps, const std::string& prefix, std::size_t query_dim,
                                 std::size_t value_dim, std::size_t hidden, Rng& rng) {
    ps.add(prefix + ".w_query", init::glorot(query_dim, hidden, rng));
    ps.add(prefix + ".w_value", init::glorot(value_dim, hidden, rng));
    ps.add(prefix + ".b", Tensor({hidden}, 0.0));
    ps.add(prefix + ".w_out", init::glorot(hidden, 1, rng));
}

}  // namespace detail

/**
 * Creates the parameters of the configured variant. Embedding tables and
 * the MLP head have the same paths and shapes in every variant.
 * Embeddings ~ U(-init_scale, init_scale); weights Glorot-uniform; biases 0.
 */
inline ParamStore init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamStore ps;
    const std::size_t D = cfg.embed_dim;
    const std::size_t Dc = cfg.context_dim;
    const std::size_t K = cfg.hidden;
    const std::size_t Dp = cfg.page_vec_dim();
    const double a = cfg.init_scale;
    auto table = [&](const std::string& name, std::size_t rows, std::size_t dim) {
        ps.add(name, init::uniform({rows, dim}, -a, a, rng));
    };
    table("emb.user", cfg.n_users, D);
    table("emb.age", cfg.n_age, D);
    table("emb.gender", cfg.n_gender, D);
    table("emb.power", cfg.n_power, D);
    table("emb.query", cfg.n_queries, D);
    table("emb.category", cfg.n_categories, D);
    table("emb.segment", cfg.n_segments, D);
    table("emb.item", cfg.n_items, D);
    table("emb.brand", cfg.n_brands, D);
    table("emb.shop", cfg.n_shops, D);
    table("emb.price", cfg.n_price_buckets, D);
    table("emb.sales", cfg.n_sales_buckets, D);
    for (std::size_t k = 0; k < cfg.n_stat; ++k) table("emb.stat" + std::to_string(k), cfg.n_stat_buckets, D);
    // history-only tables; the history-blind baseline has none
    if (cfg.variant != ModelVariant::NoSequenceMLP) {
        table("emb.feedback", 2, cfg.feedback_dim);
        for (const char* f : {"n_clicks", "same_brand", "same_seller", "price_rank", "sales_rank"})
            table(std::string("emb.ctx.") + f, cfg.count_buckets(), Dc);
    }

    const auto& abl = cfg.ablations;
    auto intent_proj = [&] {
        ps.add("intent.proj.w", init::glorot(cfg.intent_dim(), K, rng));
        ps.add("intent.proj.b", Tensor({K}, 0.0));
    };
    switch (cfg.variant) {
        case ModelVariant::NoSequenceMLP:
            break;
        case ModelVariant::MeanPoolClicks:
            ps.add("agg.proj", init::glorot(Dp, K, rng));
            break;
        case ModelVariant::TargetAttentionClicks:
            intent_proj();
            detail::add_attention_params(ps, "attn.item", K, Dp, K, rng);
            ps.add("agg.proj", init::glorot(Dp, K, rng));
            break;
        case ModelVariant::SplitClickUnclick:
            intent_proj();
            detail::add_attention_params(ps, "attn.click", K, Dp, K, rng);
            detail::add_attention_params(ps, "attn.unclick", K, Dp, K, rng);
            ps.add("split.proj", init::glorot(2 * Dp, K, rng));
            break;
        case ModelVariant::RACP:
            if (abl.hgru_pages) {
                detail::add_gru_params(ps, "hgru.item", Dp, K, rng);
                detail::add_gru_params(ps, "hgru.page", K, K, rng);
                break;
            }
            intent_proj();
            if (!abl.no_backtracking && !abl.flatten_one_layer_attention && cfg.pages > 1)
                detail::add_gru_params(ps, "backtrack", Dp, K, rng);
            detail::add_attention_params(ps, "attn.item", K, Dp, K, rng);
            if (!abl.flatten_one_layer_attention && !abl.mean_pool_pages)
                detail::add_attention_params(ps, "attn.page", cfg.intent_dim(), Dp, K, rng);
            ps.add("agg.proj", init::glorot(Dp, K, rng));
            break;
    }

    const std::size_t mlp_in = K + cfg.user_dim() + cfg.query_dim() + cfg.item_dim();
    ps.add("mlp.w1", init::glorot(mlp_in, cfg.mlp1, rng));
    ps.add("mlp.b1", Tensor({cfg.mlp1}, 0.0));
    ps.add("mlp.w2", init::glorot(cfg.mlp1, cfg.mlp2, rng));
    ps.add("mlp.b2", Tensor({cfg.mlp2}, 0.0));
    ps.add("mlp.w3", init::glorot(cfg.mlp2, 1, rng));
    ps.add("mlp.b3", Tensor({1}, 0.0));
    return ps;
}

/// Variant-aware model construction: validated config plus fresh parameters.
struct BuiltModel {
    ModelConfig config;
    ParamStore params;

    Model model() const { return Model(config, params); }
};

inline BuiltModel build_model(ModelVariant variant, ModelConfig config) {
    config.variant = variant;
    config.validate();
    Rng rng = Rng(config.seed).substream("init");
    ParamStore ps = init_params(config, rng);
    return {std::move(config), std::move(ps)};
}

/// Plain predictions in evaluation mode, computed in chunks.
inline std::vector<double> predict(const Model& model, std::span<const Sample> samples, std::size_t chunk = 512) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); i += chunk) {
        const auto part = samples.subspan(i, std::min(chunk, samples.size() - i));
        const auto res = model.forward(part, false);
        for (double v : res.predictions.value().values()) out.push_back(v);
    }
    return out;
}

}  // namespace racp
