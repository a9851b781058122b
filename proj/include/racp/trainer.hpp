#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "racp/checkpoint.hpp"
#include "racp/config.hpp"
#include "racp/metrics.hpp"
#include "racp/model.hpp"
#include "racp/ops.hpp"
#include "racp/params.hpp"
#include "racp/records.hpp"
#include "racp/synth.hpp"

namespace racp {

/**
 * One experiment: model, data source, optimization budget, seeds, output.
 *
 * Key-value layout: `model.*` (ModelConfig), `world.*` (synthetic world),
 * `data.*`, `train.*`, `output.dir`. Unknown keys are rejected.
 */
struct ExperimentConfig {
    ModelConfig model;
    std::string data_source = "synthetic";  // synthetic | files
    synth::WorldConfig world;
    std::size_t train_samples = 50000;
    std::size_t val_samples = 5000;
    std::size_t test_samples = 10000;
    std::string train_path, val_path, test_path;

    std::size_t batch_size = 2048;
    std::size_t max_steps = 2000;
    std::size_t epochs = 0;  // > 0 replaces max_steps with epochs * batches per epoch
    std::size_t eval_every = 200;
    std::size_t patience = 5;  // evaluations without improvement; 0 disables early stopping
    std::string init_checkpoint;
    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "runs";

    void validate() const {
        model.validate();
        if (seeds.empty()) throw ConfigError("train.seeds must list at least one seed");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
        if (data_source == "synthetic") {
            world.validate();
        } else if (data_source == "files") {
            if (train_path.empty() || val_path.empty() || test_path.empty())
                throw ConfigError("data.source = files needs data.train_path, data.val_path and data.test_path");
        } else {
            throw ConfigError("data.source must be synthetic or files, got " + data_source);
        }
    }

    KeyValues to_kv() const {
        KeyValues kv = model.to_kv();
        const KeyValues w = world.to_kv();
        for (const auto& [k, v] : w.entries()) kv.set(k, v);
        kv.set("data.source", data_source);
        kv.set("data.train_samples", std::to_string(train_samples));
        kv.set("data.val_samples", std::to_string(val_samples));
        kv.set("data.test_samples", std::to_string(test_samples));
        kv.set("data.train_path", train_path);
        kv.set("data.val_path", val_path);
        kv.set("data.test_path", test_path);
        kv.set("train.batch_size", std::to_string(batch_size));
        kv.set("train.max_steps", std::to_string(max_steps));
        kv.set("train.epochs", std::to_string(epochs));
        kv.set("train.eval_every", std::to_string(eval_every));
        kv.set("train.patience", std::to_string(patience));
        kv.set("train.init_checkpoint", init_checkpoint);
        std::string s;
        for (auto v : seeds) s += (s.empty() ? "" : ",") + std::to_string(v);
        kv.set("train.seeds", s);
        kv.set("output.dir", out_dir);
        return kv;
    }

    static ExperimentConfig from_kv(const KeyValues& kv) { return from_kv(kv, ExperimentConfig{}); }

    static ExperimentConfig from_kv(const KeyValues& kv, ExperimentConfig base) {
        const auto known = base.to_kv();
        for (const auto& [k, _] : kv.entries())
            if (!known.contains(k)) throw ConfigError("unknown config key: " + k);
        ExperimentConfig c = base;
        c.model = ModelConfig::from_kv(kv, base.model);
        KeyValues world_kv = base.world.to_kv();
        for (const auto& [k, v] : kv.entries())
            if (k.rfind("world.", 0) == 0) world_kv.set(k, v);
        c.world = synth::WorldConfig::from_kv(world_kv);
        c.data_source = kv.str("data.source", c.data_source);
        c.train_samples = kv.get("data.train_samples", c.train_samples);
        c.val_samples = kv.get("data.val_samples", c.val_samples);
        c.test_samples = kv.get("data.test_samples", c.test_samples);
        c.train_path = kv.str("data.train_path", c.train_path);
        c.val_path = kv.str("data.val_path", c.val_path);
        c.test_path = kv.str("data.test_path", c.test_path);
        c.batch_size = kv.get("train.batch_size", c.batch_size);
        c.max_steps = kv.get("train.max_steps", c.max_steps);
        c.epochs = kv.get("train.epochs", c.epochs);
        c.eval_every = kv.get("train.eval_every", c.eval_every);
        c.patience = kv.get("train.patience", c.patience);
        c.init_checkpoint = kv.str("train.init_checkpoint", c.init_checkpoint);
        c.seeds = kv.list<std::uint64_t>("train.seeds", c.seeds);
        c.out_dir = kv.str("output.dir", c.out_dir);
        c.validate();
        return c;
    }
};

struct DataSplits {
    std::vector<Sample> train, val, test;
    nlohmann::ordered_json manifest;
};

/// World seed used for run seed `seed`.
inline std::uint64_t world_seed(const synth::WorldConfig& w, std::uint64_t seed) {
    return mix64(w.seed ^ mix64(seed));
}

/**
 * Training, validation and test samples for one run seed. Synthetic data
 * comes from one world per seed; splits are generated in order
 * train, val, test so item statistics keep accumulating.
 */
inline DataSplits make_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    DataSplits d;
    if (cfg.data_source == "files") {
        d.train = read_samples(cfg.train_path);
        d.val = read_samples(cfg.val_path);
        d.test = read_samples(cfg.test_path);
        d.manifest = {{"source", "files"}, {"train", cfg.train_path}, {"val", cfg.val_path}, {"test", cfg.test_path}};
        return d;
    }
    synth::WorldConfig w = cfg.world;
    w.seed = world_seed(cfg.world, seed);
    auto world = synth::build_world(w);
    Rng root(seed);
    const std::size_t hist = w.pages_per_session - 1;
    Rng r_train = root.substream("data.train"), r_val = root.substream("data.val"),
        r_test = root.substream("data.test");
    auto tr = synth::generate_dataset(world, cfg.train_samples, hist, r_train, "train");
    auto va = synth::generate_dataset(world, cfg.val_samples, hist, r_val, "val");
    auto te = synth::generate_dataset(world, cfg.test_samples, hist, r_test, "test");
    d.train = std::move(tr.samples);
    d.val = std::move(va.samples);
    d.test = std::move(te.samples);
    d.manifest = {{"source", "synthetic"}, {"train", tr.manifest}, {"val", va.manifest}, {"test", te.manifest}};
    return d;
}

/// Model config with vocabularies matched to the data source and the run seed applied.
inline ModelConfig run_model_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    ModelConfig m = cfg.model;
    if (cfg.data_source == "synthetic") synth::apply_world_vocab(m, cfg.world);
    m.seed = seed;
    m.validate();
    return m;
}

/// Throws ConfigError when a sample id does not fit the model vocabularies.
inline void check_vocab(const std::vector<Sample>& samples, const ModelConfig& m, const std::string& what) {
    auto check = [&](std::size_t id, std::size_t n, const char* field, std::size_t i) {
        if (id >= n)
            throw ConfigError(what + " sample " + std::to_string(i) + ": " + field + " " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(n));
    };
    auto item = [&](const ItemRecord& it, std::size_t i) {
        check(it.item_id, m.n_items, "item_id", i);
        check(it.category_id, m.n_categories, "category_id", i);
        check(it.brand_id, m.n_brands, "brand_id", i);
        check(it.shop_id, m.n_shops, "shop_id", i);
        if (it.stat_features.size() != m.n_stat)
            throw ConfigError(what + " sample " + std::to_string(i) + ": " + std::to_string(it.stat_features.size()) +
                              " stat features, model expects " + std::to_string(m.n_stat));
    };
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        check(s.user.user_id, m.n_users, "user_id", i);
        check(s.user.age_bucket, m.n_age, "age_bucket", i);
        check(s.user.gender_bucket, m.n_gender, "gender_bucket", i);
        check(s.user.power_bucket, m.n_power, "power_bucket", i);
        check(s.query.query_id, m.n_queries, "query_id", i);
        check(s.query.category_id, m.n_categories, "query category", i);
        for (auto seg : s.query.segment_ids) check(seg, m.n_segments, "segment", i);
        item(s.target, i);
        for (const auto& p : s.history) {
            check(p.query_id, m.n_queries, "page query_id", i);
            check(p.query_category_id, m.n_categories, "page category", i);
            for (const auto& it : p.items) item(it.item, i);
        }
    }
}

struct LogRow {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_auc = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    BuiltModel model;  // best-validation parameters
    std::vector<LogRow> log;
    std::vector<double> wall_seconds;  // per log row
    std::size_t best_step = 0;
    double best_val_auc = 0.0;
    bool early_stopped = false;
};

inline double mean_bce(const std::vector<double>& preds, const std::vector<Sample>& samples) {
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double p = std::clamp(preds[i], 1e-12, 1.0 - 1e-12);
        total -= samples[i].label ? std::log(p) : std::log(1.0 - p);
    }
    return preds.empty() ? 0.0 : total / static_cast<double>(preds.size());
}

inline std::vector<int> labels_of(const std::vector<Sample>& samples) {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

/// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.uniform_int(i)]);
    return p;
}

/**
 * Mini-batch Adam on the mean BCE loss. Evaluates validation AUC at step 0
 * and every `eval_every` steps, keeps the best parameters and stops after
 * `patience` evaluations without improvement. The logged train loss is the
 * mean mini-batch loss since the previous row (validation loss at step 0).
 */
inline TrainResult train(const ExperimentConfig& cfg, const ModelConfig& mcfg, const DataSplits& data) {
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    check_vocab(data.train, mcfg, "train");
    check_vocab(data.val, mcfg, "val");
    if (data.train.empty() && cfg.max_steps > 0) throw ConfigError("training set is empty");

    TrainResult res;
    res.model = build_model(mcfg.variant, mcfg);
    if (!cfg.init_checkpoint.empty()) {
        auto ck = load_checkpoint(cfg.init_checkpoint);
        if (ck.config.to_kv().serialize() != mcfg.to_kv().serialize()) {
            ModelConfig a = ck.config, b = mcfg;
            a.seed = b.seed = 0;
            a.learning_rate = b.learning_rate;
            if (a.to_kv().serialize() != b.to_kv().serialize())
                throw ConfigError("init checkpoint " + cfg.init_checkpoint + " does not match the model config");
        }
        res.model.params = std::move(ck.params);
    }
    ParamStore& params = res.model.params;
    const Model model(mcfg, params);

    std::size_t steps = cfg.max_steps;
    const std::size_t per_epoch = (data.train.size() + cfg.batch_size - 1) / std::max<std::size_t>(cfg.batch_size, 1);
    if (cfg.epochs > 0) steps = cfg.epochs * per_epoch;

    Rng root(mcfg.seed);
    Rng shuffle_rng = root.substream("shuffle"), dropout_rng = root.substream("dropout");
    Adam adam({mcfg.learning_rate});

    const auto val_labels = labels_of(data.val);
    auto validate = [&](std::size_t step, double train_loss) {
        const auto preds = predict(model, data.val);
        LogRow row{step, train_loss, auc(preds, val_labels), mean_bce(preds, data.val)};
        if (step == 0) row.train_loss = row.val_loss;
        res.log.push_back(row);
        res.wall_seconds.push_back(elapsed());
        return row;
    };

    std::optional<ParamStore> best;
    auto consider = [&](const LogRow& row) {
        if (res.log.size() == 1 || row.val_auc > res.best_val_auc) {
            res.best_val_auc = row.val_auc;
            res.best_step = row.step;
            best = params.clone();
            return true;
        }
        return false;
    };
    consider(validate(0, 0.0));

    std::vector<std::size_t> order;
    std::size_t cursor = 0, stale = 0, since = 0;
    double loss_sum = 0.0;
    std::vector<const Sample*> batch;
    std::vector<double> labels;
    for (std::size_t step = 1; step <= steps; ++step) {
        batch.clear();
        labels.clear();
        const std::size_t first_index = cursor;
        while (batch.size() < cfg.batch_size) {
            if (cursor >= order.size()) {
                order = permutation(data.train.size(), shuffle_rng);
                cursor = 0;
            }
            const Sample& s = data.train[order[cursor++]];
            batch.push_back(&s);
            labels.push_back(static_cast<double>(s.label));
        }
        const auto out = model.forward(std::span<const Sample* const>(batch), true, &dropout_rng);
        const Var loss = ops::bce_loss(out.predictions, labels);
        if (!std::isfinite(loss.item()))
            throw TrainingError("non-finite loss at step " + std::to_string(step) + " (batch starting at shuffled index " +
                                std::to_string(first_index) + ")");
        backward(loss);
        adam.step(params);
        loss_sum += loss.item();
        ++since;

        if (step % cfg.eval_every == 0 || step == steps) {
            const auto row = validate(step, loss_sum / static_cast<double>(since));
            loss_sum = 0.0;
            since = 0;
            if (consider(row)) {
                stale = 0;
            } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
                res.early_stopped = true;
                break;
            }
        }
    }
    if (best) params.assign(*best);
    return res;
}

struct EvalReport {
    std::size_t examples = 0;
    std::size_t positives = 0;
    double auc = 0.0;
    std::optional<double> pv_auc;
    std::string pv_auc_error;
    double loss = 0.0;
    std::optional<double> base_auc;
    std::optional<double> rela_impr;
    std::vector<PageAuc> pages;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["examples"] = examples;
        j["positives"] = positives;
        j["auc"] = auc;
        j["pv_auc"] = pv_auc ? nlohmann::ordered_json(*pv_auc) : nlohmann::ordered_json(nullptr);
        if (!pv_auc_error.empty()) j["pv_auc_error"] = pv_auc_error;
        j["logloss"] = loss;
        if (base_auc) {
            j["base_auc"] = *base_auc;
            j["rela_impr"] = *rela_impr;
        }
        return j;
    }
};

/// AUC, PV_AUC, log loss and optional RelaImpr against `base_auc`.
inline EvalReport evaluate(const Model& model, const std::vector<Sample>& samples,
                           std::optional<double> base_auc = std::nullopt) {
    EvalReport r;
    const auto preds = predict(model, samples);
    std::vector<ScoredExample> ex;
    ex.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ex.push_back({preds[i], samples[i].label, samples[i].page_key});
        r.positives += samples[i].label;
    }
    r.examples = samples.size();
    r.auc = auc(ex);
    r.loss = mean_bce(preds, samples);
    r.pages = per_page_auc(ex);
    try {
        r.pv_auc = pv_auc(ex);
    } catch (const MetricError& e) {
        r.pv_auc_error = e.what();
    }
    if (base_auc) {
        r.base_auc = base_auc;
        r.rela_impr = rela_impr(r.auc, *base_auc);
    }
    return r;
}

namespace io {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

inline std::string fmt(double v) { return format_double(v); }

}  // namespace io

inline std::string log_csv(const std::vector<LogRow>& log) {
    std::string s = "step,train_loss,val_auc,val_loss\n";
    for (const auto& r : log)
        s += std::to_string(r.step) + "," + io::fmt(r.train_loss) + "," + io::fmt(r.val_auc) + "," + io::fmt(r.val_loss) +
             "\n";
    return s;
}

inline std::string page_auc_csv(const std::vector<PageAuc>& pages) {
    std::string s = "page_key,examples,auc\n";
    for (const auto& p : pages) s += p.page_key + "," + std::to_string(p.examples) + "," + io::fmt(p.auc) + "\n";
    return s;
}

inline void write_report(const std::filesystem::path& dir, const EvalReport& r) {
    io::write_text(dir / "metrics.json", r.to_json().dump(2) + "\n");
    io::write_text(dir / "page_auc.csv", page_auc_csv(r.pages));
}

struct RunResult {
    std::uint64_t seed = 0;
    TrainResult training;
    EvalReport test;
};

/**
 * Train + test evaluation for one seed. Writes under `dir`: config.txt,
 * data_manifest.json, checkpoint.bin, train_log.csv, timing.csv,
 * metrics.json and page_auc.csv.
 */
inline RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data,
                                const std::filesystem::path& dir) {
    const ModelConfig mcfg = run_model_config(cfg, seed);
    RunResult r;
    r.seed = seed;
    r.training = train(cfg, mcfg, data);
    check_vocab(data.test, mcfg, "test");
    r.test = evaluate(r.training.model.model(), data.test);

    ExperimentConfig echo = cfg;
    echo.model = mcfg;
    echo.seeds = {seed};
    io::write_text(dir / "config.txt", echo.to_kv().serialize());
    io::write_text(dir / "data_manifest.json", data.manifest.dump(2) + "\n");
    save_checkpoint((dir / "checkpoint.bin").string(), mcfg, r.training.model.params);
    io::write_text(dir / "train_log.csv", log_csv(r.training.log));
    std::ostringstream timing;
    timing << "step,wall_seconds\n";
    for (std::size_t i = 0; i < r.training.log.size(); ++i)
        timing << r.training.log[i].step << "," << std::fixed << std::setprecision(3) << r.training.wall_seconds[i]
               << "\n";
    io::write_text(dir / "timing.csv", timing.str());
    auto report = r.test;
    nlohmann::ordered_json j = report.to_json();
    j["best_step"] = r.training.best_step;
    j["best_val_auc"] = r.training.best_val_auc;
    j["early_stopped"] = r.training.early_stopped;
    io::write_text(dir / "metrics.json", j.dump(2) + "\n");
    io::write_text(dir / "page_auc.csv", page_auc_csv(report.pages));
    return r;
}

/// Per-seed data, generated once and shared by every cell that uses the seed.
class DataCache {
public:
    explicit DataCache(const ExperimentConfig& cfg) : cfg_(cfg) {}

    const DataSplits& get(std::uint64_t seed) {
        auto it = cache_.find(seed);
        if (it == cache_.end()) it = cache_.emplace(seed, make_data(cfg_, seed)).first;
        return it->second;
    }

private:
    ExperimentConfig cfg_;
    std::map<std::uint64_t, DataSplits> cache_;
};

inline std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

/// Runs every configured seed under `out/seed_<s>`; writes out/summary.json.
inline std::vector<RunResult> train_all(const ExperimentConfig& cfg) {
    cfg.validate();
    DataCache cache(cfg);
    std::vector<RunResult> runs;
    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    for (auto seed : cfg.seeds) {
        runs.push_back(run_experiment(cfg, seed, cache.get(seed), std::filesystem::path(cfg.out_dir) / seed_dir(seed)));
        auto j = runs.back().test.to_json();
        j["seed"] = seed;
        summary.push_back(j);
    }
    io::write_text(std::filesystem::path(cfg.out_dir) / "summary.json", summary.dump(2) + "\n");
    return runs;
}

enum class SweepAxis { PageLength, HiddenSize, TrainingSteps };

inline SweepAxis parse_axis(const std::string& s) {
    if (s == "pages" || s == "T") return SweepAxis::PageLength;
    if (s == "hidden" || s == "K") return SweepAxis::HiddenSize;
    if (s == "steps") return SweepAxis::TrainingSteps;
    throw ConfigError("unknown sweep axis " + s + " (pages, hidden, steps)");
}

inline std::string axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::PageLength: return "pages";
        case SweepAxis::HiddenSize: return "hidden";
        case SweepAxis::TrainingSteps: return "steps";
    }
    return "?";
}

struct CellResult {
    std::string label;
    std::vector<double> auc, pv_auc;  // per seed; pv_auc NaN when undefined

    double mean_auc() const { return mean(auc); }
    double mean_pv_auc() const { return mean(pv_auc); }

    static double mean(const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    }
};

inline CellResult collect(const std::string& label, const std::vector<RunResult>& runs) {
    CellResult c;
    c.label = label;
    for (const auto& r : runs) {
        c.auc.push_back(r.test.auc);
        c.pv_auc.push_back(r.test.pv_auc.value_or(std::nan("")));
    }
    return c;
}

inline std::string cells_csv(const std::string& key, const std::vector<CellResult>& cells,
                             const std::vector<std::uint64_t>& seeds, bool with_rela_impr) {
    std::string s = key + ",mean_auc,mean_pv_auc";
    if (with_rela_impr) s += ",rela_impr";
    for (auto seed : seeds) s += ",auc_seed_" + std::to_string(seed);
    s += "\n";
    for (const auto& c : cells) {
        s += c.label + "," + io::fmt(c.mean_auc()) + "," + io::fmt(c.mean_pv_auc());
        if (with_rela_impr) s += "," + io::fmt(rela_impr(c.mean_auc(), cells.front().mean_auc()));
        for (double a : c.auc) s += "," + io::fmt(a);
        s += "\n";
    }
    return s;
}

/// One train+eval per value per seed; writes out/sweep_<axis>.csv.
inline std::vector<CellResult> sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<std::size_t>& values) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    cfg.validate();
    DataCache cache(cfg);
    std::vector<CellResult> cells;
    for (auto v : values) {
        ExperimentConfig c = cfg;
        if (axis == SweepAxis::PageLength) c.model.pages = v;
        if (axis == SweepAxis::HiddenSize) c.model.hidden = v;
        if (axis == SweepAxis::TrainingSteps) {
            c.max_steps = v;
            c.epochs = 0;
        }
        c.validate();
        std::vector<RunResult> runs;
        const auto cell_dir = std::filesystem::path(cfg.out_dir) / (axis_name(axis) + "_" + std::to_string(v));
        for (auto seed : cfg.seeds) runs.push_back(run_experiment(c, seed, cache.get(seed), cell_dir / seed_dir(seed)));
        cells.push_back(collect(std::to_string(v), runs));
    }
    io::write_text(std::filesystem::path(cfg.out_dir) / ("sweep_" + axis_name(axis) + ".csv"),
                   cells_csv(axis_name(axis), cells, cfg.seeds, false));
    return cells;
}

/// Arm syntax: `Variant` or `RACP+flag+flag`.
struct Arm {
    std::string name;
    ModelVariant variant = ModelVariant::RACP;
    Ablations ablations;
};

inline Arm parse_arm(const std::string& text) {
    Arm a;
    a.name = text;
    std::stringstream ss(text);
    std::string part;
    bool first = true;
    while (std::getline(ss, part, '+')) {
        part = KeyValues::trim(part);
        if (first) a.variant = parse_variant(part);
        else a.ablations.enable(part);
        first = false;
    }
    if (first) throw ConfigError("empty ablation arm");
    return a;
}

inline std::vector<std::string> default_arms() {
    return {"NoSequenceMLP",
            "MeanPoolClicks",
            "TargetAttentionClicks",
            "SplitClickUnclick",
            "RACP",
            "RACP+no_action_type",
            "RACP+no_unclicked",
            "RACP+no_clicked",
            "RACP+no_backtracking",
            "RACP+flatten_one_layer_attention",
            "RACP+mean_pool_pages",
            "RACP+hgru_pages"};
}

/// Ablation matrix over arms; RelaImpr is relative to the first arm. Writes out/ablation.csv.
inline std::vector<CellResult> ablate(const ExperimentConfig& cfg, const std::vector<std::string>& arms) {
    if (arms.empty()) throw ConfigError("ablate needs at least one arm");
    cfg.validate();
    std::vector<Arm> parsed;
    for (const auto& a : arms) {
        parsed.push_back(parse_arm(a));
        ExperimentConfig c = cfg;
        c.model.variant = parsed.back().variant;
        c.model.ablations = parsed.back().ablations;
        c.validate();
    }
    DataCache cache(cfg);
    std::vector<CellResult> cells;
    for (const auto& arm : parsed) {
        ExperimentConfig c = cfg;
        c.model.variant = arm.variant;
        c.model.ablations = arm.ablations;
        std::vector<RunResult> runs;
        for (auto seed : cfg.seeds)
            runs.push_back(run_experiment(c, seed, cache.get(seed),
                                          std::filesystem::path(cfg.out_dir) / arm.name / seed_dir(seed)));
        cells.push_back(collect(arm.name, runs));
    }
    io::write_text(std::filesystem::path(cfg.out_dir) / "ablation.csv", cells_csv("arm", cells, cfg.seeds, true));
    return cells;
}

struct AttentionTrace {
    nlohmann::ordered_json json;
    std::string table;
};

/**
 * Per-page beta and per-item attention weights for one sample, aligned
 * with the sample's own history pages (oldest first). Pages beyond the
 * model's T and items beyond L_a are not seen by the model and are omitted.
 */
inline AttentionTrace dump_attention(const Model& model, const Sample& sample) {
    const auto& cfg = model.config();
    if (cfg.variant != ModelVariant::RACP || cfg.ablations.hgru_pages)
        throw ConfigError("attention traces need the RACP variant with attention pooling");
    const Sample* ptr = &sample;
    const auto res = model.forward(std::span<const Sample* const>(&ptr, 1), false);
    const std::size_t T = cfg.pages, L = cfg.page_size;
    const std::size_t h = std::min(T, sample.history.size());
    const std::size_t first = sample.history.size() - h;
    const bool flat = cfg.ablations.flatten_one_layer_attention;

    AttentionTrace tr;
    auto& j = tr.json;
    j["prediction"] = res.predictions.value()[0];
    j["target_item"] = sample.target.item_id;
    j["label"] = sample.label;
    j["joint_item_normalization"] = flat;
    j["pages"] = nlohmann::ordered_json::array();

    std::ostringstream tbl;
    tbl << "page  beta    items (id:c|u weight)\n";
    const char* shades = " .:-=+*#%@";
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t t = T - h + i;
        const auto& page = sample.history[first + i];
        const double beta = flat ? 0.0 : res.page_weights[t];
        nlohmann::ordered_json pj;
        pj["history_index"] = first + i;
        pj["query_id"] = page.query_id;
        if (!flat) pj["beta"] = beta;
        pj["items"] = nlohmann::ordered_json::array();
        tbl << std::setw(4) << first + i << "  ";
        if (flat) tbl << "  -   ";
        else tbl << std::fixed << std::setprecision(3) << beta << "  ";
        const std::size_t n = std::min(L, page.items.size());
        for (std::size_t k = 0; k < n; ++k) {
            const double w = res.item_weights[t * L + k];
            const auto& it = page.items[k];
            pj["items"].push_back({{"item_id", it.item.item_id},
                                   {"brand_id", it.item.brand_id},
                                   {"clicked", is_click(it.feedback)},
                                   {"weight", w}});
            const int shade = std::clamp(static_cast<int>(w * 9.999), 0, 9);
            tbl << " " << it.item.item_id << ":" << (is_click(it.feedback) ? 'c' : 'u') << " " << std::fixed
                << std::setprecision(3) << w << " " << shades[shade];
        }
        tbl << "\n";
        j["pages"].push_back(pj);
    }
    tr.table = tbl.str();
    return tr;
}

}  // namespace racp
