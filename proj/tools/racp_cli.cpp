// racp_cli: data generation, ingestion, training, evaluation, sweeps,
// ablations and attention dumps. Every output goes under --out.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "racp/ingest.hpp"
#include "racp/malloc_tuning.hpp"
#include "racp/trainer.hpp"

namespace fs = std::filesystem;
using namespace racp;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string out;

    void attach(CLI::App* app, bool out_required = true) {
        app->add_option("-c,--config", config_file, "key = value config file");
        app->add_option("-s,--set", overrides, "override, key=value (repeatable)");
        auto* o = app->add_option("-o,--out", out, "output directory");
        if (out_required) o->required();
    }

    KeyValues values() const {
        KeyValues kv = config_file.empty() ? KeyValues{} : KeyValues::load(config_file);
        for (const auto& o : overrides) kv.apply_override(o);
        return kv;
    }

    ExperimentConfig experiment() const {
        auto cfg = ExperimentConfig::from_kv(values());
        if (!out.empty()) cfg.out_dir = out;
        return cfg;
    }
};

void print_cells(const std::vector<CellResult>& cells) {
    for (const auto& c : cells) {
        std::cout << c.label << "  auc " << format_double(c.mean_auc()) << "  pv_auc " << format_double(c.mean_pv_auc());
        std::cout << "  (";
        for (std::size_t i = 0; i < c.auc.size(); ++i) std::cout << (i ? " " : "") << format_double(c.auc[i]);
        std::cout << ")\n";
    }
}

std::vector<std::size_t> parse_values(const std::string& text) {
    KeyValues kv;
    kv.set("values", text);
    return kv.list<std::size_t>("values", {});
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"RACP click-through-rate lab"};
    app.require_subcommand(1);

    Common gen_c;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("gen-data", "generate synthetic train/val/test JSONL files");
    gen_c.attach(gen);
    gen->add_option("--seed", gen_seed, "run seed (default: first of train.seeds)");

    Common ing_c;
    std::string ing_input, val_from, test_from;
    std::size_t min_pages = 1, history = 0;
    bool any_category = false;
    auto* ing = app.add_subcommand("ingest", "convert a tab-separated search log into samples");
    ing_c.attach(ing);
    ing->add_option("-i,--input", ing_input, "log file with a header row")->required();
    ing->add_option("--val-from", val_from, "first date of the validation split (YYYY-MM-DD)");
    ing->add_option("--test-from", test_from, "first date of the test split (YYYY-MM-DD)");
    ing->add_option("--min-pages", min_pages, "page k is a target when k > min-pages");
    ing->add_option("--history", history, "history pages T (default model.pages)");
    ing->add_flag("--any-category", any_category, "do not restrict history to the query category");

    Common tr_c;
    auto* tr = app.add_subcommand("train", "train and test one model per seed");
    tr_c.attach(tr);

    Common ev_c;
    std::string ev_ckpt, ev_data;
    std::optional<double> ev_base;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a sample file");
    ev_c.attach(ev);
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data, "JSONL samples")->required();
    ev->add_option("--base-auc", ev_base, "AUC of the base model for RelaImpr");

    Common sw_c;
    std::string sw_axis, sw_values;
    auto* sw = app.add_subcommand("sweep", "train+eval across values of one axis");
    sw_c.attach(sw);
    sw->add_option("--axis", sw_axis, "pages | hidden | steps")->required();
    sw->add_option("--values", sw_values, "comma-separated values")->required();

    Common ab_c;
    std::string ab_arms;
    auto* ab = app.add_subcommand("ablate", "ablation matrix; RelaImpr relative to the first arm");
    ab_c.attach(ab);
    ab->add_option("--arms", ab_arms, "comma-separated arms, e.g. RACP,RACP+no_backtracking,MeanPoolClicks");

    Common da_c;
    std::string da_ckpt, da_data;
    std::size_t da_index = 0;
    auto* da = app.add_subcommand("dump-attention", "per-page and per-item attention of one sample");
    da_c.attach(da);
    da->add_option("--checkpoint", da_ckpt)->required();
    da->add_option("--data", da_data, "JSONL samples")->required();
    da->add_option("--index", da_index, "sample index in the file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const auto cfg = gen_c.experiment();
            const std::uint64_t seed = gen->count("--seed") ? gen_seed : cfg.seeds.front();
            const auto data = make_data(cfg, seed);
            const fs::path out(cfg.out_dir);
            write_samples((out / "train.jsonl").string(), data.train);
            write_samples((out / "val.jsonl").string(), data.val);
            write_samples((out / "test.jsonl").string(), data.test);
            io::write_text(out / "manifest.json", data.manifest.dump(2) + "\n");
            std::cout << "wrote " << data.train.size() << "/" << data.val.size() << "/" << data.test.size()
                      << " samples to " << out.string() << "\n";
        } else if (*ing) {
            const auto cfg = ing_c.experiment();
            ingest::SampleOptions opt;
            opt.max_history = history ? history : cfg.model.pages;
            opt.min_pages = min_pages;
            opt.same_category = !any_category;
            const auto parsed = ingest::parse_tsv_file(ing_input);
            const auto res = ingest::ingest_log(parsed, ingest::Vocab::from(cfg.model), opt, {val_from, test_from});
            const fs::path out(cfg.out_dir);
            write_samples((out / "train.jsonl").string(), res.train);
            write_samples((out / "val.jsonl").string(), res.val);
            write_samples((out / "test.jsonl").string(), res.test);
            io::write_text(out / "manifest.json", res.manifest.dump(2) + "\n");
            for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "rows " << parsed.rows.size() << ", malformed " << parsed.malformed << ", samples "
                      << res.train.size() << "/" << res.val.size() << "/" << res.test.size() << "\n";
        } else if (*tr) {
            const auto cfg = tr_c.experiment();
            for (const auto& r : train_all(cfg)) {
                std::cout << "seed " << r.seed << "  test auc " << format_double(r.test.auc);
                if (r.test.pv_auc) std::cout << "  pv_auc " << format_double(*r.test.pv_auc);
                std::cout << "  best step " << r.training.best_step << "\n";
            }
        } else if (*ev) {
            const auto ck = load_checkpoint(ev_ckpt);
            const auto samples = read_samples(ev_data);
            check_vocab(samples, ck.config, "eval");
            const auto report = evaluate(Model(ck.config, ck.params), samples, ev_base);
            write_report(ev_c.out, report);
            std::cout << report.to_json().dump(2) << "\n";
            if (!report.pv_auc_error.empty()) std::cerr << "warning: pv_auc undefined: " << report.pv_auc_error << "\n";
        } else if (*sw) {
            const auto cfg = sw_c.experiment();
            print_cells(sweep(cfg, parse_axis(sw_axis), parse_values(sw_values)));
        } else if (*ab) {
            const auto cfg = ab_c.experiment();
            std::vector<std::string> arms;
            if (ab_arms.empty()) {
                arms = default_arms();
            } else {
                KeyValues kv;
                kv.set("arms", ab_arms);
                arms = kv.list<std::string>("arms", {});
            }
            print_cells(ablate(cfg, arms));
        } else if (*da) {
            const auto ck = load_checkpoint(da_ckpt);
            const auto samples = read_samples(da_data);
            if (da_index >= samples.size())
                throw ConfigError("--index " + std::to_string(da_index) + " beyond " + std::to_string(samples.size()) +
                                  " samples");
            const auto trace = dump_attention(Model(ck.config, ck.params), samples[da_index]);
            const fs::path out(da_c.out);
            io::write_text(out / "attention.json", trace.json.dump(2) + "\n");
            io::write_text(out / "attention.txt", trace.table);
            std::cout << trace.table;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
