#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "racp/trainer.hpp"
#include "temp_dir.hpp"

using namespace racp;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_experiment() {
    ExperimentConfig c;
    c.world.n_users = 200;
    c.world.n_items = 300;
    c.world.n_brands = 30;
    c.world.n_shops = 30;
    c.world.n_queries = 20;
    c.world.n_segments = 50;
    c.model.embed_dim = 6;
    c.model.hidden = 16;
    c.model.mlp1 = 32;
    c.model.mlp2 = 16;
    c.train_samples = 512;
    c.val_samples = 256;
    c.test_samples = 256;
    c.batch_size = 64;
    c.max_steps = 40;
    c.eval_every = 20;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::set<std::string> tree(const fs::path& root) {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) out.insert(fs::relative(e.path(), root).string());
    return out;
}

}  // namespace

TEST(Learnability, TwoHundredStepsCutTrainingLossByAFifth) {
    for (std::uint64_t seed : {1, 2, 3}) {
        auto cfg = small_experiment();
        cfg.model = ModelConfig{};
        cfg.max_steps = 200;
        cfg.eval_every = 50;
        cfg.patience = 0;
        const auto data = make_data(cfg, seed);
        const auto res = train(cfg, run_model_config(cfg, seed), data);
        ASSERT_EQ(res.log.back().step, 200u);
        EXPECT_LT(res.log.back().train_loss, 0.8 * std::log(2.0)) << "seed " << seed;
    }
}

TEST(Trainer, ZeroStepsScoresAtChance) {
    for (std::uint64_t seed : {1, 2, 3}) {
        auto cfg = small_experiment();
        cfg.world.balance_labels = true;
        cfg.val_samples = 5000;
        cfg.test_samples = 5000;
        cfg.max_steps = 0;
        const auto data = make_data(cfg, seed);
        const auto res = train(cfg, run_model_config(cfg, seed), data);
        ASSERT_EQ(res.log.size(), 1u);
        EXPECT_NEAR(res.log[0].val_auc, 0.5, 0.03) << "seed " << seed;
        const auto report = evaluate(res.model.model(), data.test);
        EXPECT_GE(report.auc, 0.45);
        EXPECT_LE(report.auc, 0.55);
    }
}

TEST(Trainer, SameSeedGivesIdenticalArtifacts) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    const auto data = make_data(cfg, 4);
    run_experiment(cfg, 4, data, tmp.path() / "a");
    run_experiment(cfg, 4, make_data(cfg, 4), tmp.path() / "b");
    const auto files = tree(tmp.path() / "a");
    EXPECT_EQ(files, tree(tmp.path() / "b"));
    for (const auto& f : files) {
        if (f == "timing.csv" || fs::is_directory(tmp.path() / "a" / f)) continue;
        EXPECT_EQ(slurp(tmp.path() / "a" / f), slurp(tmp.path() / "b" / f)) << f;
    }
    EXPECT_FALSE(slurp(tmp.path() / "a" / "train_log.csv").empty());
}

TEST(Trainer, LogRowsFollowEvalSchedule) {
    auto cfg = small_experiment();
    cfg.max_steps = 50;
    cfg.patience = 0;
    const auto res = train(cfg, run_model_config(cfg, 1), make_data(cfg, 1));
    std::vector<std::size_t> steps;
    for (const auto& r : res.log) steps.push_back(r.step);
    EXPECT_EQ(steps, (std::vector<std::size_t>{0, 20, 40, 50}));
    EXPECT_EQ(res.wall_seconds.size(), res.log.size());
    for (std::size_t i = 1; i < res.log.size(); ++i) EXPECT_GT(res.log[i].train_loss, 0.0);
}

TEST(Trainer, PatienceStopsEarly) {
    auto cfg = small_experiment();
    cfg.max_steps = 2000;
    cfg.eval_every = 5;
    cfg.patience = 1;
    cfg.model.learning_rate = 0.05;
    const auto res = train(cfg, run_model_config(cfg, 2), make_data(cfg, 2));
    EXPECT_TRUE(res.early_stopped);
    EXPECT_LT(res.log.back().step, 2000u);
}

TEST(Trainer, NonFiniteLossAbortsWithBatchIndex) {
    auto cfg = small_experiment();
    cfg.model.learning_rate = 1e300;
    cfg.eval_every = 1000;
    try {
        train(cfg, run_model_config(cfg, 1), make_data(cfg, 1));
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("non-finite loss at step"), std::string::npos) << msg;
        EXPECT_NE(msg.find("shuffled index"), std::string::npos) << msg;
    }
}

TEST(Trainer, NanParameterSurfacesAsMetricError) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    const auto mcfg = run_model_config(cfg, 1);
    auto built = build_model(mcfg.variant, mcfg);
    for (auto& [path, var] : built.params)
        if (path == "mlp.b3") var.mutable_value()[0] = std::nan("");
    save_checkpoint((tmp.path() / "nan.bin").string(), mcfg, built.params);
    cfg.init_checkpoint = (tmp.path() / "nan.bin").string();
    EXPECT_THROW(train(cfg, mcfg, make_data(cfg, 1)), MetricError);
}

TEST(Trainer, MismatchedInitCheckpointIsConfigError) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    auto other = run_model_config(cfg, 1);
    other.hidden = 8;
    const auto built = build_model(other.variant, other);
    save_checkpoint((tmp.path() / "k8.bin").string(), other, built.params);
    cfg.init_checkpoint = (tmp.path() / "k8.bin").string();
    EXPECT_THROW(train(cfg, run_model_config(cfg, 1), make_data(cfg, 1)), ConfigError);
}

TEST(Trainer, OutOfVocabularyDataIsConfigError) {
    auto cfg = small_experiment();
    auto data = make_data(cfg, 1);
    auto mcfg = run_model_config(cfg, 1);
    mcfg.n_items = 10;
    EXPECT_THROW(train(cfg, mcfg, data), ConfigError);
}

TEST(Trainer, EvaluateTwiceGivesIdenticalReport) {
    auto cfg = small_experiment();
    const auto data = make_data(cfg, 3);
    const auto res = train(cfg, run_model_config(cfg, 3), data);
    const auto model = res.model.model();
    const auto a = evaluate(model, data.test, 0.55).to_json().dump();
    const auto b = evaluate(model, data.test, 0.55).to_json().dump();
    EXPECT_EQ(a, b);
}

TEST(Trainer, CheckpointRoundTripEvaluatesIdentically) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    const auto data = make_data(cfg, 5);
    const auto run = run_experiment(cfg, 5, data, tmp.path());
    const auto ck = load_checkpoint((tmp.path() / "checkpoint.bin").string());
    const auto reloaded = evaluate(Model(ck.config, ck.params), data.test);
    EXPECT_EQ(reloaded.to_json().dump(), run.test.to_json().dump());
}

TEST(Trainer, WritesOnlyUnderOutputDirectory) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    cfg.seeds = {1, 2};
    cfg.out_dir = (tmp.path() / "out").string();
    train_all(cfg);
    std::set<std::string> top;
    for (const auto& e : fs::directory_iterator(tmp.path())) top.insert(e.path().filename().string());
    EXPECT_EQ(top, (std::set<std::string>{"out"}));
    const auto files = tree(tmp.path() / "out");
    for (const char* f : {"summary.json", "seed_1/checkpoint.bin", "seed_1/train_log.csv", "seed_1/metrics.json",
                          "seed_2/page_auc.csv", "seed_2/config.txt", "seed_2/data_manifest.json"})
        EXPECT_TRUE(files.contains(f)) << f;
}

TEST(Sweep, SingleValueGivesSingleRow) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    cfg.out_dir = tmp.path().string();
    const auto cells = sweep(cfg, SweepAxis::PageLength, {3});
    ASSERT_EQ(cells.size(), 1u);
    const auto csv = slurp(tmp.path() / "sweep_pages.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "pages,mean_auc,mean_pv_auc,auc_seed_1");
}

TEST(Sweep, HiddenSizesBothReportFiniteAuc) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    cfg.out_dir = tmp.path().string();
    cfg.max_steps = 10;
    const auto cells = sweep(cfg, SweepAxis::HiddenSize, {32, 128});
    ASSERT_EQ(cells.size(), 2u);
    for (const auto& c : cells) EXPECT_TRUE(std::isfinite(c.mean_auc())) << c.label;
    EXPECT_TRUE(fs::exists(tmp.path() / "hidden_128" / "seed_1" / "checkpoint.bin"));
}

TEST(Sweep, StepsAxisOverridesEpochs) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    cfg.out_dir = tmp.path().string();
    cfg.epochs = 3;
    sweep(cfg, SweepAxis::TrainingSteps, {0});
    EXPECT_EQ(slurp(tmp.path() / "steps_0" / "seed_1" / "train_log.csv").find("\n20,"), std::string::npos);
    EXPECT_THROW(parse_axis("depth"), ConfigError);
    EXPECT_THROW(sweep(cfg, SweepAxis::PageLength, {}), ConfigError);
}

TEST(Ablate, ArmsParseAndRelaImprIsRelativeToFirst) {
    test::TempDir tmp;
    auto cfg = small_experiment();
    cfg.out_dir = tmp.path().string();
    cfg.max_steps = 10;
    const auto cells = ablate(cfg, {"MeanPoolClicks", "RACP+no_backtracking"});
    ASSERT_EQ(cells.size(), 2u);
    const auto csv = slurp(tmp.path() / "ablation.csv");
    EXPECT_NE(csv.find("MeanPoolClicks," + format_double(cells[0].mean_auc()) + ","), std::string::npos);
    EXPECT_NE(csv.find("," + format_double(rela_impr(cells[1].mean_auc(), cells[0].mean_auc())) + ","),
              std::string::npos);
    EXPECT_THROW(ablate(cfg, {"MeanPoolClicks+no_backtracking"}), ConfigError);
    EXPECT_THROW(ablate(cfg, {"RACP+no_such_flag"}), ConfigError);
}

TEST(DumpAttention, WeightsNormalizePerPageAndAcrossPages) {
    auto cfg = small_experiment();
    const auto data = make_data(cfg, 1);
    const auto res = train(cfg, run_model_config(cfg, 1), data);
    const auto model = res.model.model();
    std::size_t checked = 0;
    for (const auto& s : data.test) {
        if (s.history.size() < 2) continue;
        const auto tr = dump_attention(model, s);
        double beta = 0.0;
        for (const auto& p : tr.json["pages"]) {
            beta += p["beta"].get<double>();
            double w = 0.0;
            for (const auto& it : p["items"]) w += it["weight"].get<double>();
            EXPECT_NEAR(w, 1.0, 1e-12);
        }
        EXPECT_NEAR(beta, 1.0, 1e-12);
        EXPECT_FALSE(tr.table.empty());
        if (++checked == 20) break;
    }
    EXPECT_EQ(checked, 20u);
}

TEST(DumpAttention, SinglePageSingleItemIsAllOnes) {
    auto cfg = small_experiment();
    const auto mcfg = run_model_config(cfg, 1);
    const auto built = build_model(mcfg.variant, mcfg);
    auto s = make_data(cfg, 1).test.front();
    s.history.resize(1);
    s.history[0].items.resize(1);
    const auto tr = dump_attention(built.model(), s);
    ASSERT_EQ(tr.json["pages"].size(), 1u);
    EXPECT_EQ(tr.json["pages"][0]["beta"].get<double>(), 1.0);
    ASSERT_EQ(tr.json["pages"][0]["items"].size(), 1u);
    EXPECT_EQ(tr.json["pages"][0]["items"][0]["weight"].get<double>(), 1.0);
}

TEST(DumpAttention, RejectsVariantsWithoutAttention) {
    auto cfg = small_experiment();
    auto mcfg = run_model_config(cfg, 1);
    mcfg.variant = ModelVariant::MeanPoolClicks;
    const auto built = build_model(mcfg.variant, mcfg);
    EXPECT_THROW(dump_attention(built.model(), make_data(cfg, 1).test.front()), ConfigError);
}

TEST(ExperimentConfig, UnknownKeyAndBadValuesRejected) {
    KeyValues kv;
    kv.set("train.batch_sise", "3");
    EXPECT_THROW(ExperimentConfig::from_kv(kv), ConfigError);
    KeyValues zero;
    zero.set("train.batch_size", "0");
    EXPECT_THROW(ExperimentConfig::from_kv(zero), ConfigError);
    KeyValues noseed;
    noseed.set("train.seeds", "");
    EXPECT_THROW(ExperimentConfig::from_kv(noseed), ConfigError);
    KeyValues src;
    src.set("data.source", "files");
    EXPECT_THROW(ExperimentConfig::from_kv(src), ConfigError);
}

TEST(ExperimentConfig, DefaultsAndRoundTrip) {
    const ExperimentConfig d;
    EXPECT_EQ(d.batch_size, 2048u);
    EXPECT_EQ(d.model.learning_rate, 1e-3);
    EXPECT_EQ(d.model.embed_dim, 10u);
    auto cfg = small_experiment();
    cfg.seeds = {3, 9};
    const auto back = ExperimentConfig::from_kv(cfg.to_kv());
    EXPECT_EQ(back.to_kv().serialize(), cfg.to_kv().serialize());
}
