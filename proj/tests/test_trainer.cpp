#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "survnn/datagen.hpp"
#include "survnn/trainer.hpp"

using namespace survnn;
namespace fs = std::filesystem;

namespace {

Dataset small_sim_a(int n, std::uint64_t seed, CensorMode mode = CensorMode::None) {
    GenConfig cfg;
    cfg.censor_mode = mode;
    return gen_sim_ab(synth_base_images(SynthKind::TwoClassShapes, n, seed * 7 + 1), cfg, seed);
}

}  // namespace

TEST_CASE("loss kind names round trip") {
    for (LossKind k : {LossKind::Oracle, LossKind::FullBatch, LossKind::MiniBatch,
                       LossKind::TwoTask, LossKind::TwoTaskFull})
        CHECK(loss_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(loss_kind_from_string("adam"), ConfigError);
}

TEST_CASE("make_batches is a seeded partition") {
    Rng rng(4);
    const auto batches = make_batches(103, 10, rng);
    REQUIRE(batches.size() == 11);
    std::set<int> seen;
    for (const auto& b : batches)
        for (int i : b) CHECK(seen.insert(i).second);    // no duplicates
    CHECK(seen.size() == 103);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 102);
    for (std::size_t k = 0; k + 1 < batches.size(); ++k) CHECK(batches[k].size() == 10);
    CHECK(batches.back().size() == 3);

    Rng r1(9), r2(9), r3(10);
    CHECK(make_batches(50, 8, r1) == make_batches(50, 8, r2));
    CHECK(make_batches(50, 8, r1) != make_batches(50, 8, r3));
    CHECK_THROWS_AS(make_batches(0, 8, r1), ConfigError);
}

TEST_CASE("dataset_loss dispatches to the matching functional") {
    const Dataset d = small_sim_a(40, 3);
    const Eigen::VectorXd f = Eigen::VectorXd::LinSpaced(40, -1.0, 1.0);
    CHECK(dataset_loss(LossKind::Oracle, f, d.surv) == oracle_loss(f, d.surv));
    CHECK(dataset_loss(LossKind::FullBatch, f, d.surv) == cox_full_loss(f, d.surv));
    CHECK(dataset_loss(LossKind::MiniBatch, f, d.surv) == cox_full_loss(f, d.surv));
    CHECK(dataset_loss(LossKind::TwoTask, f, d.surv) == two_task_loss(f, d.surv));
    CHECK(dataset_loss(LossKind::TwoTaskFull, f, d.surv) == two_task_loss(f, d.surv));
}

TEST_CASE("zero-event batches are skipped and counted under the cox loss") {
    Dataset d = small_sim_a(30, 5);
    d.surv.event.setZero();    // fully censored training set
    Dataset test = small_sim_a(20, 6);
    ExperimentConfig cfg;
    cfg.loss = LossKind::MiniBatch;
    cfg.epochs = 1;
    cfg.batch_size = 10;
    cfg.lr = 0.01;
    const TrainResult r = run_experiment(d, test, cfg);
    REQUIRE(r.history.size() == 1);
    CHECK(r.history[0].skipped_batches == 3);
    CHECK(r.history[0].train_loss == 0.0);
}

TEST_CASE("experiment config is validated") {
    const Dataset train = small_sim_a(20, 1);
    const Dataset test = small_sim_a(10, 2);
    ExperimentConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(run_experiment(train, test, cfg), ConfigError);
    cfg.epochs = 1;
    cfg.lr = -1.0;
    CHECK_THROWS_AS(run_experiment(train, test, cfg), ConfigError);
    cfg.lr = 0.01;
    Dataset unlabeled = train;
    unlabeled.surv.label.resize(0);
    cfg.loss = LossKind::TwoTask;
    CHECK_THROWS_AS(run_experiment(unlabeled, test, cfg), ConfigError);
    cfg.loss = LossKind::MiniBatch;
    cfg.preset = ModelPreset::SimC;    // 3072 inputs vs 784 pixels
    CHECK_THROWS_AS(run_experiment(train, test, cfg), ConfigError);
}

TEST_CASE("training reduces the loss, is deterministic, and writes artifacts") {
    const Dataset train = small_sim_a(120, 11);
    const Dataset test = small_sim_a(60, 12);
    const fs::path dir = fs::temp_directory_path() / "survnn_trainer_run";
    fs::remove_all(dir);

    ExperimentConfig cfg;
    cfg.loss = LossKind::MiniBatch;
    cfg.epochs = 4;
    cfg.batch_size = 30;
    cfg.lr = 0.02;
    cfg.seed = 2;
    cfg.out_dir = dir.string();

    const TrainResult a = run_experiment(train, test, cfg);
    REQUIRE(a.history.size() == 4);
    CHECK(a.history.back().train_loss < a.history.front().train_loss);
    CHECK(a.param_count == 3395713);
    REQUIRE(a.c1.has_value());
    CHECK(*a.c1 >= 0.0);
    CHECK(*a.c1 <= 1.0);

    cfg.out_dir.clear();
    const TrainResult b = run_experiment(train, test, cfg);
    for (std::size_t e = 0; e < 4; ++e) {
        CHECK(a.history[e].train_loss == b.history[e].train_loss);
        CHECK(a.history[e].test_loss == b.history[e].test_loss);
        CHECK(a.history[e].c1 == b.history[e].c1);
    }

    CHECK(fs::exists(dir / "history.csv"));
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "model.ckpt"));

    std::ifstream csv(dir / "history.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "epoch,train_loss,test_loss,auc,c1,c2,seconds,skipped_batches");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 7);
    }
    CHECK(rows == 4);

    // The saved checkpoint reproduces the final evaluation.
    Model<float> reload = build_model<float>(ModelPreset::Table1);
    load_checkpoint((dir / "model.ckpt").string(), reload);
    const EvalResult ev = evaluate(reload, test, cfg.loss, cfg.c2_mode, 256);
    CHECK(ev.loss == doctest::Approx(*a.history.back().test_loss).epsilon(1e-6));
}

TEST_CASE("evaluate reports the tie convention for a constant predictor") {
    const Dataset test = small_sim_a(40, 20);
    Model<float> model = build_model<float>(ModelPreset::Table1);    // zero weights
    const EvalResult ev = evaluate(model, test, LossKind::MiniBatch, C2Mode::Events, 64);
    REQUIRE(ev.c1.has_value());
    CHECK(*ev.c1 == 0.5);
    REQUIRE(ev.auc.has_value());    // sim A/B datasets carry class labels
    CHECK(*ev.auc == 0.5);
}

TEST_CASE("two-task training works end to end on nodule data") {
    GenConfig cfg;
    cfg.censor_mode = CensorMode::Nodule;
    const Dataset train = gen_nodule_cifar(synth_base_images(SynthKind::Noise32, 80, 1), cfg, 2);
    const Dataset test = gen_nodule_cifar(synth_base_images(SynthKind::Noise32, 40, 3), cfg, 4);
    ExperimentConfig ec;
    ec.loss = LossKind::TwoTask;
    ec.preset = ModelPreset::SimC;
    ec.c2_mode = C2Mode::Label1;
    ec.epochs = 2;
    ec.batch_size = 20;
    ec.lr = 0.01;
    const TrainResult r = run_experiment(train, test, ec);
    REQUIRE(r.history.size() == 2);
    CHECK(r.auc.has_value());
    CHECK(r.c1.has_value());
    CHECK(r.history.back().skipped_batches == 0);    // two-task never skips
}
