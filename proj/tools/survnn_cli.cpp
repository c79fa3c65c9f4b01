// survnn: survival CNN experiments from the command line.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric abort,
// 5 check or reproduction target missed.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "survnn/datagen.hpp"
#include "survnn/gradcheck.hpp"
#include "survnn/metrics.hpp"
#include "survnn/net.hpp"
#include "survnn/trainer.hpp"

namespace {

using namespace survnn;

ImageSet base_images_for(const std::string& study, int n, std::uint64_t seed,
                         const std::string& idx_images, const std::string& idx_labels,
                         const std::string& cifar) {
    if (study == "c") {
        if (!cifar.empty()) {
            ImageSet all = load_cifar_binary(cifar);
            if (all.count() < n)
                throw ConfigError("cifar batch has " + std::to_string(all.count()) +
                                  " images, need " + std::to_string(n));
            ImageSet out = all;
            out.pixels = all.pixels.leftCols(n);
            out.labels = Eigen::VectorXi();
            return out;
        }
        return synth_base_images(SynthKind::Noise32, n, seed);
    }
    if (!idx_images.empty()) {
        if (idx_labels.empty()) throw ConfigError("--labels is required with --images");
        ImageSet all = load_idx_images(idx_images);
        Eigen::VectorXi labels = load_idx_labels(idx_labels);
        if (labels.size() != all.count())
            throw IoError("image/label record counts differ");
        // Class 0 = digits 0-4, class 1 = digits 5-9 (low/high risk halves).
        std::vector<int> keep;
        for (int i = 0; i < all.count() && static_cast<int>(keep.size()) < n; ++i)
            keep.push_back(i);
        if (static_cast<int>(keep.size()) < n)
            throw ConfigError("idx file has too few images for n=" + std::to_string(n));
        ImageSet out;
        out.h = all.h;
        out.w = all.w;
        out.c = all.c;
        out.pixels.resize(all.pixels.rows(), n);
        out.labels.resize(n);
        for (int k = 0; k < n; ++k) {
            out.pixels.col(k) = all.pixels.col(keep[static_cast<std::size_t>(k)]);
            out.labels(k) = labels(keep[static_cast<std::size_t>(k)]) >= 5 ? 1 : 0;
        }
        return out;
    }
    return synth_base_images(SynthKind::TwoClassShapes, n, seed);
}

struct StudySpec {
    std::string study;          // "a", "b", "c"
    int n_train = 0, n_test = 0;
    int epochs = 0;
    int batch_size = 64;
    double lr = 0.0;
    ModelPreset preset = ModelPreset::Table1;
    C2Mode c2 = C2Mode::Events;
};

StudySpec study_spec(const std::string& study, double scale) {
    if (!(scale > 0.0) || scale > 4.0) throw ConfigError("--scale must be in (0, 4]");
    StudySpec s;
    s.study = study;
    auto scaled = [&](int base, int floor_v) {
        return std::max(floor_v, static_cast<int>(std::lround(base * scale)));
    };
    if (study == "a" || study == "b") {
        s.n_train = scaled(2000, 200);
        s.n_test = scaled(1000, 100);
        s.epochs = scaled(50, 6);
        s.lr = 0.05;
        s.preset = ModelPreset::Table1;
        s.c2 = C2Mode::Events;
    } else if (study == "c") {
        s.n_train = scaled(10000, 250);
        s.n_test = scaled(1000, 125);
        s.epochs = scaled(30, 5);
        // Nodule hazards are steeper than the digit studies'; rates above
        // 0.01 collapse the shared logit within a few epochs at n=10000.
        s.lr = 0.01;
        // Shrink the batch with the run so steps-per-epoch stay constant and
        // a scaled-down run follows the full run's optimization trajectory.
        s.batch_size = std::max(8, static_cast<int>(std::lround(64 * scale)));
        s.preset = ModelPreset::SimC;
        s.c2 = C2Mode::Label1;
    } else {
        throw ConfigError("unknown study: " + study + " (expected a, b, or c)");
    }
    return s;
}

Dataset make_study_dataset(const StudySpec& s, int n, std::uint64_t seed,
                           const std::string& idx_images, const std::string& idx_labels,
                           const std::string& cifar) {
    GenConfig cfg;
    cfg.seed = seed;
    if (s.study == "a") cfg.censor_mode = CensorMode::None;
    if (s.study == "b") cfg.censor_mode = CensorMode::MedianHalf;
    const ImageSet base = base_images_for(s.study, n, seed * 2 + 1, idx_images, idx_labels, cifar);
    if (s.study == "c") {
        cfg.censor_mode = CensorMode::Nodule;
        return gen_nodule_cifar(base, cfg, seed);
    }
    return gen_sim_ab(base, cfg, seed);
}

void print_history_tail(const TrainResult& r) {
    if (r.history.empty()) return;
    const EpochRow& last = r.history.back();
    std::printf("final epoch=%d train_loss=%.6f", last.epoch, last.train_loss);
    if (last.test_loss) std::printf(" test_loss=%.6f", *last.test_loss);
    if (last.auc) std::printf(" auc=%.4f", *last.auc);
    if (last.c1) std::printf(" c1=%.4f", *last.c1);
    if (last.c2) std::printf(" c2=%.4f", *last.c2);
    std::printf("\n");
}

int cmd_gen_data(const std::string& study, int n, std::uint64_t seed, const std::string& out,
                 const std::string& idx_images, const std::string& idx_labels,
                 const std::string& cifar) {
    const StudySpec s = study_spec(study, 1.0);
    GenConfig cfg;
    cfg.seed = seed;
    if (study == "b") cfg.censor_mode = CensorMode::MedianHalf;
    if (study == "c") cfg.censor_mode = CensorMode::Nodule;
    const Dataset ds = make_study_dataset(s, n, seed, idx_images, idx_labels, cifar);
    save_dataset(out, ds, cfg);
    std::printf("wrote %d records to %s\n", static_cast<int>(ds.surv.size()), out.c_str());
    return 0;
}

int cmd_train(const std::string& train_dir, const std::string& test_dir, ExperimentConfig cfg) {
    const Dataset train = load_dataset(train_dir);
    const Dataset test = load_dataset(test_dir);
    const TrainResult r = run_experiment(train, test, cfg);
    print_history_tail(r);
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir, LossKind loss,
             ModelPreset preset, C2Mode c2) {
    const Dataset data = load_dataset(data_dir);
    Model<float> model = build_model<float>(preset);
    load_checkpoint(model_path, model);
    const EvalResult ev = evaluate(model, data, loss, c2, 512);
    std::printf("loss=%.6f", ev.loss);
    if (ev.auc) std::printf(" auc=%.4f", *ev.auc);
    if (ev.c1) std::printf(" c1=%.4f", *ev.c1);
    if (ev.c2) std::printf(" c2=%.4f", *ev.c2);
    std::printf("\n");
    return 0;
}

int cmd_grad_check(std::uint64_t seed, int trials, double tol) {
    const GradCheckReport report = run_grad_checks(seed, trials, tol);
    for (const auto& item : report.items)
        std::printf("%-22s trials=%-3d max_rel_err=%.3e %s\n", item.name.c_str(), item.trials,
                    item.max_rel_err, item.pass ? "ok" : "FAIL");
    return report.all_pass ? 0 : 5;
}

struct PaperTargets {
    const char* name;
    double paper;
    std::optional<double> ours;
};

int cmd_reproduce(const std::string& study, std::uint64_t seed, double scale,
                  const std::string& out, const std::string& idx_images,
                  const std::string& idx_labels, const std::string& cifar) {
    const StudySpec s = study_spec(study, scale);
    const Dataset train = make_study_dataset(s, s.n_train, seed, idx_images, idx_labels, cifar);
    const Dataset test =
        make_study_dataset(s, s.n_test, seed + 1000003, idx_images, idx_labels, cifar);

    std::vector<LossKind> losses;
    if (study == "c")
        losses = {LossKind::TwoTask, LossKind::TwoTaskFull};
    else
        losses = {LossKind::MiniBatch, LossKind::FullBatch, LossKind::Oracle};

    // Reference C-indexes / AUC from the published simulation tables.
    auto reference = [&](LossKind loss) -> std::vector<PaperTargets> {
        if (study == "a") {
            const double c = loss == LossKind::Oracle     ? 0.7268
                             : loss == LossKind::FullBatch ? 0.7165
                                                           : 0.7189;
            return {{"C (all records)", c, std::nullopt}};
        }
        if (study == "b") {
            const double c1 = loss == LossKind::Oracle     ? 0.7184
                              : loss == LossKind::FullBatch ? 0.7146
                                                            : 0.7166;
            const double c2 = loss == LossKind::Oracle     ? 0.6845
                              : loss == LossKind::FullBatch ? 0.6770
                                                            : 0.6790;
            return {{"C1 (all records)", c1, std::nullopt}, {"C2 (event cases)", c2, std::nullopt}};
        }
        const bool mini = loss == LossKind::TwoTask;
        return {{"AUC (cancer)", mini ? 0.783 : 0.770, std::nullopt},
                {"C1 (all records)", mini ? 0.677 : 0.661, std::nullopt},
                {"C2 (cancer cases)", mini ? 0.785 : 0.779, std::nullopt}};
    };

    struct TableBlock {
        std::string loss;
        std::vector<PaperTargets> rows;
    };
    std::vector<TableBlock> table;
    for (LossKind loss : losses) {
        ExperimentConfig cfg;
        cfg.loss = loss;
        cfg.preset = s.preset;
        cfg.epochs = s.epochs;
        cfg.batch_size = s.batch_size;
        // Per-loss step sizes: one full-batch step per epoch wants a larger
        // rate; the oracle loss's exp(f) term runs away under the mini-batch
        // rate in float.
        cfg.lr = s.lr;
        // The two-task full-batch variant is excluded: its loss surface turns
        // unstable above the base rate (shared logit dies), so both two-task
        // variants share the base rate.
        if (loss == LossKind::FullBatch) cfg.lr = s.lr * 4;
        if (loss == LossKind::Oracle) cfg.lr = s.lr * 0.2;
        // A smaller step keeps the per-batch objective from overfitting past the
        // full-batch plateau over the fixed epoch budget.
        if (loss == LossKind::MiniBatch) cfg.lr = s.lr * 0.04;
        cfg.seed = seed;
        cfg.c2_mode = s.c2;
        // Study C's convergence-speed comparison needs per-epoch AUC; the
        // digit studies only use final-epoch metrics, so evaluate sparsely.
        cfg.eval_every = study == "c" ? 1 : 5;
        cfg.out_dir = out + "/" + to_string(loss);
        std::fprintf(stderr, "[reproduce %s] training %s loss, %d epochs, n=%d\n", study.c_str(),
                     to_string(loss).c_str(), cfg.epochs, s.n_train);
        const TrainResult r = run_experiment(train, test, cfg);
        print_history_tail(r);
        TableBlock block{to_string(loss), reference(loss)};
        for (auto& row : block.rows) {
            if (std::string(row.name).find("AUC") != std::string::npos) row.ours = r.auc;
            else if (std::string(row.name).find("C2") != std::string::npos) row.ours = r.c2;
            else row.ours = r.c1;
        }
        table.push_back(std::move(block));
    }

    std::printf("study %s (seed %llu, scale %.2f)\n", study.c_str(),
                static_cast<unsigned long long>(seed), scale);
    std::printf("%-14s %-20s %10s %10s\n", "loss", "metric", "reference", "ours");
    for (const auto& block : table)
        for (const auto& row : block.rows)
            if (row.ours)
                std::printf("%-14s %-20s %10.4f %10.4f\n", block.loss.c_str(), row.name, row.paper,
                            *row.ours);
            else
                std::printf("%-14s %-20s %10.4f %10s\n", block.loss.c_str(), row.name, row.paper,
                            "n/a");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"survnn: CNN survival models with Cox-derived losses"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file; flags override");

    std::string study = "a", out_dir = "out", train_dir, test_dir, model_path, data_dir;
    std::string idx_images, idx_labels, cifar;
    std::string loss_name = "mini-batch", preset_name = "table1", c2_name = "events";
    int n = 1000, trials = 50;
    std::uint64_t seed = 1;
    double scale = 1.0, tol = 1e-4;
    ExperimentConfig tcfg;

    auto* gen = app.add_subcommand("gen-data", "generate a simulated dataset directory");
    gen->add_option("--study", study, "a, b, or c")->required();
    gen->add_option("--n", n, "number of records");
    gen->add_option("--seed", seed, "rng seed");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--images", idx_images, "IDX image file (digit studies)");
    gen->add_option("--labels", idx_labels, "IDX label file (digit studies)");
    gen->add_option("--cifar", cifar, "CIFAR-10 binary batch (study c)");

    auto* train = app.add_subcommand("train", "train one model on a dataset directory");
    train->add_option("--train", train_dir, "training dataset directory")->required();
    train->add_option("--test", test_dir, "test dataset directory")->required();
    train->add_option("--loss", loss_name, "oracle, full-batch, mini-batch, two-task");
    train->add_option("--preset", preset_name, "table1, simc, integrate-head");
    train->add_option("--epochs", tcfg.epochs, "training epochs");
    train->add_option("--batch-size", tcfg.batch_size, "minibatch size");
    train->add_option("--lr", tcfg.lr, "learning rate");
    train->add_option("--lr-decay", tcfg.lr_decay,
                      "lr multiplier for the final quarter of the epochs");
    train->add_option("--eval-every", tcfg.eval_every,
                      "epochs between test-set evaluations");
    train->add_option("--seed", seed, "rng seed");
    train->add_option("--c2", c2_name, "events or label1");
    train->add_option("--out", out_dir, "run output directory");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
    eval->add_option("--model", model_path, "checkpoint path")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--loss", loss_name, "loss used for the reported loss value");
    eval->add_option("--preset", preset_name, "model preset");
    eval->add_option("--c2", c2_name, "events or label1");

    auto* gc = app.add_subcommand("grad-check", "finite-difference audit of layers and losses");
    gc->add_option("--seed", seed, "rng seed");
    gc->add_option("--trials", trials, "random trials per item");
    gc->add_option("--tol", tol, "max relative error tolerance");

    auto* rep = app.add_subcommand("reproduce", "run one simulation study end to end");
    rep->add_option("--study", study, "a, b, or c")->required();
    rep->add_option("--seed", seed, "rng seed");
    rep->add_option("--scale", scale, "dataset/epoch scale factor");
    rep->add_option("--out", out_dir, "output directory for run artifacts");
    rep->add_option("--images", idx_images, "IDX image file (digit studies)");
    rep->add_option("--labels", idx_labels, "IDX label file (digit studies)");
    rep->add_option("--cifar", cifar, "CIFAR-10 binary batch (study c)");

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return cmd_gen_data(study, n, seed, out_dir, idx_images, idx_labels, cifar);
        if (train->parsed()) {
            tcfg.loss = loss_kind_from_string(loss_name);
            tcfg.preset = preset_from_string(preset_name);
            tcfg.seed = seed;
            tcfg.c2_mode = c2_name == "label1" ? C2Mode::Label1 : C2Mode::Events;
            tcfg.out_dir = out_dir;
            return cmd_train(train_dir, test_dir, tcfg);
        }
        if (eval->parsed())
            return cmd_eval(model_path, data_dir, loss_kind_from_string(loss_name),
                            preset_from_string(preset_name),
                            c2_name == "label1" ? C2Mode::Label1 : C2Mode::Events);
        if (gc->parsed()) return cmd_grad_check(seed, trials, tol);
        if (rep->parsed())
            return cmd_reproduce(study, seed, scale, out_dir, idx_images, idx_labels, cifar);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const survnn::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const survnn::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const survnn::NumericAbort& e) {
        std::fprintf(stderr, "numeric abort: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
