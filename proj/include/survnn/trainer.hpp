#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "survnn/datagen.hpp"
#include "survnn/net.hpp"
#include "survnn/survival.hpp"

namespace survnn {

enum class LossKind { Oracle, FullBatch, MiniBatch, TwoTask, TwoTaskFull };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

// Which subgroup the C2 index conditions on: event records (simulation B) or
// label-1 records (nodule study).
enum class C2Mode { Events, Label1 };

struct ExperimentConfig {
    LossKind loss = LossKind::MiniBatch;
    ModelPreset preset = ModelPreset::Table1;
    int epochs = 50;
    int batch_size = 64;
    double lr = 0.01;
    // Learning-rate multiplier applied for the final quarter of the epochs
    // (lr * lr_decay once three quarters of the budget have elapsed).
    double lr_decay = 0.1;
    std::uint64_t seed = 1;
    C2Mode c2_mode = C2Mode::Events;
    int eval_chunk = 512;    // forward chunk size for evaluation / full-batch
    // Test-set metrics are computed every eval_every epochs (and always on the
    // final epoch); other epochs leave the metric fields empty.
    int eval_every = 1;
    std::string out_dir;     // when nonempty: history.csv, manifest.json, model.ckpt

    void validate() const;
};

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> test_loss, auc, c1, c2;
    double seconds = 0.0;
    int skipped_batches = 0;
};

struct TrainResult {
    std::vector<EpochRow> history;
    std::optional<double> auc, c1, c2;    // final epoch, for convenience
    std::int64_t param_count = 0;
};

// Seeded shuffled partition of 0..n-1 into consecutive batches; the last batch
// may be short. Batches of size 1 are still emitted.
std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng);

// Forward the whole image set through the model in chunks; one score per
// column.
Eigen::VectorXd forward_all(Model<float>& model, const ImageSet& images, int chunk);

// Loss of `kind` evaluated over an entire dataset (risk set = whole set).
double dataset_loss(LossKind kind, const Eigen::VectorXd& f, const SurvivalData& data);

struct EvalResult {
    double loss = 0.0;
    std::optional<double> auc, c1, c2;
};

EvalResult evaluate(Model<float>& model, const Dataset& test, LossKind kind, C2Mode c2_mode,
                    int chunk);

// Full training loop: init from cfg.seed, SGD, per-epoch evaluation on `test`.
// Writes history.csv / manifest.json / model.ckpt into cfg.out_dir when set.
TrainResult run_experiment(const Dataset& train, const Dataset& test, const ExperimentConfig& cfg);

void write_history_csv(const std::string& path, const std::vector<EpochRow>& history);

}  // namespace survnn
