#include "survnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "survnn/metrics.hpp"

namespace survnn {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::Oracle: return "oracle";
        case LossKind::FullBatch: return "full-batch";
        case LossKind::MiniBatch: return "mini-batch";
        case LossKind::TwoTask: return "two-task";
        case LossKind::TwoTaskFull: return "two-task-full";
    }
    return "mini-batch";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "oracle") return LossKind::Oracle;
    if (s == "full-batch") return LossKind::FullBatch;
    if (s == "mini-batch") return LossKind::MiniBatch;
    if (s == "two-task") return LossKind::TwoTask;
    if (s == "two-task-full") return LossKind::TwoTaskFull;
    throw ConfigError("unknown loss kind: " + s);
}

void ExperimentConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0)
        throw ConfigError("lr decay must be in (0, 1]");
    if (eval_chunk <= 0) throw ConfigError("eval chunk must be positive");
    if (eval_every <= 0) throw ConfigError("eval cadence must be positive");
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
    if (n <= 0) throw ConfigError("cannot batch an empty dataset");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(0, i)]);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        batches.emplace_back(idx.begin() + start, idx.begin() + end);
    }
    return batches;
}

Eigen::VectorXd forward_all(Model<float>& model, const ImageSet& images, int chunk) {
    const int n = images.count();
    // Past ~128 columns the conv im2col buffers fall out of cache and larger
    // chunks get slower, so cap the pass size.
    chunk = std::min(chunk, 128);
    Eigen::VectorXd f(n);
    for (int start = 0; start < n; start += chunk) {
        const int m = std::min(chunk, n - start);
        f.segment(start, m) = model.forward(images.pixels.middleCols(start, m));
    }
    return f;
}

double dataset_loss(LossKind kind, const Eigen::VectorXd& f, const SurvivalData& data) {
    switch (kind) {
        case LossKind::Oracle: return oracle_loss(f, data);
        case LossKind::FullBatch:
        case LossKind::MiniBatch: return cox_full_loss(f, data);
        case LossKind::TwoTask:
        case LossKind::TwoTaskFull: return two_task_loss(f, data);
    }
    throw ConfigError("unknown loss kind");
}

EvalResult evaluate(Model<float>& model, const Dataset& test, LossKind kind, C2Mode c2_mode,
                    int chunk) {
    const Eigen::VectorXd f = forward_all(model, test.images, chunk);
    EvalResult out;
    out.loss = dataset_loss(kind, f, test.surv);
    out.c1 = c_index(f, test.surv).value();
    Eigen::VectorXi mask;
    if (c2_mode == C2Mode::Label1) {
        if (test.surv.label.size() != test.surv.size())
            throw ConfigError("c2 over label-1 records requires labels");
        mask = test.surv.label;
    } else {
        mask = test.surv.event;
    }
    out.c2 = c_index_subset(f, test.surv, mask).value();
    if (test.surv.label.size() == test.surv.size())
        out.auc = auc(f, test.surv.label).value();
    return out;
}

namespace {

// One SGD step on the whole training set: forward pass for scores, analytic
// dL/df, then a second chunked forward+backward to accumulate parameter
// gradients without holding every activation at once.
double full_batch_step(Model<float>& model, const Dataset& train, LossKind kind, double lr,
                       int chunk) {
    const int n = train.images.count();
    const Eigen::VectorXd f = forward_all(model, train.images, chunk);
    double loss;
    Eigen::VectorXd g;
    if (kind == LossKind::TwoTaskFull) {
        loss = two_task_loss(f, train.surv);
        g = two_task_loss_grad(f, train.surv);
    } else {
        loss = cox_full_loss(f, train.surv);
        g = cox_loss_grad(f, train.surv);
    }
    model.zero_grads();
    // Small chunks keep the conv im2col buffers cache-resident, which beats
    // both one huge pass and large chunks despite the repeated forward.
    const int gchunk = std::min(chunk, 128);
    for (int start = 0; start < n; start += gchunk) {
        const int m = std::min(gchunk, n - start);
        model.forward(train.images.pixels.middleCols(start, m));
        model.backward(g.segment(start, m));
    }
    model.sgd_step(lr);
    return loss;
}

}  // namespace

TrainResult run_experiment(const Dataset& train, const Dataset& test, const ExperimentConfig& cfg) {
    cfg.validate();
    train.surv.validate();
    test.surv.validate();
    if (train.images.count() != train.surv.size() || test.images.count() != test.surv.size())
        throw ConfigError("image count does not match survival records");
    if ((cfg.loss == LossKind::TwoTask || cfg.loss == LossKind::TwoTaskFull) &&
        train.surv.label.size() != train.surv.size())
        throw ConfigError("two-task loss requires labels in the training set");

    Model<float> model = build_model<float>(cfg.preset);
    if (model.input.size() != train.images.dim())
        throw ConfigError("preset " + to_string(cfg.preset) + " expects " + model.input.str() +
                          " input, dataset has " + std::to_string(train.images.dim()) +
                          " features");
    model.init(cfg.seed);
    Rng batch_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainResult result;
    result.param_count = model.param_count();
    const int n = train.images.count();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRow row;
        row.epoch = epoch;
        const double lr =
            epoch > (3 * cfg.epochs) / 4 ? cfg.lr * cfg.lr_decay : cfg.lr;

        if (cfg.loss == LossKind::FullBatch || cfg.loss == LossKind::TwoTaskFull) {
            row.train_loss = full_batch_step(model, train, cfg.loss, lr, cfg.eval_chunk);
        } else {
            double acc = 0.0;
            int batch_index = -1;
            for (const auto& batch : make_batches(n, cfg.batch_size, batch_rng)) {
                ++batch_index;
                const SurvivalData bsurv = train.surv.subset(batch);
                if (cfg.loss == LossKind::MiniBatch && bsurv.event.sum() == 0) {
                    // No events: the loss is identically zero on this batch.
                    ++row.skipped_batches;
                    continue;
                }
                Mat<float> x(train.images.dim(), static_cast<Eigen::Index>(batch.size()));
                for (std::size_t k = 0; k < batch.size(); ++k)
                    x.col(static_cast<Eigen::Index>(k)) = train.images.pixels.col(batch[k]);
                Eigen::VectorXd f, g;
                try {
                    f = model.forward(x);
                    switch (cfg.loss) {
                        case LossKind::Oracle:
                            acc += oracle_loss(f, bsurv) * static_cast<double>(batch.size());
                            g = oracle_loss_grad(f, bsurv);
                            break;
                        case LossKind::TwoTask:
                            acc += two_task_loss(f, bsurv) * static_cast<double>(batch.size());
                            g = two_task_loss_grad(f, bsurv);
                            break;
                        default:
                            acc += cox_minibatch_loss(f, bsurv) * static_cast<double>(batch.size());
                            g = cox_loss_grad(f, bsurv);
                            break;
                    }
                    model.zero_grads();
                    model.backward(g);
                } catch (const NumericAbort& e) {
                    throw NumericAbort(std::string(e.what()) + " (epoch " +
                                       std::to_string(epoch) + ", batch " +
                                       std::to_string(batch_index) + ")");
                }
                model.sgd_step(lr);
            }
            row.train_loss = acc / static_cast<double>(n);
        }

        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const EvalResult ev = evaluate(model, test, cfg.loss, cfg.c2_mode, cfg.eval_chunk);
            row.test_loss = ev.loss;
            row.auc = ev.auc;
            row.c1 = ev.c1;
            row.c2 = ev.c2;
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(row);
    }

    if (!result.history.empty()) {
        result.auc = result.history.back().auc;
        result.c1 = result.history.back().c1;
        result.c2 = result.history.back().c2;
    }

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        write_history_csv(cfg.out_dir + "/history.csv", result.history);
        save_checkpoint(cfg.out_dir + "/model.ckpt", model);
        nlohmann::json m;
        m["loss"] = to_string(cfg.loss);
        m["preset"] = to_string(cfg.preset);
        m["epochs"] = cfg.epochs;
        m["batch_size"] = cfg.batch_size;
        m["lr"] = cfg.lr;
        m["lr_decay"] = cfg.lr_decay;
        m["seed"] = cfg.seed;
        m["c2_mode"] = cfg.c2_mode == C2Mode::Label1 ? "label1" : "events";
        m["train_records"] = n;
        m["test_records"] = test.surv.size();
        m["param_count"] = result.param_count;
        if (result.auc) m["final_auc"] = *result.auc;
        if (result.c1) m["final_c1"] = *result.c1;
        if (result.c2) m["final_c2"] = *result.c2;
        std::ofstream out(cfg.out_dir + "/manifest.json");
        if (!out) throw IoError("cannot write manifest in " + cfg.out_dir);
        out << m.dump(2) << "\n";
    }
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRow>& history) {
    std::FILE* out = std::fopen(path.c_str(), "w");
    if (!out) throw IoError("cannot write history csv: " + path);
    std::fputs("epoch,train_loss,test_loss,auc,c1,c2,seconds,skipped_batches\n", out);
    auto opt = [&](const std::optional<double>& v) {
        if (v) std::fprintf(out, "%.17g", *v);
    };
    for (const auto& r : history) {
        std::fprintf(out, "%d,%.17g,", r.epoch, r.train_loss);
        opt(r.test_loss);
        std::fputc(',', out);
        opt(r.auc);
        std::fputc(',', out);
        opt(r.c1);
        std::fputc(',', out);
        opt(r.c2);
        std::fprintf(out, ",%.3f,%d\n", r.seconds, r.skipped_batches);
    }
    if (std::fclose(out) != 0) throw IoError("cannot finish writing " + path);
}

}  // namespace survnn
