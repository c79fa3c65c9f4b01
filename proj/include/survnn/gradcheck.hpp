#pragma once

// Finite-difference gradient audit, run in double precision. Shared by the
// `grad-check` CLI subcommand and the acceptance suite.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "survnn/net.hpp"
#include "survnn/rng.hpp"
#include "survnn/survival.hpp"

namespace survnn {

struct GradCheckItem {
    std::string name;
    int trials = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckItem> items;
    bool all_pass = true;
};

namespace gradcheck_detail {

inline double rel_err(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

// Loss L = sum(G .* forward(x)); checks both dL/dx and dL/dparams.
inline double check_layer(Layer<double>& layer, Mat<double> x, Rng& rng, double h = 1e-4) {
    std::vector<Mat<double>*> params, grads;
    layer.collect(params, grads);
    for (auto* p : params)
        for (Eigen::Index i = 0; i < p->size(); ++i) p->data()[i] = rng.uniform(-1.0, 1.0);
    for (auto* g : grads) g->setZero();

    Mat<double> y = layer.forward(x);
    Mat<double> G(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = rng.uniform(-1.0, 1.0);
    const Mat<double> dx = layer.backward(G);

    auto loss_at = [&](const Mat<double>& xv) { return (G.array() * layer.forward(xv).array()).sum(); };

    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Mat<double> xp = x, xm = x;
        xp.data()[i] += h;
        xm.data()[i] -= h;
        const double fd = (loss_at(xp) - loss_at(xm)) / (2 * h);
        worst = std::max(worst, rel_err(fd, dx.data()[i]));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        Mat<double>& p = *params[k];
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double saved = p.data()[i];
            p.data()[i] = saved + h;
            const double lp = loss_at(x);
            p.data()[i] = saved - h;
            const double lm = loss_at(x);
            p.data()[i] = saved;
            worst = std::max(worst, rel_err((lp - lm) / (2 * h), grads[k]->data()[i]));
        }
    }
    layer.forward(x);    // restore the cache to a consistent state
    return worst;
}

inline SurvivalData random_surv(Rng& rng, int n, bool with_labels) {
    SurvivalData d;
    d.time.resize(n);
    d.event.resize(n);
    if (with_labels) d.label.resize(n);
    for (int i = 0; i < n; ++i) {
        d.time(i) = rng.exponential(1.0);
        d.event(i) = rng.bernoulli(0.6) ? 1 : 0;
        if (with_labels) d.label(i) = rng.bernoulli(0.5) ? 1 : 0;
    }
    if (d.event.sum() == 0) d.event(0) = 1;
    if (with_labels && d.label.sum() == 0) d.label(0) = 1;
    return d;
}

template <class LossFn, class GradFn>
double check_loss(Rng& rng, int n, LossFn loss, GradFn grad, double h = 1e-5) {
    Eigen::VectorXd f(n);
    for (int i = 0; i < n; ++i) f(i) = rng.uniform(-2.0, 2.0);
    const Eigen::VectorXd g = grad(f);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd fp = f, fm = f;
        fp(i) += h;
        fm(i) -= h;
        worst = std::max(worst, rel_err((loss(fp) - loss(fm)) / (2 * h), g(i)));
    }
    return worst;
}

}  // namespace gradcheck_detail

// Runs the full audit: every layer kind and every loss, `trials` random draws
// each, all in double precision.
inline GradCheckReport run_grad_checks(std::uint64_t seed, int trials = 50, double tol = 1e-4) {
    using namespace gradcheck_detail;
    Rng rng(seed);
    GradCheckReport report;

    auto add = [&](const std::string& name, double worst, int t) {
        GradCheckItem item{name, t, worst, worst <= tol};
        report.all_pass = report.all_pass && item.pass;
        report.items.push_back(item);
    };

    auto rand_x = [&](Eigen::Index rows, Eigen::Index cols, double margin) {
        Mat<double> x(rows, cols);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double v;
            do v = rng.uniform(-1.0, 1.0);
            while (std::abs(v) < margin);
            x.data()[i] = v;
        }
        return x;
    };

    double worst;

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Dense<double> layer(5, 4);
        worst = std::max(worst, check_layer(layer, rand_x(5, 3, 0.0), rng));
    }
    add("layer/dense", worst, trials);

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Relu<double> layer(Shape{6, 1, 1});
        // keep pre-activations away from the kink at 0
        worst = std::max(worst, check_layer(layer, rand_x(6, 3, 5e-2), rng));
    }
    add("layer/relu", worst, trials);

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Conv2D<double> layer(Shape{2, 6, 6}, 3, 3,
                             t % 2 ? Conv2D<double>::Padding::Same : Conv2D<double>::Padding::Valid);
        worst = std::max(worst, check_layer(layer, rand_x(2 * 6 * 6, 2, 0.0), rng));
    }
    add("layer/conv2d", worst, trials);

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        MaxPool2D<double> layer(Shape{2, 4, 4});
        // redraw until every pooling window has a clear winner, so the finite
        // difference never crosses an argmax switch
        Mat<double> x;
        for (;;) {
            x = rand_x(2 * 4 * 4, 2, 0.0);
            bool ok = true;
            for (Eigen::Index s = 0; s < x.cols() && ok; ++s)
                for (int ch = 0; ch < 2 && ok; ++ch)
                    for (int oh = 0; oh < 2 && ok; ++oh)
                        for (int ow = 0; ow < 2 && ok; ++ow) {
                            double top = -1e30, second = -1e30;
                            for (int kr = 0; kr < 2; ++kr)
                                for (int kc = 0; kc < 2; ++kc) {
                                    const double v =
                                        x(ch * 16 + (oh * 2 + kr) * 4 + ow * 2 + kc, s);
                                    if (v > top) {
                                        second = top;
                                        top = v;
                                    } else if (v > second) {
                                        second = v;
                                    }
                                }
                            ok = top - second > 5e-2;
                        }
            if (ok) break;
        }
        worst = std::max(worst, check_layer(layer, x, rng));
    }
    add("layer/maxpool2d", worst, trials);

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        CropIntegrate<double> layer(3, 5, 4);
        // redraw until every hidden unit is away from the ReLU kink and every
        // crop has a clear max winner
        Mat<double> x;
        for (;;) {
            x = rand_x(3 * 5, 2, 0.0);
            std::vector<Mat<double>*> p, g;
            layer.collect(p, g);
            for (auto* m : p)
                for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-1.0, 1.0);
            bool ok = true;
            for (Eigen::Index s = 0; s < x.cols() && ok; ++s)
                for (int cr = 0; cr < 3 && ok; ++cr) {
                    const Eigen::VectorXd pre =
                        layer.w1 * x.col(s).segment(cr * 5, 5) + layer.b1.col(0);
                    double top = -1e30, second = -1e30;
                    for (int u = 0; u < 4; ++u) {
                        if (std::abs(pre(u)) < 5e-2) { ok = false; break; }
                        const double v = std::max(pre(u), 0.0);
                        if (v > top) { second = top; top = v; }
                        else if (v > second) second = v;
                    }
                    if (ok) ok = top - second > 5e-2 && top > 5e-2;
                }
            if (ok) break;
        }
        // check_layer redraws the params itself, so rerun the margin trick by
        // passing a dedicated rng-free path: instead seed check via fixed x and
        // let the redraw above stand for the param draw used inside.
        std::vector<Mat<double>*> p, g;
        layer.collect(p, g);
        for (auto* m : g) m->setZero();
        Mat<double> y = layer.forward(x);
        Mat<double> G(y.rows(), y.cols());
        for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = rng.uniform(-1.0, 1.0);
        const Mat<double> dx = layer.backward(G);
        auto loss_at = [&](const Mat<double>& xv) {
            return (G.array() * layer.forward(xv).array()).sum();
        };
        const double h = 1e-4;
        double w = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            Mat<double> xp = x, xm = x;
            xp.data()[i] += h;
            xm.data()[i] -= h;
            w = std::max(w, rel_err((loss_at(xp) - loss_at(xm)) / (2 * h), dx.data()[i]));
        }
        for (std::size_t k = 0; k < p.size(); ++k) {
            for (Eigen::Index i = 0; i < p[k]->size(); ++i) {
                const double saved = p[k]->data()[i];
                p[k]->data()[i] = saved + h;
                const double lp = loss_at(x);
                p[k]->data()[i] = saved - h;
                const double lm = loss_at(x);
                p[k]->data()[i] = saved;
                w = std::max(w, rel_err((lp - lm) / (2 * h), g[k]->data()[i]));
            }
        }
        worst = std::max(worst, w);
    }
    add("layer/crop-integrate", worst, trials);

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const int n = rng.uniform_int(2, 30);
        const SurvivalData d = random_surv(rng, n, false);
        worst = std::max(
            worst, check_loss(
                       rng, n, [&](const Eigen::VectorXd& f) { return cox_full_loss(f, d); },
                       [&](const Eigen::VectorXd& f) { return cox_loss_grad(f, d); }));
    }
    add("loss/cox-full", worst, trials);

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const int n = rng.uniform_int(2, 30);
        const SurvivalData full = random_surv(rng, std::max(2 * n, n + 3), false);
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;    // leading block batch
        const SurvivalData batch = full.subset(idx);
        worst = std::max(
            worst,
            check_loss(
                rng, n, [&](const Eigen::VectorXd& f) { return cox_minibatch_loss(f, batch); },
                [&](const Eigen::VectorXd& f) { return cox_loss_grad(f, batch); }));
    }
    add("loss/cox-minibatch", worst, trials);

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const int n = rng.uniform_int(1, 30);
        const SurvivalData d = random_surv(rng, n, false);
        worst = std::max(
            worst, check_loss(
                       rng, n, [&](const Eigen::VectorXd& f) { return oracle_loss(f, d); },
                       [&](const Eigen::VectorXd& f) { return oracle_loss_grad(f, d); }));
    }
    add("loss/oracle", worst, trials);

    worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const int n = rng.uniform_int(2, 30);
        const SurvivalData d = random_surv(rng, n, true);
        worst = std::max(
            worst, check_loss(
                       rng, n, [&](const Eigen::VectorXd& f) { return two_task_loss(f, d); },
                       [&](const Eigen::VectorXd& f) { return two_task_loss_grad(f, d); }));
    }
    add("loss/two-task", worst, trials);

    return report;
}

}  // namespace survnn
