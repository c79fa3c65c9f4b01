#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "survnn/errors.hpp"

namespace survnn {

// One row per subject: observed time, event indicator (1 = event, 0 =
// censored) and an optional binary disease label used by the two-task loss.
struct SurvivalData {
    Eigen::VectorXd time;
    Eigen::VectorXi event;
    Eigen::VectorXi label;             // size 0 when unused
    std::vector<std::string> id;       // size 0 when unused

    Eigen::Index size() const { return time.size(); }
    void validate() const;
    SurvivalData subset(const std::vector<int>& idx) const;
};

// Right-continuous nondecreasing step function, 0 before the first knot.
struct StepFunction {
    std::vector<double> knots;    // strictly increasing
    std::vector<double> values;   // nondecreasing, same length as knots

    double operator()(double t) const;
};

// Inclusive risk set {j : times[j] >= t}, indices in ascending order.
std::vector<int> risk_set(const Eigen::VectorXd& times, double t);

// Averaged negative log partial likelihood over the full sample,
// computed by a sorted suffix log-sum-exp sweep.
double cox_full_loss(const Eigen::VectorXd& f, const SurvivalData& data);

// Same quantity evaluated on a batch with risk sets restricted to the batch.
// Deliberately a direct per-subject risk-set loop, so it is an independent
// route from cox_full_loss.
double cox_minibatch_loss(const Eigen::VectorXd& f, const SurvivalData& batch);

// d cox_minibatch_loss / d f.
Eigen::VectorXd cox_loss_grad(const Eigen::VectorXd& f, const SurvivalData& batch);

// Negative full log-likelihood under the known simulation baseline
// lambda0 == 1, Lambda0(t) == t.
double oracle_loss(const Eigen::VectorXd& f, const SurvivalData& batch);
Eigen::VectorXd oracle_loss_grad(const Eigen::VectorXd& f, const SurvivalData& batch);

// Negative full log-likelihood with an arbitrary baseline.
// cum_baseline(t) = Lambda0(t); hazard_at_time[i] = lambda0(time[i]), which
// must be positive for every event record.
double full_nll(const Eigen::VectorXd& f,
                const SurvivalData& data,
                const std::function<double(double)>& cum_baseline,
                const Eigen::VectorXd& hazard_at_time);

// Breslow estimate of the cumulative baseline hazard.
StepFunction breslow_cumhaz(const Eigen::VectorXd& f, const SurvivalData& data);

// Mean binary cross entropy computed directly from logits (so probabilities
// never round to 0 or 1), and its gradient w.r.t. the logits: (sigmoid(f)-y)/n.
double bce_loss(const Eigen::VectorXd& logits, const Eigen::VectorXi& y);
Eigen::VectorXd bce_loss_grad(const Eigen::VectorXd& logits, const Eigen::VectorXi& y);

// Cox mini-batched term plus binary cross entropy, one shared 1/|batch|
// prefactor over both terms.
double two_task_loss(const Eigen::VectorXd& f, const SurvivalData& batch);
Eigen::VectorXd two_task_loss_grad(const Eigen::VectorXd& f, const SurvivalData& batch);

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace survnn
