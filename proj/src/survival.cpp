#include "survnn/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace survnn {
namespace {

// Streaming log-sum-exp accumulator with running-max rescaling.
struct LogSumExp {
    double max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;   // sum of exp(x - max)

    void add(double x) {
        if (x > max) {
            sum = sum * std::exp(max - x) + 1.0;
            max = x;
        } else {
            sum += std::exp(x - max);
        }
    }
    double value() const { return max + std::log(sum); }
    bool empty() const { return sum == 0.0; }
};

void check_lengths(const Eigen::VectorXd& f, const SurvivalData& data) {
    if (data.size() == 0) throw ConfigError("survival data is empty");
    if (f.size() != data.size())
        throw ConfigError("hazard vector length " + std::to_string(f.size()) +
                          " does not match dataset length " + std::to_string(data.size()));
}

// Indices sorted by time; ties grouped together.
std::vector<int> order_by_time(const Eigen::VectorXd& time, bool descending) {
    std::vector<int> idx(static_cast<std::size_t>(time.size()));
    std::iota(idx.begin(), idx.end(), 0);
    if (descending)
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return time(a) > time(b); });
    else
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return time(a) < time(b); });
    return idx;
}

}  // namespace

void SurvivalData::validate() const {
    const Eigen::Index n = size();
    if (event.size() != n) throw ConfigError("event vector length mismatch");
    if (label.size() != 0 && label.size() != n) throw ConfigError("label vector length mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(time(i) >= 0.0) || !std::isfinite(time(i)))
            throw ConfigError("time must be finite and nonnegative at index " + std::to_string(i));
        if (event(i) != 0 && event(i) != 1)
            throw ConfigError("event must be 0 or 1 at index " + std::to_string(i));
        if (label.size() != 0 && label(i) != 0 && label(i) != 1)
            throw ConfigError("label must be 0 or 1 at index " + std::to_string(i));
    }
}

SurvivalData SurvivalData::subset(const std::vector<int>& idx) const {
    SurvivalData out;
    out.time.resize(static_cast<Eigen::Index>(idx.size()));
    out.event.resize(static_cast<Eigen::Index>(idx.size()));
    if (label.size() != 0) out.label.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out.time(static_cast<Eigen::Index>(k)) = time(idx[k]);
        out.event(static_cast<Eigen::Index>(k)) = event(idx[k]);
        if (label.size() != 0) out.label(static_cast<Eigen::Index>(k)) = label(idx[k]);
    }
    if (!id.empty()) {
        out.id.reserve(idx.size());
        for (int k : idx) out.id.push_back(id[static_cast<std::size_t>(k)]);
    }
    return out;
}

double StepFunction::operator()(double t) const {
    // Largest knot <= t, else 0.
    const auto it = std::upper_bound(knots.begin(), knots.end(), t);
    if (it == knots.begin()) return 0.0;
    return values[static_cast<std::size_t>(it - knots.begin()) - 1];
}

std::vector<int> risk_set(const Eigen::VectorXd& times, double t) {
    std::vector<int> out;
    for (Eigen::Index j = 0; j < times.size(); ++j)
        if (times(j) >= t) out.push_back(static_cast<int>(j));
    return out;
}

double cox_full_loss(const Eigen::VectorXd& f, const SurvivalData& data) {
    check_lengths(f, data);
    const auto idx = order_by_time(data.time, /*descending=*/true);
    const Eigen::Index n = data.size();

    double acc = 0.0;
    LogSumExp lse;
    std::size_t pos = 0;
    while (pos < idx.size()) {
        // Add the whole tied-time group before scoring its events, so every
        // tied subject is in its own denominator (Breslow handling).
        std::size_t group_end = pos;
        const double t = data.time(idx[pos]);
        while (group_end < idx.size() && data.time(idx[group_end]) == t) {
            lse.add(f(idx[group_end]));
            ++group_end;
        }
        for (std::size_t k = pos; k < group_end; ++k) {
            const int i = idx[k];
            if (data.event(i) == 1) acc += f(i) - lse.value();
        }
        pos = group_end;
    }
    return -acc / static_cast<double>(n);
}

double cox_minibatch_loss(const Eigen::VectorXd& f, const SurvivalData& batch) {
    check_lengths(f, batch);
    const Eigen::Index n = batch.size();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (batch.event(i) != 1) continue;
        LogSumExp lse;
        for (Eigen::Index j = 0; j < n; ++j)
            if (batch.time(j) >= batch.time(i)) lse.add(f(j));
        acc += f(i) - lse.value();
    }
    return -acc / static_cast<double>(n);
}

Eigen::VectorXd cox_loss_grad(const Eigen::VectorXd& f, const SurvivalData& batch) {
    check_lengths(f, batch);
    const Eigen::Index n = batch.size();
    // Shift by the max so every exponential is <= 1.
    const double shift = f.maxCoeff();

    // Ascending time sweep: for each record m, accumulate
    // A_m = sum over events i with time_i <= time_m of 1 / S_i,
    // where S_i = sum_{time_j >= time_i} exp(f_j - shift).
    const auto asc = order_by_time(batch.time, /*descending=*/false);

    // Suffix sums S at each tied-time group, via one descending pass.
    std::vector<double> log_s(static_cast<std::size_t>(n));
    {
        LogSumExp lse;
        std::size_t k = asc.size();
        while (k > 0) {
            std::size_t group_end = k;   // exclusive
            const double t = batch.time(asc[k - 1]);
            while (k > 0 && batch.time(asc[k - 1]) == t) {
                lse.add(f(asc[k - 1]) - shift);
                --k;
            }
            for (std::size_t m = k; m < group_end; ++m)
                log_s[static_cast<std::size_t>(asc[m])] = lse.value();
        }
    }

    Eigen::VectorXd grad(n);
    double prefix = 0.0;    // sum of 1/S_i over events seen so far
    std::size_t pos = 0;
    while (pos < asc.size()) {
        std::size_t group_end = pos;
        const double t = batch.time(asc[pos]);
        while (group_end < asc.size() && batch.time(asc[group_end]) == t) ++group_end;
        // Events at this time belong to the risk set of every member of the
        // group, so fold them into the prefix before scoring the group.
        for (std::size_t k = pos; k < group_end; ++k) {
            const int i = asc[k];
            if (batch.event(i) == 1) prefix += std::exp(-log_s[static_cast<std::size_t>(i)]);
        }
        for (std::size_t k = pos; k < group_end; ++k) {
            const int m = asc[k];
            grad(m) = -(static_cast<double>(batch.event(m)) - std::exp(f(m) - shift) * prefix) /
                      static_cast<double>(n);
        }
        pos = group_end;
    }
    return grad;
}

double oracle_loss(const Eigen::VectorXd& f, const SurvivalData& batch) {
    check_lengths(f, batch);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < batch.size(); ++i)
        acc += static_cast<double>(batch.event(i)) * f(i) - std::exp(f(i)) * batch.time(i);
    return -acc / static_cast<double>(batch.size());
}

Eigen::VectorXd oracle_loss_grad(const Eigen::VectorXd& f, const SurvivalData& batch) {
    check_lengths(f, batch);
    Eigen::VectorXd grad(f.size());
    for (Eigen::Index i = 0; i < batch.size(); ++i)
        grad(i) = -(static_cast<double>(batch.event(i)) - std::exp(f(i)) * batch.time(i)) /
                  static_cast<double>(batch.size());
    return grad;
}

double full_nll(const Eigen::VectorXd& f,
                const SurvivalData& data,
                const std::function<double(double)>& cum_baseline,
                const Eigen::VectorXd& hazard_at_time) {
    check_lengths(f, data);
    if (hazard_at_time.size() != data.size())
        throw ConfigError("hazard_at_time length mismatch");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (data.event(i) == 1) {
            if (!(hazard_at_time(i) > 0.0))
                throw ConfigError("baseline hazard must be positive at event time, index " +
                                  std::to_string(i));
            acc += f(i) + std::log(hazard_at_time(i));
        }
        acc -= cum_baseline(data.time(i)) * std::exp(f(i));
    }
    return -acc / static_cast<double>(data.size());
}

StepFunction breslow_cumhaz(const Eigen::VectorXd& f, const SurvivalData& data) {
    check_lengths(f, data);
    const auto asc = order_by_time(data.time, /*descending=*/false);
    const Eigen::Index n = data.size();

    // log S(t) = log sum_{time_j >= t} exp(f_j) per tied-time group.
    std::vector<double> group_time;
    std::vector<int> group_events;
    std::vector<double> group_log_s;
    {
        LogSumExp lse;
        std::size_t k = asc.size();
        while (k > 0) {
            const double t = data.time(asc[k - 1]);
            int events = 0;
            while (k > 0 && data.time(asc[k - 1]) == t) {
                lse.add(f(asc[k - 1]));
                events += data.event(asc[k - 1]);
                --k;
            }
            group_time.push_back(t);
            group_events.push_back(events);
            group_log_s.push_back(lse.value());
        }
    }
    std::reverse(group_time.begin(), group_time.end());
    std::reverse(group_events.begin(), group_events.end());
    std::reverse(group_log_s.begin(), group_log_s.end());

    StepFunction out;
    double cum = 0.0;
    for (std::size_t g = 0; g < group_time.size(); ++g) {
        if (group_events[g] == 0) continue;
        cum += static_cast<double>(group_events[g]) * std::exp(-group_log_s[g]);
        out.knots.push_back(group_time[g]);
        out.values.push_back(cum);
    }
    (void)n;
    return out;
}

double bce_loss(const Eigen::VectorXd& logits, const Eigen::VectorXi& y) {
    if (logits.size() == 0) throw ConfigError("empty logits");
    if (logits.size() != y.size()) throw ConfigError("bce label length mismatch");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        // -[y log p + (1-y) log(1-p)] = log(1 + exp(-f)) + (1-y) f, stable form:
        const double fi = logits(i);
        const double softplus = fi > 0.0 ? fi + std::log1p(std::exp(-fi)) : std::log1p(std::exp(fi));
        acc += softplus - static_cast<double>(y(i)) * fi;
    }
    return acc / static_cast<double>(logits.size());
}

Eigen::VectorXd bce_loss_grad(const Eigen::VectorXd& logits, const Eigen::VectorXi& y) {
    if (logits.size() != y.size()) throw ConfigError("bce label length mismatch");
    Eigen::VectorXd grad(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        grad(i) = (sigmoid(logits(i)) - static_cast<double>(y(i))) / static_cast<double>(logits.size());
    return grad;
}

double two_task_loss(const Eigen::VectorXd& f, const SurvivalData& batch) {
    if (batch.label.size() != batch.size()) throw ConfigError("two-task loss requires labels");
    return cox_minibatch_loss(f, batch) + bce_loss(f, batch.label);
}

Eigen::VectorXd two_task_loss_grad(const Eigen::VectorXd& f, const SurvivalData& batch) {
    if (batch.label.size() != batch.size()) throw ConfigError("two-task loss requires labels");
    return cox_loss_grad(f, batch) + bce_loss_grad(f, batch.label);
}

}  // namespace survnn
