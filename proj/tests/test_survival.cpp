#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_util.hpp"
#include "newton_cox.hpp"
#include "survnn/rng.hpp"
#include "survnn/survival.hpp"

using namespace survnn;
using Eigen::VectorXd;
using Eigen::VectorXi;

namespace {

SurvivalData make_data(std::initializer_list<double> times, std::initializer_list<int> events) {
    SurvivalData d;
    d.time = VectorXd(static_cast<Eigen::Index>(times.size()));
    d.event = VectorXi(static_cast<Eigen::Index>(events.size()));
    Eigen::Index i = 0;
    for (double t : times) d.time(i++) = t;
    i = 0;
    for (int e : events) d.event(i++) = e;
    return d;
}

SurvivalData rand_surv(Rng& rng, int n, double event_prob = 0.7) {
    SurvivalData d;
    d.time = VectorXd(n);
    d.event = VectorXi(n);
    d.label = VectorXi(n);
    for (int i = 0; i < n; ++i) {
        d.time(i) = rng.exponential(1.0);
        if (rng.bernoulli(0.1)) d.time(i) = d.time(rng.uniform_int(0, i));  // inject ties
        d.event(i) = rng.bernoulli(event_prob) ? 1 : 0;
        d.label(i) = d.event(i) == 1 ? 1 : (rng.bernoulli(0.5) ? 1 : 0);
    }
    return d;
}

VectorXd random_f(Rng& rng, int n, double scale = 2.0) {
    VectorXd f(n);
    for (int i = 0; i < n; ++i) f(i) = rng.uniform(-scale, scale);
    return f;
}

}  // namespace

TEST_CASE("risk_set examples") {
    VectorXd t(3);
    t << 1, 2, 3;
    CHECK(risk_set(t, 2.0) == std::vector<int>{1, 2});
    CHECK(risk_set(t, 0.5) == std::vector<int>{0, 1, 2});
    VectorXd tied(3);
    tied << 5, 5, 1;
    CHECK(risk_set(tied, 5.0) == std::vector<int>{0, 1});
    CHECK(risk_set(t, 10.0).empty());
}

TEST_CASE("cox_full_loss hand examples") {
    auto d = make_data({1, 2, 3}, {1, 1, 1});
    VectorXd f = VectorXd::Zero(3);
    CHECK(cox_full_loss(f, d) == doctest::Approx((std::log(3.0) + std::log(2.0)) / 3.0).epsilon(1e-12));

    auto censored = make_data({1, 2, 3}, {0, 0, 0});
    VectorXd g(3);
    g << 1.0, -2.0, 0.5;
    CHECK(cox_full_loss(g, censored) == 0.0);

    auto single = make_data({4.2}, {1});
    VectorXd one(1);
    one << 3.7;
    CHECK(cox_full_loss(one, single) == doctest::Approx(0.0));
}

TEST_CASE("cox_minibatch_loss hand examples") {
    auto d = make_data({1, 2}, {1, 0});
    VectorXd f(2);
    f << 1.0, 0.0;
    const double expect = -(1.0 - std::log(std::exp(1.0) + 1.0)) / 2.0;
    CHECK(cox_minibatch_loss(f, d) == doctest::Approx(expect).epsilon(1e-12));

    auto single = make_data({1.0}, {1});
    VectorXd one(1);
    one << -2.0;
    CHECK(cox_minibatch_loss(one, single) == doctest::Approx(0.0));

    SurvivalData empty;
    CHECK_THROWS_AS(cox_minibatch_loss(VectorXd(), empty), ConfigError);
    CHECK_THROWS_AS(cox_full_loss(VectorXd::Zero(2), single), ConfigError);
}

TEST_CASE("batch equals full on random fixtures") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = rng.uniform_int(1, 60);
        auto d = rand_surv(rng, n);
        auto f = random_f(rng, n);
        const double full = cox_full_loss(f, d);
        const double mb = cox_minibatch_loss(f, d);
        const double scale = std::max(1.0, std::abs(full));
        CHECK(std::abs(full - mb) / scale <= 1e-12);
    }
}

TEST_CASE("shift covariance of partial-likelihood losses") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = rng.uniform_int(2, 40);
        auto d = rand_surv(rng, n);
        auto f = random_f(rng, n);
        const double c = rng.uniform(-5.0, 5.0);
        const VectorXd shifted = f.array() + c;
        CHECK(std::abs(cox_full_loss(f, d) - cox_full_loss(shifted, d)) <= 1e-10);
        CHECK(std::abs(cox_minibatch_loss(f, d) - cox_minibatch_loss(shifted, d)) <= 1e-10);
    }
}

TEST_CASE("permutation invariance of losses") {
    Rng rng(11);
    const int n = 25;
    auto d = rand_surv(rng, n);
    auto f = random_f(rng, n);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    auto dp = d.subset(perm);
    VectorXd fp(n);
    for (int i = 0; i < n; ++i) fp(i) = f(perm[i]);
    CHECK(cox_full_loss(f, d) == doctest::Approx(cox_full_loss(fp, dp)).epsilon(1e-12));
    CHECK(oracle_loss(f, d) == doctest::Approx(oracle_loss(fp, dp)).epsilon(1e-12));
    CHECK(two_task_loss(f, d) == doctest::Approx(two_task_loss(fp, dp)).epsilon(1e-12));
}

TEST_CASE("monotone decrease in the event record's hazard") {
    auto d = make_data({1, 2, 3, 4}, {1, 0, 0, 0});
    VectorXd f = VectorXd::Zero(4);
    double prev = cox_full_loss(f, d);
    for (double v = 0.5; v < 5.0; v += 0.5) {
        f(0) = v;
        const double cur = cox_full_loss(f, d);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("cox_loss_grad hand example and trivia") {
    auto d = make_data({1, 2}, {1, 1});
    VectorXd f = VectorXd::Zero(2);
    auto g = cox_loss_grad(f, d);
    CHECK(g(0) == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK(g(1) == doctest::Approx(0.25).epsilon(1e-12));

    auto censored = make_data({1, 2, 3}, {0, 0, 0});
    Rng r1(1);
    CHECK(cox_loss_grad(random_f(r1, 3), censored).cwiseAbs().maxCoeff() == 0.0);

    auto single = make_data({1.0}, {1});
    VectorXd one(1);
    one << 0.3;
    CHECK(cox_loss_grad(one, single).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = rng.uniform_int(1, 50);
        auto d = rand_surv(rng, n);
        auto f = random_f(rng, n);

        auto check = [&](auto loss, auto grad) {
            const VectorXd analytic = grad(f, d);
            const VectorXd numeric = survnn_test::central_diff(
                [&](const VectorXd& x) { return loss(x, d); }, f, 1e-4);
            CHECK(survnn_test::max_rel_err(analytic, numeric) <= 1e-5);
        };
        check([](const VectorXd& x, const SurvivalData& b) { return cox_minibatch_loss(x, b); },
              [](const VectorXd& x, const SurvivalData& b) { return cox_loss_grad(x, b); });
        check([](const VectorXd& x, const SurvivalData& b) { return oracle_loss(x, b); },
              [](const VectorXd& x, const SurvivalData& b) { return oracle_loss_grad(x, b); });
        check([](const VectorXd& x, const SurvivalData& b) { return two_task_loss(x, b); },
              [](const VectorXd& x, const SurvivalData& b) { return two_task_loss_grad(x, b); });
    }
}

TEST_CASE("oracle_loss hand examples") {
    auto d1 = make_data({2.0}, {1});
    VectorXd f1 = VectorXd::Zero(1);
    CHECK(oracle_loss(f1, d1) == doctest::Approx(2.0));

    auto d2 = make_data({1.0}, {0});
    CHECK(oracle_loss(f1, d2) == doctest::Approx(1.0));

    // Stationarity: the minimizer for one event record with T*=1 is f=0.
    auto d3 = make_data({1.0}, {1});
    CHECK(oracle_loss_grad(VectorXd::Zero(1), d3)(0) == doctest::Approx(0.0));
    VectorXd eps(1);
    eps << 0.1;
    CHECK(oracle_loss(eps, d3) > oracle_loss(VectorXd::Zero(1), d3));
    eps << -0.1;
    CHECK(oracle_loss(eps, d3) > oracle_loss(VectorXd::Zero(1), d3));
}

TEST_CASE("full_nll reduces to oracle under unit baseline") {
    Rng rng(5);
    const int n = 20;
    auto d = rand_surv(rng, n);
    auto f = random_f(rng, n);
    const double nll = full_nll(f, d, [](double t) { return t; }, VectorXd::Ones(n));
    CHECK(nll == doctest::Approx(oracle_loss(f, d)).epsilon(1e-12));
}

TEST_CASE("full_nll hand example and error path") {
    auto d = make_data({3.0}, {1});
    VectorXd f = VectorXd::Zero(1);
    VectorXd lam(1);
    lam << 2.0;
    const double got = full_nll(f, d, [](double) { return 1.0; }, lam);
    CHECK(got == doctest::Approx(-(std::log(2.0) - 1.0)).epsilon(1e-12));

    lam << 0.0;
    CHECK_THROWS_AS(full_nll(f, d, [](double) { return 1.0; }, lam), ConfigError);
}

TEST_CASE("breslow_cumhaz hand example") {
    auto d = make_data({1, 2, 3}, {1, 1, 1});
    VectorXd f = VectorXd::Zero(3);
    auto sf = breslow_cumhaz(f, d);
    REQUIRE(sf.knots.size() == 3);
    CHECK(sf(0.5) == 0.0);
    CHECK(sf(1.0) == doctest::Approx(1.0 / 3.0));
    CHECK(sf(2.5) == doctest::Approx(5.0 / 6.0));
    CHECK(sf(3.0) == doctest::Approx(11.0 / 6.0));
    CHECK(sf(100.0) == doctest::Approx(11.0 / 6.0));
}

TEST_CASE("breslow_cumhaz properties") {
    Rng rng(13);
    auto d = rand_surv(rng, 40);
    auto f = random_f(rng, 40);
    auto sf = breslow_cumhaz(f, d);
    for (std::size_t k = 1; k < sf.values.size(); ++k) {
        CHECK(sf.values[k] >= sf.values[k - 1]);
        CHECK(sf.knots[k] > sf.knots[k - 1]);
    }
    if (!sf.knots.empty()) CHECK(sf(sf.knots.front() - 1e-9) == 0.0);

    // Adding c to f divides the curve by exp(c).
    const double c = 0.9;
    auto sf2 = breslow_cumhaz(VectorXd(f.array() + c), d);
    for (std::size_t k = 0; k < sf.values.size(); ++k)
        CHECK(sf2.values[k] == doctest::Approx(sf.values[k] * std::exp(-c)).epsilon(1e-10));

    auto censored = make_data({1, 2, 3}, {0, 0, 0});
    auto zero = breslow_cumhaz(VectorXd::Zero(3), censored);
    CHECK(zero.knots.empty());
    CHECK(zero(10.0) == 0.0);
}

TEST_CASE("bce_loss hand examples") {
    VectorXd f1 = VectorXd::Zero(1);
    VectorXi y1 = VectorXi::Ones(1);
    CHECK(bce_loss(f1, y1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    VectorXd big(1);
    big << 40.0;
    CHECK(bce_loss(big, y1) == doctest::Approx(0.0).epsilon(1e-12));

    VectorXd f2(2);
    f2 << 2.0, -1.0;
    VectorXi y2(2);
    y2 << 1, 0;
    const double expect = (std::log1p(std::exp(-2.0)) + std::log1p(std::exp(-1.0))) / 2.0;
    CHECK(bce_loss(f2, y2) == doctest::Approx(expect).epsilon(1e-12));

    const VectorXd g = bce_loss_grad(f2, y2);
    const VectorXd fd = survnn_test::central_diff(
        [&](const VectorXd& x) { return bce_loss(x, y2); }, f2, 1e-4);
    CHECK(survnn_test::max_rel_err(g, fd) <= 1e-5);
}

TEST_CASE("two_task_loss hand examples") {
    auto one = make_data({1.0}, {1});
    one.label = VectorXi::Ones(1);
    CHECK(two_task_loss(VectorXd::Zero(1), one) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto d = make_data({1, 2}, {1, 0});
    d.label = VectorXi(2);
    d.label << 1, 0;
    const double cox_term = 0.5 * std::log(2.0);
    CHECK(two_task_loss(VectorXd::Zero(2), d) ==
          doctest::Approx(cox_term + std::log(2.0)).epsilon(1e-12));

    auto no_labels = make_data({1, 2}, {1, 0});
    CHECK_THROWS_AS(two_task_loss(VectorXd::Zero(2), no_labels), ConfigError);
}

TEST_CASE("linear-model cross-check against reference Newton solve") {
    Rng rng(2024);
    const int n = 100;
    Eigen::VectorXd x(n);
    SurvivalData d;
    d.time = VectorXd(n);
    d.event = VectorXi(n);
    const double beta_true = 0.8;
    for (int i = 0; i < n; ++i) {
        x(i) = rng.uniform(-1.0, 1.0);
        d.time(i) = rng.exponential(std::exp(beta_true * x(i)));
        d.event(i) = rng.bernoulli(0.8) ? 1 : 0;
    }
    const auto ref = survnn_test::newton_cox_scalar(x, d.time, d.event);
    REQUIRE(ref.converged);

    // Minimize cox_full_loss over beta by golden-section on its derivative
    // through finite differences of the library loss (independent of the
    // reference solver's own derivatives).
    auto loss_at = [&](double beta) { return cox_full_loss(beta * x, d); };
    double lo = ref.beta - 2.0, hi = ref.beta + 2.0;
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (loss_at(m1) < loss_at(m2)) hi = m2;
        else lo = m1;
    }
    const double beta_hat = 0.5 * (lo + hi);
    CHECK(std::abs(beta_hat - ref.beta) <= 1e-6);
}

TEST_CASE("StepFunction evaluation convention") {
    StepFunction sf;
    sf.knots = {1.0, 3.0};
    sf.values = {0.5, 2.0};
    CHECK(sf(0.0) == 0.0);
    CHECK(sf(1.0) == 0.5);
    CHECK(sf(2.9) == 0.5);
    CHECK(sf(3.0) == 2.0);
    CHECK(sf(9.0) == 2.0);
}
