#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"

#include "mrbsde/errors.hpp"
#include "mrbsde/reflection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace mrbsde;

namespace {
std::vector<double> normals(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}
}  // namespace

TEST_CASE("eval_L closed forms") {
    auto id = LossSpec::linear(1.0);
    std::vector<double> s = {-2.0, 0.0, 1.0};
    CHECK(eval_L(id, 0.0, s) == doctest::Approx(1.0 / 3.0).epsilon(1e-7));

    auto sine = LossSpec::shifted_sine(2.0, 1.0);
    std::vector<double> one = {-1.0};
    CHECK(eval_L(sine, 0.0, one) == doctest::Approx(1.0).epsilon(1e-7));

    std::vector<double> positive = {1.0, 2.0};
    CHECK(eval_L(id, 0.0, positive) == 0.0);
}

TEST_CASE("eval_L on a normal sample") {
    auto loss = LossSpec::linear(1.0, Schedule::constant(0.5));
    auto s = normals(10000, 1);
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
    const double tol = default_tolerance(s);
    const double L = eval_L(loss, 0.0, s, tol);
    CHECK(std::abs(L - std::max(0.0, 0.5 - mean)) <= tol);
    CHECK(std::abs(L - 0.5) <= tol + 3.0 / std::sqrt(10000.0));
    CHECK(mean_loss(loss, 0.0, std::vector<double>(s.begin(), s.end())) < 0.0);
}

TEST_CASE("eval_L errors") {
    auto nan_loss = LossSpec::custom([](double, double y) { return y < 0 ? std::nan("") : y; }, 1, 1, 1);
    std::vector<double> s = {-1.0};
    CHECK_THROWS_AS(eval_L(nan_loss, 0.0, s, 1e-8), NumericError);
    // Declared bounds are a lie: the loss saturates and no bracket exists.
    auto flat = LossSpec::custom([](double, double y) { return std::tanh(y) - 2.0; }, 0.1, 1, 3);
    CHECK_THROWS_AS(eval_L(flat, 0.0, s, 1e-8), AssumptionError);
    CHECK_THROWS_AS(flat.validate(1.0), ConfigError);
    CHECK_THROWS_AS(eval_L(LossSpec::linear(1.0), 0.0, s, 0.0), ConfigError);
}

TEST_CASE("lipschitz ratio") {
    CHECK(lipschitz_ratio(LossSpec::custom([](double, double y) { return 1.5 * y; }, 1, 2, 2)) == 2.0);
    CHECK(lipschitz_ratio(LossSpec::linear(1.0)) == 1.0);
    CHECK(lipschitz_ratio(LossSpec::custom([](double, double y) { return y; }, 0.5, 3, 3)) == 6.0);
    auto sine = LossSpec::shifted_sine(2.0, 1.0);
    CHECK(lipschitz_ratio(sine) == 3.0);
    CHECK_NOTHROW(sine.validate(1.0));
    LossSpec bad = LossSpec::linear(1.0);
    bad.kappa_lower = 0.0;
    CHECK_THROWS_AS(lipschitz_ratio(bad), ConfigError);
}

TEST_CASE("eval_L is kappa-Lipschitz, monotone and non-negative") {
    auto loss = LossSpec::shifted_sine(2.0, 1.0, Schedule::constant(1.0));
    const double kappa = lipschitz_ratio(loss);
    std::mt19937_64 rng(99);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> un(-2.0, 2.0);
    for (int c = 0; c < 100; ++c) {
        const std::size_t n = 50 + c;
        std::vector<double> a(n), b(n), up(n);
        const double shift = un(rng);
        for (std::size_t j = 0; j < n; ++j) {
            a[j] = nd(rng) + shift;
            b[j] = a[j] + 0.5 * nd(rng);
            up[j] = a[j] + std::abs(nd(rng));
        }
        double dist = 0.0;
        for (std::size_t j = 0; j < n; ++j) dist += std::abs(a[j] - b[j]);
        dist /= n;
        const double ta = default_tolerance(a), tb = default_tolerance(b);
        const double La = eval_L(loss, 0.0, a, ta), Lb = eval_L(loss, 0.0, b, tb);
        CHECK(La >= 0.0);
        CHECK(std::abs(La - Lb) <= kappa * dist + ta + tb);
        CHECK(eval_L(loss, 0.0, up, default_tolerance(up)) <= La + ta);
    }
}

TEST_CASE("L jumps shrink under grid refinement") {
    // Smooth in t: l(t,y) = y - cos(t) applied to a fixed sample.
    auto loss = LossSpec::linear(1.0, Schedule::custom([](double t) { return std::cos(3 * t); }, 1.0));
    auto s = normals(2000, 4);
    auto max_jump = [&](int m) {
        double prev = eval_L(loss, 0.0, s), worst = 0.0;
        for (int i = 1; i <= m; ++i) {
            const double cur = eval_L(loss, double(i) / m, s);
            worst = std::max(worst, std::abs(cur - prev));
            prev = cur;
        }
        return worst;
    };
    CHECK(max_jump(100) < max_jump(20));
}

TEST_CASE("expected shortfall examples") {
    std::vector<double> s = {-10, -5, 0, 5, 10};
    CHECK(eval_es(s, 0.2) == doctest::Approx(10.0));
    std::vector<double> shifted = s;
    for (auto& x : shifted) x += 3.0;
    CHECK(eval_es(shifted, 0.2) == doctest::Approx(7.0));
    CHECK_THROWS_AS(eval_es(std::vector<double>{}, 0.2), ConfigError);
    CHECK_THROWS_AS(eval_es(s, 1.0), ConfigError);
    // Fractional weight: alpha = 0.3 on 5 points puts half weight on the second.
    CHECK(eval_es(s, 0.3) == doctest::Approx(-(-10.0 / 5 + 0.1 * -5.0) / 0.3));
    std::vector<double> zeros(7, 0.0);
    CHECK(eval_es(zeros, 0.1) == 0.0);
}

TEST_CASE("expected shortfall oracle") {
    const double target = oracle::normal_expected_shortfall(0.05);
    const boost::math::normal_distribution<double> nd;
    CHECK(target == doctest::Approx(boost::math::pdf(nd, boost::math::quantile(nd, 0.05)) / 0.05).epsilon(1e-9));
    auto s = normals(1000000, 7);
    CHECK(std::abs(eval_es(s, 0.05) - target) <= 0.01);
}

TEST_CASE("expected shortfall axioms on random samples") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ua(0.01, 0.5), um(-50, 50);
    for (int c = 0; c < 200; ++c) {
        const std::size_t n = 10 + c * 3;
        std::vector<double> x(n), y(n), xm(n);
        const double m = um(rng);
        for (std::size_t j = 0; j < n; ++j) {
            x[j] = 3.0 * nd(rng);
            y[j] = x[j] + std::abs(nd(rng));
            xm[j] = x[j] + m;
        }
        const double a = ua(rng);
        const double ex = eval_es(x, a);
        CHECK(ex >= eval_es(y, a));
        CHECK(std::abs(eval_es(xm, a) - (ex - m)) <= 1e-12 * (std::abs(ex) + std::abs(m) + 1.0) * 10);
    }
}

TEST_CASE("rho reflection") {
    auto custom3 = [](double, std::span<const double>) { return 3.0; };
    CHECK(eval_rho_reflection(RiskMeasureSpec::make_custom(custom3, 1.0, Schedule::constant(5.0)), 0, {}) == 0.0);
    CHECK(eval_rho_reflection(RiskMeasureSpec::make_custom(custom3, 1.0, Schedule::constant(1.0)), 0, {}) == 2.0);
    auto s = normals(1000000, 8);
    auto es = RiskMeasureSpec::expected_shortfall(Schedule::constant(0.05), Schedule::constant(2.063));
    CHECK(eval_rho_reflection(es, 0.0, s) <= 0.02);
    CHECK(es.kappa(1.0) == doctest::Approx(20.0));

    RiskConstraint rc(es);
    std::vector<double> small = {-3, -1, 0, 1, 2};
    const double x = rc.level(0.0, small);
    std::vector<double> lifted = small;
    for (auto& v : lifted) v += x;
    CHECK(rc.margin(0.0, lifted) >= -1e-12);
}
