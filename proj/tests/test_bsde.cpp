#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mrbsde/bsde.hpp"
#include "mrbsde/errors.hpp"

#include <cmath>
#include <map>

using namespace mrbsde;

namespace {

PathBundle poisson(std::size_t J, std::size_t m, double lambda = 1.0, std::uint64_t seed = 3) {
    return simulate_bundle(CompensatorSpec::constant(lambda), MarkSpace::single(), build_grid(1.0, m), J, 1, seed);
}

DriverValues zero_drivers(const PathBundle& b) {
    return {std::vector<double>(b.paths * b.nodes(), 0.0), std::vector<double>(b.paths * b.nodes(), 0.0)};
}

double mean_z(const BackwardSolution& s) {
    double acc = 0.0;
    for (double v : s.z) acc += v;
    return acc / s.z.size();
}

double mean_u(const BackwardSolution& s) {
    double acc = 0.0;
    for (double v : s.u) acc += v;
    return acc / s.u.size();
}

}  // namespace

TEST_CASE("regression basis rules") {
    auto b = poisson(100, 5);
    auto basis = RegressionBasisSpec::parse({"const", "W0", "N[1]"}, b.marks, 0.0);
    CHECK_NOTHROW(basis.validate(b));
    CHECK(basis.names(b.marks)[2] == "N[1]");
    CHECK_THROWS_AS(RegressionBasisSpec::parse({"W0"}, b.marks, 0.0).validate(b), ConfigError);
    CHECK_THROWS_AS(RegressionBasisSpec::parse({"const", "bogus"}, b.marks, 0.0), ConfigError);
    auto wide = RegressionBasisSpec::parse({"const", "W0", "W0^2", "W0^3", "N", "1{N=0}", "N[1]", "W0", "W0", "W0", "W0"},
                                           b.marks, 0.0);
    CHECK_THROWS_AS(wide.validate(b), ConfigError);
    CHECK_THROWS_AS(RegressionBasisSpec::parse({"const", "survivors"}, b.marks, 0.0).validate(b), ConfigError);
    // Duplicate columns trigger the ridge fallback and still give a mean-preserving fit.
    auto dup = RegressionBasisSpec::parse({"const", "W0", "W0"}, b.marks, 0.0);
    Projector proj(b, dup);
    CHECK(proj.fallback_count() > 0);
    std::vector<double> target(100), fitted(100);
    double mean = 0.0;
    for (std::size_t p = 0; p < 100; ++p) mean += (target[p] = b.W(p, 3, 0) + 0.1 * p) / 100.0;
    proj.at(3).project(target, fitted);
    double fmean = 0.0;
    for (double v : fitted) fmean += v / 100.0;
    CHECK(fmean == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("driver-known solve: Brownian terminal") {
    auto b = poisson(10000, 50);
    Projector proj(b, RegressionBasisSpec::default_for(b));
    auto gen = GeneratorSpec::zero(AffineTerminal{0, 1, 0, 0}.build());
    auto xi = gen.terminal_values(b);
    auto sol = solve_driver_known(proj, zero_drivers(b), xi);
    double sd = 0.0;
    for (double v : xi) sd += v * v;
    const double se = std::sqrt(sd / xi.size() / xi.size());
    CHECK(std::abs(sol.Y(0, 0)) <= 3 * se);
    CHECK(std::abs(mean_z(sol) - 1.0) <= 0.05);
    CHECK(std::abs(mean_u(sol)) <= 0.1);
    double rms = 0.0;
    for (std::size_t p = 0; p < b.paths; ++p) rms += std::pow(sol.Y(p, 25) - b.W(p, 25, 0), 2) / b.paths;
    CHECK(std::sqrt(rms) <= 0.05);
    for (std::size_t p = 0; p < b.paths; ++p) CHECK(sol.Y(p, 50) == xi[p]);
}

TEST_CASE("driver-known solve: Poisson terminal against binned conditional means") {
    auto b = poisson(10000, 50);
    Projector proj(b, RegressionBasisSpec::default_for(b));
    auto gen = GeneratorSpec::zero(AffineTerminal{0, 0, 1, 0}.build());
    auto xi = gen.terminal_values(b);
    auto sol = solve_driver_known(proj, zero_drivers(b), xi);
    double sd = 0.0, mean = 0.0;
    for (double v : xi) mean += v / xi.size();
    for (double v : xi) sd += (v - mean) * (v - mean);
    const double se = std::sqrt(sd / (xi.size() - 1) / xi.size());
    CHECK(std::abs(sol.Y(0, 0) - 1.0) <= 3 * se);
    CHECK(std::abs(mean_u(sol) - 1.0) <= 0.1);

    // Oracle: the sample mean of N_T among paths with N_t = k.
    const std::size_t i = 25;
    std::map<int, std::pair<double, double>> bins;  // k -> (sum N_T, count)
    std::map<int, double> fitted;
    for (std::size_t p = 0; p < b.paths; ++p) {
        auto& bin = bins[b.N(p, i)];
        bin.first += xi[p];
        bin.second += 1;
        fitted[b.N(p, i)] = sol.Y(p, i);
    }
    for (const auto& [k, bin] : bins) {
        if (bin.second < 500) continue;
        const double oracle = bin.first / bin.second;
        CHECK(std::abs(fitted[k] - oracle) <= 4 * std::sqrt(0.5 / bin.second) + 0.02);
        CHECK(fitted[k] == doctest::Approx(k + 0.5).epsilon(0.05));
    }
}

TEST_CASE("driver-known solve: constant terminal and tower property") {
    auto b = poisson(2000, 20);
    Projector proj(b, RegressionBasisSpec::default_for(b));
    std::vector<double> five(b.paths, 5.0);
    auto sol = solve_driver_known(proj, zero_drivers(b), five);
    for (std::size_t p = 0; p < 10; ++p)
        for (std::size_t i = 0; i <= 20; ++i) CHECK(sol.Y(p, i) == doctest::Approx(5.0).epsilon(1e-12));
    for (double v : sol.z) CHECK(std::abs(v) < 1e-9);
    for (double v : sol.u) CHECK(std::abs(v) < 1e-9);

    // Random drivers: E[y_{i+1} + f dA + g dt - y_i] = 0 at every node.
    DriverValues d = zero_drivers(b);
    for (std::size_t p = 0; p < b.paths; ++p)
        for (std::size_t i = 0; i <= 20; ++i) {
            d.f[p * 21 + i] = std::sin(p + i);
            d.g[p * 21 + i] = b.W(p, i, 0);
        }
    auto gen = GeneratorSpec::zero(AffineTerminal{1, 1, 1, 0}.build());
    auto s2 = solve_driver_known(proj, d, gen.terminal_values(b));
    for (std::size_t i = 0; i < 20; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < b.paths; ++p)
            acc += s2.Y(p, i + 1) + d.f[p * 21 + i + 1] * b.dA(p, i) + d.g[p * 21 + i + 1] * b.grid.step(i) - s2.Y(p, i);
        CHECK(std::abs(acc / b.paths) < 1e-10);
    }
}

TEST_CASE("zero-mass intervals give u = 0") {
    auto spec = CompensatorSpec::time_varying({Schedule::piecewise({0.0, 0.5}, {0.0, 2.0})});
    auto b = simulate_bundle(spec, MarkSpace::single(), build_grid(1.0, 10), 1000, 1, 8);
    Projector proj(b, RegressionBasisSpec::default_for(b));
    auto gen = GeneratorSpec::zero(AffineTerminal{0, 1, 1, 0}.build());
    auto sol = solve_driver_known(proj, zero_drivers(b), gen.terminal_values(b));
    for (std::size_t p = 0; p < b.paths; ++p)
        for (std::size_t i = 0; i < 5; ++i) CHECK(sol.U(p, i, 0) == 0.0);
}

TEST_CASE("solve_lipschitz oracles") {
    auto b = poisson(2000, 50);
    Projector proj(b, RegressionBasisSpec::default_for(b));

    SUBCASE("zero generator: one iteration, same as the driver-known solve") {
        auto gen = GeneratorSpec::zero(AffineTerminal{0, 1, 0, 0}.build());
        auto s = solve_lipschitz(gen, proj, {});
        CHECK(s.iterations == 1);
        auto d = solve_driver_known(proj, zero_drivers(b), gen.terminal_values(b));
        CHECK(s.y == d.y);
        CHECK(s.z == d.z);
    }
    SUBCASE("linear discounting") {
        auto gen = AffineGenerator{.gy = -0.1}.build(AffineTerminal{1, 0, 0, 0}.build());
        auto s = solve_lipschitz(gen, proj, {.beta = 0.0, .tol = 1e-14, .max_iters = 100});
        CHECK(s.Y(0, 0) == doctest::Approx(std::exp(-0.1)).epsilon(1e-3));
        for (std::size_t k = 1; k < s.ratios.size(); ++k) CHECK(s.ratios[k] < 1.0);
    }
    SUBCASE("Girsanov shift") {
        const double theta = 0.3;
        auto gen = AffineGenerator{.gz = theta}.build(AffineTerminal{0, 1, 0, 0}.build());
        auto s = solve_lipschitz(gen, proj, {.beta = 0.0, .tol = 1e-12, .max_iters = 50});
        for (std::size_t p = 0; p < 20; ++p)
            CHECK(s.Y(p, 10) == doctest::Approx(b.W(p, 10, 0) + theta * 0.8).epsilon(0.03).scale(1));
    }
    SUBCASE("divergence carries ratios") {
        auto gen = AffineGenerator{.gy = -0.1}.build(AffineTerminal{1, 0, 0, 0}.build());
        try {
            solve_lipschitz(gen, proj, {.beta = 0.0, .tol = 0.0, .max_iters = 3});
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(e.ratios().size() == 2);
        }
    }
}

TEST_CASE("Lipschitz spot check") {
    auto b = poisson(200, 5);
    auto gen = AffineGenerator{.fy = 0.5, .gz = 0.2}.build(AffineTerminal{}.build());
    CHECK_NOTHROW(gen.check_lipschitz(b));
    gen.lipschitz.L_w = 0.1;
    CHECK_THROWS_AS(gen.check_lipschitz(b), ConfigError);
}

TEST_CASE("weighted distance") {
    auto b = poisson(200, 10);
    BackwardSolution a(b);
    for (std::size_t k = 0; k < a.y.size(); ++k) a.y[k] = std::sin(k);
    for (std::size_t k = 0; k < a.z.size(); ++k) a.z[k] = std::cos(k);
    const Lipschitz L{0.3, 0.2, 0.4, 0.1};
    CHECK(weighted_distance(a, a, b, L, 1.0, 0.5, {0, 10}) == 0.0);

    BackwardSolution c = a;
    for (auto& v : c.z) v += 1.0;
    for (auto& v : c.u) v += 2.0;
    const double beta = 0.5;
    // Deterministic clock A = s: |1|^2 in the time norm is int_0^1 e^{2 beta s} ds.
    const double unit = (std::exp(2 * beta) - 1) / (2 * beta);
    CHECK(weighted_distance(a, c, b, Lipschitz{}, beta, 1.0, {0, 10}) == doctest::Approx(unit + 4 * unit));

    BackwardSolution d = a;
    for (auto& v : d.y) v += 0.7;
    const double alpha = 0.25;
    const double expected = 0.49 * (0.3 / std::sqrt(alpha) * unit + 0.4 / std::sqrt(alpha) * unit);
    CHECK(weighted_distance(a, d, b, L, beta, alpha, {0, 10}) == doctest::Approx(expected));
}

TEST_CASE("contraction planner") {
    auto b = poisson(100, 20);
    auto zero = plan_contraction(Lipschitz{}, 1.0, 0.0, b);
    CHECK(zero.n_intervals() == 1);
    CHECK(zero.h == 1.0);
    CHECK(zero.threshold == 0.0);

    const Lipschitz L{0.0, 0.0, 0.1, 0.1};
    CHECK(contraction_threshold(L, 2.0) == doctest::Approx(1310.72));
    try {
        plan_contraction(L, 2.0, 100.0, b);
        FAIL("expected a threshold error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("1310.72") != std::string::npos);
    }
    CHECK_THROWS_AS(plan_contraction(L, 2.0, 1400.0, b), AssumptionError);

    const double beta = 0.8;
    CHECK(expected_weight_integral(b, beta, {0, 20}) == doctest::Approx(2 * (std::exp(2 * beta) - 1) / (2 * beta)));

    const Lipschitz small{0.0, 0.005, 0.0012, 0.005};
    auto plan = plan_contraction(small, 1.0, 3.8, b);
    CHECK(plan.certified);
    CHECK(plan.threshold == doctest::Approx(0.94720));
    double covered = 0.0;
    for (const auto& iv : plan.intervals) {
        CHECK(iv.condition_holds);
        CHECK(iv.star_holds);
        CHECK(iv.alpha > 0.0);
        CHECK(iv.alpha < 1.0);
        covered += iv.length;
    }
    CHECK(covered == doctest::Approx(1.0));

    auto loose = uniform_plan(Lipschitz{0, 0, 0.1, 0}, 1.0, 0.0, b, 4);
    CHECK_FALSE(loose.certified);
    CHECK(loose.n_intervals() == 4);
    CHECK(loose.intervals[3].nodes.last == 20);
}

TEST_CASE("a priori diagnostic") {
    auto b = poisson(1000, 10);
    BackwardSolution zero(b);
    CHECK(apriori_diagnostic(zero, b, 1.0).value == 0.0);
    BackwardSolution one(b);
    for (auto& v : one.y) v = 1.0;
    CHECK(apriori_diagnostic(one, b, 1.0).value == doctest::Approx(std::exp(1.0)));

    auto small = poisson(1000, 20, 1.0, 5), large = poisson(4000, 20, 1.0, 6);
    auto gen = GeneratorSpec::zero(AffineTerminal{0, 1, 0, 0}.build());
    auto s1 = solve_lipschitz(gen, Projector(small, RegressionBasisSpec::default_for(small)), {});
    auto s2 = solve_lipschitz(gen, Projector(large, RegressionBasisSpec::default_for(large)), {});
    const double v1 = apriori_diagnostic(s1, small, 1.0).value, v2 = apriori_diagnostic(s2, large, 1.0).value;
    CHECK(std::isfinite(v1));
    CHECK(std::abs(v1 - v2) <= 0.2 * std::max(v1, v2));
}
