#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mrbsde/errors.hpp"
#include "mrbsde/scenario.hpp"

#include <cmath>
#include <numbers>

using namespace mrbsde;

TEST_CASE("build_grid produces uniform and geometric nodes") {
    auto g = build_grid(1.0, 4);
    REQUIRE(g.size() == 5);
    CHECK(g[1] == doctest::Approx(0.25));
    CHECK(g[4] == 1.0);
    auto g2 = build_grid(2.0, 1);
    CHECK(g2[0] == 0.0);
    CHECK(g2[1] == 2.0);
    CHECK_THROWS_AS(build_grid(1.0, 0), ConfigError);
    CHECK_THROWS_AS(build_grid(-1.0, 3), ConfigError);

    auto geo = build_grid(1.0, 10, Refinement::geometric);
    CHECK(geo[10] == 1.0);
    for (std::size_t i = 1; i < 10; ++i) CHECK(geo.step(i) < geo.step(i - 1));
}

TEST_CASE("mark space validation") {
    CHECK_NOTHROW(MarkSpace({"a", "b"}, {0.3, 0.7}));
    CHECK_THROWS_AS(MarkSpace({"a", "a"}, {0.5, 0.5}), ConfigError);
    CHECK_THROWS_AS(MarkSpace({"a", "b"}, {0.3, 0.6}), ConfigError);
    CHECK_THROWS_AS(MarkSpace({}, {}), ConfigError);
    MarkSpace m({"a", "b"}, {0.3, 0.7});
    CHECK(m.index_of("b") == 1);
    CHECK_THROWS_AS(m.index_of("c"), ConfigError);
}

TEST_CASE("Poisson mean and dual predictable projection") {
    const std::size_t J = 10000;
    auto b = simulate_bundle(CompensatorSpec::constant(1.0), MarkSpace::single(), build_grid(1.0, 10), J, 1, 42);
    b.validate();
    std::vector<double> n1(J);
    for (std::size_t p = 0; p < J; ++p) n1[p] = b.N(p, 10);
    auto s = sample_stats(n1);
    CHECK(std::abs(s.mean - 1.0) <= 3.0 * std::sqrt(1.0 / J));

    // E[N_t] = E[A_t] at every node.
    for (std::size_t i = 0; i <= 10; ++i) {
        std::vector<double> diff(J);
        for (std::size_t p = 0; p < J; ++p) diff[p] = b.N(p, i) - b.A(p, i);
        auto d = sample_stats(diff);
        CHECK(std::abs(d.mean) <= 3.0 * d.std_error + 1e-15);
    }
}

TEST_CASE("marks follow their probabilities") {
    const std::size_t J = 5000;
    MarkSpace marks({"a", "b"}, {0.3, 0.7});
    auto b = simulate_bundle(CompensatorSpec::constant(2.0), marks, build_grid(1.0, 5), J, 1, 7);
    double na = 0, total = 0;
    for (std::size_t p = 0; p < J; ++p) {
        na += b.N(p, 5, 0);
        total += b.N(p, 5);
    }
    const double frac = na / total;
    const double se = std::sqrt(0.3 * 0.7 / total);
    CHECK(std::abs(frac - 0.3) <= 3.0 * se);
}

TEST_CASE("time-varying intensity matches its integral") {
    const std::size_t J = 10000;
    auto spec = CompensatorSpec::time_varying({Schedule::linear(0.5, 2.0)});
    auto b = simulate_bundle(spec, MarkSpace::single(), build_grid(1.0, 8), J, 1, 11);
    std::vector<double> n(J);
    for (std::size_t p = 0; p < J; ++p) n[p] = b.N(p, 8);
    auto s = sample_stats(n);
    CHECK(b.A(0, 8) == doctest::Approx(1.5));
    CHECK(std::abs(s.mean - 1.5) <= 3.0 * s.std_error);
}

TEST_CASE("population mortality stops when exhausted") {
    auto spec = CompensatorSpec::population_mortality(1, {Schedule::constant(5.0)});
    auto b = simulate_bundle(spec, MarkSpace::single(), build_grid(1.0, 10), 500, 1, 3);
    for (std::size_t p = 0; p < b.paths; ++p) {
        CHECK(b.mpp[p].events.size() <= 1);
        CHECK(b.N(p, 10) <= 1);
        if (b.N(p, 10) == 1) CHECK(b.A(p, 10) < 5.0);
    }

    auto big = simulate_bundle(CompensatorSpec::population_mortality(3, {Schedule::constant(2.0)}),
                               MarkSpace::single(), build_grid(2.0, 10), 2000, 1, 9);
    std::vector<double> diff(big.paths);
    for (std::size_t p = 0; p < big.paths; ++p) {
        CHECK(big.N(p, 10) <= 3);
        diff[p] = big.N(p, 10) - big.A(p, 10);
    }
    auto d = sample_stats(diff);
    CHECK(std::abs(d.mean) <= 3.0 * d.std_error);
}

TEST_CASE("simulation is reproducible and thread-count independent") {
    auto spec = CompensatorSpec::constant(1.5);
    auto a = simulate_bundle(spec, MarkSpace::single(), build_grid(1.0, 10), 300, 2, 5);
    auto b = simulate_bundle(spec, MarkSpace::single(), build_grid(1.0, 10), 300, 2, 5);
    CHECK(a.dw == b.dw);
    CHECK(a.clock == b.clock);
    CHECK(a.counts == b.counts);
    auto c = simulate_bundle(spec, MarkSpace::single(), build_grid(1.0, 10), 300, 2, 6);
    CHECK(a.dw != c.dw);
}

TEST_CASE("compensated integral") {
    PathBundle b = simulate_bundle(CompensatorSpec::constant(1.0), MarkSpace::single(), build_grid(1.0, 10), 1, 1, 1);
    b.mpp[0].events = {{0.3, Mark{0, 0.0}}, {0.7, Mark{0, 0.0}}};
    CHECK(compensated_integral(b, 0, [](double, const Mark&) { return 1.0; }) == doctest::Approx(1.0));
    CHECK(compensated_integral(b, 0, [](double, const Mark&) { return 0.0; }) == 0.0);

    const std::size_t J = 10000;
    auto bundle = simulate_bundle(CompensatorSpec::constant(1.0), MarkSpace::single(), build_grid(1.0, 20), J, 1, 21);
    std::vector<MarkIntegrand> integrands = {
        [](double, const Mark&) { return 1.0; },
        [](double t, const Mark&) { return t; },
        [](double t, const Mark&) { return std::cos(3.0 * t); },
    };
    for (const auto& C : integrands) {
        std::vector<double> v(J);
        for (std::size_t p = 0; p < J; ++p) v[p] = compensated_integral(bundle, p, C);
        auto s = sample_stats(v);
        CHECK(std::abs(s.mean) <= 3.0 * s.std_error);
    }
}

TEST_CASE("gaussian marker compensator") {
    CompensatorSpec spec = CompensatorSpec::constant(2.0);
    spec.marker = MarkerKind::gaussian;
    const std::size_t J = 4000;
    auto b = simulate_bundle(spec, MarkSpace::single(), build_grid(1.0, 10), J, 1, 13);
    std::vector<double> v(J);
    for (std::size_t p = 0; p < J; ++p)
        v[p] = compensated_integral(b, p, [](double, const Mark& e) { return e.value * e.value; });
    auto s = sample_stats(v);
    CHECK(std::abs(s.mean) <= 3.0 * s.std_error);
}

TEST_CASE("weighted norm examples") {
    auto b = simulate_bundle(CompensatorSpec::constant(1.0), MarkSpace::single(), build_grid(1.0, 10), 50, 1, 2);
    std::vector<double> zero(50 * 11, 0.0), one(50 * 11, 1.0);
    CHECK(weighted_norm(b, zero, 1.0, Measure::clock).value == 0.0);
    CHECK(weighted_norm(b, one, 0.0, Measure::time).value == doctest::Approx(1.0));
    CHECK(weighted_norm(b, one, 1.0, Measure::clock).value == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
    std::vector<double> bad(7, 1.0);
    CHECK_THROWS_AS(weighted_norm(b, bad, 1.0, Measure::clock), ConfigError);
    CHECK_THROWS_AS(weighted_norm(b, one, -1.0, Measure::clock), ConfigError);

    // Jump measure with u = 1 and a single mark equals the dA norm.
    std::vector<double> u(50 * 10, 1.0);
    CHECK(weighted_norm(b, u, 1.0, Measure::jump).value == doctest::Approx(std::exp(1.0) - 1.0));
}

TEST_CASE("assumption report and weight integral") {
    auto b = simulate_bundle(CompensatorSpec::constant(1.0), MarkSpace::single(), build_grid(1.0, 10), 20, 1, 2);
    auto r = check_assumptions(b, 1.0);
    CHECK(r.exp_beta_clock == doctest::Approx(std::exp(1.0)));
    CHECK(r.finite);
    CHECK(check_assumptions(b, 0.0).exp_beta_clock == 1.0);
    const double beta = 0.7;
    CHECK(expected_weight_integral(b, beta, {0, 10}) ==
          doctest::Approx(2.0 * (std::exp(2.0 * beta) - 1.0) / (2.0 * beta)));
    // Sub-interval integrals add up.
    CHECK(expected_weight_integral(b, beta, {0, 4}) + expected_weight_integral(b, beta, {4, 10}) ==
          doctest::Approx(expected_weight_integral(b, beta, {0, 10})));
}

TEST_CASE("local-time clock") {
    auto lt = simulate_local_time_clock(build_grid(1.0, 20), 2000, 17, 100);
    lt.bundle.validate();
    auto s = sample_stats(lt.local_time_T);
    CHECK(std::abs(s.mean - std::sqrt(2.0 / std::numbers::pi)) <= 0.05 * std::sqrt(2.0 / std::numbers::pi));
    for (std::size_t p = 0; p < 2000; ++p) {
        CHECK(lt.bundle.mpp[p].events.size() <= 1);
        for (std::size_t i = 0; i < 20; ++i) CHECK(lt.bundle.dA(p, i) >= 0.0);
    }
    // Fewer increase steps (relative) on a finer sub-grid.
    auto coarse = simulate_local_time_clock(build_grid(1.0, 20), 300, 5, 10);
    auto fine = simulate_local_time_clock(build_grid(1.0, 20), 300, 5, 200);
    CHECK(fine.increase_fraction < coarse.increase_fraction);
    auto r = check_assumptions(lt.bundle, 1.0);
    CHECK(r.finite);

    // E[N_T] = E[A_T] for the stopped clock.
    std::vector<double> diff(2000);
    for (std::size_t p = 0; p < 2000; ++p) diff[p] = lt.bundle.N(p, 20) - lt.bundle.A(p, 20);
    auto d = sample_stats(diff);
    CHECK(std::abs(d.mean) <= 3.0 * d.std_error);
}

TEST_CASE("stock marker stores the pre-jump stock") {
    CompensatorSpec spec = CompensatorSpec::constant(3.0);
    spec.marker = MarkerKind::stock_value;
    spec.stock = {100.0, 0.05, 0.2, 0};
    auto b = simulate_bundle(spec, MarkSpace::single(), build_grid(1.0, 10), 50, 1, 4);
    REQUIRE(b.has_stock());
    CHECK(b.S(0, 0) == 100.0);
    for (std::size_t p = 0; p < 50; ++p)
        for (const auto& ev : b.mpp[p].events) CHECK(ev.mark.value > 0.0);
}
