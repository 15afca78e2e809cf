// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance <configs dir>

#include "mrbsde/commands.hpp"
#include "mrbsde/insurance.hpp"
#include "mrbsde/mean_reflect.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include <unistd.h>

using namespace mrbsde;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    bool ok = true;
    std::ostringstream detail;

    void check(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double mean_of(const std::vector<double>& v) {
    double a = 0.0;
    for (double x : v) a += x;
    return a / static_cast<double>(v.size());
}

PathBundle poisson(std::size_t J, std::size_t m, std::uint64_t seed) {
    return simulate_bundle(CompensatorSpec::constant(1.0), MarkSpace::single(), build_grid(1.0, m), J, 1, seed);
}

DriverValues zero_drivers(const PathBundle& b) {
    return {std::vector<double>(b.paths * b.nodes(), 0.0), std::vector<double>(b.paths * b.nodes(), 0.0)};
}

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

void criterion1(Criterion& c) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t J = 10000;
    const auto b = poisson(J, 20, 101);
    std::vector<double> n1(J);
    for (std::size_t p = 0; p < J; ++p) n1[p] = b.N(p, 20);
    const double m = mean_of(n1);
    c.detail << "mean N_1 = " << m << " (bound " << 3.0 * std::sqrt(1.0 / J) << ")";
    c.check(std::abs(m - 1.0) <= 3.0 * std::sqrt(1.0 / J), "mean N_1");

    const std::vector<std::pair<const char*, MarkIntegrand>> integrands = {
        {"1", [](double, const Mark&) { return 1.0; }},
        {"t", [](double t, const Mark&) { return t; }},
        {"cos 3t", [](double t, const Mark&) { return std::cos(3.0 * t); }},
    };
    for (const auto& [name, C] : integrands) {
        std::vector<double> v(J);
        for (std::size_t p = 0; p < J; ++p) v[p] = compensated_integral(b, p, C);
        const auto s = sample_stats(v);
        c.detail << "; C = " << name << ": " << s.mean << " +- " << s.std_error;
        c.check(std::abs(s.mean) <= 3.0 * s.std_error, std::string("compensated integral ") + name);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    c.detail << "; " << secs << " s";
    c.check(secs < 10.0, "runtime");
}

void criterion2(Criterion& c) {
    // 100 steps x 100 sub-steps = 10^4 Tanaka steps.
    const auto lt = simulate_local_time_clock(build_grid(1.0, 100), 2000, 202, 100);
    const double target = std::sqrt(2.0 / std::numbers::pi);
    const double m = mean_of(lt.local_time_T);
    c.detail << "E[L_1] = " << m << " vs " << target << " (rel err " << std::abs(m / target - 1.0) << ")";
    c.check(std::abs(m - target) <= 0.05 * target, "E[L_1]");
}

void criterion3(Criterion& c) {
    const auto b = poisson(10000, 50, 303);
    const Projector proj(b, RegressionBasisSpec::default_for(b));
    {
        const auto xi = AffineGenerator{}.build(AffineTerminal{0, 1, 0, 0}.build()).terminal_values(b);
        const auto sol = solve_driver_known(proj, zero_drivers(b), xi);
        const double se = sample_stats(xi).std_error;
        const double z = mean_of(sol.z);
        c.detail << "W_T: y0 = " << sol.Y(0, 0) << " (3 SE " << 3 * se << "), z = " << z;
        c.check(std::abs(sol.Y(0, 0)) <= 3 * se, "y0 for W_T");
        c.check(std::abs(z - 1.0) <= 0.05, "z for W_T");
    }
    {
        const auto xi = AffineGenerator{}.build(AffineTerminal{0, 0, 1, 0}.build()).terminal_values(b);
        const auto sol = solve_driver_known(proj, zero_drivers(b), xi);
        const double se = sample_stats(xi).std_error;
        const double u = mean_of(sol.u);
        c.detail << "; N_T: y0 = " << sol.Y(0, 0) << " (3 SE " << 3 * se << "), u = " << u;
        c.check(std::abs(sol.Y(0, 0) - 1.0) <= 3 * se, "y0 for N_T");
        c.check(std::abs(u - 1.0) <= 0.1, "u for N_T");
    }
}

void criterion4(Criterion& c) {
    const auto s = normals(10000, 404);
    const auto loss = LossSpec::linear(1.0, Schedule::constant(0.5));
    const double tol = default_tolerance(s);
    const double se = sample_stats(s).std_error;
    const double L = eval_L(loss, 0.0, s, tol);
    c.detail << "L = " << L << " (bound " << tol + 3 * se << ")";
    c.check(std::abs(L - 0.5) <= tol + 3 * se, "eval_L on normals");

    // kappa = 3 loss: |L(a) - L(b)| <= kappa E|a - b| up to the root-finding tolerance.
    const auto sine = LossSpec::shifted_sine(2.0, 1.0, Schedule::constant(1.0));
    const double kappa = lipschitz_ratio(sine);
    std::mt19937_64 rng(405);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> un(-2.0, 2.0);
    int violations = 0;
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 50 + 10 * k;
        std::vector<double> a(n), b(n);
        const double shift = un(rng);
        for (std::size_t j = 0; j < n; ++j) {
            a[j] = nd(rng) + shift;
            b[j] = a[j] + 0.5 * nd(rng);
        }
        double dist = 0.0;
        for (std::size_t j = 0; j < n; ++j) dist += std::abs(a[j] - b[j]);
        dist /= static_cast<double>(n);
        const double ta = default_tolerance(a), tb = default_tolerance(b);
        const double gap = std::abs(eval_L(sine, 0.0, a, ta) - eval_L(sine, 0.0, b, tb));
        worst = std::max(worst, gap / dist);
        if (gap > kappa * dist + ta + tb) ++violations;
    }
    c.detail << "; kappa = " << kappa << ", worst ratio " << worst << ", violations " << violations << "/100";
    c.check(violations == 0, "Lipschitz pairs");
}

void criterion5(Criterion& c) {
    const auto b = poisson(10000, 50, 505);
    const Projector proj(b, RegressionBasisSpec::default_for(b));
    const auto xi = AffineGenerator{}.build(AffineTerminal{0, 1, 0, 0}.build()).terminal_values(b);
    const LossConstraint constraint(LossSpec::linear(1.0, Schedule::linear(1.0, -1.0)));
    const auto s = reflect_fixed_generator(proj, zero_drivers(b), xi, constraint);
    const auto r = flatness_report(s, constraint, b);
    double worst = 0.0, worst_tol = 0.0;
    for (std::size_t i = 0; i < b.nodes(); ++i) worst = std::max(worst, std::abs(s.K[i] - b.grid[i]));
    for (const auto& row : r.rows) worst_tol = std::max(worst_tol, row.tolerance);
    c.detail << "max |K - t| = " << worst << ", defect = " << r.skorokhod_defect << " (bound "
             << worst_tol * r.K_T << "), constraint min = " << r.constraint_min << " (bound " << -worst_tol << ")";
    c.check(worst <= 0.02, "K_t = t");
    c.check(std::abs(r.skorokhod_defect) <= worst_tol * r.K_T, "Skorokhod defect");
    c.check(r.constraint_min >= -worst_tol, "constraint min");
}

void criterion6(Criterion& c) {
    const auto b = poisson(4000, 20, 606);
    const Projector proj(b, RegressionBasisSpec::default_for(b));
    const auto gen = AffineGenerator{.fu = 0.005, .gy = -0.0012, .gz = 0.005}.build(AffineTerminal{0, 1, 0, 0}.build());
    const LossConstraint constraint(LossSpec::linear(1.0, Schedule::linear(0.5, -0.5)));
    auto plan = plan_contraction(gen.lipschitz, constraint.kappa(1.0), 3.8, b);
    c.check(plan.certified, "plan certified");
    const double tol = 1e-10;
    const auto s = solve_mean_reflected(gen, constraint, proj, plan, {.tol = tol, .max_iters = 15});
    double worst_ratio = 0.0;
    for (const auto& rs : s.ratios)
        for (double q : rs) worst_ratio = std::max(worst_ratio, q);
    std::size_t most = 0;
    for (std::size_t it : s.iterations) most = std::max(most, it);
    const auto rep = representation_check(s, gen, constraint, proj, plan.beta, tol);
    const auto guess = solve_lipschitz(gen, proj, {.beta = plan.beta, .tol = 1e-12, .max_iters = 50});
    const auto s2 = solve_mean_reflected(gen, constraint, proj, plan, {.tol = tol, .max_iters = 15, .initial_guess = &guess});
    const double gap = reflected_distance(s, s2, b, plan.beta);
    c.detail << "beta_min = " << plan.threshold << ", intervals " << plan.n_intervals() << ", max ratio " << worst_ratio
             << ", max iterations " << most << ", representation " << rep.distance << ", two starts " << gap
             << " (tol " << tol << ")";
    c.check(worst_ratio < 1.0, "ratios < 1");
    c.check(most <= 15, "iterations");
    c.check(rep.distance <= tol, "representation");
    c.check(gap <= 2 * tol, "uniqueness");
}

void criterion7(Criterion& c) {
    const double target = oracle::normal_expected_shortfall(0.05);
    const auto s = normals(1000000, 707);
    const double es = eval_es(s, 0.05);
    c.detail << "ES = " << es << " vs " << target;
    c.check(std::abs(es - target) <= 0.01, "ES of normals");

    // Translation by a dyadic shift and monotonicity on 200 random samples.
    std::mt19937_64 rng(708);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ua(0.01, 0.5);
    std::uniform_int_distribution<int> shift(-64, 64);
    int bad_translation = 0, bad_monotone = 0;
    for (int k = 0; k < 200; ++k) {
        const std::size_t n = 10 + 3 * k;
        std::vector<double> x(n), y(n), xm(n);
        const double m = shift(rng) / 4.0;
        for (std::size_t j = 0; j < n; ++j) {
            x[j] = std::ldexp(std::round(std::ldexp(3.0 * nd(rng), 20)), -20);
            y[j] = x[j] + std::abs(nd(rng));
            xm[j] = x[j] + m;
        }
        const double a = ua(rng);
        const double ex = eval_es(x, a);
        if (std::abs(eval_es(xm, a) - (ex - m)) > 1e-12 * (std::abs(ex) + std::abs(m) + 1.0)) ++bad_translation;
        if (eval_es(y, a) > ex) ++bad_monotone;
    }
    c.detail << "; translation failures " << bad_translation << ", monotonicity failures " << bad_monotone;
    c.check(bad_translation == 0, "translation invariance");
    c.check(bad_monotone == 0, "monotonicity");
}

struct Desk {
    MarketModel model;
    InsuranceContract contract;
    PricingMeasure measure;
};

Desk term_policy(int n, double r, double lambda, double kappa, double T) {
    Desk d;
    d.model.r = Schedule::constant(r);
    d.model.mu = Schedule::constant(0.05);
    d.model.sigma = Schedule::constant(0.2);
    d.model.s0 = 1.0;
    d.contract.n = n;
    d.contract.maturity = T;
    d.contract.premium = Schedule::constant(0.0);
    d.contract.benefit = {Schedule::constant(0.5)};
    d.contract.survival = {1.0, 0.0, 0.0};
    d.contract.hazard = {Schedule::constant(lambda)};
    d.measure.loading = {Schedule::constant(kappa)};
    return d;
}

HedgeResult hedge(const Desk& d, const InsuranceScenario& sc, const Projector& proj, const RiskMeasureSpec& rm,
                  double tol) {
    const auto problem = build_hedging_bsde(d.model, d.contract, d.measure);
    auto plan = uniform_plan(problem.generator.lipschitz, rm.kappa(d.contract.maturity), 0.0, sc.bundle, 1);
    HedgeOptions opt;
    opt.picard.tol = 1e-10;
    opt.picard.max_iters = 40;
    opt.tol = tol;
    return price_and_hedge(d.model, d.contract, d.measure, rm, sc, proj, plan, opt);
}

void criterion8(Criterion& c) {
    struct Case {
        double r, lambda, kappa, T;
        int n;
    };
    int k = 0;
    for (const Case cs : {Case{0.03, 0.02, 0.2, 1.0, 10}, Case{0.0, 0.1, -0.3, 2.0, 4}, Case{0.05, 0.05, 0.5, 5.0, 3}}) {
        const Desk d = term_policy(cs.n, cs.r, cs.lambda, cs.kappa, cs.T);
        // Oracle: the population simulated directly under the loaded intensity.
        const auto q = simulate_bundle(
            CompensatorSpec::population_mortality(cs.n, {Schedule::constant((1 + cs.kappa) * cs.lambda)}),
            MarkSpace::single(), build_grid(cs.T, 10), 20000, 1, 800 + k);
        std::vector<double> v(q.paths);
        for (std::size_t p = 0; p < q.paths; ++p) v[p] = std::exp(-cs.r * cs.T) * q.survivors(p, 10);
        const auto st = sample_stats(v);
        const double D0 = bond_price(d.model, d.contract, d.measure, 0.0, 0);
        c.detail << (k ? "; " : "") << "bond " << k << ": " << D0 << " vs " << st.mean << " +- " << st.std_error;
        c.check(std::abs(D0 - st.mean) <= 3.0 * st.std_error, "bond price " + std::to_string(k));
        ++k;
    }

    const double tol = 1e-6;
    const Desk d = term_policy(10, 0.03, 0.02, 0.2, 1.0);
    const auto sc = simulate_insurance_bundle(d.model, d.contract, build_grid(1.0, 50), 10000, 808);
    const Projector proj(sc.bundle, insurance_basis(d.contract));
    const auto es = [](double c0, double cT) {
        return RiskMeasureSpec::expected_shortfall(Schedule::constant(0.05), Schedule::linear(c0, cT - c0));
    };

    const auto free = hedge(d, sc, proj, es(1e9, 1e9), tol);
    const auto direct = direct_price(d.model, d.contract, d.measure, sc.bundle);
    c.detail << "; unconstrained Y0 = " << free.plan.price << " vs direct " << direct.mean << " +- "
             << direct.std_error;
    c.check(std::abs(free.plan.price - direct.mean) <= 3.0 * direct.std_error, "unconstrained price");

    const auto res = hedge(d, sc, proj, es(-9.8, -8.6), tol);
    double excess = -INFINITY;
    for (std::size_t i = 0; i < res.plan.es.size(); ++i) excess = std::max(excess, res.plan.es[i] - res.plan.benchmark[i]);
    // Independent pathwise check of the replay against the liability.
    const auto xi = build_hedging_bsde(d.model, d.contract, d.measure).generator.terminal_values(sc.bundle);
    const double slack = 0.02 * std::abs(res.plan.price);
    double worst = INFINITY;
    const std::size_t last = sc.bundle.steps();
    for (std::size_t p = 0; p < sc.bundle.paths; ++p)
        worst = std::min(worst, res.replay.X[p * sc.bundle.nodes() + last] - xi[p] + slack);
    c.detail << "; binding Y0 = " << res.plan.price << ", K_T = " << res.flatness.K_T << ", max ES - c = " << excess
             << ", defect = " << res.flatness.skorokhod_defect << ", min X_T - xi + 0.02|Y0| = " << worst;
    c.check(res.flatness.K_T > 0.0, "constraint binds");
    c.check(excess <= tol, "ES below benchmark");
    c.check(std::abs(res.flatness.skorokhod_defect) <= tol * res.flatness.K_T, "Skorokhod defect");
    c.check(worst >= 0.0, "superhedge");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void criterion9(Criterion& c, const fs::path& configs) {
    const fs::path root = fs::temp_directory_path() / ("mrbsde_acceptance_" + std::to_string(::getpid()));
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"simulate", "poisson_simulate"}, {"simulate", "local_time_simulate"}, {"solve", "fixed_loss_solve"},
        {"solve", "certified_solve"},     {"hedge", "hedge_es"},                {"hedge", "hedge_unconstrained"},
        {"validate", "certified_solve"},  {"validate", "validate_beta_low"},
    };
    std::size_t compared = 0;
    for (const auto& [verb, name] : runs) {
        const fs::path cfg = configs / (name + ".json");
        if (!fs::exists(cfg)) {
            c.check(false, "missing " + cfg.string());
            continue;
        }
        std::string summaries[2];
        int codes[2];
        for (int k = 0; k < 2; ++k) {
            const fs::path out = root / (verb + "_" + name);
            std::ostringstream sink;
            Overrides o;
            o.out = out.string();
            codes[k] = run_command(verb, cfg.string(), o, sink, sink);
            summaries[k] = slurp(out / "summary.json");
            fs::remove(out / "summary.json");
        }
        c.check(!summaries[0].empty() && summaries[0] == summaries[1] && codes[0] == codes[1], verb + " " + name);
        ++compared;
    }
    fs::remove_all(root);
    c.detail << compared << " command runs compared byte for byte";
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path configs = argc > 1 ? fs::path(argv[1]) : fs::path("configs");
    const std::vector<std::pair<const char*, std::function<void(Criterion&)>>> criteria = {
        {"compensator and martingale suite", criterion1},
        {"local-time clock", criterion2},
        {"driver-known solver oracles", criterion3},
        {"reflection operator", criterion4},
        {"fixed-generator mean reflection", criterion5},
        {"general-generator contraction", criterion6},
        {"expected shortfall", criterion7},
        {"insurance desk", criterion8},
        {"determinism", [&](Criterion& c) { criterion9(c, configs); }},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Criterion c;
        try {
            criteria[k].second(c);
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail << " [exception: " << e.what() << "]";
        }
        if (!c.ok) ++failures;
        std::cout << (c.ok ? "PASS" : "FAIL") << " criterion " << k + 1 << ": " << criteria[k].first << " -- "
                  << c.detail.str() << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
