#include "mrbsde/insurance.hpp"

#include "mrbsde/errors.hpp"
#include "mrbsde/parallel.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mrbsde {
namespace {

const Schedule& zero_schedule() {
    static const Schedule zero;
    return zero;
}

// int_a^b sum_e kappa(e) lambda(e) p(e) ds
double loading_integral(const InsuranceContract& c, const PricingMeasure& q, double a, double b) {
    if (q.loading.empty() || b <= a) return 0.0;
    double s = 0.0;
    for (std::size_t e = 0; e < c.causes.size(); ++e)
        s += c.causes.probability(e) * integrate_product(q.kappa(e), c.lambda(e), a, b);
    return s;
}

// int_a^b sum_e (1 + kappa(e)) lambda(e) p(e) ds
double loaded_hazard_integral(const InsuranceContract& c, const PricingMeasure& q, double a, double b) {
    double s = loading_integral(c, q, a, b);
    for (std::size_t e = 0; e < c.causes.size(); ++e) s += c.causes.probability(e) * c.lambda(e).integral(a, b);
    return s;
}

double sampled_sup_abs(const std::function<double(double)>& fn, double horizon) {
    double s = 0.0;
    constexpr int n = 2000;
    for (int k = 0; k <= n; ++k) s = std::max(s, std::abs(fn(horizon * k / n)));
    return s;
}

void check_size(std::size_t size, std::size_t causes, const char* what) {
    if (size != 1 && size != causes) {
        std::ostringstream os;
        os << what << " needs 1 or " << causes << " entries, got " << size;
        throw ConfigError(os.str());
    }
}

}  // namespace

void MarketModel::validate(double horizon) const {
    if (!(s0 > 0.0) || !std::isfinite(s0)) throw ConfigError("initial stock price must be positive");
    if (!(sigma.inf(0.0, horizon) >= 1e-6)) throw ConfigError("volatility must stay above 1e-6");
    for (const Schedule* s : {&r, &mu, &sigma})
        if (!std::isfinite(s->sup(0.0, horizon)) || !std::isfinite(s->inf(0.0, horizon)))
            throw ConfigError("market coefficients must be bounded");
}

const Schedule& InsuranceContract::G(std::size_t e) const {
    if (benefit.empty()) return zero_schedule();
    return benefit.size() == 1 ? benefit[0] : benefit[e];
}

const Schedule& PricingMeasure::kappa(std::size_t e) const {
    if (loading.empty()) return zero_schedule();
    return loading.size() == 1 ? loading[0] : loading[e];
}

void InsuranceContract::validate() const {
    const double horizon = maturity;
    if (!(maturity > 0.0) || !std::isfinite(maturity)) throw ConfigError("maturity must be positive");
    if (n < 0) throw ConfigError("number of insured must be non-negative");
    if (hazard.empty()) throw ConfigError("contract needs a hazard rate");
    check_size(hazard.size(), causes.size(), "hazard");
    if (!benefit.empty()) check_size(benefit.size(), causes.size(), "death benefit");
    for (const auto& h : hazard)
        if (!(h.inf(0.0, horizon) >= 0.0) || !std::isfinite(h.sup(0.0, horizon)))
            throw ConfigError("hazard rates must be non-negative and bounded");
    if (!std::isfinite(premium.sup(0.0, horizon)) || !std::isfinite(premium.inf(0.0, horizon)))
        throw ConfigError("premium rate must be bounded");
    for (const auto& g : benefit)
        if (!std::isfinite(g.sup(0.0, horizon)) || !std::isfinite(g.inf(0.0, horizon)))
            throw ConfigError("death benefit must be bounded");
    if (!std::isfinite(survival.fixed) || !std::isfinite(survival.participation) || !std::isfinite(survival.strike))
        throw ConfigError("survival benefit must be finite");
}

void PricingMeasure::validate(const MarkSpace& causes, double horizon) const {
    if (loading.empty()) return;
    check_size(loading.size(), causes.size(), "mortality loading");
    for (const auto& k : loading) {
        if (!(k.inf(0.0, horizon) > -1.0)) throw ConfigError("mortality loading must stay above -1");
        if (!std::isfinite(k.sup(0.0, horizon))) throw ConfigError("mortality loading must be bounded");
    }
}

namespace {

// Walks the survivor process of one path on [0, horizon]: piece(a, b, alive) for the
// stretches between deaths, death(time, cause) at each death.
template <class Piece, class Death>
void walk_path(const MppPath& path, int n, double horizon, Piece piece, Death death) {
    double a = 0.0;
    int alive = n;
    for (const auto& ev : path.events) {
        if (ev.time > horizon) break;
        piece(a, ev.time, alive);
        death(ev.time, ev.mark.index);
        a = ev.time;
        --alive;
    }
    piece(a, horizon, alive);
}

double discount(const MarketModel& model, double t) { return std::exp(-model.r.integral(0.0, t)); }

// Price at t of one unit paid at T per surviving life.
double unit_bond(const MarketModel& model, const InsuranceContract& contract, const PricingMeasure& measure, double t) {
    const double T = contract.maturity;
    return std::exp(-model.r.integral(t, T) - loaded_hazard_integral(contract, measure, t, T));
}

}  // namespace

double bond_price(const MarketModel& model, const InsuranceContract& contract, const PricingMeasure& measure, double t,
                  int deaths) {
    if (t < 0.0 || t > contract.maturity) throw ConfigError("bond price requested outside [0, T]");
    const int alive = contract.n - deaths;
    if (deaths < 0 || alive < 0) throw ConfigError("death count outside [0, n]");
    return unit_bond(model, contract, measure, t) * alive;
}

InsuranceScenario simulate_insurance_bundle(const MarketModel& model, const InsuranceContract& contract,
                                            const TimeGrid& grid, std::size_t paths, std::uint64_t seed) {
    contract.validate();
    if (std::abs(grid.horizon() - contract.maturity) > 1e-12 * std::max(1.0, contract.maturity))
        throw ConfigError("time grid horizon differs from the contract maturity");
    model.validate(grid.horizon());
    auto spec = CompensatorSpec::population_mortality(contract.n, contract.hazard);
    InsuranceScenario sc;
    sc.bundle = simulate_bundle(spec, contract.causes, grid, paths, 1, seed);
    PathBundle& b = sc.bundle;
    const std::size_t m = grid.steps(), nodes = grid.size();

    // Stock by log-Euler with the exact drift integral and sigma frozen at the left node.
    std::vector<double> log_drift(m), vol(m);
    for (std::size_t i = 0; i < m; ++i) {
        vol[i] = model.sigma(grid[i]);
        log_drift[i] = model.mu.integral(grid[i], grid[i + 1]) - 0.5 * vol[i] * vol[i] * grid.step(i);
    }
    b.stock.assign(paths * nodes, 0.0);
    sc.cash_flows.assign(paths * nodes, 0.0);
    parallel_for(paths, [&](std::size_t p) {
        double s = model.s0;
        b.stock[p * nodes] = s;
        for (std::size_t i = 0; i < m; ++i) {
            s *= std::exp(log_drift[i] + vol[i] * b.dW(p, i, 0));
            b.stock[p * nodes + i + 1] = s;
        }
        // Cumulative premiums and death benefits at the nodes.
        double* P = &sc.cash_flows[p * nodes];
        const auto& events = b.mpp[p].events;
        std::size_t k = 0;
        int alive = contract.n;
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double a = grid[i];
            const double end = grid[i + 1];
            while (k < events.size() && events[k].time <= end) {
                total += alive * contract.premium.integral(a, events[k].time);
                total += contract.G(events[k].mark.index)(events[k].time);
                a = events[k].time;
                --alive;
                ++k;
            }
            total += alive * contract.premium.integral(a, end);
            P[i + 1] = total;
        }
    });
    b.validate();
    return sc;
}

RegressionBasisSpec insurance_basis(const InsuranceContract& contract) {
    RegressionBasisSpec s;
    s.features = {{FeatureKind::constant, 0}, {FeatureKind::survivors, 0}};
    if (!contract.survival.deterministic()) {
        s.features.push_back({FeatureKind::stock, 0});
        s.features.push_back({FeatureKind::log_stock, 0});
    }
    return s;
}

HedgingProblem build_hedging_bsde(const MarketModel& model, const InsuranceContract& contract,
                                  const PricingMeasure& measure) {
    contract.validate();
    const double T = contract.maturity;
    model.validate(T);
    measure.validate(contract.causes, T);

    HedgingProblem hp;
    hp.sup_r = std::max(std::abs(model.r.sup(0.0, T)), std::abs(model.r.inf(0.0, T)));
    hp.sup_theta = sampled_sup_abs([&](double t) { return model.theta(t); }, T);
    for (std::size_t e = 0; e < contract.causes.size(); ++e)
        hp.sup_kappa = std::max({hp.sup_kappa, std::abs(measure.kappa(e).sup(0.0, T)),
                                 std::abs(measure.kappa(e).inf(0.0, T))});

    const std::size_t E = contract.causes.size();
    hp.generator.g = [model, contract, measure, E](const DriverInput& in) {
        const double s = in.bundle->survivors(in.path, in.node);
        double v = -model.r(in.t) * in.y - model.theta(in.t) * in.z[0] + contract.premium(in.t) * s;
        if (s > 0.0) {
            double jump = 0.0;
            for (std::size_t e = 0; e < E; ++e) {
                const double k = measure.kappa(e)(in.t);
                jump += (contract.G(e)(in.t) * (1.0 + k) + in.u[e] * k) * contract.lambda(e)(in.t) *
                        contract.causes.probability(e);
            }
            v += s * jump;
        }
        return v;
    };
    hp.generator.lipschitz = Lipschitz{0.0, hp.sup_kappa, hp.sup_r, hp.sup_theta};
    const SurvivalBenefit F = contract.survival;
    hp.generator.terminal = [F](const PathBundle& b, std::size_t p) {
        const double alive = b.survivors(p, b.steps());
        if (F.deterministic()) return alive * F.fixed;
        if (!b.has_stock()) throw ConfigError("stock-linked survival benefit needs a simulated stock");
        return alive * F(b.S(p, b.steps()));
    };
    std::ostringstream os;
    os << "insurance hedging generator (n = " << contract.n << ", T = " << T << ")";
    hp.generator.description = os.str();
    return hp;
}

std::vector<double> pricing_density(const MarketModel& model, const InsuranceContract& contract,
                                    const PricingMeasure& measure, const PathBundle& b) {
    const std::size_t m = b.steps();
    const double T = b.grid.horizon();
    std::vector<double> theta(m);
    for (std::size_t i = 0; i < m; ++i) theta[i] = model.theta(b.grid[i]);
    std::vector<double> density(b.paths);
    parallel_for(b.paths, [&](std::size_t p) {
        double log_z = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            log_z -= theta[i] * b.dW(p, i, 0) + 0.5 * theta[i] * theta[i] * b.grid.step(i);
        walk_path(
            b.mpp[p], contract.n, T,
            [&](double a, double c, int alive) { log_z -= alive * loading_integral(contract, measure, a, c); },
            [&](double t, std::size_t e) { log_z += std::log1p(measure.kappa(e)(t)); });
        density[p] = std::exp(log_z);
    });
    return density;
}

SampleStats direct_price(const MarketModel& model, const InsuranceContract& contract, const PricingMeasure& measure,
                         const PathBundle& b) {
    const auto density = pricing_density(model, contract, measure, b);
    const auto xi = build_hedging_bsde(model, contract, measure).generator.terminal;
    const double T = b.grid.horizon();
    const double disc_T = discount(model, T);
    std::vector<double> values(b.paths);
    parallel_for(b.paths, [&](std::size_t p) {
        double v = disc_T * xi(b, p);
        walk_path(
            b.mpp[p], contract.n, T,
            [&](double a, double c, int alive) {
                if (alive == 0 || c <= a) return;
                v += alive * boost::math::quadrature::gauss<double, 20>::integrate(
                                 [&](double s) { return discount(model, s) * contract.premium(s); }, a, c);
            },
            [&](double t, std::size_t e) { v += discount(model, t) * contract.G(e)(t); });
        values[p] = density[p] * v;
    });
    return sample_stats(values);
}

WealthReplay replay_wealth(const MarketModel& model, const InsuranceContract& contract, const PricingMeasure& measure,
                           const PathBundle& b, const HedgePlan& plan, const ReflectedSolution& solution,
                           std::span<const double> terminal) {
    const std::size_t m = b.steps(), nodes = b.nodes(), E = b.mark_count();
    std::vector<double> r_int(m), h_int(m), theta(m), sigma(m), dK(m), q(m * E), G(m * E);
    for (std::size_t i = 0; i < m; ++i) {
        const double a = b.grid[i], c = b.grid[i + 1];
        r_int[i] = model.r.integral(a, c);
        h_int[i] = contract.premium.integral(a, c);
        theta[i] = model.theta(a);
        sigma[i] = model.sigma(a);
        dK[i] = plan.K[i + 1] - plan.K[i];
        for (std::size_t e = 0; e < E; ++e) {
            q[i * E + e] = contract.causes.probability(e) *
                           (contract.lambda(e).integral(a, c) + integrate_product(measure.kappa(e), contract.lambda(e), a, c));
            G[i * E + e] = contract.G(e)(a);
        }
    }
    WealthReplay r;
    r.X.assign(b.paths * nodes, 0.0);
    const double y0 = plan.price;
    std::vector<double> tracking(b.paths), surplus(b.paths);
    parallel_for(b.paths, [&](std::size_t p) {
        double x = y0;
        double* X = &r.X[p * nodes];
        X[0] = x;
        double worst = std::abs(x - solution.backward.Y(p, 0));
        for (std::size_t i = 0; i < m; ++i) {
            const double s = b.survivors(p, i);
            const double z = plan.pi[p * m + i] * sigma[i];
            const double chi = plan.chi[p * m + i];
            double next = x + x * r_int[i] + theta[i] * z * b.grid.step(i) - s * h_int[i] - dK[i] + z * b.dW(p, i, 0);
            if (s > 0.0) {
                for (std::size_t e = 0; e < E; ++e) {
                    const double u = -chi / s - G[i * E + e];
                    next += -s * (G[i * E + e] + u) * q[i * E + e] + u * b.dN(p, i, e);
                }
            }
            x = next;
            X[i + 1] = x;
            worst = std::max(worst, std::abs(x - solution.backward.Y(p, i + 1)));
        }
        tracking[p] = worst;
        surplus[p] = x - terminal[p];
    });
    r.max_tracking_error = *std::max_element(tracking.begin(), tracking.end());
    r.min_terminal_surplus = *std::min_element(surplus.begin(), surplus.end());
    r.superhedges = r.min_terminal_surplus >= -0.02 * std::abs(y0);
    return r;
}

HedgeResult price_and_hedge(const MarketModel& model, const InsuranceContract& contract,
                            const PricingMeasure& measure, const RiskMeasureSpec& rm, const InsuranceScenario& scenario,
                            const Projector& projector, ContractionPlan& plan, const HedgeOptions& options) {
    const PathBundle& b = scenario.bundle;
    if (&projector.bundle() != &b) throw ConfigError("projector was built on a different bundle");
    const double T = b.grid.horizon();
    rm.validate(T);
    const auto problem = build_hedging_bsde(model, contract, measure);
    const RiskConstraint constraint(rm);
    const auto xi = problem.generator.terminal_values(b, plan.beta);

    HedgeResult res;
    res.terminal_rho = rm.rho(T, xi);
    const double c_T = rm.benchmark(T);
    if (res.terminal_rho > c_T + constraint.tolerance(xi)) {
        std::ostringstream os;
        os.precision(10);
        os << "terminal liability is not acceptable: rho(T, xi) = " << res.terminal_rho << " exceeds c_T = " << c_T;
        throw ConfigError(os.str());
    }

    res.solution = solve_mean_reflected(problem.generator, constraint, projector, plan, options.picard);
    res.flatness = flatness_report(res.solution, constraint, b);
    const auto& sol = res.solution;
    const std::size_t J = b.paths, m = b.steps(), nodes = b.nodes(), E = b.mark_count();

    HedgePlan& hp = res.plan;
    const auto col0 = sol.backward.column(0);
    hp.price = std::accumulate(col0.begin(), col0.end(), 0.0) / static_cast<double>(J);
    hp.K = sol.K;
    hp.pi.assign(J * m, 0.0);
    hp.chi.assign(J * m, 0.0);
    hp.cause_dispersion.assign(m, 0.0);
    std::vector<double> weights(m * E), sigma(m);
    for (std::size_t i = 0; i < m; ++i) {
        sigma[i] = model.sigma(b.grid[i]);
        for (std::size_t e = 0; e < E; ++e)
            weights[i * E + e] = contract.lambda(e)(b.grid[i]) * contract.causes.probability(e);
    }
    std::vector<double> dispersion(J * m, 0.0);
    parallel_for(J, [&](std::size_t p) {
        for (std::size_t i = 0; i < m; ++i) {
            hp.pi[p * m + i] = sol.backward.Z(p, i, 0) / sigma[i];
            const double s = b.survivors(p, i);
            const double* w = &weights[i * E];
            const double wsum = std::accumulate(w, w + E, 0.0);
            if (s <= 0.0 || wsum <= 0.0) continue;
            double mean = 0.0;
            for (std::size_t e = 0; e < E; ++e) mean += w[e] * (sol.backward.U(p, i, e) + contract.G(e)(b.grid[i]));
            mean /= wsum;
            double var = 0.0;
            for (std::size_t e = 0; e < E; ++e) {
                const double d = sol.backward.U(p, i, e) + contract.G(e)(b.grid[i]) - mean;
                var += w[e] * d * d;
            }
            hp.chi[p * m + i] = -s * mean;
            dispersion[p * m + i] = std::sqrt(var / wsum);
        }
    });
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t p = 0; p < J; ++p) s += dispersion[p * m + i];
        hp.cause_dispersion[i] = s / static_cast<double>(J);
    }

    hp.bond_curve.resize(nodes);
    hp.es.resize(nodes);
    hp.benchmark.resize(nodes);
    res.es_excess = -std::numeric_limits<double>::infinity();
    res.es_ok = true;
    for (std::size_t i = 0; i < nodes; ++i) {
        const double t = b.grid[i];
        double alive = 0.0;
        for (std::size_t p = 0; p < J; ++p) alive += b.survivors(p, i);
        hp.bond_curve[i] = unit_bond(model, contract, measure, t) * alive / static_cast<double>(J);
        const auto col = sol.backward.column(i);
        hp.es[i] = rm.rho(t, col);
        hp.benchmark[i] = rm.benchmark(t);
        const double excess = hp.es[i] - hp.benchmark[i];
        res.es_excess = std::max(res.es_excess, excess);
        if (excess > constraint.tolerance(col) + options.tol) res.es_ok = false;
    }
    const double allowed = std::max(res.flatness.flatness_tolerance, options.tol * res.flatness.K_T);
    res.skorokhod_ok = std::abs(res.flatness.skorokhod_defect) <= allowed;
    res.replay = replay_wealth(model, contract, measure, b, hp, sol, xi);
    return res;
}

std::vector<BondMartingaleRow> bond_martingale_check(const MarketModel& model, const InsuranceContract& contract,
                                                     const PricingMeasure& measure, const PathBundle& b) {
    const auto density = pricing_density(model, contract, measure, b);
    const double D0 = bond_price(model, contract, measure, 0.0, 0);
    std::vector<BondMartingaleRow> rows(b.nodes());
    std::vector<double> values(b.paths);
    for (std::size_t i = 0; i < b.nodes(); ++i) {
        const double t = b.grid[i];
        const double factor = discount(model, t) * unit_bond(model, contract, measure, t);
        for (std::size_t p = 0; p < b.paths; ++p) values[p] = density[p] * (factor * b.survivors(p, i) - D0);
        const auto st = sample_stats(values);
        rows[i] = {t, st.mean, st.std_error};
    }
    return rows;
}

}  // namespace mrbsde
