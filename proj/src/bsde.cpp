#include "mrbsde/bsde.hpp"

#include "mrbsde/errors.hpp"
#include "mrbsde/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace mrbsde {

GeneratorSpec GeneratorSpec::zero(TerminalFn terminal) {
    GeneratorSpec g;
    g.terminal = std::move(terminal);
    g.description = "zero";
    return g;
}

std::vector<double> GeneratorSpec::terminal_values(const PathBundle& b, double beta) const {
    if (!terminal) throw ConfigError("generator has no terminal condition");
    std::vector<double> xi(b.paths);
    double weighted = 0.0;
    for (std::size_t p = 0; p < b.paths; ++p) {
        xi[p] = terminal(b, p);
        if (!std::isfinite(xi[p])) throw NumericError("terminal value is not finite on path " + std::to_string(p));
        weighted += std::exp(beta * b.A(p, b.steps())) * xi[p] * xi[p];
    }
    if (!std::isfinite(weighted)) throw NumericError("E[e^{beta A_T} xi^2] is not finite");
    return xi;
}

void GeneratorSpec::check_lipschitz(const PathBundle& b, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<std::size_t> pick_path(0, b.paths - 1), pick_node(0, b.steps());
    const std::size_t d = b.dim, E = b.mark_count();
    std::vector<double> z1(d), z2(d), u1(E), u2(E), phi(E);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t p = pick_path(rng), i = pick_node(rng);
        mark_kernel(b, p, std::min(i, b.steps() - 1), phi);
        const double y1 = 3 * nd(rng), y2 = y1 + nd(rng);
        double dz = 0.0, du = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            z1[k] = 3 * nd(rng);
            z2[k] = z1[k] + nd(rng);
            dz += (z1[k] - z2[k]) * (z1[k] - z2[k]);
        }
        for (std::size_t e = 0; e < E; ++e) {
            u1[e] = 3 * nd(rng);
            u2[e] = u1[e] + nd(rng);
            du += (u1[e] - u2[e]) * (u1[e] - u2[e]) * phi[e];
        }
        DriverInput a{b.grid[i], y1, z1, u1, phi, &b, p, i};
        DriverInput c{b.grid[i], y2, z2, u2, phi, &b, p, i};
        const double slack = 1e-9 * (1.0 + std::abs(y1) + std::abs(y2));
        if (f && std::abs(f(a) - f(c)) > lipschitz.L_f * std::abs(y1 - y2) + lipschitz.L_p * std::sqrt(du) + slack)
            throw ConfigError("f violates its declared Lipschitz constants (L_f, L_p)");
        if (g && std::abs(g(a) - g(c)) > lipschitz.L_g * std::abs(y1 - y2) + lipschitz.L_w * std::sqrt(dz) + slack)
            throw ConfigError("g violates its declared Lipschitz constants (L_g, L_w)");
    }
}

GeneratorSpec AffineGenerator::build(TerminalFn terminal) const {
    GeneratorSpec gen;
    gen.terminal = std::move(terminal);
    const AffineGenerator c = *this;
    if (f0 != 0.0 || fy != 0.0 || fu != 0.0) {
        gen.f = [c](const DriverInput& in) {
            double jump = 0.0;
            for (std::size_t e = 0; e < in.u.size(); ++e) jump += in.u[e] * in.phi[e];
            return c.f0 + c.fy * in.y + c.fu * jump;
        };
    }
    if (g0 != 0.0 || gy != 0.0 || gz != 0.0 || gs != 0.0) {
        gen.g = [c](const DriverInput& in) {
            const double z0 = in.z.empty() ? 0.0 : in.z[0];
            return c.g0 + c.gy * in.y + c.gz * z0 + c.gs * std::sin(in.y);
        };
    }
    gen.lipschitz = {std::abs(fy), std::abs(fu), std::abs(gy) + std::abs(gs), std::abs(gz)};
    std::ostringstream os;
    os << "f = " << f0 << " + " << fy << " y + " << fu << " sum u phi; g = " << g0 << " + " << gy << " y + " << gz
       << " z + " << gs << " sin(y)";
    gen.description = os.str();
    return gen;
}

TerminalFn AffineTerminal::build() const {
    const AffineTerminal c = *this;
    return [c](const PathBundle& b, std::size_t p) {
        const std::size_t m = b.steps();
        double v = c.constant;
        if (c.brownian != 0.0) {
            if (b.dim == 0) throw ConfigError("terminal uses W but the bundle has no Brownian motion");
            v += c.brownian * b.W(p, m, 0);
        }
        if (c.count != 0.0) v += c.count * b.N(p, m);
        if (c.stock != 0.0) {
            if (!b.has_stock()) throw ConfigError("terminal uses S but the bundle has no stock");
            v += c.stock * b.S(p, m);
        }
        return v;
    };
}

BackwardSolution::BackwardSolution(const PathBundle& b)
    : paths(b.paths), steps(b.steps()), dim(b.dim), marks(b.mark_count()), y(paths * (steps + 1), 0.0),
      z(paths * steps * dim, 0.0), u(paths * steps * marks, 0.0) {}

std::span<const double> BackwardSolution::Z_at(std::size_t p, std::size_t i) const {
    const std::size_t k = std::min(i, steps - 1);
    return {z.data() + (p * steps + k) * dim, dim};
}

std::span<const double> BackwardSolution::U_at(std::size_t p, std::size_t i) const {
    const std::size_t k = std::min(i, steps - 1);
    return {u.data() + (p * steps + k) * marks, marks};
}

std::vector<double> BackwardSolution::column(std::size_t i) const {
    std::vector<double> c(paths);
    for (std::size_t p = 0; p < paths; ++p) c[p] = Y(p, i);
    return c;
}

bool BackwardSolution::compatible(const PathBundle& b) const noexcept {
    return paths == b.paths && steps == b.steps() && dim == b.dim && marks == b.mark_count();
}

bool BackwardSolution::finite() const noexcept {
    auto ok = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
    return ok(y) && ok(z) && ok(u);
}

void mark_kernel(const PathBundle& b, std::size_t p, std::size_t i, std::span<double> phi) {
    const std::size_t E = b.mark_count();
    double total = 0.0;
    for (std::size_t e = 0; e < E; ++e) total += b.nu_pred(p, i, e);
    for (std::size_t e = 0; e < E; ++e) phi[e] = total > 0.0 ? b.nu_pred(p, i, e) / total : b.marks.probability(e);
}

DriverValues evaluate_drivers(const GeneratorSpec& gen, const BackwardSolution& frozen, const PathBundle& b,
                              NodeRange range) {
    if (!frozen.compatible(b)) throw ConfigError("frozen solution does not match the bundle");
    const std::size_t nodes = b.nodes();
    DriverValues d;
    d.f.assign(b.paths * nodes, 0.0);
    d.g.assign(b.paths * nodes, 0.0);
    if (gen.drivers_vanish()) return d;
    const std::size_t m = b.steps();
    parallel_for(b.paths, [&](std::size_t p) {
        std::vector<double> phi(b.mark_count());
        for (std::size_t i = range.first; i <= range.last; ++i) {
            mark_kernel(b, p, std::min(i, m - 1), phi);
            const DriverInput in{b.grid[i], frozen.Y(p, i), frozen.Z_at(p, i), frozen.U_at(p, i), phi, &b, p, i};
            if (gen.f) d.f[p * nodes + i] = gen.f(in);
            if (gen.g) d.g[p * nodes + i] = gen.g(in);
        }
    });
    for (std::size_t p = 0; p < b.paths; ++p)
        for (std::size_t i = range.first; i <= range.last; ++i)
            if (!std::isfinite(d.f[p * nodes + i]) || !std::isfinite(d.g[p * nodes + i]))
                throw NumericError("generator produced a non-finite value");
    return d;
}

void solve_driver_known(const Projector& projector, const DriverValues& drivers, std::span<const double> terminal,
                        NodeRange range, BackwardSolution& out) {
    const PathBundle& b = projector.bundle();
    const std::size_t J = b.paths, m = b.steps(), nodes = b.nodes(), E = b.mark_count();
    if (!out.compatible(b)) throw ConfigError("solution storage does not match the bundle");
    if (range.last > m || range.first >= range.last) throw ConfigError("invalid node range for the backward solve");
    if (terminal.size() != J) throw ConfigError("terminal values must have one entry per path");
    if (drivers.f.size() != J * nodes || drivers.g.size() != J * nodes)
        throw ConfigError("driver arrays must be [paths][nodes]");

    for (std::size_t p = 0; p < J; ++p) out.Y(p, range.last) = terminal[p];

    std::vector<double> target(J), fitted(J), resid(J), tmp(J), second(J);
    for (std::size_t i = range.last; i-- > range.first;) {
        const NodeRegression& reg = projector.at(i);
        const double dt = b.grid.step(i);
        for (std::size_t p = 0; p < J; ++p)
            target[p] = out.Y(p, i + 1) + drivers.f[p * nodes + i + 1] * b.dA(p, i) + drivers.g[p * nodes + i + 1] * dt;
        reg.project(target, fitted);
        for (std::size_t p = 0; p < J; ++p) out.Y(p, i) = fitted[p];

        for (std::size_t p = 0; p < J; ++p) target[p] = out.Y(p, i + 1);
        reg.project(target, fitted);
        for (std::size_t p = 0; p < J; ++p) resid[p] = target[p] - fitted[p];

        for (std::size_t k = 0; k < b.dim; ++k) {
            for (std::size_t p = 0; p < J; ++p) tmp[p] = resid[p] * b.dW(p, i, k);
            reg.project(tmp, fitted);
            for (std::size_t p = 0; p < J; ++p) out.Z(p, i, k) = fitted[p] / dt;
        }
        for (std::size_t e = 0; e < E; ++e) {
            for (std::size_t p = 0; p < J; ++p) tmp[p] = resid[p] * b.dq(p, i, e);
            reg.project(tmp, fitted);
            // Denominator: the regressed E[dq^2 | F_i], which shares the sampling noise of
            // the numerator. Falls back to the compensator mass where it degenerates.
            for (std::size_t p = 0; p < J; ++p) tmp[p] = b.dq(p, i, e) * b.dq(p, i, e);
            reg.project(tmp, second);
            for (std::size_t p = 0; p < J; ++p) {
                const double mass = b.nu_pred(p, i, e);
                if (!(mass > 0.0)) {
                    out.U(p, i, e) = 0.0;
                    continue;
                }
                const double denom = second[p] > 0.1 * mass ? second[p] : mass;
                out.U(p, i, e) = fitted[p] / denom;
            }
        }
        for (std::size_t p = 0; p < J; ++p)
            if (!std::isfinite(out.Y(p, i))) throw NumericError("backward solve produced a non-finite value");
    }
}

BackwardSolution solve_driver_known(const Projector& projector, const DriverValues& drivers,
                                    std::span<const double> terminal) {
    BackwardSolution out(projector.bundle());
    solve_driver_known(projector, drivers, terminal, NodeRange{0, projector.bundle().steps()}, out);
    out.iterations = 1;
    return out;
}

BackwardSolution solve_lipschitz(const GeneratorSpec& gen, const Projector& projector, const PicardOptions& opt) {
    const PathBundle& b = projector.bundle();
    const NodeRange full{0, b.steps()};
    const auto xi = gen.terminal_values(b, opt.beta);
    BackwardSolution prev(b);
    std::vector<double> distances, ratios;
    for (std::size_t k = 1;; ++k) {
        const auto drivers = evaluate_drivers(gen, prev, b, full);
        BackwardSolution next(b);
        solve_driver_known(projector, drivers, xi, full, next);
        if (gen.lipschitz.zero()) {
            // Drivers do not depend on the state: the first iterate is the fixed point.
            next.iterations = 1;
            return next;
        }
        const double d = weighted_distance(next, prev, b, gen.lipschitz, opt.beta, 1.0, full);
        if (!distances.empty()) ratios.push_back(distances.back() > 0.0 ? d / distances.back() : 0.0);
        distances.push_back(d);
        prev = std::move(next);
        if (d < opt.tol) break;
        if (k >= opt.max_iters)
            throw DivergenceError("Picard iteration did not reach tol " + std::to_string(opt.tol) + " in " +
                                      std::to_string(opt.max_iters) + " iterations",
                                  ratios);
    }
    prev.iterations = distances.size();
    prev.distances = std::move(distances);
    prev.ratios = std::move(ratios);
    return prev;
}

double weighted_distance(const BackwardSolution& a, const BackwardSolution& b, const PathBundle& bundle,
                         const Lipschitz& L, double beta, double alpha, NodeRange range) {
    if (!a.compatible(bundle) || !b.compatible(bundle)) throw ConfigError("solutions do not match the bundle");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    std::vector<double> dy(a.y.size()), du(a.u.size());
    for (std::size_t k = 0; k < dy.size(); ++k) dy[k] = a.y[k] - b.y[k];
    for (std::size_t k = 0; k < du.size(); ++k) du[k] = a.u[k] - b.u[k];
    const double sa = std::sqrt(alpha);
    double total = 0.0;
    if (L.L_f > 0.0) total += L.L_f / sa * weighted_norm(bundle, dy, beta, Measure::clock, true, range).value;
    if (L.L_g > 0.0) total += L.L_g / sa * weighted_norm(bundle, dy, beta, Measure::time, true, range).value;
    if (a.marks > 0) total += weighted_norm(bundle, du, beta, Measure::jump, true, range).value;
    std::vector<double> dz(a.paths * a.steps);
    for (std::size_t k = 0; k < a.dim; ++k) {
        for (std::size_t p = 0; p < a.paths; ++p)
            for (std::size_t i = 0; i < a.steps; ++i) dz[p * a.steps + i] = a.Z(p, i, k) - b.Z(p, i, k);
        total += weighted_norm(bundle, dz, beta, Measure::time, true, range).value;
    }
    return total;
}

double contraction_threshold(const Lipschitz& L, double kappa) {
    const double k4 = std::pow(kappa, 4);
    return 256.0 * k4 * (3.0 * (L.L_f + L.L_g) + 2.0 * (L.L_p * L.L_p + L.L_w * L.L_w));
}

namespace {

void fill_interval(PlanInterval& iv, const Lipschitz& L, double kappa, double beta, double threshold,
                   const PathBundle& b) {
    iv.length = b.grid[iv.nodes.last] - b.grid[iv.nodes.first];
    iv.weight_integral = expected_weight_integral(b, beta, iv.nodes);
    const double lsum = L.L_f + L.L_g;
    const double factor = lsum * iv.weight_integral + 1.0;
    iv.required_beta = threshold * factor * factor;
    iv.alpha = 1.0 / (256.0 * std::pow(kappa, 4) * factor * factor);
    const bool finite = std::isfinite(iv.weight_integral) && std::isfinite(iv.required_beta) && iv.alpha > 0.0;
    iv.condition_holds = finite && (threshold == 0.0 || beta > iv.required_beta);
    const double a = iv.alpha;
    const double star = 2 * L.L_p * L.L_p / a + 3 * L.L_f / std::sqrt(a) + 2 * L.L_w * L.L_w / a + 3 * L.L_g / std::sqrt(a);
    iv.star_holds = finite && (star == 0.0 || beta > star);
}

std::vector<PlanInterval> split(const PathBundle& b, std::size_t n) {
    const std::size_t m = b.steps();
    std::vector<PlanInterval> out(n);
    std::size_t prev = 0;
    for (std::size_t j = 1; j <= n; ++j) {
        const auto next = static_cast<std::size_t>(std::llround(static_cast<double>(j * m) / static_cast<double>(n)));
        out[j - 1].nodes = {prev, next};
        prev = next;
    }
    return out;
}

}  // namespace

ContractionPlan plan_contraction(const Lipschitz& L, double kappa, double beta, const PathBundle& b) {
    if (!(kappa >= 1.0)) throw ConfigError("kappa must be >= 1");
    ContractionPlan plan;
    plan.beta = beta;
    plan.kappa = kappa;
    plan.lipschitz = L;
    plan.threshold = contraction_threshold(L, kappa);
    plan.certified = true;
    if (!(beta >= 0.0) || (plan.threshold > 0.0 && !(beta > plan.threshold))) {
        std::ostringstream os;
        os.precision(10);
        os << "beta = " << beta << " is not above the contraction threshold; required beta_min = " << plan.threshold;
        throw ConfigError(os.str());
    }
    double worst = 0.0;
    for (std::size_t n = 1; n <= b.steps(); ++n) {
        auto intervals = split(b, n);
        bool ok = true;
        for (auto& iv : intervals) {
            fill_interval(iv, L, kappa, beta, plan.threshold, b);
            ok = ok && iv.condition_holds && iv.star_holds;
        }
        if (ok) {
            plan.intervals = std::move(intervals);
            plan.h = b.grid.horizon() / static_cast<double>(n);
            return plan;
        }
        if (n == b.steps())
            for (const auto& iv : intervals) worst = std::max(worst, iv.required_beta);
    }
    std::ostringstream os;
    os.precision(10);
    os << "no feasible interval length: with one grid step per interval the sub-interval condition needs beta > "
       << worst << " (beta = " << beta << ")";
    throw AssumptionError(os.str());
}

ContractionPlan uniform_plan(const Lipschitz& L, double kappa, double beta, const PathBundle& b, std::size_t n) {
    if (n == 0 || n > b.steps()) throw ConfigError("interval count must lie in [1, m]");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    ContractionPlan plan;
    plan.beta = beta;
    plan.kappa = kappa;
    plan.lipschitz = L;
    plan.threshold = contraction_threshold(L, kappa);
    plan.certified = false;
    plan.intervals = split(b, n);
    for (auto& iv : plan.intervals) fill_interval(iv, L, kappa, beta, plan.threshold, b);
    plan.h = b.grid.horizon() / static_cast<double>(n);
    return plan;
}

AprioriReport apriori_diagnostic(const BackwardSolution& sol, const PathBundle& b, double beta) {
    if (!sol.compatible(b)) throw ConfigError("solution does not match the bundle");
    std::vector<double> sup(sol.paths, 0.0);
    for (std::size_t p = 0; p < sol.paths; ++p)
        for (std::size_t i = 0; i < sol.nodes(); ++i)
            sup[p] = std::max(sup[p], std::exp(beta * b.A(p, i)) * sol.Y(p, i) * sol.Y(p, i));
    AprioriReport r;
    const std::size_t half = std::max<std::size_t>(1, sol.paths / 2);
    double all = 0.0, first = 0.0;
    for (std::size_t p = 0; p < sol.paths; ++p) {
        all += sup[p];
        if (p < half) first += sup[p];
    }
    r.value = all / static_cast<double>(sol.paths);
    r.half_value = first / static_cast<double>(half);
    const double scale = std::max(r.value, r.half_value);
    r.unstable = !std::isfinite(r.value) || (scale > 0.0 && std::abs(r.value - r.half_value) > 0.2 * scale);
    return r;
}

}  // namespace mrbsde
