#include "mrbsde/mean_reflect.hpp"

#include "mrbsde/errors.hpp"
#include "mrbsde/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mrbsde {
namespace {

struct LocalLevels {
    std::vector<double> L;  // indexed by node - range.first
    std::vector<double> M;
};

// Solves on the range, replaces Y there by y + M and returns the levels. The
// unreflected y is copied into `y_local` ([paths][nodes]) on the range.
LocalLevels reflect_on_range(const Projector& projector, const DriverValues& drivers, std::span<const double> terminal,
                             const MeanConstraint& constraint, NodeRange range, bool terminal_admissible,
                             BackwardSolution& out, std::vector<double>& y_local) {
    const PathBundle& b = projector.bundle();
    const std::size_t J = b.paths, nodes = b.nodes();
    solve_driver_known(projector, drivers, terminal, range, out);
    for (std::size_t p = 0; p < J; ++p)
        for (std::size_t i = range.first; i <= range.last; ++i) y_local[p * nodes + i] = out.Y(p, i);

    const std::size_t n = range.last - range.first + 1;
    LocalLevels lv{std::vector<double>(n), std::vector<double>(n)};
    parallel_for(n, [&](std::size_t k) {
        const auto col = out.column(range.first + k);
        lv.L[k] = constraint.level(b.grid[range.first + k], col);
    });
    // A terminal handed over from the next interval is already admissible.
    lv.M[n - 1] = terminal_admissible ? 0.0 : lv.L[n - 1];
    for (std::size_t k = n - 1; k-- > 0;) lv.M[k] = std::max(lv.L[k], lv.M[k + 1]);
    for (std::size_t p = 0; p < J; ++p)
        for (std::size_t k = 0; k < n; ++k) out.Y(p, range.first + k) = y_local[p * nodes + range.first + k] + lv.M[k];
    return lv;
}

bool oscillates(const std::vector<double>& L) {
    if (L.size() < 3) return false;
    const auto [lo, hi] = std::minmax_element(L.begin(), L.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return false;
    for (std::size_t i = 1; i + 1 < L.size(); ++i) {
        const double a = L[i] - L[i - 1];
        const double c = L[i + 1] - L[i];
        if (a * c < 0.0 && std::abs(a) > 0.1 * range && std::abs(c) > 0.1 * range) return true;
    }
    return false;
}

ReflectedSolution empty_solution(const PathBundle& b) {
    ReflectedSolution s;
    s.backward = BackwardSolution(b);
    s.y.assign(b.paths * b.nodes(), 0.0);
    s.K.assign(b.nodes(), 0.0);
    s.L.assign(b.nodes(), 0.0);
    s.M.assign(b.nodes(), 0.0);
    return s;
}

}  // namespace

std::size_t ReflectedSolution::total_iterations() const noexcept {
    return std::accumulate(iterations.begin(), iterations.end(), std::size_t{0});
}

ReflectedSolution reflect_fixed_generator(const Projector& projector, const DriverValues& drivers,
                                          std::span<const double> terminal, const MeanConstraint& constraint) {
    const PathBundle& b = projector.bundle();
    const std::size_t m = b.steps();
    ReflectedSolution s = empty_solution(b);
    auto lv = reflect_on_range(projector, drivers, terminal, constraint, {0, m}, false, s.backward, s.y);
    s.L = lv.L;
    s.M = lv.M;
    for (std::size_t i = 0; i <= m; ++i) s.K[i] = s.M[0] - s.M[i];
    s.boundaries = {0, m};
    s.interval_K = {s.K[m]};
    s.iterations = {1};
    s.distances = {{}};
    s.ratios = {{}};
    s.backward.iterations = 1;
    s.L_oscillates = oscillates(s.L);
    return s;
}

ReflectedSolution gamma_map(const BackwardSolution& prev, const GeneratorSpec& gen, const MeanConstraint& constraint,
                            const Projector& projector, NodeRange range, std::span<const double> terminal) {
    const PathBundle& b = projector.bundle();
    const auto drivers = evaluate_drivers(gen, prev, b, range);
    ReflectedSolution s = empty_solution(b);
    s.backward = prev;
    auto lv = reflect_on_range(projector, drivers, terminal, constraint, range, range.last < b.steps(), s.backward, s.y);
    for (std::size_t i = range.first; i <= range.last; ++i) {
        s.L[i] = lv.L[i - range.first];
        s.M[i] = lv.M[i - range.first];
        s.K[i] = lv.M[0] - s.M[i];
    }
    s.boundaries = {range.first, range.last};
    s.interval_K = {lv.M.front() - lv.M.back()};
    s.iterations = {1};
    return s;
}

ReflectedSolution solve_mean_reflected(const GeneratorSpec& gen, const MeanConstraint& constraint,
                                       const Projector& projector, ContractionPlan& plan,
                                       const ReflectedOptions& options) {
    const PathBundle& b = projector.bundle();
    const std::size_t J = b.paths, m = b.steps(), nodes = b.nodes();
    if (plan.intervals.empty()) throw ConfigError("contraction plan has no intervals");
    if (plan.intervals.front().nodes.first != 0 || plan.intervals.back().nodes.last != m)
        throw ConfigError("contraction plan does not cover the grid");
    const auto xi = gen.terminal_values(b, plan.beta);

    BackwardSolution current = options.initial_guess ? *options.initial_guess : BackwardSolution(b);
    if (!current.compatible(b)) throw ConfigError("initial guess does not match the bundle");
    const double level_T = constraint.level(b.grid.horizon(), xi);
    for (std::size_t p = 0; p < J; ++p) current.Y(p, m) = xi[p] + level_T;

    ReflectedSolution s = empty_solution(b);
    const std::size_t n = plan.intervals.size();
    s.iterations.assign(n, 0);
    s.distances.assign(n, {});
    s.ratios.assign(n, {});
    std::vector<LocalLevels> local(n);
    std::vector<double> y_work(J * nodes, 0.0);
    std::vector<double> terminal(J);
    double shift = 0.0;  // S_j: total level carried in from later intervals

    for (std::size_t j = n; j-- > 0;) {
        auto& iv = plan.intervals[j];
        const NodeRange range = iv.nodes;
        const bool last = range.last == m;
        for (std::size_t p = 0; p < J; ++p) terminal[p] = last ? xi[p] : current.Y(p, range.last);
        auto& dist = s.distances[j];
        auto& ratios = s.ratios[j];
        for (std::size_t k = 1;; ++k) {
            const auto drivers = evaluate_drivers(gen, current, b, range);
            BackwardSolution next = current;
            local[j] = reflect_on_range(projector, drivers, terminal, constraint, range, !last, next, y_work);
            if (gen.lipschitz.zero()) {
                current = std::move(next);
                s.iterations[j] = 1;
                break;
            }
            const double d = weighted_distance(next, current, b, gen.lipschitz, plan.beta, iv.alpha, range);
            if (!dist.empty()) ratios.push_back(dist.back() > 0.0 ? d / dist.back() : 0.0);
            dist.push_back(d);
            current = std::move(next);
            s.iterations[j] = k;
            if (d < options.tol) break;
            if (k >= options.max_iters) {
                std::ostringstream os;
                os << "mean-reflected Picard iteration on interval " << j << " [t = " << b.grid[range.first] << ", "
                   << b.grid[range.last] << "] did not reach tol " << options.tol << " in " << options.max_iters
                   << " iterations (last distance " << d << ")";
                throw DivergenceError(os.str(), ratios);
            }
        }
        iv.measured_ratios = ratios;

        const auto& lv = local[j];
        const std::size_t hi = last ? range.last : range.last - 1;
        for (std::size_t i = range.first; i <= hi; ++i) {
            const std::size_t k = i - range.first;
            s.L[i] = lv.L[k] + shift;
            s.M[i] = lv.M[k] + shift;
            for (std::size_t p = 0; p < J; ++p) s.y[p * nodes + i] = y_work[p * nodes + i] - shift;
        }
        shift += lv.M.front();
    }

    // Stitch K forward: K_t = K^j_t + sum of the K gained on earlier intervals.
    s.boundaries.push_back(0);
    s.interval_K.resize(n);
    double carried = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& range = plan.intervals[j].nodes;
        const auto& lv = local[j];
        for (std::size_t i = range.first; i <= range.last; ++i) {
            if (i == range.last && i < m) continue;  // owned by the next interval
            s.K[i] = carried + (lv.M.front() - lv.M[i - range.first]);
        }
        s.interval_K[j] = lv.M.front() - lv.M.back();
        carried += s.interval_K[j];
        s.boundaries.push_back(range.last);
    }
    s.backward = std::move(current);
    s.backward.iterations = s.total_iterations();
    s.L_oscillates = oscillates(s.L);
    return s;
}

FlatnessReport flatness_report(const ReflectedSolution& sol, const MeanConstraint& constraint, const PathBundle& b) {
    const std::size_t nodes = b.nodes();
    if (sol.K.size() != nodes) throw ConfigError("solution does not match the bundle");
    FlatnessReport r;
    r.rows.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        const auto col = sol.backward.column(i);
        auto& row = r.rows[i];
        row.t = b.grid[i];
        row.mean_Y = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
        row.margin = constraint.margin(row.t, col);
        row.margin_se = constraint.margin_std_error(row.t, col);
        row.tolerance = constraint.tolerance(col) + 3.0 * row.margin_se;
        row.K = sol.K[i];
        row.dK = i == 0 ? 0.0 : sol.K[i] - sol.K[i - 1];
        row.L = sol.L[i];
        row.M = sol.M[i];
    }
    r.K_T = sol.K.back();
    r.constraint_min = r.rows[0].margin;
    double worst_tol = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
        const auto& row = r.rows[i];
        if (row.margin < r.constraint_min) {
            r.constraint_min = row.margin;
            r.constraint_argmin = i;
        }
        if (row.margin < -row.tolerance) r.constraint_ok = false;
        if (i > 0 && row.dK != 0.0) {
            // Y_{t-} at a grid node is read from the previous node.
            r.skorokhod_defect += r.rows[i - 1].margin * row.dK;
            worst_tol = std::max(worst_tol, r.rows[i - 1].tolerance);
        }
    }
    r.flatness_tolerance = worst_tol * r.K_T;
    r.flat_ok = std::abs(r.skorokhod_defect) <= r.flatness_tolerance;
    r.L_oscillates = sol.L_oscillates;
    return r;
}

double reflected_distance(const ReflectedSolution& a, const ReflectedSolution& b, const PathBundle& bundle,
                          double beta) {
    const NodeRange full{0, bundle.steps()};
    double d = weighted_distance(a.backward, b.backward, bundle, Lipschitz{1.0, 0.0, 1.0, 0.0}, beta, 1.0, full);
    for (std::size_t i = 0; i < bundle.steps(); ++i) {
        const double gap = a.K[i] - b.K[i];
        d += std::exp(beta * bundle.grid[i]) * gap * gap * bundle.grid.step(i);
    }
    return d;
}

RepresentationReport representation_check(const ReflectedSolution& sol, const GeneratorSpec& gen,
                                          const MeanConstraint& constraint, const Projector& projector, double beta,
                                          double tol) {
    const PathBundle& b = projector.bundle();
    const auto drivers = evaluate_drivers(gen, sol.backward, b, {0, b.steps()});
    const auto xi = gen.terminal_values(b, beta);
    const auto rebuilt = reflect_fixed_generator(projector, drivers, xi, constraint);
    RepresentationReport r;
    r.distance = reflected_distance(sol, rebuilt, b, beta);
    for (std::size_t i = 0; i < sol.K.size(); ++i) r.max_K_gap = std::max(r.max_K_gap, std::abs(sol.K[i] - rebuilt.K[i]));
    r.within_tol = r.distance <= tol;
    return r;
}

}  // namespace mrbsde
