#pragma once

// Backward regression solver for BSDEs driven by (W, p), Picard iteration and
// the contraction planner.

#include "mrbsde/regression.hpp"
#include "mrbsde/scenario.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mrbsde {

/// State handed to a generator at one (path, node).
struct DriverInput {
    double t = 0.0;
    double y = 0.0;
    std::span<const double> z;    // per Brownian coordinate
    std::span<const double> u;    // per mark
    std::span<const double> phi;  // mark kernel weights, summing to 1
    const PathBundle* bundle = nullptr;
    std::size_t path = 0;
    std::size_t node = 0;
};

using DriverFn = std::function<double(const DriverInput&)>;
using TerminalFn = std::function<double(const PathBundle&, std::size_t path)>;

struct Lipschitz {
    double L_f = 0.0;
    double L_p = 0.0;
    double L_g = 0.0;
    double L_w = 0.0;

    bool zero() const noexcept { return L_f == 0.0 && L_p == 0.0 && L_g == 0.0 && L_w == 0.0; }
};

/// f is integrated against dA, g against dt.
struct GeneratorSpec {
    DriverFn f;
    DriverFn g;
    Lipschitz lipschitz;
    TerminalFn terminal;
    std::string description;

    /// f = g = 0.
    static GeneratorSpec zero(TerminalFn terminal);
    /// Empty f or g means the zero function.
    bool drivers_vanish() const noexcept { return !f && !g; }
    /// Evaluates xi on every path and checks E[e^{beta A_T} xi^2] is finite.
    std::vector<double> terminal_values(const PathBundle& bundle, double beta = 0.0) const;
    /// Spot-checks the declared Lipschitz constants on random perturbations at sampled states.
    void check_lipschitz(const PathBundle& bundle, std::uint64_t seed = 1) const;
};

/// f = f0 + fy y + fu sum_e u(e) phi(e);  g = g0 + gy y + gz z^0 + gs sin(y).
struct AffineGenerator {
    double f0 = 0.0, fy = 0.0, fu = 0.0;
    double g0 = 0.0, gy = 0.0, gz = 0.0, gs = 0.0;

    GeneratorSpec build(TerminalFn terminal) const;
};

/// xi = c + w W_T^0 + n N_T + s S_T
struct AffineTerminal {
    double constant = 0.0;
    double brownian = 0.0;
    double count = 0.0;
    double stock = 0.0;

    TerminalFn build() const;
};

struct BackwardSolution {
    std::size_t paths = 0;
    std::size_t steps = 0;
    std::size_t dim = 0;
    std::size_t marks = 0;
    std::vector<double> y;  // [paths][nodes]
    std::vector<double> z;  // [paths][steps][dim], constant on (t_i, t_{i+1}]
    std::vector<double> u;  // [paths][steps][marks]

    std::size_t iterations = 0;
    std::vector<double> distances;
    std::vector<double> ratios;

    BackwardSolution() = default;
    explicit BackwardSolution(const PathBundle& bundle);

    std::size_t nodes() const noexcept { return steps + 1; }
    double& Y(std::size_t p, std::size_t i) { return y[p * nodes() + i]; }
    double Y(std::size_t p, std::size_t i) const { return y[p * nodes() + i]; }
    double& Z(std::size_t p, std::size_t i, std::size_t k) { return z[(p * steps + i) * dim + k]; }
    double Z(std::size_t p, std::size_t i, std::size_t k) const { return z[(p * steps + i) * dim + k]; }
    double& U(std::size_t p, std::size_t i, std::size_t e) { return u[(p * steps + i) * marks + e]; }
    double U(std::size_t p, std::size_t i, std::size_t e) const { return u[(p * steps + i) * marks + e]; }
    /// Node-i values; for i = steps the last interval is reused.
    std::span<const double> Z_at(std::size_t p, std::size_t i) const;
    std::span<const double> U_at(std::size_t p, std::size_t i) const;
    /// y at node i across paths.
    std::vector<double> column(std::size_t i) const;
    bool compatible(const PathBundle& bundle) const noexcept;
    bool finite() const noexcept;
};

/// Node-indexed driver values [paths][nodes]; f multiplies dA, g multiplies dt.
struct DriverValues {
    std::vector<double> f;
    std::vector<double> g;
};

/// Mark kernel phi_t(e) on interval i of a path (compensator shares, p(e) when the interval carries no mass).
void mark_kernel(const PathBundle& bundle, std::size_t path, std::size_t interval, std::span<double> phi);

/// Evaluates the generator at every node from a frozen triple.
DriverValues evaluate_drivers(const GeneratorSpec& gen, const BackwardSolution& frozen, const PathBundle& bundle,
                              NodeRange range);

/// Explicit backward regression over `range`, with y at range.last set to `terminal` and
/// drivers read at the right node of each interval. Writes into `out` on the range only.
void solve_driver_known(const Projector& projector, const DriverValues& drivers, std::span<const double> terminal,
                        NodeRange range, BackwardSolution& out);
BackwardSolution solve_driver_known(const Projector& projector, const DriverValues& drivers,
                                    std::span<const double> terminal);

struct PicardOptions {
    double beta = 0.0;
    double tol = 1e-8;
    std::size_t max_iters = 50;
};

/// Picard iteration without reflection from the zero triple.
BackwardSolution solve_lipschitz(const GeneratorSpec& gen, const Projector& projector, const PicardOptions& options);

/// L_f/sqrt(alpha) |dY|^2_A + |dU|^2_p + L_g/sqrt(alpha) |dY|^2_W + |dZ|^2_W, weights e^{beta (A_s + s)}.
double weighted_distance(const BackwardSolution& a, const BackwardSolution& b, const PathBundle& bundle,
                         const Lipschitz& lipschitz, double beta, double alpha, NodeRange range);

struct PlanInterval {
    NodeRange nodes;
    double length = 0.0;
    double weight_integral = 0.0;  // E int e^{beta (A+s)} (dA + ds) over the interval
    double alpha = 0.0;
    double required_beta = 0.0;  // threshold * [(L_f + L_g) I + 1]^2
    bool condition_holds = false;
    bool star_holds = false;  // beta > 2Lp^2/a + 3Lf/sqrt(a) + 2Lw^2/a + 3Lg/sqrt(a)
    std::vector<double> measured_ratios;
};

struct ContractionPlan {
    double beta = 0.0;
    double kappa = 1.0;
    double threshold = 0.0;
    Lipschitz lipschitz;
    double h = 0.0;
    bool certified = false;
    std::vector<PlanInterval> intervals;  // forward in time

    std::size_t n_intervals() const noexcept { return intervals.size(); }
};

/// 256 kappa^4 [3(L_f + L_g) + 2(L_p^2 + L_w^2)]
double contraction_threshold(const Lipschitz& lipschitz, double kappa);

/// Smallest number of node-aligned intervals satisfying the sub-interval condition.
ContractionPlan plan_contraction(const Lipschitz& lipschitz, double kappa, double beta, const PathBundle& bundle);

/// n node-aligned intervals without the certification conditions (diagnostic runs).
ContractionPlan uniform_plan(const Lipschitz& lipschitz, double kappa, double beta, const PathBundle& bundle,
                             std::size_t n);

struct AprioriReport {
    double value = 0.0;       // E[sup_t e^{beta A_t} y_t^2]
    double half_value = 0.0;  // same on the first half of the paths
    bool unstable = false;    // the two differ by more than 20%
};

AprioriReport apriori_diagnostic(const BackwardSolution& solution, const PathBundle& bundle, double beta);

}  // namespace mrbsde
