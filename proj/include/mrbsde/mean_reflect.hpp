#pragma once

// Deterministic flat solutions of mean-reflected BSDEs.

#include "mrbsde/bsde.hpp"
#include "mrbsde/reflection.hpp"

#include <vector>

namespace mrbsde {

struct ReflectedSolution {
    BackwardSolution backward;  // Y, Z, U
    std::vector<double> y;      // unreflected solution [paths][nodes], Y = y + M
    std::vector<double> K;      // deterministic, per node
    std::vector<double> L;      // reflection level per node
    std::vector<double> M;      // backward running maximum of L
    std::vector<std::size_t> boundaries;  // interval boundary nodes, 0 .. m
    std::vector<double> interval_K;       // K gained on each interval
    std::vector<std::size_t> iterations;  // Picard iterations per interval
    std::vector<std::vector<double>> distances;
    std::vector<std::vector<double>> ratios;
    bool L_oscillates = false;  // node-to-node reversals larger than 10% of the range of L

    std::size_t nodes() const noexcept { return K.size(); }
    double y_at(std::size_t p, std::size_t i) const { return y[p * nodes() + i]; }
    std::size_t total_iterations() const noexcept;
};

struct FlatnessRow {
    double t = 0.0;
    double mean_Y = 0.0;
    double margin = 0.0;     // E[l(t, Y)] or c_t - rho(t, Y)
    double margin_se = 0.0;  // standard error of margin
    double tolerance = 0.0;  // delta_L + 3 SE
    double dK = 0.0;         // K_i - K_{i-1}
    double K = 0.0;
    double L = 0.0;
    double M = 0.0;
};

struct FlatnessReport {
    double constraint_min = 0.0;
    std::size_t constraint_argmin = 0;
    double skorokhod_defect = 0.0;  // sum_i margin(t_{i-1}, Y_{i-1}) (K_i - K_{i-1})
    double flatness_tolerance = 0.0;
    double K_T = 0.0;
    bool constraint_ok = true;
    bool flat_ok = true;
    bool L_oscillates = false;
    std::vector<FlatnessRow> rows;
};

/// One driver-known solve, levels L_i, running maxima M, K_i = M_0 - M_i, Y = y + M.
ReflectedSolution reflect_fixed_generator(const Projector& projector, const DriverValues& drivers,
                                          std::span<const double> terminal, const MeanConstraint& constraint);

/// The Gamma image of a frozen triple on `range`, with Y fixed to `terminal` at range.last.
/// Values outside the range are copied from `prev`.
ReflectedSolution gamma_map(const BackwardSolution& prev, const GeneratorSpec& gen, const MeanConstraint& constraint,
                            const Projector& projector, NodeRange range, std::span<const double> terminal);

struct ReflectedOptions {
    double tol = 1e-8;
    std::size_t max_iters = 50;
    /// Picard start; the zero triple when null.
    const BackwardSolution* initial_guess = nullptr;
};

/// Picard iteration of Gamma on each plan interval, right to left, then stitching.
ReflectedSolution solve_mean_reflected(const GeneratorSpec& gen, const MeanConstraint& constraint,
                                       const Projector& projector, ContractionPlan& plan,
                                       const ReflectedOptions& options);

FlatnessReport flatness_report(const ReflectedSolution& solution, const MeanConstraint& constraint,
                               const PathBundle& bundle);

struct RepresentationReport {
    double distance = 0.0;  // Y/U/Z weighted distance plus the e^{beta t}-weighted K gap
    double max_K_gap = 0.0;
    bool within_tol = false;
};

/// Re-solves with drivers frozen at the solution, rebuilds y + running sup and compares.
RepresentationReport representation_check(const ReflectedSolution& solution, const GeneratorSpec& gen,
                                          const MeanConstraint& constraint, const Projector& projector, double beta,
                                          double tol);

/// Distance used to compare two reflected solutions (Y in both time and clock norms, U, Z, and K).
double reflected_distance(const ReflectedSolution& a, const ReflectedSolution& b, const PathBundle& bundle,
                          double beta);

}  // namespace mrbsde
