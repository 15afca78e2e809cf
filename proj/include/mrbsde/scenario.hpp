#pragma once

// Joint Brownian / marked-point-process scenarios on a time grid.

#include "mrbsde/schedule.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mrbsde {

enum class Refinement { uniform, geometric };

class TimeGrid {
public:
    TimeGrid() = default;
    /// Validates t_0 = 0 and strict increase.
    explicit TimeGrid(std::vector<double> nodes);

    double horizon() const noexcept { return nodes_.empty() ? 0.0 : nodes_.back(); }
    std::size_t steps() const noexcept { return nodes_.empty() ? 0 : nodes_.size() - 1; }
    std::size_t size() const noexcept { return nodes_.size(); }
    double operator[](std::size_t i) const { return nodes_[i]; }
    double step(std::size_t i) const { return nodes_[i + 1] - nodes_[i]; }
    std::span<const double> nodes() const noexcept { return nodes_; }

private:
    std::vector<double> nodes_;
};

/// Uniform nodes, or geometric steps shrinking towards the horizon (ratio 0.95).
TimeGrid build_grid(double horizon, std::size_t steps, Refinement refinement = Refinement::uniform);

class MarkSpace {
public:
    MarkSpace() : MarkSpace({"1"}, {1.0}) {}
    MarkSpace(std::vector<std::string> labels, std::vector<double> probabilities);

    static MarkSpace single(std::string label = "1") { return MarkSpace({std::move(label)}, {1.0}); }

    std::size_t size() const noexcept { return labels_.size(); }
    const std::string& label(std::size_t e) const { return labels_[e]; }
    double probability(std::size_t e) const { return probs_[e]; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::vector<double>& probabilities() const noexcept { return probs_; }
    std::size_t index_of(const std::string& label) const;

private:
    std::vector<std::string> labels_;
    std::vector<double> probs_;
};

enum class CompensatorKind { constant_intensity, time_varying_intensity, population_mortality, local_time_clock };

/// How the mark value carried by each jump is produced.
enum class MarkerKind {
    finite,       // value = mark index
    gaussian,     // value ~ N(0,1), single label; not accepted by the BSDE engine
    stock_value,  // value = S(t-) of a geometric Brownian motion driven by W
};

struct StockMarker {
    double s0 = 1.0;
    double drift = 0.0;
    double vol = 0.0;
    std::size_t coordinate = 0;
};

struct CompensatorSpec {
    CompensatorKind kind = CompensatorKind::constant_intensity;
    /// lambda_t(e) per mark; a single entry is shared by all marks.
    std::vector<Schedule> intensity;
    /// Initial population for population-mortality (effective rate (n - N_{t-}) lambda p(e)).
    int population = 0;
    /// Fine steps per main step for the local-time clock.
    std::size_t local_time_refine = 100;
    MarkerKind marker = MarkerKind::finite;
    StockMarker stock{};
    /// Store S at the nodes (always on for the stock_value marker).
    bool simulate_stock = false;

    static CompensatorSpec constant(double lambda);
    static CompensatorSpec time_varying(std::vector<Schedule> per_mark);
    static CompensatorSpec population_mortality(int n, std::vector<Schedule> per_mark);
    static CompensatorSpec local_time(std::size_t refine = 100);

    const Schedule& intensity_of(std::size_t e) const { return intensity.size() == 1 ? intensity[0] : intensity[e]; }
    /// Validates non-negativity and boundedness of the intensity on [0, horizon].
    void validate(const MarkSpace& marks, double horizon) const;
};

struct Mark {
    std::size_t index = 0;
    double value = 0.0;
};

struct MppEvent {
    double time = 0.0;
    Mark mark;
};

struct MppPath {
    std::vector<MppEvent> events;

    /// N_t: number of events with time <= t.
    std::size_t count(double t) const;
    std::size_t count(double t, std::size_t mark) const;
};

// Node-measurable scenario data. Immutable after construction; safe to share.
struct PathBundle {
    TimeGrid grid;
    MarkSpace marks;
    CompensatorKind kind = CompensatorKind::constant_intensity;
    MarkerKind marker = MarkerKind::finite;
    std::size_t paths = 0;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    std::optional<int> population;

    std::vector<double> dw;         // [paths][steps][dim]
    std::vector<double> w;          // [paths][nodes][dim], cumulative
    std::vector<MppPath> mpp;       // [paths]
    std::vector<double> clock;      // [paths][nodes], A at nodes
    std::vector<double> comp;       // [paths][steps][marks], realised compensator mass per interval
    std::vector<double> comp_pred;  // [paths][steps][marks], F_{t_i}-measurable compensator mass
    std::vector<int> counts;        // [paths][nodes][marks], N_t(e) at nodes
    std::vector<double> stock;      // optional [paths][nodes]

    std::size_t steps() const noexcept { return grid.steps(); }
    std::size_t nodes() const noexcept { return grid.size(); }
    std::size_t mark_count() const noexcept { return marks.size(); }

    double dW(std::size_t p, std::size_t i, std::size_t k) const { return dw[(p * steps() + i) * dim + k]; }
    double W(std::size_t p, std::size_t i, std::size_t k) const { return w[(p * nodes() + i) * dim + k]; }
    double A(std::size_t p, std::size_t i) const { return clock[p * nodes() + i]; }
    double dA(std::size_t p, std::size_t i) const { return A(p, i + 1) - A(p, i); }
    double nu(std::size_t p, std::size_t i, std::size_t e) const { return comp[(p * steps() + i) * mark_count() + e]; }
    double nu_pred(std::size_t p, std::size_t i, std::size_t e) const {
        return comp_pred[(p * steps() + i) * mark_count() + e];
    }
    int N(std::size_t p, std::size_t i, std::size_t e) const { return counts[(p * nodes() + i) * mark_count() + e]; }
    int N(std::size_t p, std::size_t i) const;
    /// Jumps of mark e in (t_i, t_{i+1}].
    int dN(std::size_t p, std::size_t i, std::size_t e) const { return N(p, i + 1, e) - N(p, i, e); }
    /// Compensated jump count over (t_i, t_{i+1}].
    double dq(std::size_t p, std::size_t i, std::size_t e) const { return dN(p, i, e) - nu(p, i, e); }
    /// n - N_t for population bundles.
    int survivors(std::size_t p, std::size_t i) const;
    bool has_stock() const noexcept { return !stock.empty(); }
    double S(std::size_t p, std::size_t i) const { return stock[p * nodes() + i]; }

    /// Checks the structural invariants: sizes, A non-decreasing from 0, N integer non-decreasing from 0.
    void validate() const;
};

/// Per-path random engine derived from (seed, path index).
std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path, std::uint64_t stream = 0);

/// Ogata thinning with a per-interval constant envelope; deterministic given the seed.
PathBundle simulate_bundle(const CompensatorSpec& spec, const MarkSpace& marks, const TimeGrid& grid,
                           std::size_t paths, std::size_t dim, std::uint64_t seed);

struct LocalTimeBundle {
    PathBundle bundle;
    std::vector<double> local_time_T;  // unstopped L_T per path
    double increase_fraction = 0.0;    // share of fine steps on which L increased
};

/// Clock A = L_{t ^ R} from a Tanaka approximation of Brownian local time at zero,
/// with a single jump at R, the first time L crosses an independent Exp(1) level.
LocalTimeBundle simulate_local_time_clock(const TimeGrid& grid, std::size_t paths, std::uint64_t seed,
                                          std::size_t refine = 100, std::size_t dim = 1);

using MarkIntegrand = std::function<double(double t, const Mark& e)>;

/// sum over jumps of C(T_n, z_n) minus the discrete compensator sum over intervals.
double compensated_integral(const PathBundle& bundle, std::size_t path, const MarkIntegrand& integrand);

struct SampleStats {
    double mean = 0.0;
    double std_error = 0.0;
};
SampleStats sample_stats(std::span<const double> values);

enum class Measure { clock, time, jump };

/// Closed node index range [first, last]; covers the intervals first .. last-1.
struct NodeRange {
    std::size_t first = 0;
    std::size_t last = 0;
};

struct NormEstimate {
    double value = 0.0;  // left-endpoint estimate
    double left = 0.0;
    double right = 0.0;
    bool endpoints_disagree = false;  // |left - right| > 10% of the larger
};

/// Monte Carlo estimate of E int e^{beta (A_s [+ s])} |X_s|^2 dmu_s over `range`.
/// `values` is node-valued [paths][nodes], interval-valued [paths][steps], or for
/// Measure::jump interval-valued per mark [paths][steps][marks].
NormEstimate weighted_norm(const PathBundle& bundle, std::span<const double> values, double beta, Measure measure,
                           bool time_in_weight, NodeRange range);
NormEstimate weighted_norm(const PathBundle& bundle, std::span<const double> values, double beta, Measure measure,
                           bool time_in_weight = false);

/// E int_a^b e^{beta (A_s + s)} (dA_s + ds), exact given the clock at nodes.
double expected_weight_integral(const PathBundle& bundle, double beta, NodeRange range);

struct AssumptionReport {
    double max_clock_jump = 0.0;
    double exp_beta_clock = 0.0;        // E[e^{beta A_T}]
    double weighted_clock_integral = 0.0;  // E int_0^T e^{beta (A+s)} (dA + ds)
    bool finite = true;
};

AssumptionReport check_assumptions(const PathBundle& bundle, double beta);

}  // namespace mrbsde
