#include "mrbsde/scenario.hpp"

#include "mrbsde/errors.hpp"
#include "mrbsde/parallel.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace mrbsde {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// expm1(x)/x, continuous at 0.
double phi1(double x) {
    if (std::abs(x) < 1e-10) return 1.0 + 0.5 * x;
    return std::expm1(x) / x;
}

// int_{t_i}^{t_{i+1}} e^{beta (A_s + tw s)} dmu_s with A linear between nodes;
// dmu = dA when `clock` is true, ds otherwise.
double interval_weight(double beta, double a0, double a1, double t0, double t1, bool time_in_weight, bool clock) {
    const double dt = t1 - t0;
    const double da = a1 - a0;
    const double tw = time_in_weight ? 1.0 : 0.0;
    const double base = std::exp(beta * (a0 + tw * t0));
    const double growth = beta * (da + tw * dt);
    const double integral = base * phi1(growth);
    return (clock ? da : dt) * integral;
}

void check_intensity_values(const Schedule& s, double horizon) {
    const double hi = s.sup(0.0, horizon);
    const double lo = s.inf(0.0, horizon);
    if (!std::isfinite(hi)) throw ConfigError("intensity envelope is unbounded on [0, T]");
    if (lo < 0.0 && s.kind() != Schedule::Kind::custom)
        throw ConfigError("intensity must be non-negative on [0, T]");
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw ConfigError("time grid needs at least two nodes");
    if (nodes_.front() != 0.0) throw ConfigError("time grid must start at 0");
    for (std::size_t i = 1; i < nodes_.size(); ++i)
        if (!(nodes_[i] > nodes_[i - 1])) throw ConfigError("time grid must be strictly increasing");
}

TimeGrid build_grid(double horizon, std::size_t steps, Refinement refinement) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("grid horizon must be positive");
    if (steps == 0) throw ConfigError("grid needs at least one step");
    std::vector<double> nodes(steps + 1);
    if (refinement == Refinement::uniform) {
        for (std::size_t i = 0; i <= steps; ++i) nodes[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    } else {
        constexpr double ratio = 0.95;
        double total = 0.0;
        std::vector<double> widths(steps);
        for (std::size_t i = 0; i < steps; ++i) total += widths[i] = std::pow(ratio, static_cast<double>(i));
        nodes[0] = 0.0;
        for (std::size_t i = 0; i < steps; ++i) nodes[i + 1] = nodes[i] + horizon * widths[i] / total;
    }
    nodes.back() = horizon;
    return TimeGrid(std::move(nodes));
}

MarkSpace::MarkSpace(std::vector<std::string> labels, std::vector<double> probabilities)
    : labels_(std::move(labels)), probs_(std::move(probabilities)) {
    if (labels_.empty()) throw ConfigError("mark space must be non-empty");
    if (labels_.size() != probs_.size()) throw ConfigError("mark space: labels and probabilities differ in length");
    std::set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) throw ConfigError("mark space: labels must be unique");
    double total = 0.0;
    for (double p : probs_) {
        if (!(p > 0.0 && p <= 1.0)) throw ConfigError("mark space: probabilities must lie in (0, 1]");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mark space: probabilities must sum to 1");
}

std::size_t MarkSpace::index_of(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw ConfigError("unknown mark label '" + label + "'");
    return static_cast<std::size_t>(it - labels_.begin());
}

CompensatorSpec CompensatorSpec::constant(double lambda) {
    CompensatorSpec s;
    s.kind = CompensatorKind::constant_intensity;
    s.intensity = {Schedule::constant(lambda)};
    return s;
}

CompensatorSpec CompensatorSpec::time_varying(std::vector<Schedule> per_mark) {
    CompensatorSpec s;
    s.kind = CompensatorKind::time_varying_intensity;
    s.intensity = std::move(per_mark);
    return s;
}

CompensatorSpec CompensatorSpec::population_mortality(int n, std::vector<Schedule> per_mark) {
    CompensatorSpec s;
    s.kind = CompensatorKind::population_mortality;
    s.population = n;
    s.intensity = std::move(per_mark);
    return s;
}

CompensatorSpec CompensatorSpec::local_time(std::size_t refine) {
    CompensatorSpec s;
    s.kind = CompensatorKind::local_time_clock;
    s.local_time_refine = refine;
    return s;
}

void CompensatorSpec::validate(const MarkSpace& marks, double horizon) const {
    if (kind == CompensatorKind::local_time_clock) {
        if (marks.size() != 1) throw ConfigError("local-time clock requires a single-mark space");
        if (local_time_refine == 0) throw ConfigError("local-time refinement must be positive");
        return;
    }
    if (intensity.empty()) throw ConfigError("compensator needs an intensity");
    if (intensity.size() != 1 && intensity.size() != marks.size())
        throw ConfigError("compensator needs one intensity or one per mark");
    for (const auto& s : intensity) check_intensity_values(s, horizon);
    if (kind == CompensatorKind::population_mortality && population < 0)
        throw ConfigError("population must be non-negative");
    if (marker == MarkerKind::gaussian && marks.size() != 1)
        throw ConfigError("gaussian marker requires a single-label mark space");
    if ((marker == MarkerKind::stock_value || simulate_stock) && !(stock.s0 > 0.0))
        throw ConfigError("stock marker needs a positive initial value");
}

std::size_t MppPath::count(double t) const {
    return static_cast<std::size_t>(
        std::upper_bound(events.begin(), events.end(), t, [](double v, const MppEvent& ev) { return v < ev.time; }) -
        events.begin());
}

std::size_t MppPath::count(double t, std::size_t mark) const {
    return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [&](const MppEvent& ev) {
        return ev.time <= t && ev.mark.index == mark;
    }));
}

int PathBundle::N(std::size_t p, std::size_t i) const {
    int total = 0;
    for (std::size_t e = 0; e < mark_count(); ++e) total += N(p, i, e);
    return total;
}

int PathBundle::survivors(std::size_t p, std::size_t i) const {
    if (!population) throw ConfigError("bundle has no population");
    return *population - N(p, i);
}

void PathBundle::validate() const {
    const std::size_t m = steps();
    const std::size_t E = mark_count();
    if (paths == 0) throw ConfigError("bundle has no paths");
    if (dw.size() != paths * m * dim || w.size() != paths * (m + 1) * dim || mpp.size() != paths ||
        clock.size() != paths * (m + 1) || comp.size() != paths * m * E || comp_pred.size() != paths * m * E ||
        counts.size() != paths * (m + 1) * E || (!stock.empty() && stock.size() != paths * (m + 1)))
        throw ConfigError("bundle arrays are not dimension-consistent");
    for (std::size_t p = 0; p < paths; ++p) {
        if (A(p, 0) != 0.0) throw ConfigError("clock must start at 0");
        for (std::size_t i = 0; i < m; ++i)
            if (A(p, i + 1) < A(p, i)) throw ConfigError("clock must be non-decreasing");
        for (std::size_t e = 0; e < E; ++e) {
            if (N(p, 0, e) != 0) throw ConfigError("counting process must start at 0");
            for (std::size_t i = 0; i < m; ++i)
                if (N(p, i + 1, e) < N(p, i, e)) throw ConfigError("counting process must be non-decreasing");
        }
        const auto& ev = mpp[p].events;
        for (std::size_t k = 1; k < ev.size(); ++k)
            if (!(ev[k].time > ev[k - 1].time)) throw ConfigError("event times must be strictly increasing");
    }
    for (double x : dw)
        if (!std::isfinite(x)) throw NumericError("non-finite Brownian increment");
}

std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path, std::uint64_t stream) {
    const std::uint64_t k = splitmix64(splitmix64(seed) ^ splitmix64(path * 0x632be59bd9b4e019ULL + stream));
    std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

namespace {

PathBundle allocate(const MarkSpace& marks, const TimeGrid& grid, std::size_t paths, std::size_t dim,
                    std::uint64_t seed) {
    if (paths == 0) throw ConfigError("number of paths must be at least 1");
    PathBundle b;
    b.grid = grid;
    b.marks = marks;
    b.paths = paths;
    b.dim = dim;
    b.seed = seed;
    const std::size_t m = grid.steps();
    const std::size_t E = marks.size();
    b.dw.assign(paths * m * dim, 0.0);
    b.w.assign(paths * (m + 1) * dim, 0.0);
    b.mpp.assign(paths, {});
    b.clock.assign(paths * (m + 1), 0.0);
    b.comp.assign(paths * m * E, 0.0);
    b.comp_pred.assign(paths * m * E, 0.0);
    b.counts.assign(paths * (m + 1) * E, 0);
    return b;
}

void fill_brownian(PathBundle& b, std::size_t p, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t m = b.steps();
    for (std::size_t i = 0; i < m; ++i) {
        const double sd = std::sqrt(b.grid.step(i));
        for (std::size_t k = 0; k < b.dim; ++k) {
            const double inc = sd * normal(rng);
            b.dw[(p * m + i) * b.dim + k] = inc;
            b.w[(p * (m + 1) + i + 1) * b.dim + k] = b.w[(p * (m + 1) + i) * b.dim + k] + inc;
        }
    }
}

void fill_counts(PathBundle& b, std::size_t p) {
    const std::size_t m = b.steps();
    const std::size_t E = b.mark_count();
    const auto& ev = b.mpp[p].events;
    std::size_t k = 0;
    std::vector<int> running(E, 0);
    for (std::size_t i = 0; i <= m; ++i) {
        while (k < ev.size() && ev[k].time <= b.grid[i]) {
            ++running[ev[k].mark.index];
            ++k;
        }
        for (std::size_t e = 0; e < E; ++e) b.counts[(p * (m + 1) + i) * E + e] = running[e];
    }
}

double stock_marker_value(const CompensatorSpec& spec, const PathBundle& b, std::size_t p, std::size_t i) {
    const auto& s = spec.stock;
    const double t = b.grid[i];
    const double w = s.coordinate < b.dim ? b.W(p, i, s.coordinate) : 0.0;
    return s.s0 * std::exp((s.drift - 0.5 * s.vol * s.vol) * t + s.vol * w);
}

void simulate_intensity_path(const CompensatorSpec& spec, PathBundle& b, std::size_t p, std::mt19937_64& rng) {
    const std::size_t m = b.steps();
    const std::size_t E = b.mark_count();
    const bool population = spec.kind == CompensatorKind::population_mortality;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    int alive = population ? spec.population : 0;
    auto& events = b.mpp[p].events;
    std::vector<double> rate(E);

    for (std::size_t i = 0; i < m; ++i) {
        const double t0 = b.grid[i];
        const double t1 = b.grid[i + 1];
        const int alive_at_start = alive;
        double t = t0;
        // Thinning against a constant envelope on (t0, t1]; restarted after each
        // accepted jump because the population envelope can only shrink.
        while (true) {
            const double factor = population ? static_cast<double>(alive) : 1.0;
            double envelope = 0.0;
            for (std::size_t e = 0; e < E; ++e)
                envelope += factor * spec.intensity_of(e).sup(t, t1) * b.marks.probability(e);
            if (!(envelope > 0.0)) break;
            t += std::exponential_distribution<double>(envelope)(rng);
            if (t > t1) break;
            double total = 0.0;
            for (std::size_t e = 0; e < E; ++e) {
                rate[e] = factor * std::max(0.0, spec.intensity_of(e)(t)) * b.marks.probability(e);
                total += rate[e];
            }
            if (uniform(rng) * envelope > total) continue;
            double pick = uniform(rng) * total;
            std::size_t mark = 0;
            while (mark + 1 < E && pick >= rate[mark]) pick -= rate[mark++];
            Mark mk{mark, static_cast<double>(mark)};
            if (spec.marker == MarkerKind::gaussian) mk.value = normal(rng);
            if (spec.marker == MarkerKind::stock_value) mk.value = stock_marker_value(spec, b, p, i);
            events.push_back({t, mk});
            if (population) --alive;
        }

        // Compensator mass per mark: exact integral of lambda, with the population
        // factor piecewise constant between the interval's jumps.
        for (std::size_t e = 0; e < E; ++e) {
            const auto& lam = spec.intensity_of(e);
            const double pe = b.marks.probability(e);
            double mass = 0.0;
            double pred = pe * lam.integral(t0, t1);
            if (population) {
                pred *= alive_at_start;
                int n_alive = alive_at_start;
                double lo = t0;
                for (const auto& ev : events) {
                    if (ev.time <= t0 || ev.time > t1) continue;
                    mass += n_alive * pe * lam.integral(lo, ev.time);
                    lo = ev.time;
                    --n_alive;
                }
                mass += n_alive * pe * lam.integral(lo, t1);
            } else {
                mass = pred;
            }
            b.comp[(p * m + i) * E + e] = mass;
            b.comp_pred[(p * m + i) * E + e] = pred;
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        double da = 0.0;
        for (std::size_t e = 0; e < E; ++e) da += b.comp[(p * m + i) * E + e];
        b.clock[p * (m + 1) + i + 1] = b.clock[p * (m + 1) + i] + da;
    }
}

}  // namespace

PathBundle simulate_bundle(const CompensatorSpec& spec, const MarkSpace& marks, const TimeGrid& grid,
                           std::size_t paths, std::size_t dim, std::uint64_t seed) {
    if (spec.kind == CompensatorKind::local_time_clock) {
        if (marks.size() != 1) throw ConfigError("local-time clock requires a single-mark space");
        auto lt = simulate_local_time_clock(grid, paths, seed, spec.local_time_refine, dim);
        lt.bundle.marks = marks;
        return std::move(lt.bundle);
    }
    spec.validate(marks, grid.horizon());
    PathBundle b = allocate(marks, grid, paths, dim, seed);
    b.kind = spec.kind;
    b.marker = spec.marker;
    if (spec.kind == CompensatorKind::population_mortality) b.population = spec.population;
    if (spec.simulate_stock || spec.marker == MarkerKind::stock_value) {
        if (spec.stock.coordinate >= dim) throw ConfigError("stock coordinate exceeds the Brownian dimension");
        b.stock.assign(paths * grid.size(), 0.0);
    }

    parallel_for(paths, [&](std::size_t p) {
        auto rng = path_engine(seed, p);
        fill_brownian(b, p, rng);
        if (!b.stock.empty())
            for (std::size_t i = 0; i <= b.steps(); ++i) b.stock[p * b.nodes() + i] = stock_marker_value(spec, b, p, i);
        simulate_intensity_path(spec, b, p, rng);
        fill_counts(b, p);
    });
    return b;
}

LocalTimeBundle simulate_local_time_clock(const TimeGrid& grid, std::size_t paths, std::uint64_t seed,
                                          std::size_t refine, std::size_t dim) {
    if (refine == 0) throw ConfigError("local-time refinement must be positive");
    LocalTimeBundle out;
    PathBundle& b = out.bundle;
    b = allocate(MarkSpace::single(), grid, paths, dim, seed);
    b.kind = CompensatorKind::local_time_clock;
    b.marker = MarkerKind::finite;
    out.local_time_T.assign(paths, 0.0);
    std::vector<std::size_t> increases(paths, 0);
    const std::size_t m = grid.steps();

    parallel_for(paths, [&](std::size_t p) {
        auto rng = path_engine(seed, p);
        fill_brownian(b, p, rng);
        // B is independent of W and lives on its own stream.
        auto brng = path_engine(seed, p, 1);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double level = std::exponential_distribution<double>(1.0)(brng);

        double B = 0.0;
        double ito = 0.0;  // int sign(B_s) dB_s, left-point
        double L = 0.0;
        double t = 0.0;
        bool jumped = false;
        for (std::size_t i = 0; i < m; ++i) {
            const double dt = grid.step(i) / static_cast<double>(refine);
            const double sd = std::sqrt(dt);
            for (std::size_t k = 0; k < refine; ++k) {
                const double dB = sd * normal(brng);
                const double sign = B > 0.0 ? 1.0 : (B < 0.0 ? -1.0 : 0.0);
                ito += sign * dB;
                B += dB;
                const double raw = std::abs(B) - ito;
                const double next = std::max(L, raw);
                if (next > L) ++increases[p];
                if (!jumped && next >= level) {
                    // Crossing time by linear interpolation inside the fine step.
                    const double frac = next > L ? (level - L) / (next - L) : 1.0;
                    b.mpp[p].events.push_back({t + frac * dt, Mark{0, 0.0}});
                    jumped = true;
                }
                L = next;
                t += dt;
            }
            const double a = std::min(L, level);
            b.clock[p * (m + 1) + i + 1] = a;
            const double da = a - b.clock[p * (m + 1) + i];
            b.comp[p * m + i] = da;
            b.comp_pred[p * m + i] = da;
        }
        // Keep the event inside (0, T] despite rounding in the accumulated time.
        if (jumped) b.mpp[p].events.back().time = std::min(b.mpp[p].events.back().time, grid.horizon());
        out.local_time_T[p] = L;
        fill_counts(b, p);
    });
    const double total_steps = static_cast<double>(paths) * static_cast<double>(m * refine);
    out.increase_fraction =
        static_cast<double>(std::accumulate(increases.begin(), increases.end(), std::size_t{0})) / total_steps;
    return out;
}

double compensated_integral(const PathBundle& b, std::size_t path, const MarkIntegrand& C) {
    double jumps = 0.0;
    for (const auto& ev : b.mpp[path].events) jumps += C(ev.time, ev.mark);

    const std::size_t m = b.steps();
    const std::size_t E = b.mark_count();
    double compensator = 0.0;
    if (b.marker == MarkerKind::gaussian) {
        // phi(de) = standard normal density on the marker value.
        const boost::math::normal_distribution<double> nd;
        auto mixed = [&](double t) {
            auto f = [&](double z) { return C(t, Mark{0, z}) * boost::math::pdf(nd, z); };
            return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                f, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 8, 1e-12);
        };
        double left = mixed(b.grid[0]);
        for (std::size_t i = 0; i < m; ++i) {
            const double right = mixed(b.grid[i + 1]);
            compensator += 0.5 * (left + right) * b.dA(path, i);
            left = right;
        }
    } else if (b.marker == MarkerKind::stock_value) {
        // phi(de) = delta at S(t-), frozen at the interval's left node.
        for (std::size_t i = 0; i < m; ++i) {
            double s = b.has_stock() ? b.S(path, i) : 0.0;
            for (const auto& ev : b.mpp[path].events)
                if (ev.time > b.grid[i] && ev.time <= b.grid[i + 1]) s = ev.mark.value;
            const Mark mk{0, s};
            compensator += 0.5 * (C(b.grid[i], mk) + C(b.grid[i + 1], mk)) * b.dA(path, i);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t e = 0; e < E; ++e) {
                const Mark mk{e, static_cast<double>(e)};
                compensator += 0.5 * (C(b.grid[i], mk) + C(b.grid[i + 1], mk)) * b.nu(path, i, e);
            }
    }
    return jumps - compensator;
}

SampleStats sample_stats(std::span<const double> values) {
    SampleStats s;
    if (values.empty()) return s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std_error = std::sqrt(ss / (n - 1.0) / n);
    }
    return s;
}

NormEstimate weighted_norm(const PathBundle& b, std::span<const double> values, double beta, Measure measure,
                           bool time_in_weight, NodeRange range) {
    if (beta < 0.0) throw ConfigError("weighted norm needs beta >= 0");
    const std::size_t J = b.paths;
    const std::size_t m = b.steps();
    const std::size_t E = b.mark_count();
    if (range.last > m || range.first > range.last) throw ConfigError("weighted norm: node range outside the grid");

    bool node_valued = false;
    if (measure == Measure::jump) {
        if (values.size() != J * m * E) throw ConfigError("weighted norm: jump values must be [paths][steps][marks]");
    } else if (values.size() == J * (m + 1)) {
        node_valued = true;
    } else if (values.size() != J * m) {
        throw ConfigError("weighted norm: values must be [paths][nodes] or [paths][steps]");
    }

    double left = 0.0;
    double right = 0.0;
    for (std::size_t p = 0; p < J; ++p) {
        for (std::size_t i = range.first; i < range.last; ++i) {
            const double a0 = b.A(p, i);
            const double a1 = b.A(p, i + 1);
            const double t0 = b.grid[i];
            const double t1 = b.grid[i + 1];
            if (measure == Measure::jump) {
                const double da = a1 - a0;
                if (!(da > 0.0)) continue;
                const double weight = interval_weight(beta, a0, a1, t0, t1, time_in_weight, true) / da;
                double acc = 0.0;
                for (std::size_t e = 0; e < E; ++e) {
                    const double u = values[(p * m + i) * E + e];
                    acc += u * u * b.nu(p, i, e);
                }
                left += weight * acc;
                right += weight * acc;
                continue;
            }
            const double weight = interval_weight(beta, a0, a1, t0, t1, time_in_weight, measure == Measure::clock);
            if (node_valued) {
                const double xl = values[p * (m + 1) + i];
                const double xr = values[p * (m + 1) + i + 1];
                left += weight * xl * xl;
                right += weight * xr * xr;
            } else {
                const double x = values[p * m + i];
                left += weight * x * x;
                right += weight * x * x;
            }
        }
    }
    NormEstimate est;
    est.left = left / static_cast<double>(J);
    est.right = right / static_cast<double>(J);
    est.value = est.left;
    const double scale = std::max(std::abs(est.left), std::abs(est.right));
    est.endpoints_disagree = scale > 0.0 && std::abs(est.left - est.right) > 0.1 * scale;
    if (!std::isfinite(est.value)) throw NumericError("weighted norm is not finite");
    return est;
}

NormEstimate weighted_norm(const PathBundle& b, std::span<const double> values, double beta, Measure measure,
                           bool time_in_weight) {
    return weighted_norm(b, values, beta, measure, time_in_weight, NodeRange{0, b.steps()});
}

double expected_weight_integral(const PathBundle& b, double beta, NodeRange range) {
    double total = 0.0;
    const double ta = b.grid[range.first];
    const double tb = b.grid[range.last];
    for (std::size_t p = 0; p < b.paths; ++p) {
        const double xa = b.A(p, range.first) + ta;
        const double xb = b.A(p, range.last) + tb;
        // int e^{beta X} dX with X = A + s continuous and increasing.
        total += std::exp(beta * xa) * (xb - xa) * phi1(beta * (xb - xa));
    }
    return total / static_cast<double>(b.paths);
}

AssumptionReport check_assumptions(const PathBundle& b, double beta) {
    AssumptionReport r;
    const std::size_t m = b.steps();
    double exp_sum = 0.0;
    for (std::size_t p = 0; p < b.paths; ++p) {
        for (std::size_t i = 0; i < m; ++i) r.max_clock_jump = std::max(r.max_clock_jump, b.dA(p, i));
        exp_sum += std::exp(beta * b.A(p, m));
    }
    r.exp_beta_clock = exp_sum / static_cast<double>(b.paths);
    r.weighted_clock_integral = expected_weight_integral(b, beta, NodeRange{0, m});
    r.finite = std::isfinite(r.exp_beta_clock) && std::isfinite(r.weighted_clock_integral);
    return r;
}

}  // namespace mrbsde
