#include "mrbsde/reflection.hpp"

#include "mrbsde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mrbsde {

LossSpec LossSpec::linear(double slope, Schedule offset) {
    if (!(slope > 0.0) || !std::isfinite(slope)) throw ConfigError("linear loss needs a positive slope");
    LossSpec l;
    l.kind = Kind::linear;
    l.fn = [slope, offset](double t, double y) { return slope * y - offset(t); };
    l.kappa_lower = slope;
    l.kappa_upper = slope;
    l.offset = offset;
    std::ostringstream os;
    os << "linear(slope " << slope << ", offset " << offset.describe() << ")";
    l.name = os.str();
    return l;
}

LossSpec LossSpec::shifted_sine(double slope, double amplitude, Schedule offset) {
    if (!(slope > std::abs(amplitude))) throw ConfigError("shifted-sine loss needs slope > |amplitude|");
    LossSpec l;
    l.kind = Kind::shifted_sine;
    l.fn = [slope, amplitude, offset](double t, double y) { return slope * y + amplitude * std::sin(y) - offset(t); };
    l.kappa_lower = slope - std::abs(amplitude);
    l.kappa_upper = slope + std::abs(amplitude);
    l.offset = offset;
    l.amplitude = amplitude;
    std::ostringstream os;
    os << "shifted_sine(slope " << slope << ", amplitude " << amplitude << ", offset " << offset.describe() << ")";
    l.name = os.str();
    return l;
}

LossSpec LossSpec::custom(std::function<double(double, double)> fn, double kappa_lower, double kappa_upper,
                          double growth, std::string name) {
    if (!fn) throw ConfigError("custom loss needs a function");
    LossSpec l;
    l.kind = Kind::custom;
    l.fn = std::move(fn);
    l.kappa_lower = kappa_lower;
    l.kappa_upper = kappa_upper;
    l.growth = growth;
    l.name = std::move(name);
    if (!(kappa_lower > 0.0) || kappa_upper < kappa_lower) throw ConfigError("loss needs 0 < kappa_lower <= kappa_upper");
    return l;
}

double LossSpec::growth_bound(double horizon) const {
    if (kind == Kind::custom) return growth;
    const double off = std::max(std::abs(offset.sup(0.0, horizon)), std::abs(offset.inf(0.0, horizon)));
    return std::max(kappa_upper, std::abs(amplitude) + off);
}

void LossSpec::validate(double horizon) const {
    const double C = growth_bound(horizon);
    if (!(kappa_lower > 0.0)) throw ConfigError("loss: kappa_lower must be positive");
    if (kappa_upper < kappa_lower) throw ConfigError("loss: kappa_upper must be >= kappa_lower");
    const double slack = 1e-9;
    for (int k = 0; k <= 8; ++k) {
        const double t = horizon * k / 8.0;
        for (int a = -20; a <= 20; ++a) {
            const double y1 = 0.5 * a;
            const double y2 = y1 + 0.37;
            const double l1 = fn(t, y1);
            const double l2 = fn(t, y2);
            if (!std::isfinite(l1) || !std::isfinite(l2)) throw NumericError("loss evaluates to a non-finite value");
            if (!(l2 > l1)) throw ConfigError("loss must be strictly increasing in y");
            const double slope = (l2 - l1) / (y2 - y1);
            if (slope < kappa_lower * (1 - slack) - slack || slope > kappa_upper * (1 + slack) + slack)
                throw ConfigError("loss violates its declared bi-Lipschitz bounds");
            if (std::abs(l1) > C * (1.0 + std::abs(y1)) * (1 + slack) + slack)
                throw ConfigError("loss violates its declared linear growth bound");
        }
    }
}

double lipschitz_ratio(const LossSpec& loss) {
    if (!(loss.kappa_lower > 0.0)) throw ConfigError("kappa_lower must be positive");
    return loss.kappa_upper / loss.kappa_lower;
}

double default_tolerance(std::span<const double> sample) {
    double scale = 1.0;
    for (double v : sample) scale = std::max(scale, std::abs(v));
    return 1e-8 * scale;
}

double mean_loss(const LossSpec& loss, double t, std::span<const double> sample) {
    if (sample.empty()) throw ConfigError("empty sample");
    double acc = 0.0;
    for (double v : sample) acc += loss(t, v);
    const double m = acc / static_cast<double>(sample.size());
    if (!std::isfinite(m)) throw NumericError("loss evaluation is not finite");
    return m;
}

double eval_L(const LossSpec& loss, double t, std::span<const double> sample, double tol) {
    if (!(tol > 0.0)) throw ConfigError("eval_L needs a positive tolerance");
    auto g = [&](double x) {
        double acc = 0.0;
        for (double v : sample) acc += loss(t, x + v);
        const double m = acc / static_cast<double>(sample.size());
        if (!std::isfinite(m)) throw NumericError("loss evaluation is not finite");
        return m;
    };
    if (sample.empty()) throw ConfigError("empty sample");
    if (g(0.0) >= 0.0) return 0.0;
    double lo = 0.0;
    double hi = 1.0;
    int doublings = 0;
    while (g(hi) < 0.0) {
        if (++doublings > 64) throw AssumptionError("eval_L: no bracket found within 64 doublings");
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (g(mid) >= 0.0)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

double eval_L(const LossSpec& loss, double t, std::span<const double> sample) {
    return eval_L(loss, t, sample, default_tolerance(sample));
}

double eval_es(std::span<const double> sample, double alpha) {
    if (sample.empty()) throw ConfigError("expected shortfall of an empty sample");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("expected shortfall level must lie in (0, 1)");
    const std::size_t J = sample.size();
    const double n = static_cast<double>(J);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::floor(alpha * n)), J - 1);
    std::vector<double> lowest(sample.begin(), sample.end());
    std::partial_sort(lowest.begin(), lowest.begin() + static_cast<std::ptrdiff_t>(k + 1), lowest.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += lowest[i];
    const double frac = std::max(0.0, alpha - static_cast<double>(k) / n);
    const double tail = acc / n + frac * lowest[k];
    return -tail / alpha;
}

RiskMeasureSpec RiskMeasureSpec::expected_shortfall(Schedule alpha, Schedule benchmark) {
    RiskMeasureSpec r;
    r.kind = Kind::expected_shortfall;
    r.alpha = std::move(alpha);
    r.benchmark = std::move(benchmark);
    return r;
}

RiskMeasureSpec RiskMeasureSpec::make_custom(std::function<double(double, std::span<const double>)> rho, double kappa,
                                             Schedule benchmark) {
    if (!rho) throw ConfigError("custom risk measure needs a function");
    if (!(kappa > 0.0)) throw ConfigError("custom risk measure needs a declared Lipschitz constant");
    RiskMeasureSpec r;
    r.kind = Kind::custom;
    r.custom = std::move(rho);
    r.custom_kappa = kappa;
    r.benchmark = std::move(benchmark);
    return r;
}

double RiskMeasureSpec::rho(double t, std::span<const double> sample) const {
    if (kind == Kind::expected_shortfall) return eval_es(sample, alpha(t));
    const double v = custom(t, sample);
    if (!std::isfinite(v)) throw NumericError("risk measure is not finite");
    return v;
}

double RiskMeasureSpec::kappa(double horizon) const {
    if (kind == Kind::custom) return custom_kappa;
    // ES is Lipschitz in L^1 with constant 1 / alpha.
    return 1.0 / alpha.inf(0.0, horizon);
}

void RiskMeasureSpec::validate(double horizon) const {
    if (kind == Kind::expected_shortfall) {
        if (!(alpha.inf(0.0, horizon) > 0.0) || !(alpha.sup(0.0, horizon) < 1.0))
            throw ConfigError("expected shortfall level must lie in (0, 1) on [0, T]");
    } else {
        if (!custom) throw ConfigError("custom risk measure needs a function");
        const std::vector<double> zero(4, 0.0);
        if (std::abs(custom(0.0, zero)) > 1e-12) throw ConfigError("custom risk measure must satisfy rho(0) = 0");
    }
    if (!std::isfinite(benchmark.sup(0.0, horizon))) throw ConfigError("benchmark must be bounded");
}

double eval_rho_reflection(const RiskMeasureSpec& rm, double t, std::span<const double> sample) {
    return std::max(0.0, rm.rho(t, sample) - rm.benchmark(t));
}

double LossConstraint::level(double t, std::span<const double> sample) const {
    return eval_L(loss_, t, sample, tolerance(sample));
}

double LossConstraint::margin(double t, std::span<const double> sample) const { return mean_loss(loss_, t, sample); }

double LossConstraint::margin_std_error(double t, std::span<const double> sample) const {
    if (sample.size() < 2) return 0.0;
    const double m = mean_loss(loss_, t, sample);
    double ss = 0.0;
    for (double v : sample) {
        const double d = loss_(t, v) - m;
        ss += d * d;
    }
    const double n = static_cast<double>(sample.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

double LossConstraint::tolerance(std::span<const double> sample) const {
    return tol_ > 0.0 ? tol_ : default_tolerance(sample);
}

double RiskConstraint::level(double t, std::span<const double> sample) const {
    return eval_rho_reflection(rm_, t, sample);
}

double RiskConstraint::margin(double t, std::span<const double> sample) const {
    return rm_.benchmark(t) - rm_.rho(t, sample);
}

double RiskConstraint::tolerance(std::span<const double> sample) const { return 100.0 * default_tolerance(sample); }

std::string RiskConstraint::describe() const {
    std::ostringstream os;
    if (rm_.kind == RiskMeasureSpec::Kind::expected_shortfall)
        os << "expected_shortfall(alpha " << rm_.alpha.describe() << ", benchmark " << rm_.benchmark.describe() << ")";
    else
        os << "custom_risk(kappa " << rm_.custom_kappa << ", benchmark " << rm_.benchmark.describe() << ")";
    return os.str();
}

}  // namespace mrbsde
