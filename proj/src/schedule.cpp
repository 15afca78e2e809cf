#include "mrbsde/schedule.hpp"

#include "mrbsde/errors.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <sstream>

namespace mrbsde {

Schedule Schedule::constant(double value) {
    if (!std::isfinite(value)) throw ConfigError("schedule: constant value must be finite");
    Schedule s;
    s.kind_ = Kind::constant;
    s.a_ = value;
    return s;
}

Schedule Schedule::linear(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw ConfigError("schedule: linear coefficients must be finite");
    Schedule s;
    s.kind_ = Kind::linear;
    s.a_ = a;
    s.b_ = b;
    return s;
}

Schedule Schedule::exponential(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw ConfigError("schedule: exponential coefficients must be finite");
    Schedule s;
    s.kind_ = Kind::exponential;
    s.a_ = a;
    s.b_ = b;
    return s;
}

Schedule Schedule::piecewise(std::vector<double> times, std::vector<double> values) {
    if (times.empty() || times.size() != values.size())
        throw ConfigError("schedule: piecewise needs matching non-empty times/values");
    if (times.front() != 0.0) throw ConfigError("schedule: piecewise times must start at 0");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw ConfigError("schedule: piecewise times must be strictly increasing");
    for (double v : values)
        if (!std::isfinite(v)) throw ConfigError("schedule: piecewise values must be finite");
    Schedule s;
    s.kind_ = Kind::piecewise;
    s.times_ = std::move(times);
    s.values_ = std::move(values);
    return s;
}

Schedule Schedule::custom(std::function<double(double)> fn, double bound) {
    if (!fn) throw ConfigError("schedule: custom function is empty");
    if (!std::isfinite(bound) || bound < 0.0)
        throw ConfigError("schedule: custom function needs a finite non-negative bound");
    Schedule s;
    s.kind_ = Kind::custom;
    s.fn_ = std::move(fn);
    s.bound_ = bound;
    return s;
}

double Schedule::operator()(double t) const {
    switch (kind_) {
    case Kind::constant: return a_;
    case Kind::linear: return a_ + b_ * t;
    case Kind::exponential: return a_ * std::exp(b_ * t);
    case Kind::piecewise: {
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const auto k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
        return values_[k];
    }
    case Kind::custom: return fn_(t);
    }
    return 0.0;
}

double Schedule::sup(double a, double b) const {
    switch (kind_) {
    case Kind::constant: return a_;
    case Kind::linear:
    case Kind::exponential: return std::max((*this)(a), (*this)(b));
    case Kind::piecewise: {
        double m = (*this)(a);
        for (std::size_t k = 0; k < times_.size(); ++k)
            if (times_[k] > a && times_[k] <= b) m = std::max(m, values_[k]);
        return m;
    }
    case Kind::custom: return bound_;
    }
    return 0.0;
}

double Schedule::inf(double a, double b) const {
    switch (kind_) {
    case Kind::constant: return a_;
    case Kind::linear:
    case Kind::exponential: return std::min((*this)(a), (*this)(b));
    case Kind::piecewise: {
        double m = (*this)(a);
        for (std::size_t k = 0; k < times_.size(); ++k)
            if (times_[k] > a && times_[k] <= b) m = std::min(m, values_[k]);
        return m;
    }
    case Kind::custom: return -bound_;
    }
    return 0.0;
}

double Schedule::integral(double a, double b) const {
    if (b <= a) return 0.0;
    switch (kind_) {
    case Kind::constant: return a_ * (b - a);
    case Kind::linear: return a_ * (b - a) + 0.5 * b_ * (b * b - a * a);
    case Kind::exponential:
        if (b_ == 0.0) return a_ * (b - a);
        return a_ * std::exp(b_ * a) * std::expm1(b_ * (b - a)) / b_;
    case Kind::piecewise: {
        double total = 0.0;
        for (std::size_t k = 0; k < times_.size(); ++k) {
            const double lo = std::max(a, times_[k]);
            const double hi = k + 1 < times_.size() ? std::min(b, times_[k + 1]) : b;
            if (hi > lo) total += values_[k] * (hi - lo);
        }
        return total;
    }
    case Kind::custom:
        return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn_, a, b, 10, 1e-12);
    }
    return 0.0;
}

bool Schedule::is_constant() const noexcept {
    switch (kind_) {
    case Kind::constant: return true;
    case Kind::linear:
    case Kind::exponential: return b_ == 0.0;
    case Kind::piecewise:
        return std::all_of(values_.begin(), values_.end(), [&](double v) { return v == values_.front(); });
    case Kind::custom: return false;
    }
    return false;
}

std::string Schedule::describe() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
    case Kind::constant: os << "constant(" << a_ << ")"; break;
    case Kind::linear: os << "linear(" << a_ << " + " << b_ << " t)"; break;
    case Kind::exponential: os << "exponential(" << a_ << " exp(" << b_ << " t))"; break;
    case Kind::piecewise: os << "piecewise(" << times_.size() << " pieces)"; break;
    case Kind::custom: os << "custom(bound " << bound_ << ")"; break;
    }
    return os.str();
}

double integrate_product(const Schedule& f, const Schedule& g, double a, double b) {
    if (b <= a) return 0.0;
    if (g.is_constant()) return g(a) * f.integral(a, b);
    if (f.is_constant()) return f(a) * g.integral(a, b);
    auto fn = [&](double t) { return f(t) * g(t); };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn, a, b, 10, 1e-12);
}

}  // namespace mrbsde
