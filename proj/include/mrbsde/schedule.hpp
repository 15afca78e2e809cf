#pragma once

#include <functional>
#include <string>
#include <vector>

namespace mrbsde {

// A deterministic function of time with closed-form suprema and integrals.
// Used for intensities, rates, premiums, benchmarks and loss offsets.
class Schedule {
public:
    enum class Kind { constant, linear, exponential, piecewise, custom };

    Schedule() = default;  // constant zero

    static Schedule constant(double value);
    /// a + b t
    static Schedule linear(double a, double b);
    /// a exp(b t), e.g. a Gompertz hazard.
    static Schedule exponential(double a, double b);
    /// values[k] on [times[k], times[k+1]); times[0] must be 0, last value extends to infinity.
    static Schedule piecewise(std::vector<double> times, std::vector<double> values);
    /// Arbitrary function with a declared bound |fn| <= bound on the horizon of use.
    static Schedule custom(std::function<double(double)> fn, double bound);

    double operator()(double t) const;
    /// Supremum of the function on [a, b].
    double sup(double a, double b) const;
    /// Infimum of the function on [a, b].
    double inf(double a, double b) const;
    /// Integral over [a, b].
    double integral(double a, double b) const;

    Kind kind() const noexcept { return kind_; }
    bool is_constant() const noexcept;
    std::string describe() const;

private:
    Kind kind_ = Kind::constant;
    double a_ = 0.0;
    double b_ = 0.0;
    std::vector<double> times_;
    std::vector<double> values_;
    std::function<double(double)> fn_;
    double bound_ = 0.0;
};

/// Integral of the product of two schedules over [a, b] (adaptive Gauss-Kronrod).
double integrate_product(const Schedule& f, const Schedule& g, double a, double b);

}  // namespace mrbsde
