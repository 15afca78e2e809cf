#pragma once

// Running losses, the mean-reflection level L_t, and risk-measure reflections.

#include "mrbsde/schedule.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mrbsde {

/// Deterministic running loss l(t, y), strictly increasing and bi-Lipschitz in y.
struct LossSpec {
    enum class Kind { linear, shifted_sine, custom };

    Kind kind = Kind::linear;
    std::function<double(double, double)> fn;
    double kappa_lower = 1.0;
    double kappa_upper = 1.0;
    double growth = 1.0;  // |l(t,y)| <= growth (1 + |y|); custom losses only
    Schedule offset;       // linear and shifted-sine losses
    double amplitude = 0.0;
    std::string name;

    /// slope * y - offset(t)
    static LossSpec linear(double slope, Schedule offset = Schedule::constant(0.0));
    /// slope * y + amplitude * sin(y) - offset(t); needs slope > |amplitude|.
    static LossSpec shifted_sine(double slope, double amplitude, Schedule offset = Schedule::constant(0.0));
    static LossSpec custom(std::function<double(double, double)> fn, double kappa_lower, double kappa_upper,
                           double growth, std::string name = "custom");

    double operator()(double t, double y) const { return fn(t, y); }
    /// Linear growth constant on [0, horizon].
    double growth_bound(double horizon) const;
    /// Spot-checks monotonicity, the bi-Lipschitz bounds and linear growth on [0, horizon].
    void validate(double horizon) const;
};

/// kappa = kappa_upper / kappa_lower.
double lipschitz_ratio(const LossSpec& loss);

/// Default bisection tolerance: 1e-8 * max(1, max |sample|).
double default_tolerance(std::span<const double> sample);

/// Smallest x >= 0 with mean l(t, x + sample) >= 0, within tol (the returned x always satisfies it).
double eval_L(const LossSpec& loss, double t, std::span<const double> sample, double tol);
double eval_L(const LossSpec& loss, double t, std::span<const double> sample);

/// Mean of l(t, sample).
double mean_loss(const LossSpec& loss, double t, std::span<const double> sample);

/// Empirical expected shortfall at level alpha, computed as the exact quantile integral
/// of the empirical law. VaR_s(X) = -(lower s-quantile).
double eval_es(std::span<const double> sample, double alpha);

struct RiskMeasureSpec {
    enum class Kind { expected_shortfall, custom };

    Kind kind = Kind::expected_shortfall;
    Schedule alpha = Schedule::constant(0.05);
    Schedule benchmark = Schedule::constant(0.0);
    /// Custom translation-invariant measure and its declared Lipschitz constant.
    std::function<double(double, std::span<const double>)> custom;
    double custom_kappa = 1.0;

    static RiskMeasureSpec expected_shortfall(Schedule alpha, Schedule benchmark);
    static RiskMeasureSpec make_custom(std::function<double(double, std::span<const double>)> rho, double kappa,
                                       Schedule benchmark);

    double rho(double t, std::span<const double> sample) const;
    double kappa(double horizon) const;
    void validate(double horizon) const;
};

/// max(0, rho(t, sample) - c_t).
double eval_rho_reflection(const RiskMeasureSpec& rm, double t, std::span<const double> sample);

// Common interface of the mean constraints the reflected solver understands.
class MeanConstraint {
public:
    virtual ~MeanConstraint() = default;
    /// Minimal deterministic shift x >= 0 making the shifted sample admissible.
    virtual double level(double t, std::span<const double> sample) const = 0;
    /// Constraint value on a sample; admissible iff >= 0.
    virtual double margin(double t, std::span<const double> sample) const = 0;
    /// Monte Carlo standard error of margin() (0 when not meaningful).
    virtual double margin_std_error(double t, std::span<const double> sample) const = 0;
    /// Operator tolerance used by level().
    virtual double tolerance(std::span<const double> sample) const = 0;
    /// Lipschitz ratio of the reflection map, used by the contraction planner.
    virtual double kappa(double horizon) const = 0;
    virtual std::string describe() const = 0;
};

class LossConstraint : public MeanConstraint {
public:
    explicit LossConstraint(LossSpec loss, double tol = 0.0) : loss_(std::move(loss)), tol_(tol) {}
    double level(double t, std::span<const double> sample) const override;
    double margin(double t, std::span<const double> sample) const override;
    double margin_std_error(double t, std::span<const double> sample) const override;
    double tolerance(std::span<const double> sample) const override;
    double kappa(double) const override { return lipschitz_ratio(loss_); }
    std::string describe() const override { return loss_.name; }
    const LossSpec& loss() const noexcept { return loss_; }

private:
    LossSpec loss_;
    double tol_;
};

class RiskConstraint : public MeanConstraint {
public:
    explicit RiskConstraint(RiskMeasureSpec rm) : rm_(std::move(rm)) {}
    double level(double t, std::span<const double> sample) const override;
    /// c_t - rho(t, sample).
    double margin(double t, std::span<const double> sample) const override;
    double margin_std_error(double, std::span<const double>) const override { return 0.0; }
    /// Floating-point allowance only: 1e-10 * max(1, max |sample|).
    double tolerance(std::span<const double> sample) const override;
    double kappa(double horizon) const override { return rm_.kappa(horizon); }
    std::string describe() const override;
    const RiskMeasureSpec& measure() const noexcept { return rm_; }

private:
    RiskMeasureSpec rm_;
};

}  // namespace mrbsde
