#pragma once

// Life-insurance super-hedging under an expected-shortfall constraint.

#include "mrbsde/mean_reflect.hpp"
#include "mrbsde/reflection.hpp"
#include "mrbsde/schedule.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace mrbsde {

struct MarketModel {
    Schedule r = Schedule::constant(0.0);
    Schedule mu = Schedule::constant(0.0);
    Schedule sigma = Schedule::constant(0.2);
    double s0 = 1.0;

    /// Market price of diffusion risk (mu - r) / sigma.
    double theta(double t) const { return (mu(t) - r(t)) / sigma(t); }
    /// sigma >= 1e-6, bounded coefficients, s0 > 0.
    void validate(double horizon) const;
};

/// F(S_T) = fixed + participation * max(S_T - strike, 0) per survivor.
struct SurvivalBenefit {
    double fixed = 1.0;
    double participation = 0.0;
    double strike = 0.0;

    double operator()(double s) const { return fixed + participation * std::max(s - strike, 0.0); }
    bool deterministic() const noexcept { return participation == 0.0; }
};

struct InsuranceContract {
    int n = 1;
    double maturity = 1.0;
    Schedule premium = Schedule::constant(0.0);  // H_t per survivor
    std::vector<Schedule> benefit;               // G_t(e) per death of cause e
    SurvivalBenefit survival;                    // F
    std::vector<Schedule> hazard;                // lambda_t(e)
    MarkSpace causes;

    /// The zero schedule when no death benefit is given.
    const Schedule& G(std::size_t e) const;
    const Schedule& lambda(std::size_t e) const { return hazard.size() == 1 ? hazard[0] : hazard[e]; }
    void validate() const;
};

struct PricingMeasure {
    std::vector<Schedule> loading;  // kappa_t(e) > -1

    const Schedule& kappa(std::size_t e) const;
    void validate(const MarkSpace& causes, double horizon) const;
};

/// D_t = e^{-int_t^T r} (n - N_t) exp(-int_t^T sum_e (1 + kappa) lambda p(e) ds).
double bond_price(const MarketModel& model, const InsuranceContract& contract, const PricingMeasure& measure, double t,
                  int deaths);

struct InsuranceScenario {
    PathBundle bundle;               // population mortality, W^0 drives the stock
    std::vector<double> cash_flows;  // P_t at nodes [paths][nodes]
};

InsuranceScenario simulate_insurance_bundle(const MarketModel& model, const InsuranceContract& contract,
                                            const TimeGrid& grid, std::size_t paths, std::uint64_t seed);

/// const and n - N_t, plus S and log S when the survival benefit is stock-linked.
RegressionBasisSpec insurance_basis(const InsuranceContract& contract);

struct HedgingProblem {
    GeneratorSpec generator;
    double sup_r = 0.0;
    double sup_theta = 0.0;
    double sup_kappa = 0.0;
};

/// g = -r y - theta z + H (n - N) + (n - N) sum_e [G (1 + kappa) + u kappa] lambda p(e), f = 0, xi = (n - N_T) F.
HedgingProblem build_hedging_bsde(const MarketModel& model, const InsuranceContract& contract,
                                  const PricingMeasure& measure);

/// Radon-Nikodym density of the pricing measure at T on every path.
std::vector<double> pricing_density(const MarketModel& model, const InsuranceContract& contract,
                                    const PricingMeasure& measure, const PathBundle& bundle);

/// E^Q[discounted terminal payoff and premium/benefit flows] by likelihood-ratio weighting.
SampleStats direct_price(const MarketModel& model, const InsuranceContract& contract, const PricingMeasure& measure,
                         const PathBundle& bundle);

struct WealthReplay {
    std::vector<double> X;           // [paths][nodes]
    double max_tracking_error = 0.0; // max |X - Y|
    double min_terminal_surplus = 0.0;  // min over paths of X_T - xi
    bool superhedges = false;        // X_T >= xi - 0.02 |Y_0| on every path
};

struct HedgePlan {
    double price = 0.0;               // Y_0
    std::vector<double> pi;           // [paths][steps]
    std::vector<double> chi;          // [paths][steps]
    std::vector<double> cause_dispersion;  // per step, mean over paths
    std::vector<double> K;            // per node
    std::vector<double> bond_curve;   // E[D_t] per node
    std::vector<double> es;           // ES(Y_t) per node
    std::vector<double> benchmark;    // c_t per node
};

struct HedgeResult {
    HedgePlan plan;
    ReflectedSolution solution;
    FlatnessReport flatness;
    WealthReplay replay;
    double terminal_rho = 0.0;
    double es_excess = 0.0;  // max_t ES(Y_t) - c_t
    bool es_ok = false;       // ES(Y_t) <= c_t + tol everywhere
    bool skorokhod_ok = false;  // generalized defect <= tol K_T (or zero when K_T = 0)
};

struct HedgeOptions {
    ReflectedOptions picard;
    double tol = 1e-6;  // constraint / flatness tolerance
};

/// Rejects configurations with rho(T, xi) > c_T.
HedgeResult price_and_hedge(const MarketModel& model, const InsuranceContract& contract,
                            const PricingMeasure& measure, const RiskMeasureSpec& rm, const InsuranceScenario& scenario,
                            const Projector& projector, ContractionPlan& plan, const HedgeOptions& options);

/// Forward replay of the wealth equation with the extracted strategies and K.
WealthReplay replay_wealth(const MarketModel& model, const InsuranceContract& contract, const PricingMeasure& measure,
                           const PathBundle& bundle, const HedgePlan& plan, const ReflectedSolution& solution,
                           std::span<const double> terminal);

struct BondMartingaleRow {
    double t = 0.0;
    double mean_increment = 0.0;  // E^Q[e^{-int_0^t r} D_t] - D_0
    double std_error = 0.0;
};

std::vector<BondMartingaleRow> bond_martingale_check(const MarketModel& model, const InsuranceContract& contract,
                                                     const PricingMeasure& measure, const PathBundle& bundle);

}  // namespace mrbsde
