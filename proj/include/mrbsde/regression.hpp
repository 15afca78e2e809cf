#pragma once

// Least-squares conditional expectations on node-measurable path features.

#include "mrbsde/scenario.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mrbsde {

enum class FeatureKind {
    constant,
    brownian,       // W^k
    brownian_sq,    // (W^k)^2
    brownian_cube,  // (W^k)^3
    count,          // N(e)
    count_total,    // N
    survivors,      // n - N
    no_jump,        // 1{N = 0}
    stock,          // S
    log_stock,      // log S
};

struct Feature {
    FeatureKind kind = FeatureKind::constant;
    std::size_t index = 0;  // Brownian coordinate or mark index

    /// Parses "const", "W0", "W0^2", "W0^3", "N[label]", "N", "survivors", "1{N=0}", "S", "logS".
    static Feature parse(const std::string& text, const MarkSpace& marks);
    std::string name(const MarkSpace& marks) const;
    double value(const PathBundle& bundle, std::size_t path, std::size_t node) const;
};

struct RegressionBasisSpec {
    std::vector<Feature> features;
    double ridge = 0.0;

    /// const, W^k, (W^k)^2 per coordinate, N per mark (or n - N), log S when a stock is present.
    static RegressionBasisSpec default_for(const PathBundle& bundle);
    static RegressionBasisSpec parse(const std::vector<std::string>& names, const MarkSpace& marks, double ridge);
    std::vector<std::string> names(const MarkSpace& marks) const;
    /// Needs the constant feature, at most J/10 features and features available on the bundle.
    void validate(const PathBundle& bundle) const;
};

// Projection onto span(features at one node). Columns are centred and scaled,
// zero-variance columns dropped; the intercept is unpenalised so the fit preserves the sample mean.
class NodeRegression {
public:
    NodeRegression(const PathBundle& bundle, const RegressionBasisSpec& basis, std::size_t node);

    /// Fitted values of the least-squares projection of target onto the basis.
    void project(std::span<const double> target, std::span<double> fitted) const;
    std::size_t rank() const noexcept { return columns_; }
    bool used_ridge_fallback() const noexcept { return fallback_; }

private:
    std::size_t paths_ = 0;
    std::size_t columns_ = 0;
    bool fallback_ = false;
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

// One NodeRegression per node 0 .. m-1, built once and shared by every solve on the bundle.
class Projector {
public:
    Projector(const PathBundle& bundle, RegressionBasisSpec basis);

    const NodeRegression& at(std::size_t node) const { return nodes_.at(node); }
    const RegressionBasisSpec& basis() const noexcept { return basis_; }
    const PathBundle& bundle() const noexcept { return *bundle_; }
    std::size_t fallback_count() const noexcept;

private:
    const PathBundle* bundle_;
    RegressionBasisSpec basis_;
    std::vector<NodeRegression> nodes_;
};

}  // namespace mrbsde
