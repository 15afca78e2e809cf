#pragma once

// JSON run configuration: parsing, validation and canonical hashing.

#include "mrbsde/bsde.hpp"
#include "mrbsde/insurance.hpp"
#include "mrbsde/reflection.hpp"
#include "mrbsde/scenario.hpp"

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mrbsde {

using Json = nlohmann::json;

struct ScenarioConfig {
    double horizon = 1.0;
    std::size_t steps = 50;
    Refinement refinement = Refinement::uniform;
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    std::size_t dim = 1;
    MarkSpace marks;
    CompensatorSpec compensator;

    TimeGrid grid() const { return build_grid(horizon, steps, refinement); }
};

struct SolverConfig {
    std::vector<std::string> basis;  // empty: the default basis
    double ridge = 0.0;
    double beta = 0.0;
    double tol = 1e-8;
    std::size_t max_iters = 50;
    bool allow_uncertified = false;
    std::size_t n_intervals = 1;      // used only for uncertified plans
    double constraint_tol = 1e-6;     // hedge: ES and flatness allowance
};

struct OutputConfig {
    std::string directory = "out";
    std::string format = "csv";
    bool export_paths = true;
};

struct ConstraintConfig {
    std::optional<LossSpec> loss;
    std::optional<RiskMeasureSpec> risk;

    std::unique_ptr<MeanConstraint> build() const;
};

struct InsuranceConfig {
    MarketModel model;
    InsuranceContract contract;
    PricingMeasure measure;
};

struct RunConfig {
    Json document;     // effective configuration after overrides
    std::string hash;  // SHA-256 of the canonical document
    ScenarioConfig scenario;
    std::optional<AffineGenerator> generator;
    AffineTerminal terminal;
    std::optional<ConstraintConfig> constraint;
    std::optional<InsuranceConfig> insurance;
    SolverConfig solver;
    OutputConfig output;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::string> out;
    std::optional<std::string> format;
};

/// Sorted keys, every number as a double, compact dump.
std::string canonical_json(const Json& doc);
/// Hex SHA-256 of canonical_json(doc).
std::string config_hash(const Json& doc);

/// Number: constant. Object: {"kind": constant|linear|exponential|piecewise, ...}.
Schedule parse_schedule(const Json& value, const std::string& field);

/// Applies overrides to the document, validates every section and builds the typed view.
RunConfig parse_run_config(Json doc, const Overrides& overrides = {});
RunConfig load_run_config(const std::string& path, const Overrides& overrides = {});

}  // namespace mrbsde
