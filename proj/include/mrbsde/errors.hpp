#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mrbsde {

// Exit codes used by the command-line tool; library errors map onto them.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    infeasible = 3,
    divergence = 4,
    tolerance = 5,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept { return ExitCode::config; }
};

/// Invalid configuration or precondition violation (non-positive horizon, bad schema, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A modelling assumption failed numerically (bracket not found, contraction plan infeasible).
class AssumptionError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::infeasible; }
};

/// Non-finite values produced during evaluation.
class NumericError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::divergence; }
};

/// Picard iteration did not reach its tolerance; carries the measured ratios.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::vector<double> ratios)
        : Error(what), ratios_(std::move(ratios)) {}
    ExitCode exit_code() const noexcept override { return ExitCode::divergence; }
    const std::vector<double>& ratios() const noexcept { return ratios_; }

private:
    std::vector<double> ratios_;
};

}  // namespace mrbsde
