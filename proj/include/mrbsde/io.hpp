#pragma once

// CSV / JSON persistence of bundles, solutions and reports.

#include "mrbsde/config.hpp"
#include "mrbsde/insurance.hpp"
#include "mrbsde/mean_reflect.hpp"
#include "mrbsde/scenario.hpp"

#include <string>
#include <vector>

namespace mrbsde {

// Column-oriented numeric table with an optional JSON header.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    Json header = Json::object();
};

/// Shortest decimal that round-trips to the same double.
std::string format_number(double x);

/// Writes `stem.csv` (header line "# {json}", column names, rows) or `stem.json`
/// ({"header", "columns", "rows"}). Returns the path written.
std::string write_table(const std::string& stem, const Table& table, const std::string& format);
Table read_table(const std::string& path);

void write_json(const std::string& path, const Json& doc);

/// One row per (path, node): path, node, t, A, W0.., N[label].., nu[label].., nu_pred[label].., S.
/// nu columns hold the interval (t_i, t_{i+1}] and are 0 at the last node.
Table bundle_table(const PathBundle& bundle);
/// Rebuilds a solver-ready bundle from bundle_table output (jump times are not stored).
PathBundle bundle_from_table(const Table& table);

/// path, time, mark, value
Table events_table(const PathBundle& bundle);

/// t, K, dK, EY, Econstraint, constraint_se, tolerance, L, M
Table solution_nodes_table(const FlatnessReport& report);

/// path, node, t, y, z0.., u[label]..
Table backward_table(const BackwardSolution& solution, const PathBundle& bundle);

/// t, E_pi, E_chi, K, D_t, ES_Y, c_t, cause_dispersion
Table hedge_schedule_table(const HedgePlan& plan, const PathBundle& bundle);

}  // namespace mrbsde
