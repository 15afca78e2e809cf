#include "mrbsde/commands.hpp"

#include "mrbsde/errors.hpp"
#include "mrbsde/insurance.hpp"
#include "mrbsde/io.hpp"
#include "mrbsde/mean_reflect.hpp"
#include "mrbsde/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mrbsde {
namespace {

namespace fs = std::filesystem;

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Json stats_json(std::span<const double> v) {
    const auto st = sample_stats(v);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return {{"mean", st.mean}, {"std_error", st.std_error}, {"min", *lo}, {"max", *hi}};
}

std::string stem(const RunConfig& rc, const std::string& name) { return (fs::path(rc.output.directory) / name).string(); }

Json base_summary(const RunConfig& rc, const std::string& command) {
    return {{"command", command},
            {"config_hash", rc.hash},
            {"seed", rc.scenario.seed},
            {"paths", rc.scenario.paths},
            {"steps", rc.scenario.steps},
            {"horizon", rc.scenario.horizon}};
}

struct Simulated {
    PathBundle bundle;
    std::optional<double> increase_fraction;
    std::vector<double> local_time_T;
};

Simulated simulate(const RunConfig& rc) {
    const auto& s = rc.scenario;
    const TimeGrid grid = s.grid();
    Simulated out;
    if (rc.insurance) {
        out.bundle = simulate_insurance_bundle(rc.insurance->model, rc.insurance->contract, grid, s.paths, s.seed).bundle;
    } else if (s.compensator.kind == CompensatorKind::local_time_clock) {
        auto lt = simulate_local_time_clock(grid, s.paths, s.seed, s.compensator.local_time_refine, s.dim);
        out.bundle = std::move(lt.bundle);
        out.increase_fraction = lt.increase_fraction;
        out.local_time_T = std::move(lt.local_time_T);
    } else {
        out.bundle = simulate_bundle(s.compensator, s.marks, grid, s.paths, s.dim, s.seed);
    }
    return out;
}

RegressionBasisSpec basis_for(const RunConfig& rc, const PathBundle& b) {
    if (rc.solver.basis.empty()) {
        auto spec = rc.insurance ? insurance_basis(rc.insurance->contract) : RegressionBasisSpec::default_for(b);
        spec.ridge = rc.solver.ridge;
        return spec;
    }
    return RegressionBasisSpec::parse(rc.solver.basis, b.marks, rc.solver.ridge);
}

ContractionPlan make_plan(const RunConfig& rc, const Lipschitz& L, double kappa, const PathBundle& b) {
    if (rc.solver.allow_uncertified) return uniform_plan(L, kappa, rc.solver.beta, b, rc.solver.n_intervals);
    return plan_contraction(L, kappa, rc.solver.beta, b);
}

Json plan_json(const ContractionPlan& plan, const PathBundle& b) {
    Json j;
    j["certified"] = plan.certified;
    j["beta"] = plan.beta;
    j["kappa"] = plan.kappa;
    j["threshold"] = plan.threshold;
    j["h"] = plan.h;
    j["n_intervals"] = plan.n_intervals();
    j["lipschitz"] = {{"L_f", plan.lipschitz.L_f}, {"L_p", plan.lipschitz.L_p}, {"L_g", plan.lipschitz.L_g},
                      {"L_w", plan.lipschitz.L_w}};
    Json ivs = Json::array();
    for (const auto& iv : plan.intervals) {
        ivs.push_back({{"t0", b.grid[iv.nodes.first]},
                       {"t1", b.grid[iv.nodes.last]},
                       {"first_node", iv.nodes.first},
                       {"last_node", iv.nodes.last},
                       {"alpha", iv.alpha},
                       {"weight_integral", iv.weight_integral},
                       {"required_beta", finite_or_null(iv.required_beta)},
                       {"condition_holds", iv.condition_holds},
                       {"star_holds", iv.star_holds},
                       {"measured_ratios", iv.measured_ratios}});
    }
    j["intervals"] = std::move(ivs);
    return j;
}

void print_plan(std::ostream& out, const ContractionPlan& plan, const PathBundle& b) {
    out << "contraction plan: " << (plan.certified ? "certified" : "UNCERTIFIED") << ", beta = " << plan.beta
        << ", beta_min = " << plan.threshold << ", n = " << plan.n_intervals() << ", h = " << plan.h << "\n";
    for (std::size_t j = 0; j < plan.intervals.size(); ++j) {
        const auto& iv = plan.intervals[j];
        out << "  interval " << j << " [" << b.grid[iv.nodes.first] << ", " << b.grid[iv.nodes.last]
            << "] alpha = " << iv.alpha << ", I = " << iv.weight_integral << "\n";
    }
}

Json flatness_json(const FlatnessReport& r, const PathBundle& b) {
    return {{"K_T", r.K_T},
            {"skorokhod_defect", r.skorokhod_defect},
            {"flatness_tolerance", r.flatness_tolerance},
            {"constraint_min", r.constraint_min},
            {"constraint_argmin_t", b.grid[r.constraint_argmin]},
            {"constraint_ok", r.constraint_ok},
            {"flat_ok", r.flat_ok},
            {"L_oscillates", r.L_oscillates}};
}

Json iterations_json(const ReflectedSolution& s) {
    return {{"per_interval", s.iterations}, {"total", s.total_iterations()}, {"ratios", s.ratios},
            {"distances", s.distances}};
}

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace

CommandResult cmd_simulate(const RunConfig& rc, std::ostream& out) {
    const auto sim = simulate(rc);
    const PathBundle& b = sim.bundle;
    CommandResult res;
    res.artifacts.push_back(write_table(stem(rc, "bundle"), bundle_table(b), rc.output.format));
    res.artifacts.push_back(write_table(stem(rc, "events"), events_table(b), rc.output.format));

    const std::size_t m = b.steps(), E = b.mark_count();
    std::vector<double> A_T(b.paths), N_T(b.paths);
    Json per_mark = Json::object();
    for (std::size_t e = 0; e < E; ++e) {
        for (std::size_t p = 0; p < b.paths; ++p) N_T[p] = b.N(p, m, e);
        per_mark[b.marks.label(e)] = stats_json(N_T);
    }
    for (std::size_t p = 0; p < b.paths; ++p) {
        A_T[p] = b.A(p, m);
        N_T[p] = b.N(p, m);
    }
    const auto assumptions = check_assumptions(b, rc.solver.beta);
    Json& s = res.summary = base_summary(rc, "simulate");
    s["rows"] = b.paths * b.nodes();
    s["A_T"] = stats_json(A_T);
    s["N_T"] = stats_json(N_T);
    s["N_T_per_mark"] = per_mark;
    s["events"] = std::accumulate(b.mpp.begin(), b.mpp.end(), std::size_t{0},
                                  [](std::size_t a, const MppPath& p) { return a + p.events.size(); });
    s["max_clock_jump"] = assumptions.max_clock_jump;
    s["exp_beta_A_T"] = finite_or_null(assumptions.exp_beta_clock);
    if (sim.increase_fraction) {
        s["local_time_increase_fraction"] = *sim.increase_fraction;
        s["local_time_T"] = stats_json(sim.local_time_T);
    }
    out << "simulated " << b.paths << " paths x " << b.nodes() << " nodes, mean A_T = " << s["A_T"]["mean"].get<double>()
        << ", mean N_T = " << s["N_T"]["mean"].get<double>() << "\n";
    return res;
}

CommandResult cmd_solve(const RunConfig& rc, std::ostream& out) {
    if (rc.insurance) throw ConfigError("insurance configs are run with 'hedge'");
    if (!rc.constraint) throw ConfigError("missing section 'loss' or 'risk'");
    const auto sim = simulate(rc);
    const PathBundle& b = sim.bundle;
    const Projector projector(b, basis_for(rc, b));
    const GeneratorSpec gen = rc.generator ? rc.generator->build(rc.terminal.build()) : GeneratorSpec::zero(rc.terminal.build());
    const auto constraint = rc.constraint->build();
    const double T = b.grid.horizon();
    auto plan = make_plan(rc, gen.lipschitz, constraint->kappa(T), b);
    print_plan(out, plan, b);

    ReflectedOptions options;
    options.tol = rc.solver.tol;
    options.max_iters = rc.solver.max_iters;
    const auto sol = solve_mean_reflected(gen, *constraint, projector, plan, options);
    const auto report = flatness_report(sol, *constraint, b);
    const auto rep = representation_check(sol, gen, *constraint, projector, plan.beta, rc.solver.tol);
    const auto apriori = apriori_diagnostic(sol.backward, b, plan.beta);

    CommandResult res;
    res.artifacts.push_back(write_table(stem(rc, "solution_nodes"), solution_nodes_table(report), rc.output.format));
    if (rc.output.export_paths)
        res.artifacts.push_back(write_table(stem(rc, "backward_solution"), backward_table(sol.backward, b), rc.output.format));

    const auto y0 = sol.backward.column(0);
    Json& s = res.summary = base_summary(rc, "solve");
    s["generator"] = gen.description;
    s["constraint"] = constraint->describe();
    s["Y0"] = stats_json(y0);
    s["flatness"] = flatness_json(report, b);
    s["iterations"] = iterations_json(sol);
    s["plan"] = plan_json(plan, b);
    s["representation"] = {{"distance", rep.distance}, {"max_K_gap", rep.max_K_gap}, {"within_tol", rep.within_tol}};
    s["apriori"] = {{"value", apriori.value}, {"half_value", apriori.half_value}, {"unstable", apriori.unstable}};
    s["regression"] = {{"basis", projector.basis().names(b.marks)}, {"ridge_fallbacks", projector.fallback_count()}};
    const bool ok = report.constraint_ok && report.flat_ok;
    s["passed"] = ok;
    res.exit_code = ok ? 0 : static_cast<int>(ExitCode::tolerance);

    out << "Y0 = " << s["Y0"]["mean"].get<double>() << ", K_T = " << report.K_T << ", defect = " << report.skorokhod_defect
        << " (tol " << report.flatness_tolerance << "), constraint_min = " << report.constraint_min
        << ", iterations = " << sol.total_iterations() << (ok ? "" : "  [TOLERANCE FAILURE]") << "\n";
    return res;
}

CommandResult cmd_hedge(const RunConfig& rc, std::ostream& out) {
    if (!rc.insurance) throw ConfigError("hedge needs 'contract' and 'market' sections");
    if (!rc.constraint || !rc.constraint->risk) throw ConfigError("hedge needs a 'risk' section");
    const auto& ic = *rc.insurance;
    const auto& rm = *rc.constraint->risk;
    const auto scenario =
        simulate_insurance_bundle(ic.model, ic.contract, rc.scenario.grid(), rc.scenario.paths, rc.scenario.seed);
    const PathBundle& b = scenario.bundle;
    const Projector projector(b, basis_for(rc, b));
    const auto problem = build_hedging_bsde(ic.model, ic.contract, ic.measure);
    const double T = b.grid.horizon();
    auto plan = make_plan(rc, problem.generator.lipschitz, rm.kappa(T), b);
    print_plan(out, plan, b);

    HedgeOptions options;
    options.picard.tol = rc.solver.tol;
    options.picard.max_iters = rc.solver.max_iters;
    options.tol = rc.solver.constraint_tol;
    const auto hr = price_and_hedge(ic.model, ic.contract, ic.measure, rm, scenario, projector, plan, options);
    const auto direct = direct_price(ic.model, ic.contract, ic.measure, b);
    const auto martingale = bond_martingale_check(ic.model, ic.contract, ic.measure, b);
    double worst_z = 0.0;
    for (const auto& row : martingale)
        if (row.std_error > 0.0) worst_z = std::max(worst_z, std::abs(row.mean_increment) / row.std_error);

    Json pricing;
    pricing["Y0"] = hr.plan.price;
    pricing["K_T"] = hr.flatness.K_T;
    pricing["skorokhod_defect"] = hr.flatness.skorokhod_defect;
    pricing["skorokhod_ok"] = hr.skorokhod_ok;
    pricing["es_ok"] = hr.es_ok;
    pricing["es_excess_max"] = hr.es_excess;
    pricing["constraint_min"] = hr.flatness.constraint_min;
    pricing["constraint_argmin_t"] = b.grid[hr.flatness.constraint_argmin];
    pricing["terminal_rho"] = hr.terminal_rho;
    pricing["c_T"] = rm.benchmark(T);
    pricing["bond_price_0"] = bond_price(ic.model, ic.contract, ic.measure, 0.0, 0);
    pricing["direct_price"] = {{"mean", direct.mean}, {"std_error", direct.std_error},
                               {"note", "unconstrained discounted expectation under the pricing measure"}};
    pricing["bond_martingale_max_z"] = worst_z;
    pricing["replay"] = {{"max_tracking_error", hr.replay.max_tracking_error},
                         {"min_terminal_surplus", hr.replay.min_terminal_surplus},
                         {"superhedges", hr.replay.superhedges}};
    pricing["iterations"] = iterations_json(hr.solution);
    pricing["plan"] = plan_json(plan, b);
    pricing["regression"] = {{"basis", projector.basis().names(b.marks)}, {"ridge_fallbacks", projector.fallback_count()}};

    CommandResult res;
    const std::string pricing_path = stem(rc, "pricing.json");
    write_json(pricing_path, pricing);
    res.artifacts.push_back(pricing_path);
    res.artifacts.push_back(write_table(stem(rc, "hedge_schedule"), hedge_schedule_table(hr.plan, b), rc.output.format));
    res.artifacts.push_back(write_table(stem(rc, "solution_nodes"), solution_nodes_table(hr.flatness), rc.output.format));
    if (rc.output.export_paths)
        res.artifacts.push_back(
            write_table(stem(rc, "backward_solution"), backward_table(hr.solution.backward, b), rc.output.format));

    Json& s = res.summary = base_summary(rc, "hedge");
    s["pricing"] = pricing;
    const bool ok = hr.es_ok && hr.skorokhod_ok;
    s["passed"] = ok;
    res.exit_code = ok ? 0 : static_cast<int>(ExitCode::tolerance);
    out << "Y0 = " << hr.plan.price << " (direct unconstrained " << direct.mean << " +- " << direct.std_error
        << "), K_T = " << hr.flatness.K_T << ", ES excess = " << hr.es_excess
        << ", replay min surplus = " << hr.replay.min_terminal_surplus << (ok ? "" : "  [TOLERANCE FAILURE]") << "\n";
    return res;
}

CommandResult cmd_validate(const RunConfig& rc, std::ostream& out) {
    const auto sim = simulate(rc);
    const PathBundle& b = sim.bundle;
    const double T = b.grid.horizon();
    Lipschitz L;
    double kappa = 1.0;
    if (rc.insurance) {
        L = build_hedging_bsde(rc.insurance->model, rc.insurance->contract, rc.insurance->measure).generator.lipschitz;
    } else if (rc.generator) {
        L = rc.generator->build(rc.terminal.build()).lipschitz;
    }
    if (rc.constraint) kappa = rc.constraint->build()->kappa(T);

    const double beta = rc.solver.beta;
    const auto a = check_assumptions(b, beta);
    const double beta_min = contraction_threshold(L, kappa);
    CommandResult res;
    Json& s = res.summary = base_summary(rc, "validate");
    s["assumptions"] = {{"max_clock_jump", a.max_clock_jump},
                        {"exp_beta_A_T", finite_or_null(a.exp_beta_clock)},
                        {"weighted_clock_integral", finite_or_null(a.weighted_clock_integral)},
                        {"finite", a.finite}};
    s["lipschitz"] = {{"L_f", L.L_f}, {"L_p", L.L_p}, {"L_g", L.L_g}, {"L_w", L.L_w}};
    s["kappa"] = kappa;
    s["beta"] = beta;
    s["beta_min"] = beta_min;
    out << std::setprecision(10) << "beta_min = " << beta_min << " (beta = " << beta << ", kappa = " << kappa << ")\n"
        << std::setprecision(6) << "max clock jump = " << a.max_clock_jump << ", E[exp(beta A_T)] = " << a.exp_beta_clock
        << "\n";
    try {
        const auto plan = plan_contraction(L, kappa, beta, b);
        s["plan_feasible"] = true;
        s["plan"] = plan_json(plan, b);
        print_plan(out, plan, b);
        res.exit_code = a.finite ? 0 : static_cast<int>(ExitCode::infeasible);
    } catch (const Error& e) {
        s["plan_feasible"] = false;
        s["plan_error"] = e.what();
        out << "plan infeasible: " << e.what() << "\n";
        res.exit_code = static_cast<int>(e.exit_code());
    }
    return res;
}

int run_command(const std::string& verb, const std::string& config_path, const Overrides& overrides,
                std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::steady_clock::now();
    const std::string started_at = now_iso();
    RunConfig rc;
    try {
        rc = load_run_config(config_path, overrides);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    }
    try {
        fs::create_directories(rc.output.directory);
    } catch (const fs::filesystem_error& e) {
        err << "error: cannot create output directory: " << e.what() << "\n";
        return static_cast<int>(ExitCode::config);
    }

    CommandResult res;
    try {
        if (verb == "simulate") res = cmd_simulate(rc, out);
        else if (verb == "solve") res = cmd_solve(rc, out);
        else if (verb == "hedge") res = cmd_hedge(rc, out);
        else if (verb == "validate") res = cmd_validate(rc, out);
        else throw ConfigError("unknown command '" + verb + "'");
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\nmeasured ratios:";
        for (double r : e.ratios()) err << " " << r;
        err << "\n";
        res.exit_code = static_cast<int>(e.exit_code());
        res.summary = base_summary(rc, verb);
        res.summary["error"] = e.what();
        res.summary["measured_ratios"] = e.ratios();
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        res.exit_code = static_cast<int>(e.exit_code());
        res.summary = base_summary(rc, verb);
        res.summary["error"] = e.what();
    }
    res.summary["exit_code"] = res.exit_code;

    const std::string summary_path = (fs::path(rc.output.directory) / "summary.json").string();
    const std::string record_path = (fs::path(rc.output.directory) / "run_record.json").string();
    res.artifacts.push_back(summary_path);
    Json record;
    record["command"] = verb;
    record["config_path"] = config_path;
    record["config_hash"] = rc.hash;
    record["config"] = rc.document;
    record["seed"] = rc.scenario.seed;
    record["started_at"] = started_at;
    record["finished_at"] = now_iso();
    record["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    record["threads"] = default_thread_count();
    record["artifacts"] = res.artifacts;
    record["exit_code"] = res.exit_code;
    record["summary"] = res.summary;
    try {
        write_json(summary_path, res.summary);
        write_json(record_path, record);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    }
    return res.exit_code;
}

}  // namespace mrbsde
