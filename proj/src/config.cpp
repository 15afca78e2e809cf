#include "mrbsde/config.hpp"

#include "mrbsde/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mrbsde {
namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void allow_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError("field '" + path + "' must be an object");
    for (const auto& [k, v] : obj.items()) {
        (void)v;
        if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
            throw ConfigError("unknown field '" + join(path, k) + "'");
    }
}

const Json* find(const Json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double number(const Json& obj, const std::string& path, const char* key, std::optional<double> fallback = {}) {
    const Json* v = find(obj, key);
    if (!v) {
        if (fallback) return *fallback;
        throw ConfigError("missing field '" + join(path, key) + "'");
    }
    if (!v->is_number()) throw ConfigError("field '" + join(path, key) + "' must be a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw ConfigError("field '" + join(path, key) + "' must be finite");
    return x;
}

std::uint64_t count(const Json& obj, const std::string& path, const char* key, std::optional<std::uint64_t> fallback = {}) {
    const Json* v = find(obj, key);
    if (!v) {
        if (fallback) return *fallback;
        throw ConfigError("missing field '" + join(path, key) + "'");
    }
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
    if (v->is_number_float()) {
        const double x = v->get<double>();
        if (x >= 0.0 && x == std::floor(x) && x < 1.8e19) return static_cast<std::uint64_t>(x);
    }
    throw ConfigError("field '" + join(path, key) + "' must be a non-negative integer");
}

bool boolean(const Json& obj, const std::string& path, const char* key, bool fallback) {
    const Json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError("field '" + join(path, key) + "' must be true or false");
    return v->get<bool>();
}

std::string text(const Json& obj, const std::string& path, const char* key, std::optional<std::string> fallback = {}) {
    const Json* v = find(obj, key);
    if (!v) {
        if (fallback) return *fallback;
        throw ConfigError("missing field '" + join(path, key) + "'");
    }
    if (!v->is_string()) throw ConfigError("field '" + join(path, key) + "' must be a string");
    return v->get<std::string>();
}

Json normalize_numbers(const Json& j) {
    if (j.is_object()) {
        Json out = Json::object();
        for (const auto& [k, v] : j.items()) out[k] = normalize_numbers(v);
        return out;
    }
    if (j.is_array()) {
        Json out = Json::array();
        for (const auto& v : j) out.push_back(normalize_numbers(v));
        return out;
    }
    if (j.is_number()) return Json(j.get<double>());
    return j;
}

// A schedule or a list of schedules (one per mark / cause).
std::vector<Schedule> schedule_list(const Json& v, const std::string& path) {
    std::vector<Schedule> out;
    if (v.is_array()) {
        if (v.empty()) throw ConfigError("field '" + path + "' must not be empty");
        for (std::size_t k = 0; k < v.size(); ++k) out.push_back(parse_schedule(v[k], path + "[" + std::to_string(k) + "]"));
    } else {
        out.push_back(parse_schedule(v, path));
    }
    return out;
}

MarkSpace parse_marks(const Json& j, const std::string& path) {
    allow_keys(j, path, {"labels", "probabilities"});
    const Json* labels = find(j, "labels");
    const Json* probs = find(j, "probabilities");
    if (!labels || !labels->is_array()) throw ConfigError("field '" + join(path, "labels") + "' must be an array");
    std::vector<std::string> l;
    for (const auto& x : *labels) {
        if (!x.is_string()) throw ConfigError("field '" + join(path, "labels") + "' must hold strings");
        l.push_back(x.get<std::string>());
    }
    std::vector<double> p;
    if (probs) {
        if (!probs->is_array()) throw ConfigError("field '" + join(path, "probabilities") + "' must be an array");
        for (const auto& x : *probs) {
            if (!x.is_number()) throw ConfigError("field '" + join(path, "probabilities") + "' must hold numbers");
            p.push_back(x.get<double>());
        }
    } else {
        p.assign(l.size(), l.empty() ? 0.0 : 1.0 / static_cast<double>(l.size()));
    }
    return MarkSpace(std::move(l), std::move(p));
}

CompensatorSpec parse_compensator(const Json& j, const std::string& path) {
    allow_keys(j, path, {"kind", "intensity", "population", "refine", "marker", "stock", "simulate_stock"});
    const std::string kind = text(j, path, "kind");
    CompensatorSpec c;
    if (kind == "poisson") {
        c = CompensatorSpec::constant(number(j, path, "intensity"));
    } else if (kind == "time_varying") {
        const Json* v = find(j, "intensity");
        if (!v) throw ConfigError("missing field '" + join(path, "intensity") + "'");
        c = CompensatorSpec::time_varying(schedule_list(*v, join(path, "intensity")));
    } else if (kind == "population") {
        const Json* v = find(j, "intensity");
        if (!v) throw ConfigError("missing field '" + join(path, "intensity") + "'");
        c = CompensatorSpec::population_mortality(static_cast<int>(count(j, path, "population")),
                                                  schedule_list(*v, join(path, "intensity")));
    } else if (kind == "local_time") {
        c = CompensatorSpec::local_time(count(j, path, "refine", 100));
    } else {
        throw ConfigError("field '" + join(path, "kind") + "' must be poisson, time_varying, population or local_time");
    }
    const std::string marker = text(j, path, "marker", std::string("finite"));
    if (marker == "finite") c.marker = MarkerKind::finite;
    else if (marker == "gaussian") c.marker = MarkerKind::gaussian;
    else if (marker == "stock") c.marker = MarkerKind::stock_value;
    else throw ConfigError("field '" + join(path, "marker") + "' must be finite, gaussian or stock");
    c.simulate_stock = boolean(j, path, "simulate_stock", false);
    if (const Json* s = find(j, "stock")) {
        const std::string sp = join(path, "stock");
        allow_keys(*s, sp, {"s0", "drift", "vol", "coordinate"});
        c.stock = {number(*s, sp, "s0", 1.0), number(*s, sp, "drift", 0.0), number(*s, sp, "vol", 0.0),
                   count(*s, sp, "coordinate", 0)};
    }
    return c;
}

ScenarioConfig parse_scenario(const Json& j) {
    const std::string path = "scenario";
    allow_keys(j, path, {"horizon", "steps", "refinement", "paths", "seed", "brownian_dim", "marks", "compensator"});
    ScenarioConfig s;
    s.horizon = number(j, path, "horizon", 1.0);
    s.steps = count(j, path, "steps", 50);
    const std::string refinement = text(j, path, "refinement", std::string("uniform"));
    if (refinement == "uniform") s.refinement = Refinement::uniform;
    else if (refinement == "geometric") s.refinement = Refinement::geometric;
    else throw ConfigError("field 'scenario.refinement' must be uniform or geometric");
    s.paths = count(j, path, "paths", 1000);
    s.seed = count(j, path, "seed", 1);
    s.dim = count(j, path, "brownian_dim", 1);
    if (!(s.horizon > 0.0)) throw ConfigError("field 'scenario.horizon' must be positive");
    if (s.steps == 0) throw ConfigError("field 'scenario.steps' must be positive");
    if (s.paths == 0) throw ConfigError("field 'scenario.paths' must be positive");
    if (const Json* m = find(j, "marks")) s.marks = parse_marks(*m, "scenario.marks");
    if (const Json* c = find(j, "compensator")) s.compensator = parse_compensator(*c, "scenario.compensator");
    else s.compensator = CompensatorSpec::constant(1.0);
    return s;
}

AffineGenerator parse_generator(const Json& j) {
    const std::string path = "generator";
    allow_keys(j, path, {"f0", "fy", "fu", "g0", "gy", "gz", "gs"});
    AffineGenerator g;
    g.f0 = number(j, path, "f0", 0.0);
    g.fy = number(j, path, "fy", 0.0);
    g.fu = number(j, path, "fu", 0.0);
    g.g0 = number(j, path, "g0", 0.0);
    g.gy = number(j, path, "gy", 0.0);
    g.gz = number(j, path, "gz", 0.0);
    g.gs = number(j, path, "gs", 0.0);
    return g;
}

AffineTerminal parse_terminal(const Json& j) {
    const std::string path = "terminal";
    allow_keys(j, path, {"constant", "brownian", "count", "stock"});
    return {number(j, path, "constant", 0.0), number(j, path, "brownian", 0.0), number(j, path, "count", 0.0),
            number(j, path, "stock", 0.0)};
}

LossSpec parse_loss(const Json& j) {
    const std::string path = "loss";
    allow_keys(j, path, {"kind", "slope", "amplitude", "offset"});
    const std::string kind = text(j, path, "kind");
    const double slope = number(j, path, "slope", 1.0);
    const Schedule offset = find(j, "offset") ? parse_schedule(j["offset"], "loss.offset") : Schedule::constant(0.0);
    if (kind == "linear") return LossSpec::linear(slope, offset);
    if (kind == "shifted_sine") return LossSpec::shifted_sine(slope, number(j, path, "amplitude"), offset);
    throw ConfigError("field 'loss.kind' must be linear or shifted_sine");
}

RiskMeasureSpec parse_risk(const Json& j) {
    const std::string path = "risk";
    allow_keys(j, path, {"kind", "alpha", "benchmark"});
    const std::string kind = text(j, path, "kind", std::string("expected_shortfall"));
    if (kind != "expected_shortfall") throw ConfigError("field 'risk.kind' must be expected_shortfall");
    const Json* a = find(j, "alpha");
    const Json* c = find(j, "benchmark");
    if (!c) throw ConfigError("missing field 'risk.benchmark'");
    return RiskMeasureSpec::expected_shortfall(a ? parse_schedule(*a, "risk.alpha") : Schedule::constant(0.05),
                                               parse_schedule(*c, "risk.benchmark"));
}

InsuranceConfig parse_insurance(const Json& doc) {
    InsuranceConfig ic;
    const Json& market = doc.at("market");
    allow_keys(market, "market", {"r", "mu", "sigma", "s0"});
    auto sched = [](const Json& obj, const std::string& path, const char* key, double fallback) {
        const Json* v = find(obj, key);
        return v ? parse_schedule(*v, join(path, key)) : Schedule::constant(fallback);
    };
    ic.model.r = sched(market, "market", "r", 0.0);
    ic.model.mu = sched(market, "market", "mu", 0.0);
    ic.model.sigma = sched(market, "market", "sigma", 0.2);
    ic.model.s0 = number(market, "market", "s0", 1.0);

    const Json& contract = doc.at("contract");
    const std::string cp = "contract";
    allow_keys(contract, cp, {"n", "maturity", "premium", "death_benefit", "survival_benefit", "hazard", "causes"});
    auto& c = ic.contract;
    c.n = static_cast<int>(count(contract, cp, "n"));
    c.maturity = number(contract, cp, "maturity");
    c.premium = sched(contract, cp, "premium", 0.0);
    if (const Json* g = find(contract, "death_benefit")) c.benefit = schedule_list(*g, "contract.death_benefit");
    if (const Json* f = find(contract, "survival_benefit")) {
        if (f->is_number()) {
            c.survival = {f->get<double>(), 0.0, 0.0};
        } else {
            const std::string fp = "contract.survival_benefit";
            allow_keys(*f, fp, {"fixed", "participation", "strike"});
            c.survival = {number(*f, fp, "fixed", 0.0), number(*f, fp, "participation", 0.0),
                          number(*f, fp, "strike", 0.0)};
        }
    }
    const Json* h = find(contract, "hazard");
    if (!h) throw ConfigError("missing field 'contract.hazard'");
    c.hazard = schedule_list(*h, "contract.hazard");
    if (const Json* causes = find(contract, "causes")) c.causes = parse_marks(*causes, "contract.causes");

    if (const Json* measure = find(doc, "measure")) {
        allow_keys(*measure, "measure", {"loading"});
        if (const Json* k = find(*measure, "loading")) ic.measure.loading = schedule_list(*k, "measure.loading");
    }
    c.validate();
    ic.model.validate(c.maturity);
    ic.measure.validate(c.causes, c.maturity);
    return ic;
}

SolverConfig parse_solver(const Json& j) {
    const std::string path = "solver";
    allow_keys(j, path, {"basis", "ridge", "beta", "tol", "max_iters", "allow_uncertified", "n_intervals", "constraint_tol"});
    SolverConfig s;
    if (const Json* b = find(j, "basis")) {
        if (!b->is_array()) throw ConfigError("field 'solver.basis' must be an array of feature names");
        for (const auto& x : *b) {
            if (!x.is_string()) throw ConfigError("field 'solver.basis' must hold strings");
            s.basis.push_back(x.get<std::string>());
        }
    }
    s.ridge = number(j, path, "ridge", 0.0);
    s.beta = number(j, path, "beta", 0.0);
    s.tol = number(j, path, "tol", 1e-8);
    s.max_iters = count(j, path, "max_iters", 50);
    s.allow_uncertified = boolean(j, path, "allow_uncertified", false);
    s.n_intervals = count(j, path, "n_intervals", 1);
    s.constraint_tol = number(j, path, "constraint_tol", 1e-6);
    if (!(s.tol > 0.0)) throw ConfigError("field 'solver.tol' must be positive");
    if (s.max_iters == 0) throw ConfigError("field 'solver.max_iters' must be positive");
    if (!(s.ridge >= 0.0)) throw ConfigError("field 'solver.ridge' must be >= 0");
    if (!(s.beta >= 0.0)) throw ConfigError("field 'solver.beta' must be >= 0");
    return s;
}

OutputConfig parse_output(const Json& j) {
    const std::string path = "output";
    allow_keys(j, path, {"directory", "format", "export_paths"});
    OutputConfig o;
    o.directory = text(j, path, "directory", o.directory);
    o.format = text(j, path, "format", o.format);
    o.export_paths = boolean(j, path, "export_paths", true);
    return o;
}

}  // namespace

std::string canonical_json(const Json& doc) { return normalize_numbers(doc).dump(); }

std::string config_hash(const Json& doc) {
    const std::string canon = canonical_json(doc);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(canon.data(), canon.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::ostringstream os;
    for (unsigned int k = 0; k < len; ++k) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[k]);
    return os.str();
}

Schedule parse_schedule(const Json& v, const std::string& field) {
    if (v.is_number()) return Schedule::constant(v.get<double>());
    if (!v.is_object()) throw ConfigError("field '" + field + "' must be a number or a schedule object");
    const std::string kind = text(v, field, "kind");
    if (kind == "constant") {
        allow_keys(v, field, {"kind", "value"});
        return Schedule::constant(number(v, field, "value"));
    }
    if (kind == "linear" || kind == "exponential") {
        allow_keys(v, field, {"kind", "a", "b"});
        const double a = number(v, field, "a"), b = number(v, field, "b");
        return kind == "linear" ? Schedule::linear(a, b) : Schedule::exponential(a, b);
    }
    if (kind == "piecewise") {
        allow_keys(v, field, {"kind", "times", "values"});
        auto vec = [&](const char* key) {
            const Json* a = find(v, key);
            if (!a || !a->is_array()) throw ConfigError("field '" + join(field, key) + "' must be an array");
            std::vector<double> out;
            for (const auto& x : *a) {
                if (!x.is_number()) throw ConfigError("field '" + join(field, key) + "' must hold numbers");
                out.push_back(x.get<double>());
            }
            return out;
        };
        return Schedule::piecewise(vec("times"), vec("values"));
    }
    throw ConfigError("field '" + join(field, "kind") + "' must be constant, linear, exponential or piecewise");
}

std::unique_ptr<MeanConstraint> ConstraintConfig::build() const {
    if (loss) return std::make_unique<LossConstraint>(*loss);
    if (risk) return std::make_unique<RiskConstraint>(*risk);
    throw ConfigError("no constraint configured");
}

RunConfig parse_run_config(Json doc, const Overrides& ov) {
    if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
    allow_keys(doc, "", {"scenario", "generator", "terminal", "loss", "risk", "market", "contract", "measure", "solver",
                         "output", "description"});
    if (ov.seed) doc["scenario"]["seed"] = *ov.seed;
    if (ov.paths) doc["scenario"]["paths"] = *ov.paths;
    if (ov.out) doc["output"]["directory"] = *ov.out;
    if (ov.format) doc["output"]["format"] = *ov.format;

    RunConfig rc;
    const bool insurance = doc.contains("contract") || doc.contains("market");
    if (insurance) {
        if (!doc.contains("contract")) throw ConfigError("missing section 'contract'");
        if (!doc.contains("market")) throw ConfigError("missing section 'market'");
        if (doc.contains("generator") || doc.contains("loss"))
            throw ConfigError("insurance configs define the generator through contract/market/measure");
        rc.insurance = parse_insurance(doc);
    }
    const Json scenario = doc.contains("scenario") ? doc["scenario"] : Json::object();
    if (insurance && scenario.contains("horizon") &&
        std::abs(number(scenario, "scenario", "horizon") - rc.insurance->contract.maturity) > 1e-12)
        throw ConfigError("field 'scenario.horizon' differs from 'contract.maturity'");
    if (insurance && scenario.contains("compensator"))
        throw ConfigError("insurance configs derive the compensator from the contract; remove 'scenario.compensator'");
    rc.scenario = parse_scenario(scenario);
    if (insurance) {
        rc.scenario.horizon = rc.insurance->contract.maturity;
        rc.scenario.marks = rc.insurance->contract.causes;
        rc.scenario.compensator = CompensatorSpec::population_mortality(rc.insurance->contract.n, rc.insurance->contract.hazard);
        rc.scenario.dim = 1;
    }
    rc.scenario.compensator.validate(rc.scenario.marks, rc.scenario.horizon);

    if (doc.contains("generator")) rc.generator = parse_generator(doc["generator"]);
    if (doc.contains("terminal")) rc.terminal = parse_terminal(doc["terminal"]);
    if (doc.contains("loss") && doc.contains("risk")) throw ConfigError("give either 'loss' or 'risk', not both");
    if (doc.contains("loss")) {
        rc.constraint = ConstraintConfig{};
        rc.constraint->loss = parse_loss(doc["loss"]);
        rc.constraint->loss->validate(rc.scenario.horizon);
    } else if (doc.contains("risk")) {
        rc.constraint = ConstraintConfig{};
        rc.constraint->risk = parse_risk(doc["risk"]);
        rc.constraint->risk->validate(rc.scenario.horizon);
    }
    rc.solver = parse_solver(doc.contains("solver") ? doc["solver"] : Json::object());
    if (rc.solver.n_intervals == 0 || rc.solver.n_intervals > rc.scenario.steps)
        throw ConfigError("field 'solver.n_intervals' must lie in [1, scenario.steps]");
    rc.output = parse_output(doc.contains("output") ? doc["output"] : Json::object());
    if (rc.output.format != "csv" && rc.output.format != "json")
        throw ConfigError("field 'output.format' must be csv or json");
    rc.hash = config_hash(doc);
    rc.document = std::move(doc);
    return rc;
}

RunConfig load_run_config(const std::string& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(std::move(doc), overrides);
}

}  // namespace mrbsde
