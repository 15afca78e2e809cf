#include "mrbsde/io.hpp"

#include "mrbsde/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mrbsde {
namespace {

std::string kind_name(CompensatorKind k) {
    switch (k) {
    case CompensatorKind::constant_intensity: return "poisson";
    case CompensatorKind::time_varying_intensity: return "time_varying";
    case CompensatorKind::population_mortality: return "population";
    case CompensatorKind::local_time_clock: return "local_time";
    }
    return "?";
}

CompensatorKind kind_from(const std::string& s) {
    if (s == "poisson") return CompensatorKind::constant_intensity;
    if (s == "time_varying") return CompensatorKind::time_varying_intensity;
    if (s == "population") return CompensatorKind::population_mortality;
    if (s == "local_time") return CompensatorKind::local_time_clock;
    throw ConfigError("unknown compensator kind '" + s + "' in bundle header");
}

std::string marker_name(MarkerKind k) {
    switch (k) {
    case MarkerKind::finite: return "finite";
    case MarkerKind::gaussian: return "gaussian";
    case MarkerKind::stock_value: return "stock";
    }
    return "?";
}

MarkerKind marker_from(const std::string& s) {
    if (s == "finite") return MarkerKind::finite;
    if (s == "gaussian") return MarkerKind::gaussian;
    if (s == "stock") return MarkerKind::stock_value;
    throw ConfigError("unknown marker '" + s + "' in bundle header");
}

double parse_number(const std::string& s, const std::string& where) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double x = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError("cannot parse number '" + s + "' in " + where);
    return x;
}

std::size_t column(const Table& t, const std::string& name) {
    for (std::size_t k = 0; k < t.columns.size(); ++k)
        if (t.columns[k] == name) return k;
    throw ConfigError("table has no column '" + name + "'");
}

}  // namespace

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

void write_json(const std::string& path, const Json& doc) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << doc.dump(2) << '\n';
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::string write_table(const std::string& stem, const Table& t, const std::string& format) {
    if (format == "json") {
        Json doc;
        doc["header"] = t.header;
        doc["columns"] = t.columns;
        Json rows = Json::array();
        for (const auto& r : t.rows) {
            Json row = Json::array();
            for (double x : r) row.push_back(std::isfinite(x) ? Json(x) : Json(nullptr));
            rows.push_back(std::move(row));
        }
        doc["rows"] = std::move(rows);
        const std::string path = stem + ".json";
        std::ofstream out(path);
        if (!out) throw ConfigError("cannot write '" + path + "'");
        out << doc.dump() << '\n';
        return path;
    }
    if (format != "csv") throw ConfigError("unknown output format '" + format + "'");
    const std::string path = stem + ".csv";
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "# " << t.header.dump() << '\n';
    for (std::size_t k = 0; k < t.columns.size(); ++k) out << (k ? "," : "") << t.columns[k];
    out << '\n';
    std::string line;
    for (const auto& r : t.rows) {
        line.clear();
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (k) line += ',';
            line += format_number(r[k]);
        }
        line += '\n';
        out << line;
    }
    if (!out) throw ConfigError("failed writing '" + path + "'");
    return path;
}

Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    Table t;
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
        Json doc = Json::parse(in);
        t.header = doc.at("header");
        t.columns = doc.at("columns").get<std::vector<std::string>>();
        for (const auto& r : doc.at("rows")) {
            std::vector<double> row;
            for (const auto& x : r) row.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("'" + path + "' is empty");
    if (line.rfind("# ", 0) == 0) {
        t.header = Json::parse(line.substr(2));
        if (!std::getline(in, line)) throw ConfigError("'" + path + "' has no column line");
    }
    {
        std::istringstream cols(line);
        std::string c;
        while (std::getline(cols, c, ',')) t.columns.push_back(c);
    }
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(t.columns.size());
        std::size_t a = 0;
        while (true) {
            const std::size_t b = line.find(',', a);
            row.push_back(parse_number(line.substr(a, b == std::string::npos ? std::string::npos : b - a),
                                       path + ":" + std::to_string(lineno)));
            if (b == std::string::npos) break;
            a = b + 1;
        }
        if (row.size() != t.columns.size())
            throw ConfigError(path + ":" + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                              " fields, expected " + std::to_string(t.columns.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table bundle_table(const PathBundle& b) {
    Table t;
    const std::size_t E = b.mark_count(), m = b.steps();
    t.columns = {"path", "node", "t", "A"};
    for (std::size_t k = 0; k < b.dim; ++k) t.columns.push_back("W" + std::to_string(k));
    for (std::size_t e = 0; e < E; ++e) t.columns.push_back("N[" + b.marks.label(e) + "]");
    for (std::size_t e = 0; e < E; ++e) t.columns.push_back("nu[" + b.marks.label(e) + "]");
    for (std::size_t e = 0; e < E; ++e) t.columns.push_back("nu_pred[" + b.marks.label(e) + "]");
    if (b.has_stock()) t.columns.push_back("S");

    Json h;
    h["format"] = "mrbsde-bundle";
    h["version"] = 1;
    h["paths"] = b.paths;
    h["steps"] = m;
    h["dim"] = b.dim;
    h["seed"] = b.seed;
    h["compensator"] = kind_name(b.kind);
    h["marker"] = marker_name(b.marker);
    h["marks"] = {{"labels", b.marks.labels()}, {"probabilities", b.marks.probabilities()}};
    if (b.population) h["population"] = *b.population;
    h["grid"] = std::vector<double>(b.grid.nodes().begin(), b.grid.nodes().end());
    h["columns"] = t.columns;
    t.header = std::move(h);

    t.rows.reserve(b.paths * b.nodes());
    for (std::size_t p = 0; p < b.paths; ++p) {
        for (std::size_t i = 0; i <= m; ++i) {
            std::vector<double> r{double(p), double(i), b.grid[i], b.A(p, i)};
            for (std::size_t k = 0; k < b.dim; ++k) r.push_back(b.W(p, i, k));
            for (std::size_t e = 0; e < E; ++e) r.push_back(b.N(p, i, e));
            for (std::size_t e = 0; e < E; ++e) r.push_back(i < m ? b.nu(p, i, e) : 0.0);
            for (std::size_t e = 0; e < E; ++e) r.push_back(i < m ? b.nu_pred(p, i, e) : 0.0);
            if (b.has_stock()) r.push_back(b.S(p, i));
            t.rows.push_back(std::move(r));
        }
    }
    return t;
}

PathBundle bundle_from_table(const Table& t) {
    const Json& h = t.header;
    if (!h.is_object() || h.value("format", "") != "mrbsde-bundle") throw ConfigError("not a bundle file");
    PathBundle b;
    b.grid = TimeGrid(h.at("grid").get<std::vector<double>>());
    b.marks = MarkSpace(h.at("marks").at("labels").get<std::vector<std::string>>(),
                        h.at("marks").at("probabilities").get<std::vector<double>>());
    b.kind = kind_from(h.at("compensator").get<std::string>());
    b.marker = marker_from(h.at("marker").get<std::string>());
    b.paths = h.at("paths").get<std::size_t>();
    b.dim = h.at("dim").get<std::size_t>();
    b.seed = h.at("seed").get<std::uint64_t>();
    if (h.contains("population")) b.population = h["population"].get<int>();
    const std::size_t m = b.steps(), nodes = b.nodes(), E = b.mark_count(), J = b.paths;
    if (t.rows.size() != J * nodes) throw ConfigError("bundle file has the wrong number of rows");

    const std::size_t cA = column(t, "A");
    std::vector<std::size_t> cW, cN, cNu, cNp;
    for (std::size_t k = 0; k < b.dim; ++k) cW.push_back(column(t, "W" + std::to_string(k)));
    for (std::size_t e = 0; e < E; ++e) {
        cN.push_back(column(t, "N[" + b.marks.label(e) + "]"));
        cNu.push_back(column(t, "nu[" + b.marks.label(e) + "]"));
        cNp.push_back(column(t, "nu_pred[" + b.marks.label(e) + "]"));
    }
    const bool stock = std::find(t.columns.begin(), t.columns.end(), "S") != t.columns.end();
    const std::size_t cS = stock ? column(t, "S") : 0;

    b.w.assign(J * nodes * b.dim, 0.0);
    b.dw.assign(J * m * b.dim, 0.0);
    b.clock.assign(J * nodes, 0.0);
    b.counts.assign(J * nodes * E, 0);
    b.comp.assign(J * m * E, 0.0);
    b.comp_pred.assign(J * m * E, 0.0);
    b.mpp.assign(J, {});
    if (stock) b.stock.assign(J * nodes, 0.0);
    for (std::size_t p = 0; p < J; ++p) {
        for (std::size_t i = 0; i <= m; ++i) {
            const auto& r = t.rows[p * nodes + i];
            if (r[0] != double(p) || r[1] != double(i)) throw ConfigError("bundle rows are not in (path, node) order");
            b.clock[p * nodes + i] = r[cA];
            for (std::size_t k = 0; k < b.dim; ++k) b.w[(p * nodes + i) * b.dim + k] = r[cW[k]];
            for (std::size_t e = 0; e < E; ++e) {
                b.counts[(p * nodes + i) * E + e] = static_cast<int>(r[cN[e]]);
                if (i < m) {
                    b.comp[(p * m + i) * E + e] = r[cNu[e]];
                    b.comp_pred[(p * m + i) * E + e] = r[cNp[e]];
                }
            }
            if (stock) b.stock[p * nodes + i] = r[cS];
        }
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < b.dim; ++k)
                b.dw[(p * m + i) * b.dim + k] = b.W(p, i + 1, k) - b.W(p, i, k);
    }
    b.validate();
    return b;
}

Table events_table(const PathBundle& b) {
    Table t;
    t.columns = {"path", "time", "mark", "value"};
    t.header = {{"format", "mrbsde-events"}, {"marks", b.marks.labels()}};
    for (std::size_t p = 0; p < b.paths; ++p)
        for (const auto& ev : b.mpp[p].events) t.rows.push_back({double(p), ev.time, double(ev.mark.index), ev.mark.value});
    return t;
}

Table solution_nodes_table(const FlatnessReport& r) {
    Table t;
    t.columns = {"t", "K", "dK", "EY", "Econstraint", "constraint_se", "tolerance", "L", "M"};
    t.header = {{"format", "mrbsde-solution-nodes"}};
    for (const auto& row : r.rows)
        t.rows.push_back({row.t, row.K, row.dK, row.mean_Y, row.margin, row.margin_se, row.tolerance, row.L, row.M});
    return t;
}

Table backward_table(const BackwardSolution& s, const PathBundle& b) {
    Table t;
    t.columns = {"path", "node", "t", "y"};
    for (std::size_t k = 0; k < s.dim; ++k) t.columns.push_back("z" + std::to_string(k));
    for (std::size_t e = 0; e < s.marks; ++e) t.columns.push_back("u[" + b.marks.label(e) + "]");
    t.header = {{"format", "mrbsde-backward"}, {"note", "z and u at node i hold the interval (t_i, t_{i+1}]"}};
    t.rows.reserve(s.paths * s.nodes());
    for (std::size_t p = 0; p < s.paths; ++p) {
        for (std::size_t i = 0; i < s.nodes(); ++i) {
            std::vector<double> r{double(p), double(i), b.grid[i], s.Y(p, i)};
            const auto z = s.Z_at(p, i);
            const auto u = s.U_at(p, i);
            r.insert(r.end(), z.begin(), z.end());
            r.insert(r.end(), u.begin(), u.end());
            t.rows.push_back(std::move(r));
        }
    }
    return t;
}

Table hedge_schedule_table(const HedgePlan& plan, const PathBundle& b) {
    Table t;
    t.columns = {"t", "E_pi", "E_chi", "K", "D_t", "ES_Y", "c_t", "cause_dispersion"};
    t.header = {{"format", "mrbsde-hedge-schedule"},
                {"note", "E_pi, E_chi and cause_dispersion hold the interval (t_i, t_{i+1}]; empty at T"}};
    const std::size_t m = b.steps(), J = b.paths;
    for (std::size_t i = 0; i <= m; ++i) {
        double pi = std::numeric_limits<double>::quiet_NaN(), chi = pi, disp = pi;
        if (i < m) {
            pi = chi = 0.0;
            for (std::size_t p = 0; p < J; ++p) {
                pi += plan.pi[p * m + i];
                chi += plan.chi[p * m + i];
            }
            pi /= double(J);
            chi /= double(J);
            disp = plan.cause_dispersion[i];
        }
        t.rows.push_back({b.grid[i], pi, chi, plan.K[i], plan.bond_curve[i], plan.es[i], plan.benchmark[i], disp});
    }
    return t;
}

}  // namespace mrbsde
