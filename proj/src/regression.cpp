#include "mrbsde/regression.hpp"

#include "mrbsde/errors.hpp"
#include "mrbsde/parallel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <regex>

namespace mrbsde {

Feature Feature::parse(const std::string& text, const MarkSpace& marks) {
    static const std::regex w_re(R"(W(\d+)(\^([23]))?)");
    static const std::regex n_re(R"(N\[(.+)\])");
    std::smatch m;
    if (text == "const" || text == "1") return {FeatureKind::constant, 0};
    if (text == "N") return {FeatureKind::count_total, 0};
    if (text == "survivors") return {FeatureKind::survivors, 0};
    if (text == "1{N=0}") return {FeatureKind::no_jump, 0};
    if (text == "S") return {FeatureKind::stock, 0};
    if (text == "logS") return {FeatureKind::log_stock, 0};
    if (std::regex_match(text, m, w_re)) {
        const auto k = static_cast<std::size_t>(std::stoul(m[1].str()));
        if (!m[3].matched) return {FeatureKind::brownian, k};
        return {m[3].str() == "2" ? FeatureKind::brownian_sq : FeatureKind::brownian_cube, k};
    }
    if (std::regex_match(text, m, n_re)) return {FeatureKind::count, marks.index_of(m[1].str())};
    throw ConfigError("unknown regression feature '" + text + "'");
}

std::string Feature::name(const MarkSpace& marks) const {
    switch (kind) {
    case FeatureKind::constant: return "const";
    case FeatureKind::brownian: return "W" + std::to_string(index);
    case FeatureKind::brownian_sq: return "W" + std::to_string(index) + "^2";
    case FeatureKind::brownian_cube: return "W" + std::to_string(index) + "^3";
    case FeatureKind::count: return "N[" + marks.label(index) + "]";
    case FeatureKind::count_total: return "N";
    case FeatureKind::survivors: return "survivors";
    case FeatureKind::no_jump: return "1{N=0}";
    case FeatureKind::stock: return "S";
    case FeatureKind::log_stock: return "logS";
    }
    return "?";
}

double Feature::value(const PathBundle& b, std::size_t p, std::size_t i) const {
    switch (kind) {
    case FeatureKind::constant: return 1.0;
    case FeatureKind::brownian: return b.W(p, i, index);
    case FeatureKind::brownian_sq: {
        const double w = b.W(p, i, index);
        return w * w;
    }
    case FeatureKind::brownian_cube: {
        const double w = b.W(p, i, index);
        return w * w * w;
    }
    case FeatureKind::count: return b.N(p, i, index);
    case FeatureKind::count_total: return b.N(p, i);
    case FeatureKind::survivors: return b.survivors(p, i);
    case FeatureKind::no_jump: return b.N(p, i) == 0 ? 1.0 : 0.0;
    case FeatureKind::stock: return b.S(p, i);
    case FeatureKind::log_stock: return std::log(b.S(p, i));
    }
    return 0.0;
}

RegressionBasisSpec RegressionBasisSpec::default_for(const PathBundle& b) {
    RegressionBasisSpec s;
    s.features.push_back({FeatureKind::constant, 0});
    for (std::size_t k = 0; k < b.dim; ++k) {
        s.features.push_back({FeatureKind::brownian, k});
        s.features.push_back({FeatureKind::brownian_sq, k});
    }
    if (b.population) {
        s.features.push_back({FeatureKind::survivors, 0});
    } else {
        for (std::size_t e = 0; e < b.mark_count(); ++e) s.features.push_back({FeatureKind::count, e});
    }
    if (b.has_stock()) s.features.push_back({FeatureKind::log_stock, 0});
    while (s.features.size() > 1 && s.features.size() * 10 > b.paths) s.features.pop_back();
    return s;
}

RegressionBasisSpec RegressionBasisSpec::parse(const std::vector<std::string>& names, const MarkSpace& marks,
                                               double ridge) {
    if (!(ridge >= 0.0)) throw ConfigError("regression ridge must be >= 0");
    RegressionBasisSpec s;
    s.ridge = ridge;
    for (const auto& n : names) s.features.push_back(Feature::parse(n, marks));
    return s;
}

std::vector<std::string> RegressionBasisSpec::names(const MarkSpace& marks) const {
    std::vector<std::string> out;
    for (const auto& f : features) out.push_back(f.name(marks));
    return out;
}

void RegressionBasisSpec::validate(const PathBundle& b) const {
    if (std::none_of(features.begin(), features.end(), [](const Feature& f) { return f.kind == FeatureKind::constant; }))
        throw ConfigError("regression basis must contain the constant feature");
    if (features.size() * 10 > b.paths)
        throw ConfigError("regression basis has " + std::to_string(features.size()) + " features; at most J/10 = " +
                          std::to_string(b.paths / 10) + " allowed");
    if (!(ridge >= 0.0)) throw ConfigError("regression ridge must be >= 0");
    for (const auto& f : features) {
        switch (f.kind) {
        case FeatureKind::brownian:
        case FeatureKind::brownian_sq:
        case FeatureKind::brownian_cube:
            if (f.index >= b.dim) throw ConfigError("regression feature refers to a missing Brownian coordinate");
            break;
        case FeatureKind::count:
            if (f.index >= b.mark_count()) throw ConfigError("regression feature refers to a missing mark");
            break;
        case FeatureKind::survivors:
            if (!b.population) throw ConfigError("'survivors' feature needs a population bundle");
            break;
        case FeatureKind::stock:
        case FeatureKind::log_stock:
            if (!b.has_stock()) throw ConfigError("stock feature needs a bundle with a stock");
            break;
        default: break;
        }
    }
}

struct NodeRegression::Impl {
    Eigen::MatrixXd X;  // centred, scaled, J x q
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
};

NodeRegression::NodeRegression(const PathBundle& b, const RegressionBasisSpec& basis, std::size_t node)
    : paths_(b.paths) {
    const std::size_t J = b.paths;
    const double n = static_cast<double>(J);
    std::vector<Eigen::VectorXd> cols;
    for (const auto& f : basis.features) {
        if (f.kind == FeatureKind::constant) continue;
        Eigen::VectorXd c(static_cast<Eigen::Index>(J));
        for (std::size_t p = 0; p < J; ++p) c[static_cast<Eigen::Index>(p)] = f.value(b, p, node);
        if (!c.allFinite()) throw NumericError("regression feature " + f.name(b.marks) + " is not finite");
        const double mean = c.mean();
        c.array() -= mean;
        const double sd = std::sqrt(c.squaredNorm() / n);
        if (!(sd > 1e-12 * (std::abs(mean) + 1.0))) continue;  // constant at this node
        c /= sd;
        cols.push_back(std::move(c));
    }
    auto impl = std::make_shared<Impl>();
    columns_ = cols.size() + 1;
    if (!cols.empty()) {
        const auto q = static_cast<Eigen::Index>(cols.size());
        impl->X.resize(static_cast<Eigen::Index>(J), q);
        for (Eigen::Index k = 0; k < q; ++k) impl->X.col(k) = cols[static_cast<std::size_t>(k)];
        Eigen::MatrixXd gram = impl->X.transpose() * impl->X / n;
        const double scale = gram.trace() / static_cast<double>(q);
        gram.diagonal().array() += basis.ridge;
        impl->ldlt.compute(gram);
        const auto d = impl->ldlt.vectorD();
        const double dmax = d.maxCoeff();
        const double dmin = d.minCoeff();
        if (impl->ldlt.info() != Eigen::Success || !(dmin > 1e-12 * dmax)) {
            // Near-collinear columns: a small ridge selects the minimal-norm solution.
            gram.diagonal().array() += 1e-8 * scale;
            impl->ldlt.compute(gram);
            fallback_ = true;
        }
    }
    impl_ = std::move(impl);
}

void NodeRegression::project(std::span<const double> target, std::span<double> fitted) const {
    if (target.size() != paths_ || fitted.size() != paths_) throw ConfigError("regression target has the wrong size");
    const auto J = static_cast<Eigen::Index>(paths_);
    Eigen::Map<const Eigen::VectorXd> y(target.data(), J);
    const double mean = y.mean();
    Eigen::Map<Eigen::VectorXd> out(fitted.data(), J);
    if (impl_->X.cols() == 0) {
        out.setConstant(mean);
        return;
    }
    const Eigen::VectorXd rhs = impl_->X.transpose() * (y.array() - mean).matrix() / static_cast<double>(paths_);
    const Eigen::VectorXd beta = impl_->ldlt.solve(rhs);
    out = impl_->X * beta;
    out.array() += mean;
}

Projector::Projector(const PathBundle& bundle, RegressionBasisSpec basis) : bundle_(&bundle), basis_(std::move(basis)) {
    basis_.validate(bundle);
    const std::size_t m = bundle.steps();
    std::vector<std::unique_ptr<NodeRegression>> built(m);
    parallel_for(m, [&](std::size_t i) { built[i] = std::make_unique<NodeRegression>(bundle, basis_, i); });
    nodes_.reserve(m);
    for (auto& r : built) nodes_.push_back(std::move(*r));
}

std::size_t Projector::fallback_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const NodeRegression& r) { return r.used_ridge_fallback(); }));
}

}  // namespace mrbsde
