#pragma once

#include <adjcheck/adjustment.hpp>
#include <adjcheck/graph.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

namespace adjcheck {

enum class ErrorFamily { Normal, Uniform, StudentT5, Logistic };

inline std::string_view to_string(ErrorFamily f) {
    switch (f) {
        case ErrorFamily::Normal: return "normal";
        case ErrorFamily::Uniform: return "uniform";
        case ErrorFamily::StudentT5: return "t5";
        case ErrorFamily::Logistic: return "logistic";
    }
    return "normal";
}

inline ErrorFamily parse_family(std::string_view s) {
    if (s == "normal" || s == "gaussian") return ErrorFamily::Normal;
    if (s == "uniform") return ErrorFamily::Uniform;
    if (s == "t5" || s == "t" || s == "student_t5") return ErrorFamily::StudentT5;
    if (s == "logistic") return ErrorFamily::Logistic;
    throw Error(ErrorCode::InvalidArgument, "unknown error family '" + std::string(s) + "'");
}

/// Linear SEM: a DAG, one coefficient per edge, one error variance per node
/// and a single error family shared by all nodes.
class SemModel {
public:
    SemModel() = default;

    /// `coefficients[i]` belongs to `graph.edges()[i]`.
    SemModel(Dag graph, std::vector<double> coefficients, std::vector<double> error_variances,
             ErrorFamily family = ErrorFamily::Normal)
        : graph_(std::move(graph)),
          coefficients_(std::move(coefficients)),
          variances_(std::move(error_variances)),
          family_(family) {
        if (coefficients_.size() != graph_.num_edges())
            throw Error(ErrorCode::InvalidArgument, "need exactly one coefficient per edge");
        if (variances_.size() != graph_.size())
            throw Error(ErrorCode::InvalidArgument, "need exactly one error variance per node");
        for (double c : coefficients_)
            if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "non-finite edge coefficient");
        for (double v : variances_)
            if (!(v > 0.0) || !std::isfinite(v))
                throw Error(ErrorCode::InvalidArgument, "error variances must be positive");
    }

    /// Every coefficient and error variance set to the same values.
    static SemModel constant(Dag graph, double coefficient = 1.0, double variance = 1.0,
                             ErrorFamily family = ErrorFamily::Normal) {
        std::vector<double> coef(graph.num_edges(), coefficient);
        std::vector<double> var(graph.size(), variance);
        return SemModel(std::move(graph), std::move(coef), std::move(var), family);
    }

    const Dag& graph() const noexcept { return graph_; }
    const std::vector<double>& coefficients() const noexcept { return coefficients_; }
    const std::vector<double>& error_variances() const noexcept { return variances_; }
    ErrorFamily family() const noexcept { return family_; }

    double coefficient(NodeId parent, NodeId child) const {
        const auto& e = graph_.edges();
        auto it = std::lower_bound(e.begin(), e.end(), Edge{parent, child});
        if (it == e.end() || *it != Edge{parent, child})
            throw Error(ErrorCode::InvalidArgument, "no edge " + graph_.label(parent) + " -> " + graph_.label(child));
        return coefficients_[static_cast<std::size_t>(it - e.begin())];
    }

    /// B with B(child, parent) = coefficient.
    Eigen::MatrixXd coefficient_matrix() const {
        const auto p = static_cast<Eigen::Index>(graph_.size());
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t i = 0; i < coefficients_.size(); ++i) {
            const auto [u, v] = graph_.edges()[i];
            b(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = coefficients_[i];
        }
        return b;
    }

private:
    Dag graph_;
    std::vector<double> coefficients_;
    std::vector<double> variances_;
    ErrorFamily family_ = ErrorFamily::Normal;
};

/// n x p sample with named columns.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<std::string> columns, Eigen::MatrixXd values)
        : columns_(std::move(columns)), values_(std::move(values)) {
        if (static_cast<std::size_t>(values_.cols()) != columns_.size())
            throw Error(ErrorCode::ColumnMismatch, "column count does not match header");
        for (std::size_t j = 0; j < columns_.size(); ++j)
            if (!index_.emplace(columns_[j], j).second)
                throw Error(ErrorCode::ColumnMismatch, "duplicate column '" + columns_[j] + "'");
        if (!values_.allFinite()) throw Error(ErrorCode::ParseError, "dataset contains missing or non-finite values");
    }

    std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const noexcept { return columns_.size(); }
    const std::vector<std::string>& columns() const noexcept { return columns_; }
    const Eigen::MatrixXd& values() const noexcept { return values_; }

    bool has_column(std::string_view label) const { return index_.count(std::string(label)) > 0; }

    Eigen::Index column_index(std::string_view label) const {
        auto it = index_.find(std::string(label));
        if (it == index_.end()) throw Error(ErrorCode::ColumnMismatch, "dataset has no column '" + std::string(label) + "'");
        return static_cast<Eigen::Index>(it->second);
    }

    auto column(std::string_view label) const { return values_.col(column_index(label)); }

    /// Copy with one column multiplied by `factor`.
    Dataset scaled(std::string_view label, double factor) const {
        Dataset out = *this;
        out.values_.col(column_index(label)) *= factor;
        return out;
    }

private:
    std::vector<std::string> columns_;
    Eigen::MatrixXd values_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Population quantities

/// (I - B)^-1; entry (i, j) is the total effect of node j on node i.
inline Eigen::MatrixXd total_effect_matrix(const SemModel& m) {
    const auto p = static_cast<Eigen::Index>(m.graph().size());
    const Eigen::MatrixXd i_minus_b = Eigen::MatrixXd::Identity(p, p) - m.coefficient_matrix();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(i_minus_b);
    if (p > 0 && std::abs(lu.determinant()) < 1e-300) throw Error(ErrorCode::SingularSystem, "I - B is singular");
    return lu.solve(Eigen::MatrixXd::Identity(p, p));
}

inline Eigen::MatrixXd population_covariance(const SemModel& m) {
    const Eigen::MatrixXd t = total_effect_matrix(m);
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(m.error_variances().data(),
                                                                static_cast<Eigen::Index>(m.error_variances().size()));
    Eigen::MatrixXd sigma = t * d.asDiagonal() * t.transpose();
    return (sigma + sigma.transpose()) / 2.0;
}

inline double total_effect(const SemModel& m, NodeId x, NodeId y) {
    m.graph().check(x);
    m.graph().check(y);
    if (x == y) throw Error(ErrorCode::InvalidArgument, "x and y must differ");
    return total_effect_matrix(m)(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x));
}

namespace detail {

/// Solves cov[S, S] b = cov[S, target] through an LDLT factorization,
/// rejecting pivots below 1e-12 of the largest.
inline Eigen::VectorXd population_regression(const Eigen::MatrixXd& cov, NodeId target,
                                             const std::vector<NodeId>& predictors) {
    const auto k = static_cast<Eigen::Index>(predictors.size());
    if (k == 0) return Eigen::VectorXd();
    Eigen::MatrixXd a(k, k);
    Eigen::VectorXd rhs(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto pi = static_cast<Eigen::Index>(predictors[static_cast<std::size_t>(i)]);
        rhs(i) = cov(pi, static_cast<Eigen::Index>(target));
        for (Eigen::Index j = 0; j < k; ++j)
            a(i, j) = cov(pi, static_cast<Eigen::Index>(predictors[static_cast<std::size_t>(j)]));
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd pivots = ldlt.vectorD();
    const double largest = pivots.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(largest > 0.0) || pivots.minCoeff() < 1e-12 * largest)
        throw Error(ErrorCode::SingularSystem, "covariance of the regressors is singular");
    return ldlt.solve(rhs);
}

/// Coefficient vector over all nodes of the population residual of `target`
/// after regressing on `predictors`: target - beta' predictors.
inline Eigen::VectorXd residual_weights(const Eigen::MatrixXd& cov, NodeId target,
                                        const std::vector<NodeId>& predictors) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(cov.rows());
    w(static_cast<Eigen::Index>(target)) = 1.0;
    const Eigen::VectorXd beta = population_regression(cov, target, predictors);
    for (std::size_t i = 0; i < predictors.size(); ++i)
        w(static_cast<Eigen::Index>(predictors[i])) -= beta(static_cast<Eigen::Index>(i));
    return w;
}

inline std::vector<NodeId> with_front(NodeId first, const NodeSet& rest) {
    std::vector<NodeId> out{first};
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

inline void check_xyz(const Dag& g, NodeId x, NodeId y, const NodeSet& z) {
    g.check(x);
    g.check(y);
    g.check(z);
    if (x == y) throw Error(ErrorCode::InvalidArgument, "x and y must differ");
    if (z.contains(x) || z.contains(y)) throw Error(ErrorCode::XYInZ, "adjustment set contains x or y");
}

}  // namespace detail

/// Coefficient of x in the population least-squares regression of y on (x, z).
inline double population_beta(const SemModel& m, NodeId y, NodeId x, const NodeSet& z) {
    detail::check_xyz(m.graph(), x, y, z);
    const Eigen::MatrixXd cov = population_covariance(m);
    return detail::population_regression(cov, y, detail::with_front(x, z))(0);
}

inline std::vector<double> population_betas(const SemModel& m, NodeId x, NodeId y,
                                            const std::vector<NodeSet>& sets) {
    const Eigen::MatrixXd cov = population_covariance(m);
    std::vector<double> out;
    out.reserve(sets.size());
    for (const auto& z : sets) {
        detail::check_xyz(m.graph(), x, y, z);
        out.push_back(detail::population_regression(cov, y, detail::with_front(x, z))(0));
    }
    return out;
}

/// Exact asymptotic covariance of the stacked adjusted estimators under
/// Gaussian errors. The fourth moment of the jointly normal residuals splits
/// into pairwise covariances; E(dx_i dy_i') vanishes by orthogonality but is
/// kept in the expansion.
inline Eigen::MatrixXd population_sigma_gaussian(const SemModel& m, NodeId x, NodeId y,
                                                 const std::vector<NodeSet>& sets) {
    if (m.family() != ErrorFamily::Normal)
        throw Error(ErrorCode::UnsupportedFamily, "exact covariance is only available for normal errors");
    if (sets.empty()) throw Error(ErrorCode::EmptyInput, "collection is empty");
    const Eigen::MatrixXd cov = population_covariance(m);
    const auto k = static_cast<Eigen::Index>(sets.size());
    std::vector<Eigen::VectorXd> dx, dy;
    for (const auto& z : sets) {
        detail::check_xyz(m.graph(), x, y, z);
        dx.push_back(detail::residual_weights(cov, x, std::vector<NodeId>(z.begin(), z.end())));
        dy.push_back(detail::residual_weights(cov, y, detail::with_front(x, z)));
    }
    auto c = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(cov * b); };
    Eigen::MatrixXd sigma(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) {
            const auto& xi = dx[static_cast<std::size_t>(i)];
            const auto& yi = dy[static_cast<std::size_t>(i)];
            const auto& xj = dx[static_cast<std::size_t>(j)];
            const auto& yj = dy[static_cast<std::size_t>(j)];
            const double fourth = c(xi, yi) * c(xj, yj) + c(xi, xj) * c(yi, yj) + c(xi, yj) * c(yi, xj);
            sigma(i, j) = fourth / (c(xi, xi) * c(xj, xj));
        }
    return sigma;
}

inline Eigen::MatrixXd population_sigma_gaussian(const SemModel& m, const AdjustmentCollection& zc) {
    return population_sigma_gaussian(m, zc.x, zc.y, zc.sets);
}

/// Population partial correlation of a and b given z.
inline double population_partial_correlation(const SemModel& m, NodeId a, NodeId b, const NodeSet& z) {
    const Eigen::MatrixXd cov = population_covariance(m);
    std::vector<NodeId> given(z.begin(), z.end());
    const Eigen::VectorXd ra = detail::residual_weights(cov, a, given);
    const Eigen::VectorXd rb = detail::residual_weights(cov, b, given);
    return ra.dot(cov * rb) / std::sqrt(ra.dot(cov * ra) * rb.dot(cov * rb));
}

// ---------------------------------------------------------------------------
// Sampling and random models

/// splitmix64 step; derives independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace detail {

inline double draw_error(ErrorFamily family, double variance, std::mt19937_64& rng) {
    switch (family) {
        case ErrorFamily::Normal: {
            std::normal_distribution<double> d(0.0, std::sqrt(variance));
            return d(rng);
        }
        case ErrorFamily::Uniform: {
            const double half_width = std::sqrt(3.0 * variance);
            std::uniform_real_distribution<double> d(-half_width, half_width);
            return d(rng);
        }
        case ErrorFamily::StudentT5: {
            std::student_t_distribution<double> d(5.0);
            return std::sqrt(3.0 / 5.0) * std::sqrt(variance) * d(rng);
        }
        case ErrorFamily::Logistic: {
            const double scale = std::sqrt(3.0 * variance) / std::numbers::pi;
            std::uniform_real_distribution<double> d(0.0, 1.0);
            double u = d(rng);
            while (u <= 0.0) u = d(rng);
            return scale * std::log(u / (1.0 - u));
        }
    }
    return 0.0;
}

}  // namespace detail

/// n i.i.d. draws from the model, columns in label order.
inline Dataset sample_data(const SemModel& m, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample size must be at least 1");
    const Dag& g = m.graph();
    const auto rows = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd values(rows, static_cast<Eigen::Index>(g.size()));
    std::mt19937_64 rng(seed);
    for (NodeId v = 0; v < g.size(); ++v) {
        const double var = m.error_variances()[v];
        auto col = values.col(static_cast<Eigen::Index>(v));
        for (Eigen::Index r = 0; r < rows; ++r) col(r) = detail::draw_error(m.family(), var, rng);
    }
    for (NodeId v : g.topological_order())
        for (NodeId p : g.parents(v))
            values.col(static_cast<Eigen::Index>(v)) += m.coefficient(p, v) * values.col(static_cast<Eigen::Index>(p));
    return Dataset(g.labels(), std::move(values));
}

inline std::string node_label(std::size_t index, std::size_t count) {
    const std::string digits = std::to_string(index + 1);
    const std::size_t width = std::to_string(count).size();
    return "V" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

/// Random DAG: nodes in a uniformly shuffled causal order; each forward pair
/// gets an edge with probability d / (p - 1), so the expected degree is d.
inline Dag random_dag(std::size_t p, double expected_neighborhood, std::uint64_t seed) {
    if (p < 2) throw Error(ErrorCode::InvalidArgument, "random DAG needs at least two nodes");
    std::mt19937_64 rng(seed);
    std::vector<NodeId> order(p);
    for (NodeId v = 0; v < p; ++v) order[v] = v;
    std::shuffle(order.begin(), order.end(), rng);
    const double prob = std::clamp(expected_neighborhood / static_cast<double>(p - 1), 0.0, 1.0);
    std::bernoulli_distribution coin(prob);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j)
            if (coin(rng)) edges.emplace_back(order[i], order[j]);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < p; ++i) labels.push_back(node_label(i, p));
    return Dag::from_ids(std::move(labels), std::move(edges));
}

/// Variance implied by the sampled family parameter.
inline double family_variance(ErrorFamily family, double parameter) {
    switch (family) {
        case ErrorFamily::Normal: return parameter;
        case ErrorFamily::Uniform: return parameter * parameter / 3.0;
        case ErrorFamily::StudentT5: return parameter;
        case ErrorFamily::Logistic: return parameter * parameter * std::numbers::pi * std::numbers::pi / 3.0;
    }
    return parameter;
}

/// Coefficients uniform on [-2, -0.1] ∪ [0.1, 2]; one error family for the
/// whole model; per-node family parameters:
///   normal   variance U(0.5, 1.5)
///   uniform  half-width U(1.2, 2.1)
///   t5       sqrt(3/5) * sqrt(U(0.5, 1.5)) scaling, i.e. variance U(0.5, 1.5)
///   logistic scale U(0.4, 0.7)
/// `fixed` overrides the drawn family without changing the random stream.
inline SemModel random_sem(const Dag& g, std::uint64_t seed, std::optional<ErrorFamily> fixed = std::nullopt) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> magnitude(0.1, 2.0);
    std::bernoulli_distribution negative(0.5);
    std::vector<double> coef;
    coef.reserve(g.num_edges());
    for (std::size_t i = 0; i < g.num_edges(); ++i) {
        const double a = magnitude(rng);
        coef.push_back(negative(rng) ? -a : a);
    }
    std::uniform_int_distribution<int> pick(0, 3);
    const int drawn = pick(rng);
    const ErrorFamily family = fixed ? *fixed : static_cast<ErrorFamily>(drawn);

    std::uniform_real_distribution<double> param = [&] {
        switch (family) {
            case ErrorFamily::Uniform: return std::uniform_real_distribution<double>(1.2, 2.1);
            case ErrorFamily::Logistic: return std::uniform_real_distribution<double>(0.4, 0.7);
            default: return std::uniform_real_distribution<double>(0.5, 1.5);
        }
    }();
    std::vector<double> var;
    var.reserve(g.size());
    for (std::size_t v = 0; v < g.size(); ++v) var.push_back(family_variance(family, param(rng)));
    return SemModel(g, std::move(coef), std::move(var), family);
}

/// Draws (x, y): x weighted by |de(x)| - 1, y uniform on de(x) \ {x},
/// redrawn until the pair has at least two valid adjustment sets.
inline std::pair<NodeId, NodeId> sample_xy_pair(const Dag& g, std::uint64_t seed, std::size_t max_tries = 100) {
    std::vector<double> weights(g.size());
    std::vector<NodeSet> desc(g.size());
    for (NodeId v = 0; v < g.size(); ++v) {
        desc[v] = descendants(g, v);
        weights[v] = static_cast<double>(desc[v].size() - 1);
    }
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; }))
        throw Error(ErrorCode::NoEligiblePair, "graph has no edges");

    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick_x(weights.begin(), weights.end());
    for (std::size_t attempt = 0; attempt < max_tries; ++attempt) {
        const NodeId x = pick_x(rng);
        std::vector<NodeId> targets;
        for (NodeId v : desc[x])
            if (v != x) targets.push_back(v);
        std::uniform_int_distribution<std::size_t> pick_y(0, targets.size() - 1);
        const NodeId y = targets[pick_y(rng)];
        try {
            (void)enumerate_all_valid(g, x, y, 1);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::CapExceeded) return {x, y};
            throw;
        }
    }
    throw Error(ErrorCode::NoEligiblePair, "no pair with two or more valid adjustment sets after " +
                                               std::to_string(max_tries) + " draws");
}

/// Applies `n_ops` random edits (delete, add or reverse an edge), each kept
/// only if the result stays acyclic.
inline Dag perturb_graph(const Dag& g, std::size_t n_ops, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Edge> edges = g.edges();
    const std::size_t p = g.size();
    auto acyclic = [&](const std::vector<Edge>& candidate) {
        try {
            (void)Dag::from_ids(g.labels(), candidate);
            return true;
        } catch (const Error&) {
            return false;
        }
    };
    auto has = [&](NodeId a, NodeId b) { return std::find(edges.begin(), edges.end(), Edge{a, b}) != edges.end(); };

    for (std::size_t op = 0; op < n_ops; ++op) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
            if (kind == 0 && !edges.empty()) {
                const auto i = std::uniform_int_distribution<std::size_t>(0, edges.size() - 1)(rng);
                edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(i));
                break;
            }
            if (kind == 1 && p >= 2) {
                const auto a = std::uniform_int_distribution<NodeId>(0, p - 1)(rng);
                const auto b = std::uniform_int_distribution<NodeId>(0, p - 1)(rng);
                if (a == b || has(a, b) || has(b, a)) continue;
                auto candidate = edges;
                candidate.emplace_back(a, b);
                if (!acyclic(candidate)) continue;
                edges = std::move(candidate);
                break;
            }
            if (kind == 2 && !edges.empty()) {
                const auto i = std::uniform_int_distribution<std::size_t>(0, edges.size() - 1)(rng);
                auto candidate = edges;
                std::swap(candidate[i].first, candidate[i].second);
                if (!acyclic(candidate)) continue;
                edges = std::move(candidate);
                break;
            }
        }
    }
    return Dag::from_ids(g.labels(), std::move(edges));
}

// ---------------------------------------------------------------------------
// Text formats

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view s) {
    s = detail::trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "not a number: '" + std::string(s) + "'");
    return v;
}

/// SEM text: `A -> B : 0.5` edges and `node A : var=1.0 dist=normal` nodes.
/// Nodes without a `node` line get variance 1; all `dist` values must agree.
inline SemModel parse_sem(std::string_view text) {
    std::vector<std::string> nodes;
    std::unordered_map<std::string, double> variance;
    std::vector<LabelEdge> edges;
    std::vector<double> edge_coef;
    std::optional<ErrorFamily> family;
    auto declare = [&](const std::string& label) {
        if (!variance.count(label)) {
            variance.emplace(label, 1.0);
            nodes.push_back(label);
        }
    };

    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        const auto eol = std::min(text.find('\n', pos), text.size());
        const std::string_view line = detail::trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;

        const auto colon = line.find(':');
        const std::string_view head = detail::trim(line.substr(0, colon));
        const std::string_view tail = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 1);

        if (head.starts_with("node ") || head.starts_with("node\t")) {
            const std::string label(detail::trim(head.substr(5)));
            if (!detail::valid_label(label)) throw detail::parse_error(line_no, "bad node label");
            declare(label);
            std::string_view rest = detail::trim(tail);
            while (!rest.empty()) {
                const auto space = rest.find_first_of(" \t");
                const std::string_view field = rest.substr(0, space);
                rest = space == std::string_view::npos ? std::string_view{} : detail::trim(rest.substr(space));
                const auto eq = field.find('=');
                if (eq == std::string_view::npos) throw detail::parse_error(line_no, "expected key=value");
                const auto key = field.substr(0, eq);
                const auto value = field.substr(eq + 1);
                try {
                    if (key == "var") {
                        variance[label] = parse_number(value);
                    } else if (key == "dist") {
                        const ErrorFamily f = parse_family(value);
                        if (family && *family != f) throw detail::parse_error(line_no, "mixed error families");
                        family = f;
                    } else {
                        throw detail::parse_error(line_no, "unknown key '" + std::string(key) + "'");
                    }
                } catch (const Error& e) {
                    if (e.code() == ErrorCode::ParseError) throw;
                    throw detail::parse_error(line_no, e.what());
                }
            }
            continue;
        }

        const auto arrow = head.find("->");
        if (arrow == std::string_view::npos) throw detail::parse_error(line_no, "expected 'A -> B : coef' or 'node A : ...'");
        if (colon == std::string_view::npos) throw detail::parse_error(line_no, "edge without coefficient");
        const std::string from(detail::trim(head.substr(0, arrow)));
        const std::string to(detail::trim(head.substr(arrow + 2)));
        if (!detail::valid_label(from) || !detail::valid_label(to)) throw detail::parse_error(line_no, "bad edge endpoints");
        declare(from);
        declare(to);
        edges.emplace_back(from, to);
        try {
            edge_coef.push_back(parse_number(tail));
        } catch (const Error& e) {
            throw detail::parse_error(line_no, e.what());
        }
    }

    Dag g(nodes, edges);
    std::vector<double> coef(g.num_edges());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const Edge e{g.id(edges[i].first), g.id(edges[i].second)};
        const auto it = std::lower_bound(g.edges().begin(), g.edges().end(), e);
        coef[static_cast<std::size_t>(it - g.edges().begin())] = edge_coef[i];
    }
    std::vector<double> var(g.size());
    for (NodeId v = 0; v < g.size(); ++v) var[v] = variance.at(g.label(v));
    try {
        return SemModel(std::move(g), std::move(coef), std::move(var), family.value_or(ErrorFamily::Normal));
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

inline SemModel load_sem(const std::string& path) { return parse_sem(detail::read_file(path)); }

inline std::string write_sem(const SemModel& m) {
    const Dag& g = m.graph();
    std::string out;
    for (NodeId v = 0; v < g.size(); ++v)
        out += "node " + g.label(v) + " : var=" + format_number(m.error_variances()[v]) +
               " dist=" + std::string(to_string(m.family())) + "\n";
    for (std::size_t i = 0; i < g.num_edges(); ++i) {
        const auto [u, v] = g.edges()[i];
        out += g.label(u) + " -> " + g.label(v) + " : " + format_number(m.coefficients()[i]) + "\n";
    }
    return out;
}

/// CSV with a header row of labels.
inline Dataset parse_csv(std::string_view text) {
    std::vector<std::string> header;
    std::vector<double> cells;
    std::size_t rows = 0, line_no = 0, pos = 0;
    auto split = [](std::string_view line) {
        std::vector<std::string_view> out;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            out.push_back(detail::trim(line.substr(start, comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return out;
    };
    while (pos <= text.size()) {
        const auto eol = std::min(text.find('\n', pos), text.size());
        const std::string_view line = detail::trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split(line);
        if (header.empty()) {
            for (auto f : fields) {
                if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
                header.emplace_back(f);
            }
            continue;
        }
        if (fields.size() != header.size()) throw detail::parse_error(line_no, "wrong number of fields");
        for (auto f : fields) {
            try {
                cells.push_back(parse_number(f));
            } catch (const Error& e) {
                throw detail::parse_error(line_no, e.what());
            }
        }
        ++rows;
    }
    if (header.empty()) throw Error(ErrorCode::ParseError, "empty CSV");
    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(header.size()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < header.size(); ++c)
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cells[r * header.size() + c];
    return Dataset(std::move(header), std::move(values));
}

inline Dataset load_csv(const std::string& path) { return parse_csv(detail::read_file(path)); }

inline std::string write_csv(const Dataset& d) {
    std::string out;
    for (std::size_t c = 0; c < d.cols(); ++c) out += (c ? "," : "") + d.columns()[c];
    out += "\n";
    for (Eigen::Index r = 0; r < d.values().rows(); ++r) {
        for (Eigen::Index c = 0; c < d.values().cols(); ++c) {
            if (c) out += ",";
            out += format_number(d.values()(r, c));
        }
        out += "\n";
    }
    return out;
}

}  // namespace adjcheck
