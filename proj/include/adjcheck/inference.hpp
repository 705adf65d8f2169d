#pragma once

#include <adjcheck/adjustment.hpp>
#include <adjcheck/chi_square.hpp>
#include <adjcheck/graph.hpp>
#include <adjcheck/sem.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace adjcheck {

struct OlsFit {
    double intercept = 0.0;
    Eigen::VectorXd coefficients;  ///< in covariate order
    Eigen::VectorXd residuals;
};

/// Least squares with an intercept, via column-pivoted Householder QR.
inline OlsFit ols_fit(const Dataset& data, std::string_view target, const std::vector<std::string>& covariates) {
    const auto n = static_cast<Eigen::Index>(data.rows());
    const auto p = static_cast<Eigen::Index>(covariates.size());
    if (static_cast<std::size_t>(n) <= covariates.size() + 2)
        throw Error(ErrorCode::InsufficientSamples,
                    "need more than " + std::to_string(covariates.size() + 2) + " rows, have " + std::to_string(n));

    Eigen::MatrixXd design(n, p + 1);
    design.col(0).setOnes();
    for (Eigen::Index j = 0; j < p; ++j) design.col(j + 1) = data.column(covariates[static_cast<std::size_t>(j)]);
    const Eigen::VectorXd response = data.column(target);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < p + 1) throw Error(ErrorCode::RankDeficientDesign, "design matrix is rank deficient");
    const Eigen::VectorXd beta = qr.solve(response);

    OlsFit fit;
    fit.intercept = beta(0);
    fit.coefficients = beta.tail(p);
    fit.residuals = response - design * beta;
    return fit;
}

/// Per-set estimates and the residuals behind them, one column per set.
struct CoefficientStack {
    Eigen::VectorXd betas;
    Eigen::MatrixXd residuals_x;  ///< x regressed on Z_i
    Eigen::MatrixXd residuals_y;  ///< y regressed on (x, Z_i)
    std::size_t n = 0;
    double x_centered_ss = 0.0;

    std::size_t k() const noexcept { return static_cast<std::size_t>(betas.size()); }
};

inline CoefficientStack coefficient_stack(const Dataset& data, std::string_view x, std::string_view y,
                                          const std::vector<std::vector<std::string>>& sets) {
    if (sets.empty()) throw Error(ErrorCode::EmptyInput, "collection is empty");
    const auto n = static_cast<Eigen::Index>(data.rows());
    const auto k = static_cast<Eigen::Index>(sets.size());
    CoefficientStack stack;
    stack.n = data.rows();
    stack.betas.resize(k);
    stack.residuals_x.resize(n, k);
    stack.residuals_y.resize(n, k);
    const auto xcol = data.column(x);
    stack.x_centered_ss = (xcol.array() - xcol.mean()).square().sum();

    for (Eigen::Index i = 0; i < k; ++i) {
        const auto& z = sets[static_cast<std::size_t>(i)];
        for (const auto& label : z)
            if (label == x || label == y) throw Error(ErrorCode::XYInZ, "adjustment set contains x or y");
        std::vector<std::string> with_x{std::string(x)};
        with_x.insert(with_x.end(), z.begin(), z.end());
        const OlsFit outcome = ols_fit(data, y, with_x);
        stack.betas(i) = outcome.coefficients(0);
        stack.residuals_y.col(i) = outcome.residuals;
        stack.residuals_x.col(i) = ols_fit(data, x, z).residuals;
    }
    return stack;
}

inline CoefficientStack coefficient_stack(const Dataset& data, const Dag& g, const AdjustmentCollection& zc) {
    std::vector<std::vector<std::string>> sets;
    sets.reserve(zc.sets.size());
    for (const auto& z : zc.sets) sets.push_back(g.names(z));
    return coefficient_stack(data, g.label(zc.x), g.label(zc.y), sets);
}

/// Plug-in estimate of the asymptotic covariance of the stacked estimators:
/// n * sum_s(rx_i ry_i rx_j ry_j) / (|rx_i|^2 |rx_j|^2).
inline Eigen::MatrixXd sigma_hat(const CoefficientStack& stack) {
    if (stack.n <= 4) throw Error(ErrorCode::InsufficientSamples, "need more than four rows");
    const Eigen::Index k = stack.betas.size();
    Eigen::MatrixXd scores = stack.residuals_x.cwiseProduct(stack.residuals_y);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double ss = stack.residuals_x.col(i).squaredNorm();
        if (!(ss > 1e-12 * stack.x_centered_ss) || !(ss > 0.0))
            throw Error(ErrorCode::DegenerateResiduals, "x is perfectly explained by adjustment set " + std::to_string(i + 1));
        scores.col(i) /= ss;
    }
    Eigen::MatrixXd sigma = static_cast<double>(stack.n) * (scores.transpose() * scores);
    return (sigma + sigma.transpose()) / 2.0;
}

/// (k-1) x k successive-difference contrasts: +1 at (j, j), -1 at (j, j+1).
struct ContrastSpec {
    std::size_t k = 0;
    Eigen::MatrixXd matrix;
};

inline ContrastSpec contrast_matrix(std::size_t k) {
    if (k < 2) throw Error(ErrorCode::KTooSmall, "contrasts need at least two sets");
    const auto rows = static_cast<Eigen::Index>(k - 1);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, rows + 1);
    for (Eigen::Index j = 0; j < rows; ++j) {
        m(j, j) = 1.0;
        m(j, j + 1) = -1.0;
    }
    return {k, std::move(m)};
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
struct Spectrum {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

inline Spectrum descending_spectrum(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd sym = (m + m.transpose()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "eigendecomposition failed");
    return {solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
}

/// Best rank-r approximation keeping the top r eigenpairs.
inline Eigen::MatrixXd rank_r_reconstruction(const Spectrum& s, std::size_t r) {
    const auto rr = static_cast<Eigen::Index>(r);
    const Eigen::MatrixXd p = s.vectors.leftCols(rr);
    return p * s.values.head(rr).asDiagonal() * p.transpose();
}

/// Rank-r Moore-Penrose inverse: P diag(1/l_1, ..., 1/l_r, 0, ...) P'.
inline Eigen::MatrixXd mp_inverse_rank_r(const Eigen::MatrixXd& delta, std::size_t r) {
    if (delta.rows() != delta.cols()) throw Error(ErrorCode::InvalidArgument, "matrix must be square");
    if (r < 1 || r > static_cast<std::size_t>(delta.rows()))
        throw Error(ErrorCode::RankExceedsDim, "rank " + std::to_string(r) + " outside [1, " + std::to_string(delta.rows()) + "]");
    const Spectrum s = descending_spectrum(delta);
    const double lead = s.values(0);
    const double last = s.values(static_cast<Eigen::Index>(r) - 1);
    if (!(lead > 0.0) || !(last >= 1e-12 * lead))
        throw Error(ErrorCode::NearZeroLeadingEigenvalue, "eigenvalue " + std::to_string(r) + " is numerically zero");
    const auto rr = static_cast<Eigen::Index>(r);
    const Eigen::MatrixXd p = s.vectors.leftCols(rr);
    return p * s.values.head(rr).cwiseInverse().asDiagonal() * p.transpose();
}

/// Half-vectorization: lower triangle including the diagonal, column-major.
inline Eigen::VectorXd vech(const Eigen::MatrixXd& m) {
    const Eigen::Index l = m.rows();
    Eigen::VectorXd out(l * (l + 1) / 2);
    Eigen::Index pos = 0;
    for (Eigen::Index j = 0; j < l; ++j)
        for (Eigen::Index i = j; i < l; ++i) out(pos++) = m(i, j);
    return out;
}

/// Objective minimized by the pseudo-MDF rank estimator for rank r.
inline double pseudo_mdf_criterion(const Eigen::MatrixXd& delta_hat, const Spectrum& s, std::size_t n, std::size_t r) {
    const double dim = static_cast<double>(delta_hat.rows());
    const double rd = static_cast<double>(r);
    const double fit = static_cast<double>(n) * vech(delta_hat - rank_r_reconstruction(s, r)).squaredNorm();
    return fit + std::log(static_cast<double>(n)) * rd * (dim - (rd - 1.0) / 2.0);
}

/// argmin over r in {1, ..., k-1} of
///   n |vech(delta_hat - delta_r)|^2 + log(n) r (k - 1 - (r - 1) / 2),
/// ties resolved toward the smaller rank.
inline std::size_t estimate_rank_pseudo_mdf(const Eigen::MatrixXd& delta_hat, std::size_t n) {
    if (delta_hat.rows() < 1 || delta_hat.rows() != delta_hat.cols())
        throw Error(ErrorCode::KTooSmall, "need a square matrix of dimension k - 1 >= 1");
    const Eigen::MatrixXd sym = (delta_hat + delta_hat.transpose()) / 2.0;
    const Spectrum s = descending_spectrum(sym);
    const auto dim = static_cast<std::size_t>(delta_hat.rows());
    const double dd = static_cast<double>(dim);
    const double nn = static_cast<double>(n);

    // Peel eigenpairs off one at a time: |vech(M)|^2 = (|M|_F^2 + |diag M|^2) / 2,
    // with |M|_F^2 dropping by l_r^2 and diag M by l_r v_r^2 at each step.
    double frob = sym.squaredNorm();
    Eigen::VectorXd diag = sym.diagonal();
    std::size_t best = 0;
    double best_value = 0.0;
    for (std::size_t r = 1; r <= dim; ++r) {
        const auto i = static_cast<Eigen::Index>(r - 1);
        const double l = s.values(i);
        frob -= l * l;
        diag -= l * s.vectors.col(i).cwiseAbs2();
        const double fit = nn * std::max(0.0, (std::max(0.0, frob) + diag.squaredNorm()) / 2.0);
        const double rd = static_cast<double>(r);
        const double value = fit + std::log(nn) * rd * (dd - (rd - 1.0) / 2.0);
        if (best == 0 || value < best_value) {
            best = r;
            best_value = value;
        }
    }
    return best;
}

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// T^2 = n (G b)' D_r^+ (G b) with its chi-square(rank) upper tail.
inline TestResult test_statistic(const Eigen::VectorXd& betas, const Eigen::MatrixXd& delta_hat, const ContrastSpec& spec,
                                 std::size_t n, std::size_t rank) {
    if (static_cast<std::size_t>(betas.size()) != spec.k)
        throw Error(ErrorCode::InvalidArgument, "contrast dimension does not match the number of estimates");
    const Eigen::VectorXd diff = spec.matrix * betas;
    const Eigen::MatrixXd inverse = mp_inverse_rank_r(delta_hat, rank);
    const double t2 = std::max(0.0, static_cast<double>(n) * diff.dot(inverse * diff));
    return {t2, chi_square_sf(t2, static_cast<double>(rank))};
}

inline TestResult test_statistic(const CoefficientStack& stack, const ContrastSpec& spec, std::size_t rank) {
    const Eigen::MatrixXd delta = spec.matrix * sigma_hat(stack) * spec.matrix.transpose();
    return test_statistic(stack.betas, delta, spec, stack.n, rank);
}

// ---------------------------------------------------------------------------
// Full procedure

enum class TestStatus { Tested, Untestable };

struct TestOptions {
    Strategy strategy = Strategy::MinPlus;
    std::size_t cap = 10'000;
    /// Use Min+ when All exceeds the cap instead of giving up.
    bool fallback_to_min_plus = true;
    /// Report estimated rank-one cases as untestable instead of testing them.
    bool discard_rank1 = false;
};

struct TestReport {
    TestStatus status = TestStatus::Untestable;
    std::string reason;
    Strategy strategy = Strategy::MinPlus;
    std::string x, y;
    std::vector<std::vector<std::string>> sets;
    std::size_t k = 0;
    std::size_t n = 0;
    double statistic = 0.0;
    std::size_t rank_used = 0;
    double p_value = 1.0;
    Eigen::VectorXd betas;
    Eigen::MatrixXd sigma_hat;
    Eigen::MatrixXd delta_hat;
    std::vector<std::string> warnings;

    bool tested() const noexcept { return status == TestStatus::Tested; }
};

namespace detail {

inline TestReport untestable(TestReport report, std::string reason) {
    report.status = TestStatus::Untestable;
    report.reason = std::move(reason);
    return report;
}

}  // namespace detail

/// Runs the test on an already chosen collection. Numerical failures end up
/// as an untestable report; nothing is thrown for data-dependent problems.
inline TestReport run_test_on_collection(const Dag& g, const AdjustmentCollection& zc, const Dataset& data,
                                         const TestOptions& options = {}) {
    TestReport report;
    report.strategy = zc.strategy;
    report.x = g.label(zc.x);
    report.y = g.label(zc.y);
    report.k = zc.sets.size();
    report.n = data.rows();
    report.warnings = zc.warnings;
    for (const auto& z : zc.sets) report.sets.push_back(g.names(z));

    if (report.k < 2) return detail::untestable(std::move(report), "SingleAdjustmentSet");
    for (const auto& label : g.labels())
        if (!data.has_column(label)) {
            bool used = label == report.x || label == report.y;
            for (const auto& z : report.sets) used = used || std::find(z.begin(), z.end(), label) != z.end();
            if (used) return detail::untestable(std::move(report), "ColumnMismatch");
        }

    try {
        const CoefficientStack stack = coefficient_stack(data, report.x, report.y, report.sets);
        report.betas = stack.betas;
        report.sigma_hat = sigma_hat(stack);
        const ContrastSpec spec = contrast_matrix(report.k);
        report.delta_hat = spec.matrix * report.sigma_hat * spec.matrix.transpose();
        report.delta_hat = (report.delta_hat + report.delta_hat.transpose()) / 2.0;

        const Spectrum spectrum = descending_spectrum(report.delta_hat);
        if (!(spectrum.values(0) > 0.0)) return detail::untestable(std::move(report), "DegenerateCovariance");

        std::size_t rank = zc.strategy == Strategy::All ? estimate_rank_pseudo_mdf(report.delta_hat, report.n)
                                                        : report.k - 1;
        const std::size_t selected = rank;
        while (rank > 1 && spectrum.values(static_cast<Eigen::Index>(rank) - 1) < 1e-12 * spectrum.values(0)) --rank;
        if (rank != selected)
            report.warnings.push_back("rank reduced from " + std::to_string(selected) + " to " + std::to_string(rank) +
                                      " because of numerically zero eigenvalues");
        report.rank_used = rank;
        if (options.discard_rank1 && zc.strategy == Strategy::All && rank == 1)
            return detail::untestable(std::move(report), "RankOne");

        const TestResult result = test_statistic(report.betas, report.delta_hat, spec, report.n, rank);
        report.statistic = result.statistic;
        report.p_value = result.p_value;
        report.status = TestStatus::Tested;
    } catch (const Error& e) {
        return detail::untestable(std::move(report), std::string(to_string(e.code())));
    }
    return report;
}

/// Chooses the collection for `options.strategy` from the candidate graph and
/// tests whether all adjusted estimates agree.
inline TestReport run_test(const Dag& g, NodeId x, NodeId y, const Dataset& data, const TestOptions& options = {}) {
    TestReport base;
    base.strategy = options.strategy;
    base.x = g.label(x);
    base.y = g.label(y);
    base.n = data.rows();
    if (x == y || !descendants(g, x).contains(y)) return detail::untestable(std::move(base), "NotDescendant");

    AdjustmentCollection zc;
    try {
        zc = collection_for(g, x, y, options.strategy, options.cap);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::CapExceeded || !options.fallback_to_min_plus)
            return detail::untestable(std::move(base), std::string(to_string(e.code())));
        zc = min_plus_collection(g, x, y);
        zc.warnings.insert(zc.warnings.begin(),
                           "more than " + std::to_string(options.cap) + " valid sets; fell back to minplus");
    }
    return run_test_on_collection(g, zc, data, options);
}

}  // namespace adjcheck
