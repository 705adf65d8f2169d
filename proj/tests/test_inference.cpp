#include <adjcheck/inference.hpp>
#include <adjcheck/simulation.hpp>

#include <gtest/gtest.h>

#include <numeric>
#include <random>

using namespace adjcheck;

namespace {

SemModel g0_sem() { return load_sem(std::string(ADJCHECK_DATA_DIR) + "/g0_sem.txt"); }
Dag g0() { return load_graph(std::string(ADJCHECK_DATA_DIR) + "/g0.txt"); }

/// Closed-form chi-square upper tail: erfc start for odd df, exponential sum
/// for even df, stepped up two degrees of freedom at a time.
double chi_square_sf_closed_form(double t, int df) {
    double q = df % 2 == 1 ? std::erfc(std::sqrt(t / 2.0)) : std::exp(-t / 2.0);
    for (double a = df % 2 == 1 ? 0.5 : 1.0; a < df / 2.0 - 1e-12; a += 1.0)
        q += std::exp(a * std::log(t / 2.0) - t / 2.0 - std::lgamma(a + 1.0));
    return q;
}

Eigen::MatrixXd random_psd(int dim, int rank, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd f(dim, rank);
    for (auto& v : f.reshaped()) v = z(rng);
    return f * f.transpose();
}

std::vector<std::vector<std::string>> example2_sets() {
    return {{"A1", "B1"}, {"A1", "A2", "B1"}, {"A1", "B1", "B2"}, {"A1", "A2", "B1", "B2"}};
}

}  // namespace

TEST(ChiSquare, KnownQuantiles) {
    EXPECT_NEAR(chi_square_sf(3.841458820694124, 1), 0.05, 1e-12);
    EXPECT_NEAR(chi_square_sf(5.991464547107979, 2), 0.05, 1e-12);
    EXPECT_NEAR(chi_square_sf(18.307038053275146, 10), 0.05, 1e-12);
    EXPECT_DOUBLE_EQ(chi_square_sf(0.0, 3), 1.0);
    EXPECT_NEAR(chi_square_cdf(2.0, 2), 1.0 - std::exp(-1.0), 1e-14);
}

TEST(ChiSquare, MatchesClosedForms) {
    for (int df = 1; df <= 30; ++df)
        for (double t : {0.01, 0.3, 1.0, 2.5, 7.0, 15.0, 40.0, 90.0}) {
            const double expected = chi_square_sf_closed_form(t, df);
            EXPECT_NEAR(chi_square_sf(t, df), expected, 1e-12 + 1e-10 * expected) << "df " << df << " t " << t;
        }
}

TEST(ChiSquare, BoundedAndMonotone) {
    double prev = 1.0;
    for (double t = 0.0; t < 200.0; t += 0.5) {
        const double q = chi_square_sf(t, 7);
        EXPECT_GE(q, 0.0);
        EXPECT_LE(q, prev + 1e-15);
        prev = q;
    }
    EXPECT_NEAR(gamma_p(3.0, 2.0) + gamma_q(3.0, 2.0), 1.0, 1e-15);
}

TEST(Ols, MatchesNormalEquations) {
    const Dataset d = sample_data(g0_sem(), 500, 3);
    const OlsFit fit = ols_fit(d, "Y", {"X", "A1", "R"});
    Eigen::MatrixXd design(500, 4);
    design.col(0).setOnes();
    design.col(1) = d.column("X");
    design.col(2) = d.column("A1");
    design.col(3) = d.column("R");
    const Eigen::VectorXd beta = (design.transpose() * design).ldlt().solve(design.transpose() * d.column("Y"));
    EXPECT_NEAR(fit.intercept, beta(0), 1e-10);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(fit.coefficients(j), beta(j + 1), 1e-10);
    EXPECT_NEAR(fit.residuals.sum(), 0.0, 1e-8);
    EXPECT_NEAR((design.transpose() * fit.residuals).cwiseAbs().maxCoeff(), 0.0, 1e-8);
}

TEST(Ols, Errors) {
    const Dataset d = sample_data(g0_sem(), 4, 3);
    EXPECT_THROW((void)ols_fit(d, "Y", {"X", "A1"}), Error);
    const Dataset big = sample_data(g0_sem(), 50, 3);
    Eigen::MatrixXd v = big.values();
    v.col(big.column_index("A1")) = v.col(big.column_index("A2")) * 2.0;
    const Dataset collinear(big.columns(), v);
    try {
        (void)ols_fit(collinear, "Y", {"A1", "A2"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RankDeficientDesign);
    }
}

TEST(SigmaHat, MatchesElementwiseFormula) {
    const Dataset d = sample_data(g0_sem(), 300, 17);
    const auto sets = example2_sets();
    const CoefficientStack stack = coefficient_stack(d, "X", "Y", sets);
    const Eigen::MatrixXd sigma = sigma_hat(stack);
    const auto k = static_cast<Eigen::Index>(sets.size());
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) {
            // Recompute residuals independently from fresh regressions.
            std::vector<std::string> xi{"X"}, xj{"X"};
            xi.insert(xi.end(), sets[i].begin(), sets[i].end());
            xj.insert(xj.end(), sets[j].begin(), sets[j].end());
            const Eigen::VectorXd rxi = ols_fit(d, "X", sets[i]).residuals;
            const Eigen::VectorXd rxj = ols_fit(d, "X", sets[j]).residuals;
            const Eigen::VectorXd ryi = ols_fit(d, "Y", xi).residuals;
            const Eigen::VectorXd ryj = ols_fit(d, "Y", xj).residuals;
            double sum = 0.0;
            for (Eigen::Index s = 0; s < rxi.size(); ++s) sum += rxi(s) * ryi(s) * rxj(s) * ryj(s);
            const double expected = 300.0 * sum / (rxi.squaredNorm() * rxj.squaredNorm());
            EXPECT_NEAR(sigma(i, j), expected, 1e-10 * std::abs(expected));
        }
}

TEST(SigmaHat, ConsistentForGaussianCovariance) {
    const SemModel m = g0_sem();
    const Dataset d = sample_data(m, 200'000, 5);
    const Eigen::MatrixXd sigma = sigma_hat(coefficient_stack(d, "X", "Y", example2_sets()));
    Eigen::MatrixXd expected(4, 4);
    expected << 1.75, 1.25, 1.5, 1, 1.25, 1.25, 1, 1, 1.5, 1, 1.5, 1, 1, 1, 1, 1;
    EXPECT_LT((sigma - expected).cwiseAbs().maxCoeff(), 0.06);
}

TEST(SigmaHat, DegenerateResiduals) {
    const Dataset d = sample_data(g0_sem(), 100, 5);
    Eigen::MatrixXd v = d.values();
    v.col(d.column_index("A1")) = v.col(d.column_index("X"));
    const Dataset copy(d.columns(), v);
    // x in the span of Z makes the outcome design singular first.
    try {
        (void)coefficient_stack(copy, "X", "Y", {{"B1"}, {"A1"}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RankDeficientDesign);
    }
    CoefficientStack stack = coefficient_stack(d, "X", "Y", {{"B1"}, {"A1"}});
    stack.residuals_x.col(1).setZero();
    try {
        (void)sigma_hat(stack);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateResiduals);
    }
}

TEST(Contrasts, SuccessiveDifferences) {
    const ContrastSpec c = contrast_matrix(4);
    Eigen::MatrixXd expected(3, 4);
    expected << 1, -1, 0, 0, 0, 1, -1, 0, 0, 0, 1, -1;
    EXPECT_EQ(c.matrix, expected);
    EXPECT_LT((c.matrix * Eigen::VectorXd::Ones(4)).norm(), 1e-15);
    EXPECT_THROW((void)contrast_matrix(1), Error);
}

TEST(MoorePenrose, PenroseIdentitiesAndOracle) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 100; ++t) {
        const int dim = 1 + t % 6;
        const int r = 1 + (t / 6) % dim;
        const Eigen::MatrixXd a = random_psd(dim, r, rng);
        const Eigen::MatrixXd ap = mp_inverse_rank_r(a, static_cast<std::size_t>(r));
        EXPECT_LT((a * ap * a - a).norm(), 1e-9 * std::max(1.0, a.norm()));
        EXPECT_LT((ap * a * ap - ap).norm(), 1e-9 * std::max(1.0, ap.norm()));
        EXPECT_LT(((a * ap) - (a * ap).transpose()).norm(), 1e-9);
        const Eigen::MatrixXd reference = a.completeOrthogonalDecomposition().pseudoInverse();
        EXPECT_LT((ap - reference).norm(), 1e-7 * std::max(1.0, reference.norm()));
    }
}

TEST(MoorePenrose, TruncationAndErrors) {
    Eigen::MatrixXd d = Eigen::Vector3d(4.0, 2.0, 1.0).asDiagonal();
    Eigen::MatrixXd expected = Eigen::Vector3d(0.25, 0.5, 0.0).asDiagonal();
    EXPECT_LT((mp_inverse_rank_r(d, 2) - expected).norm(), 1e-15);
    EXPECT_THROW((void)mp_inverse_rank_r(d, 0), Error);
    EXPECT_THROW((void)mp_inverse_rank_r(d, 4), Error);
    Eigen::MatrixXd singular = Eigen::Vector3d(4.0, 0.0, 0.0).asDiagonal();
    try {
        (void)mp_inverse_rank_r(singular, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NearZeroLeadingEigenvalue);
    }
}

TEST(PseudoMdf, RecoversExactRank) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int dim = 1; dim <= 6; ++dim)
        for (int r = 1; r <= dim; ++r) {
            Eigen::MatrixXd g(dim, dim);
            for (auto& v : g.reshaped()) v = z(rng);
            const Eigen::MatrixXd q = g.householderQr().householderQ();
            Eigen::VectorXd ev = Eigen::VectorXd::Zero(dim);
            for (int i = 0; i < r; ++i) ev(i) = u(rng);
            const Eigen::MatrixXd a = q * ev.asDiagonal() * q.transpose();
            EXPECT_EQ(estimate_rank_pseudo_mdf(a, 100'000), static_cast<std::size_t>(r));
        }
}

TEST(PseudoMdf, IncrementalSearchMatchesDirectCriterion) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> z;
    for (int t = 0; t < 60; ++t) {
        const int dim = 1 + t % 9;
        Eigen::MatrixXd g(dim, dim + 2);
        for (auto& v : g.reshaped()) v = z(rng);
        const Eigen::MatrixXd a = g * g.transpose() / 10.0;
        const std::size_t n = 50 + 97 * static_cast<std::size_t>(t);
        const Spectrum s = descending_spectrum(a);
        std::size_t best = 1;
        for (std::size_t r = 2; r <= static_cast<std::size_t>(dim); ++r)
            if (pseudo_mdf_criterion(a, s, n, r) < pseudo_mdf_criterion(a, s, n, best)) best = r;
        EXPECT_EQ(estimate_rank_pseudo_mdf(a, n), best) << t;
    }
}

TEST(PseudoMdf, PenaltyFavoursSmallRanksAtSmallN) {
    Eigen::MatrixXd d = Eigen::Vector3d(1.0, 0.01, 0.001).asDiagonal();
    EXPECT_EQ(estimate_rank_pseudo_mdf(d, 10), 1U);
    EXPECT_EQ(estimate_rank_pseudo_mdf(d, 100'000'000), 3U);
    EXPECT_EQ(vech(Eigen::Matrix2d{{1, 2}, {2, 3}}), Eigen::Vector3d(1, 2, 3));
}

TEST(TestStatistic, InvariantToSetOrderAtFullRank) {
    const Dataset d = sample_data(g0_sem(), 400, 19);
    auto sets = example2_sets();
    sets.pop_back();
    sets.push_back({"A1", "A2", "B1", "B2", "V"});
    const CoefficientStack base = coefficient_stack(d, "X", "Y", sets);
    const double t0 = test_statistic(base, contrast_matrix(4), 3).statistic;
    std::vector<std::size_t> perm{0, 1, 2, 3};
    while (std::next_permutation(perm.begin(), perm.end())) {
        std::vector<std::vector<std::string>> permuted;
        for (std::size_t i : perm) permuted.push_back(sets[i]);
        const double t = test_statistic(coefficient_stack(d, "X", "Y", permuted), contrast_matrix(4), 3).statistic;
        EXPECT_NEAR(t, t0, 1e-9 * std::max(1.0, t0));
    }
}

TEST(TestStatistic, ScaleInvariance) {
    const Dataset d = sample_data(g0_sem(), 400, 23);
    const auto sets = example2_sets();
    const double t0 = test_statistic(coefficient_stack(d, "X", "Y", sets), contrast_matrix(4), 2).statistic;
    const Dataset s = d.scaled("Y", 1e3).scaled("X", 1e-2).scaled("B2", 7.0);
    const double t1 = test_statistic(coefficient_stack(s, "X", "Y", sets), contrast_matrix(4), 2).statistic;
    EXPECT_NEAR(t0, t1, 1e-9 * std::max(1.0, t0));
}

TEST(TestStatistic, HandComputedExample) {
    Eigen::VectorXd b(3);
    b << 1.0, 1.2, 0.9;
    Eigen::MatrixXd delta(2, 2);
    delta << 2.0, 0.5, 0.5, 1.0;
    const TestResult r = test_statistic(b, delta, contrast_matrix(3), 100, 2);
    const Eigen::Vector2d diff(-0.2, 0.3);
    const double expected = 100.0 * diff.dot(delta.inverse() * diff);
    EXPECT_NEAR(r.statistic, expected, 1e-12);
    EXPECT_NEAR(r.p_value, chi_square_sf_closed_form(expected, 2), 1e-12);
}

TEST(RunTest, RunningExampleIsTested) {
    const Dag g = g0();
    const Dataset d = sample_data(g0_sem(), 400, 31);
    const TestReport r = run_test(g, g.id("X"), g.id("Y"), d);
    ASSERT_TRUE(r.tested()) << r.reason;
    EXPECT_EQ(r.strategy, Strategy::MinPlus);
    EXPECT_EQ(r.k, 3U);
    EXPECT_EQ(r.rank_used, 2U);
    EXPECT_EQ(r.n, 400U);
    EXPECT_GE(r.statistic, 0.0);
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);

    TestOptions all;
    all.strategy = Strategy::All;
    const TestReport ra = run_test(g, g.id("X"), g.id("Y"), d, all);
    ASSERT_TRUE(ra.tested());
    EXPECT_EQ(ra.k, 72U);
    EXPECT_GE(ra.rank_used, 1U);
    EXPECT_LE(ra.rank_used, 71U);
}

TEST(RunTest, UntestableCases) {
    const Dataset d = sample_data(g0_sem(), 200, 37);
    const Dag chain({"X", "A1", "Y"}, {{"X", "A1"}, {"A1", "Y"}});
    EXPECT_EQ(run_test(chain, chain.id("X"), chain.id("Y"), d).reason, "SingleAdjustmentSet");
    const Dag g = g0();
    EXPECT_EQ(run_test(g, g.id("Y"), g.id("X"), d).reason, "NotDescendant");

    Eigen::MatrixXd v = d.values().leftCols(d.cols() - 1);
    std::vector<std::string> cols(d.columns().begin(), d.columns().end() - 1);
    const Dataset missing_y(cols, v);
    EXPECT_EQ(run_test(g, g.id("X"), g.id("Y"), missing_y).reason, "ColumnMismatch");
}

TEST(RunTest, CapFallback) {
    const Dag g = g0();
    const Dataset d = sample_data(g0_sem(), 200, 41);
    TestOptions o;
    o.strategy = Strategy::All;
    o.cap = 10;
    const TestReport r = run_test(g, g.id("X"), g.id("Y"), d, o);
    ASSERT_TRUE(r.tested());
    EXPECT_EQ(r.strategy, Strategy::MinPlus);
    ASSERT_FALSE(r.warnings.empty());
    EXPECT_NE(r.warnings.front().find("fell back"), std::string::npos);
    o.fallback_to_min_plus = false;
    EXPECT_EQ(run_test(g, g.id("X"), g.id("Y"), d, o).reason, "CapExceeded");
}

TEST(RunTest, RankOneDiscardPolicy) {
    // Valid sets {Z} and {W, Z}: the contrast covariance is 1 x 1.
    const Dag g({"W", "X", "Y", "Z"}, {{"W", "Z"}, {"Z", "X"}, {"Z", "Y"}, {"X", "Y"}});
    const SemModel m = SemModel::constant(g);
    const Dataset d = sample_data(m, 300, 43);
    TestOptions o;
    o.strategy = Strategy::All;
    const TestReport kept = run_test(g, g.id("X"), g.id("Y"), d, o);
    ASSERT_TRUE(kept.tested());
    EXPECT_EQ(kept.rank_used, 1U);
    o.discard_rank1 = true;
    EXPECT_EQ(run_test(g, g.id("X"), g.id("Y"), d, o).reason, "RankOne");
}

TEST(RunTest, NullCalibrationUnderHeavyTails) {
    const SemModel base = g0_sem();
    const SemModel m(base.graph(), base.coefficients(), base.error_variances(), ErrorFamily::StudentT5);
    const Dag& g = m.graph();
    const CellOutcome cell = run_cell(m, g, g.id("X"), g.id("Y"), Strategy::MinPlus, 400, 200, 47);
    ASSERT_TRUE(cell.cell.has_value());
    EXPECT_GT(cell.cell->rejection_rate_05, 0.01);
    EXPECT_LT(cell.cell->rejection_rate_05, 0.11);
}
