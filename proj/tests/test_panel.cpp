#include "doctest.h"
#include "oracles.hpp"

#include "epdic/error.hpp"
#include "epdic/optimize.hpp"
#include "epdic/panel.hpp"

#include <algorithm>
#include <random>

using namespace epdic;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols)
{
    std::normal_distribution<double> z;
    Eigen::MatrixXd a(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            a(i, j) = z(rng);
    return a;
}

PanelData sample_panel(std::mt19937_64& rng, int n, int m, double sa, double su = 1.0)
{
    const auto s = oracle::panel_sample(rng, n, m, Eigen::Vector3d(1.0, 0.5, -0.3), sa, su);
    return PanelData::random_intercept(s.x, s.y, m);
}

} // namespace

TEST_CASE("panel data validation")
{
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd x = random_matrix(rng, 12, 2);
    const Eigen::VectorXd y = random_matrix(rng, 12, 1).col(0);
    const PanelData d = PanelData::random_intercept(x, y, 3);
    CHECK(d.n() == 4);
    CHECK(d.m() == 3);
    CHECK(d.stacked_design() == x);
    CHECK(d.stacked_response() == y);
    CHECK_THROWS_AS(PanelData::random_intercept(x, y, 5), DataError);

    std::vector<PanelBlock> blocks = d.blocks();
    blocks[2].y.conservativeResize(2);
    blocks[2].x.conservativeResize(2, 2);
    blocks[2].z.conservativeResize(2, 1);
    CHECK_THROWS_AS(PanelData{blocks}, DataError);

    Eigen::MatrixXd dup = x;
    dup.col(1) = dup.col(0) * 2.0;
    CHECK_THROWS_AS(PanelData::random_intercept(dup, y, 3), SingularDesign);
}

TEST_CASE("marginal density")
{
    std::mt19937_64 rng(2);
    SUBCASE("no random effect: product of univariate densities")
    {
        const Eigen::MatrixXd x = random_matrix(rng, 5, 2);
        const Eigen::VectorXd y = random_matrix(rng, 5, 1).col(0);
        const PanelParams pv{Eigen::Vector2d(0.3, -0.2), std::log(0.0 + 1e-300), std::log(1.3)};
        double prod = 1.0;
        for (int t = 0; t < 5; ++t)
            prod *= UnivariateGaussian{x.row(t).dot(pv.coef), 1.3}.density(y[t]);
        const double f = marginal_density(y, x, Eigen::MatrixXd::Ones(5, 1), pv);
        CHECK(oracle::rel_diff(f, prod) < 1e-12);
    }
    SUBCASE("m = 1")
    {
        const Eigen::MatrixXd x = random_matrix(rng, 1, 3);
        const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.7);
        const PanelParams pv{Eigen::Vector3d(0.1, 0.2, 0.3), std::log(0.6), std::log(0.8)};
        const double s = std::sqrt(0.36 + 0.64);
        CHECK(oracle::rel_diff(marginal_density(y, x, Eigen::MatrixXd::Ones(1, 1), pv),
                               UnivariateGaussian{x.row(0).dot(pv.coef), s}.density(0.7))
              < 1e-12);
    }
    SUBCASE("explicit inverse and determinant")
    {
        for (int trial = 0; trial < 50; ++trial) {
            const Eigen::MatrixXd x = random_matrix(rng, 3, 2);
            const Eigen::MatrixXd z = random_matrix(rng, 3, 2);
            const Eigen::VectorXd y = random_matrix(rng, 3, 1).col(0);
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            const PanelParams pv{Eigen::Vector2d(u(rng), u(rng)), u(rng), u(rng)};
            const Eigen::MatrixXd cov = pv.sigma_alpha() * pv.sigma_alpha() * z * z.transpose()
                                      + pv.sigma_u() * pv.sigma_u() * Eigen::MatrixXd::Identity(3, 3);
            CHECK(oracle::rel_diff(marginal_density(y, x, z, pv), oracle::mvn_density(y, x * pv.coef, cov)) < 1e-10);
        }
    }
    SUBCASE("integrates to one")
    {
        // importance sampling from a wider normal around the mean
        const Eigen::MatrixXd x = random_matrix(rng, 3, 1);
        const Eigen::MatrixXd z = Eigen::MatrixXd::Ones(3, 1);
        const PanelParams pv{Eigen::VectorXd::Constant(1, 0.4), std::log(0.7), std::log(0.9)};
        const Eigen::VectorXd mu = x * pv.coef;
        const double scale = 2.0;
        std::normal_distribution<double> nz;
        const int draws = 200000;
        double s = 0.0;
        double s2 = 0.0;
        for (int k = 0; k < draws; ++k) {
            Eigen::VectorXd e(3);
            for (int j = 0; j < 3; ++j)
                e[j] = nz(rng);
            const Eigen::VectorXd y = mu + scale * e;
            const double g = std::exp(-0.5 * e.squaredNorm()) / std::pow(2.0 * M_PI * scale * scale, 1.5);
            const double w = marginal_density(y, x, z, pv) / g;
            s += w;
            s2 += w * w;
        }
        const double mean = s / draws;
        const double se = std::sqrt((s2 / draws - mean * mean) / draws);
        CHECK(std::abs(mean - 1.0) < 3.0 * se);
    }
}

TEST_CASE("panel objective")
{
    std::mt19937_64 rng(3);
    const PanelData d = sample_panel(rng, 40, 4, 0.6);
    const PanelParams pv{Eigen::Vector3d(0.9, 0.55, -0.25), std::log(0.5), std::log(1.1)};

    SUBCASE("beta = 0 is the multivariate density power objective")
    {
        for (double g : {0.1, 0.4, 0.9}) {
            const Eigen::MatrixXd cov = marginal_covariance(Eigen::MatrixXd::Ones(4, 1), pv);
            const double pw = std::pow(1.0 + g, -2.0) * std::pow(2.0 * M_PI, -2.0 * g) * std::pow(cov.determinant(), -g / 2);
            double sum = 0.0;
            for (const auto& b : d.blocks()) {
                const double f = oracle::mvn_density(b.y, b.x * pv.coef, cov);
                sum += pw - ((1.0 + g) * std::pow(f, g) - 1.0) / g;
            }
            CHECK(std::abs(panel_objective(d, pv, {0.7, 0.0, g}, EstimatorKind::EPDE) - sum / 40.0) < 1e-12);
            CHECK(panel_objective(d, pv, {0.7, 0.0, g}, EstimatorKind::EPDE)
                  == panel_objective(d, pv, {0.0, 0.0, g}, EstimatorKind::DPDE));
        }
    }
    SUBCASE("likelihood kind")
    {
        const Eigen::MatrixXd cov = marginal_covariance(Eigen::MatrixXd::Ones(4, 1), pv);
        double nll = 0.0;
        for (const auto& b : d.blocks())
            nll -= std::log(oracle::mvn_density(b.y, b.x * pv.coef, cov));
        CHECK(std::abs(panel_objective(d, pv, {}, EstimatorKind::MLE) - nll / 40.0) < 1e-10);
    }
    SUBCASE("m = 1 without random effect is the regression objective")
    {
        const auto s = oracle::panel_sample(rng, 60, 1, Eigen::Vector3d(1.0, 0.5, -0.3), 0.0, 1.0);
        std::vector<PanelBlock> blocks;
        for (int i = 0; i < 60; ++i)
            blocks.push_back({s.x.row(i), Eigen::MatrixXd::Zero(1, 1), s.y.segment(i, 1)});
        const PanelData flat(blocks);
        const RegressionProblem prob(s.x, s.y);
        const PanelParams q{Eigen::Vector3d(1.1, 0.4, -0.2), 0.3, std::log(0.9)};
        for (auto [k, t] : {std::pair{EstimatorKind::MLE, TuningTriple{}}, {EstimatorKind::DPDE, TuningTriple{0, 0, 0.3}},
                            {EstimatorKind::EPDE, TuningTriple{0.4, 0.6, 0.5}}}) {
            CHECK(std::abs(panel_objective(flat, q, t, k) - empirical_objective(prob, {q.coef, q.log_sigma_u}, t, k))
                  < 1e-10);
        }
    }
    SUBCASE("permuting individuals")
    {
        std::vector<PanelBlock> blocks = d.blocks();
        std::shuffle(blocks.begin(), blocks.end(), rng);
        const PanelData shuffled(blocks);
        const TuningTriple t{0.1, 0.3, 0.3};
        CHECK(std::abs(panel_objective(shuffled, pv, t, EstimatorKind::EPDE)
                       - panel_objective(d, pv, t, EstimatorKind::EPDE))
              < 1e-14);
        CHECK(panel_objective(d, pv, t, EstimatorKind::EPDE, 3) == panel_objective(d, pv, t, EstimatorKind::EPDE));
    }
    SUBCASE("power integral against Monte Carlo, m = 3")
    {
        Eigen::MatrixXd cov(3, 3);
        cov << 1.5, 0.6, 0.2, 0.6, 1.0, 0.3, 0.2, 0.3, 0.8;
        const Eigen::MatrixXd l = cov.llt().matrixL();
        const double gamma = 0.4;
        std::mt19937_64 mc(31);
        std::normal_distribution<double> nz;
        const int draws = 1000000;
        double s = 0.0;
        for (int k = 0; k < draws; ++k) {
            Eigen::Vector3d e(nz(mc), nz(mc), nz(mc));
            s += std::pow(oracle::mvn_density(l * e, Eigen::Vector3d::Zero(), cov), gamma);
        }
        const double closed = gaussian_power_integral(1.0 + gamma, 3, std::log(cov.determinant()));
        CHECK(oracle::rel_diff(s / draws, closed) < 1e-3);
    }
}

TEST_CASE("panel fits")
{
    std::mt19937_64 rng(4);
    SUBCASE("likelihood fit is GLS at the fitted scales")
    {
        for (int rep = 0; rep < 5; ++rep) {
            const PanelData d = sample_panel(rng, 80, 5, 0.5);
            const PanelFitResult f = fit_panel(d, {}, EstimatorKind::MLE);
            REQUIRE(f.converged);
            const Eigen::VectorXd gls = gls_coefficients(d, f.params.sigma_alpha(), f.params.sigma_u());
            CHECK((gls - f.params.coef).cwiseAbs().maxCoeff() < 1e-4);
            for (std::size_t k = 1; k < f.objective_trace.size(); ++k)
                CHECK(f.objective_trace[k]
                      <= f.objective_trace[k - 1] + kRoundingSlack * std::abs(f.objective_trace[k - 1]));
        }
    }
    SUBCASE("start values")
    {
        const PanelData d = sample_panel(rng, 400, 5, 0.5);
        const PanelParams s = panel_start(d);
        CHECK(std::abs(s.sigma_alpha() - 0.5) < 0.1);
        CHECK(std::abs(s.sigma_u() - 1.0) < 0.05);
    }
    SUBCASE("coefficients are recovered at the model")
    {
        Eigen::Vector3d sum = Eigen::Vector3d::Zero();
        const int reps = 40;
        for (int rep = 0; rep < reps; ++rep) {
            const PanelData d = sample_panel(rng, 100, 5, 0.5);
            const PanelFitResult f = fit_panel(d, kPanelEpdTuning, EstimatorKind::EPDE);
            REQUIRE(f.converged);
            sum += f.params.coef;
        }
        CHECK((sum / reps - Eigen::Vector3d(1.0, 0.5, -0.3)).cwiseAbs().maxCoeff() < 0.05);
    }
    SUBCASE("no random effect drives sigma_alpha to the boundary")
    {
        int small = 0;
        const int reps = 10;
        for (int rep = 0; rep < reps; ++rep) {
            const PanelData d = sample_panel(rng, 2000, 5, 0.0);
            const PanelFitResult f = fit_panel(d, {}, EstimatorKind::MLE);
            CHECK(f.converged);
            small += f.params.sigma_alpha() < 0.1;
        }
        CHECK(small >= 9);
    }
    SUBCASE("fixed scale is rejected")
    {
        FitOptions o;
        o.fixed_sigma = 1.0;
        CHECK_THROWS_AS(fit_panel(sample_panel(rng, 20, 3, 0.5), {}, EstimatorKind::MLE, std::nullopt, o), DomainError);
    }
}

TEST_CASE("panel criterion")
{
    std::mt19937_64 rng(5);
    SUBCASE("likelihood penalty near the parameter count")
    {
        double mean = 0.0;
        const int reps = 30;
        for (int rep = 0; rep < reps; ++rep) {
            const PanelData d = sample_panel(rng, 150, 5, 0.5);
            const PanelFitResult f = fit_panel(d, {}, EstimatorKind::MLE);
            const CriterionReport c = panel_criterion(d, f, CriterionKind::MLIC);
            CHECK(c.total == doctest::Approx(c.fit_term + c.penalty));
            mean += c.penalty / reps;
        }
        CHECK(mean > 0.5 * 5);
        CHECK(mean < 2.0 * 5);
        const PanelData d = sample_panel(rng, 50, 5, 0.5);
        const PanelFitResult f = fit_panel(d, {}, EstimatorKind::MLE);
        CHECK_THROWS_AS(panel_criterion(d, f, CriterionKind::EPDIC), KindMismatch);
        PanelFitResult bad = f;
        bad.converged = false;
        CHECK_THROWS_AS(panel_criterion(d, bad, CriterionKind::MLIC), NotConverged);
    }
    SUBCASE("subset ranking prefers the generating model")
    {
        const auto s = oracle::panel_sample(rng, 120, 4, Eigen::Vector4d(1.0, 0.8, 0.0, -0.6), 0.5, 1.0);
        const PanelData d = PanelData::random_intercept(s.x, s.y, 4);
        const std::vector<CriterionKind> kinds{CriterionKind::EPDIC, CriterionKind::DPDIC, CriterionKind::MLIC};
        const auto lists =
            enumerate_and_rank_panel(d, {"a", "b", "c"}, 0b111, kinds, {kPanelDpdTuning, kPanelEpdTuning});
        for (const auto& rl : lists) {
            CHECK(rl.entries.size() == 7);
            CHECK((rl.entries[0].model.mask == 0b101 || rl.entries[1].model.mask == 0b101));
            CHECK(std::isfinite(rl.entries.back().total));
        }
    }
}
