#pragma once

// Balanced linear mixed model y_i = X_i coef + Z_i a_i + u_i with
// a_i ~ N(0, sigma_alpha^2 I) and u_i ~ N(0, sigma_u^2 I), fitted by
// minimizing the divergence between the data and the marginal Gaussian of y_i.

#include "epdic/criteria.hpp"
#include "epdic/selection.hpp"

#include <string>
#include <vector>

namespace epdic {

struct PanelBlock {
    Eigen::MatrixXd x;  ///< m x p
    Eigen::MatrixXd z;  ///< m x r
    Eigen::VectorXd y;  ///< m
};

class PanelData {
public:
    /// Validates equal m across blocks, matching shapes, finite entries and
    /// a full-rank stacked design. Throws DataError / SingularDesign.
    explicit PanelData(std::vector<PanelBlock> blocks);

    /// Random-intercept layout: rows of `design` grouped m at a time, Z = 1.
    static PanelData random_intercept(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, int m);

    [[nodiscard]] const std::vector<PanelBlock>& blocks() const noexcept { return blocks_; }
    [[nodiscard]] Eigen::Index n() const noexcept { return Eigen::Index(blocks_.size()); }
    [[nodiscard]] Eigen::Index m() const noexcept { return blocks_.front().y.size(); }
    [[nodiscard]] Eigen::Index p() const noexcept { return blocks_.front().x.cols(); }
    [[nodiscard]] Eigen::Index r() const noexcept { return blocks_.front().z.cols(); }

    [[nodiscard]] Eigen::MatrixXd stacked_design() const;
    [[nodiscard]] Eigen::VectorXd stacked_response() const;
    /// Pooled regression on the stacked rows.
    [[nodiscard]] RegressionProblem pooled() const;
    [[nodiscard]] PanelData select_columns(const std::vector<Eigen::Index>& cols) const;

private:
    std::vector<PanelBlock> blocks_;
};

struct PanelParams {
    Eigen::VectorXd coef;
    double log_sigma_alpha = 0.0;
    double log_sigma_u = 0.0;

    [[nodiscard]] double sigma_alpha() const { return std::exp(log_sigma_alpha); }
    [[nodiscard]] double sigma_u() const { return std::exp(log_sigma_u); }
    [[nodiscard]] Eigen::VectorXd pack() const;
    static PanelParams unpack(const Eigen::VectorXd& v);
};

/// sigma_alpha^2 Z Z' + sigma_u^2 I.
Eigen::MatrixXd marginal_covariance(const Eigen::MatrixXd& z, const PanelParams& params);

/// log N(y; X coef, Omega) through a Cholesky factor; NonPositiveDefinite
/// when Omega is not numerically positive definite.
double marginal_log_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                            const PanelParams& params);
double marginal_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                        const PanelParams& params);

/// V_i for one individual; -log f for MLE.
double panel_contribution(const PanelBlock& block, const PanelParams& params, const TuningTriple& t,
                          EstimatorKind kind);

/// Mean of V_i over individuals, summed pairwise in individual order.
double panel_objective(const PanelData& data, const PanelParams& params, const TuningTriple& t, EstimatorKind kind,
                       unsigned threads = 1);

/// Pooled OLS coefficients, and the between/within moment split of the
/// OLS residual variance for the two scales.
PanelParams panel_start(const PanelData& data);

/// (sum X_i' Omega_i^{-1} X_i)^{-1} sum X_i' Omega_i^{-1} y_i.
Eigen::VectorXd gls_coefficients(const PanelData& data, double sigma_alpha, double sigma_u);

struct PanelFitResult {
    PanelParams params;
    EstimatorKind kind = EstimatorKind::MLE;
    TuningTriple tuning;
    double objective_value = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    Eigen::Index n = 0;
    std::vector<double> objective_trace;
};

/// Quasi-Newton on (coef, log sigma_alpha, log sigma_u) with central
/// difference gradients (relative step 1e-6). Evaluations with a
/// non-positive-definite covariance halve the step.
PanelFitResult fit_panel(const PanelData& data, const TuningTriple& t, EstimatorKind kind,
                         const std::optional<PanelParams>& init = std::nullopt, const FitOptions& opts = {},
                         unsigned threads = 1);

struct PanelSandwich {
    Eigen::MatrixXd psi_hat;    ///< numerical Hessian of H_n at the fit
    Eigen::MatrixXd omega_hat;  ///< mean outer product of per-individual scores
};

/// Throws NotConverged for an unconverged fit.
PanelSandwich panel_sandwich(const PanelData& data, const PanelFitResult& fit);

/// n H_n + tr(Omega Psi^{-1}) with n the number of individuals.
CriterionReport panel_criterion(const PanelData& data, const PanelFitResult& fit, CriterionKind kind);

/// Subset ranking with panel fits; masks index the non-intercept columns.
std::vector<RankedList> enumerate_and_rank_panel(const PanelData& data,
                                                 const std::vector<std::string>& covariate_labels,
                                                 std::uint64_t mask, const std::vector<CriterionKind>& kinds,
                                                 const EnumerationTunings& tunings, const FitOptions& opts = {},
                                                 unsigned threads = 1);

/// Tunings used for panel fits unless overridden.
inline constexpr TuningTriple kPanelDpdTuning{0.0, 0.0, 0.5};
inline constexpr TuningTriple kPanelEpdTuning{0.1, 0.3, 0.3};

} // namespace epdic
