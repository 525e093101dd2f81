#pragma once

// Gaussian linear regression y_i ~ N(x_i' coef, sigma^2) fitted by maximum
// likelihood, minimum DPD or minimum EPD, plus the plug-in sandwich matrices.

#include "epdic/divergence.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

namespace epdic {

enum class EstimatorKind { MLE, DPDE, EPDE };

std::string_view to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(std::string_view name);

/// Tuning actually used by an estimator: MLE is the (0, 0, 0) likelihood
/// limit, DPDE forces beta = 0.
TuningTriple effective_tuning(EstimatorKind kind, const TuningTriple& t);

class RegressionProblem {
public:
    /// Validates n > p >= 1, full column rank, finite entries and at most one
    /// constant column (the intercept). Throws SingularDesign / DomainError.
    RegressionProblem(Eigen::MatrixXd design, Eigen::VectorXd response);

    [[nodiscard]] const Eigen::MatrixXd& design() const noexcept { return design_; }
    [[nodiscard]] const Eigen::VectorXd& response() const noexcept { return response_; }
    [[nodiscard]] Eigen::Index n() const noexcept { return design_.rows(); }
    [[nodiscard]] Eigen::Index p() const noexcept { return design_.cols(); }
    /// Index of the constant column, if any.
    [[nodiscard]] std::optional<Eigen::Index> intercept_column() const noexcept { return intercept_; }

    /// Sub-problem restricted to the given design columns.
    [[nodiscard]] RegressionProblem select_columns(const std::vector<Eigen::Index>& cols) const;

private:
    Eigen::MatrixXd design_;
    Eigen::VectorXd response_;
    std::optional<Eigen::Index> intercept_;
};

struct ParamVector {
    Eigen::VectorXd coef;
    double log_sigma = 0.0;

    [[nodiscard]] double sigma() const { return std::exp(log_sigma); }
};

struct FitOptions {
    int max_iter = 500;
    double grad_tol = 1e-8;
    double rel_obj_tol = 1e-10;
    /// Holds sigma at this value and estimates coef only.
    std::optional<double> fixed_sigma;
};

struct FitResult {
    ParamVector params;
    EstimatorKind kind = EstimatorKind::MLE;
    TuningTriple tuning;  ///< effective tuning
    double objective_value = 0.0;
    int iterations = 0;
    bool converged = false;
    bool sigma_fixed = false;
    double gradient_norm = 0.0;  ///< sup-norm at params
    Eigen::Index n = 0;
    /// Row i is the gradient of V_i at params over the free parameters.
    Eigen::MatrixXd per_sample_scores;
    std::vector<double> objective_trace;

    /// Number of free parameters q (p + 1, or p when sigma is fixed).
    [[nodiscard]] Eigen::Index free_dim() const noexcept { return params.coef.size() + (sigma_fixed ? 0 : 1); }
};

struct SandwichMatrices {
    Eigen::MatrixXd psi_hat;
    Eigen::MatrixXd omega_hat;
    Eigen::VectorXd xi_hat;
};

/// Ordinary least squares coef and residual standard deviation.
ParamVector ols_start(const RegressionProblem& problem);

/// H_n: mean samplewise contribution, or mean negative log-likelihood for MLE.
double empirical_objective(const RegressionProblem& problem, const ParamVector& params,
                           const TuningTriple& t, EstimatorKind kind);

/// Analytic gradient of H_n over (coef, log_sigma).
Eigen::VectorXd objective_gradient(const RegressionProblem& problem, const ParamVector& params,
                                   const TuningTriple& t, EstimatorKind kind);

/// n x (p+1) matrix of per-sample gradients of V_i; its column means are the gradient.
Eigen::MatrixXd per_sample_gradients(const RegressionProblem& problem, const ParamVector& params,
                                     const TuningTriple& t, EstimatorKind kind);

FitResult fit(const RegressionProblem& problem, const TuningTriple& t, EstimatorKind kind,
              const std::optional<ParamVector>& init = std::nullopt, const FitOptions& opts = {});

/// Psi-hat from the at-model plug-in (closed-form Gaussian moments), Omega-hat
/// from the outer products of the per-sample scores. Throws NotConverged or
/// NonPositiveDefinite.
SandwichMatrices sandwich(const RegressionProblem& problem, const FitResult& fit);

} // namespace epdic
