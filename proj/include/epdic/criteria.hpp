#pragma once

// EPDIC / DPDIC / MLIC: n H_n(theta-hat) + tr(Omega Psi^{-1}), and the
// influence function of the fit term.

#include "epdic/regression.hpp"

#include <string_view>

namespace epdic {

enum class CriterionKind { EPDIC, DPDIC, MLIC };

std::string_view to_string(CriterionKind kind);
CriterionKind criterion_kind_from_string(std::string_view name);

/// Estimator whose fit a criterion is built on.
EstimatorKind estimator_for(CriterionKind kind);
/// Criterion built on each estimator: MLE -> MLIC, DPDE -> DPDIC, EPDE -> EPDIC.
CriterionKind criterion_for(EstimatorKind kind);

struct CriterionReport {
    CriterionKind kind = CriterionKind::EPDIC;
    double fit_term = 0.0;  ///< n * H_n(theta-hat)
    double penalty = 0.0;   ///< tr(Omega-hat Psi-hat^{-1})
    double total = 0.0;     ///< fit_term + penalty
};

/// tr(omega psi^{-1}) through a Cholesky solve; throws NonPositiveDefinite.
double sandwich_trace(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& psi);

/// Throws KindMismatch unless the criterion can be built on this estimator:
/// MLIC on MLE, DPDIC on a beta = 0 divergence fit, EPDIC on any divergence fit.
void require_compatible(CriterionKind kind, EstimatorKind estimator, const TuningTriple& tuning);

/// Builds the criterion from a converged fit. MLIC needs an MLE fit, DPDIC a
/// fit with beta = 0 (DPDE, or EPDE at beta = 0), EPDIC any divergence fit.
CriterionReport criterion(const RegressionProblem& problem, const FitResult& fit, CriterionKind kind);

/// n V(y; N(x' coef-hat, sigma-hat)) -- the O(n) part of the influence
/// function. The O(1) penalty influence is not evaluated.
double influence_value(double y_pt, const Eigen::VectorXd& x_pt, const FitResult& fit);

struct InfluenceGrid {
    double half_width_sigmas = 100.0;
    int points = 10000;
    double widen_factor = 10.0;
    double tolerance = 1e-6;
};

struct BoundednessReport {
    double sup_abs = 0.0;
    double argmax_y = 0.0;
    double sup_abs_widened = 0.0;
    bool bounded = false;
};

/// Scans |influence| on a symmetric grid around the fitted mode at x_pt and
/// flags boundedness when widening the grid leaves the supremum unchanged.
BoundednessReport boundedness_scan(const FitResult& fit, const Eigen::VectorXd& x_pt,
                                   const InfluenceGrid& grid = {});

} // namespace epdic
