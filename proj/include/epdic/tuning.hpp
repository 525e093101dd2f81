#pragma once

// Tuning selection by generalized score matching: fit at every grid point and
// keep the triple whose fit minimises the Hyvarinen score of the data.

#include "epdic/regression.hpp"

#include <string>
#include <vector>

namespace epdic {

/// Score-matching contribution of one observation under N(mu, sigma^2):
/// 2 d^2/dy^2 log f + (d/dy log f)^2.
double sm_contribution(double y, double mu, double sigma);

/// Mean score-matching contribution over the sample at `params`.
double gsm_objective(const RegressionProblem& problem, const ParamVector& params);

enum class TuningFamily { DPD, EPD };

struct TuningGrid {
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<double> gammas;

    /// Throws DomainError on empty axes, alphas <= 0, betas outside [0, 1]
    /// or gammas <= 0.
    void validate(TuningFamily family) const;

    /// Triples visited for the family: the full product for EPD, one
    /// (0, 0, gamma) per gamma for DPD.
    [[nodiscard]] std::vector<TuningTriple> points(TuningFamily family) const;

    /// alpha, gamma in {0.1, ..., 1.0}, beta in {0.1, ..., 0.9}.
    static TuningGrid epd_default();
    /// gamma in {0.05, 0.10, ..., 1.0}.
    static TuningGrid dpd_default();
};

struct TuningPoint {
    TuningTriple triple;
    double score = 0.0;
};

struct TuningFailure {
    TuningTriple triple;
    std::string reason;
};

struct TuningSelection {
    TuningTriple best;
    double best_score = 0.0;
    std::vector<TuningPoint> table;  ///< converged points, in grid order
    std::vector<TuningFailure> failures;
};

/// Exhaustive sweep. Ties in the score go to the smallest gamma, then beta,
/// then alpha, so the result does not depend on grid order. Throws
/// AllPointsFailed when no grid point yields a converged fit.
TuningSelection select_tuning(const RegressionProblem& problem, const TuningGrid& grid, TuningFamily family,
                              const FitOptions& opts = {}, unsigned threads = 1);

} // namespace epdic
