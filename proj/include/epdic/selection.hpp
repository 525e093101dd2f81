#pragma once

// Covariate screening with an l1 penalty on the divergence objective, all
// subsets regression over the screened set, and frequency consolidation of
// the per-criterion rankings.

#include "epdic/criteria.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace epdic {

/// Bit j refers to the j-th non-intercept column of the design.
struct CandidateModel {
    std::uint64_t mask = 0;
    std::vector<std::string> labels;

    /// Labels joined with '+'.
    [[nodiscard]] std::string name() const;
    friend bool operator==(const CandidateModel& a, const CandidateModel& b) { return a.mask == b.mask; }
};

inline constexpr int kMaxSubsetCovariates = 20;

/// Design columns that are not the intercept, in order.
std::vector<Eigen::Index> covariate_columns(const RegressionProblem& problem);

/// Throws DomainError for an empty mask, bits beyond the covariate count or
/// a label count different from the covariate count.
CandidateModel make_candidate(std::uint64_t mask, const std::vector<std::string>& covariate_labels);

/// The intercept (if any) plus the masked covariates.
RegressionProblem candidate_problem(const RegressionProblem& problem, std::uint64_t mask);

/// Centers and scales every non-constant column to mean 0 and mean square 1.
void standardize_columns(Eigen::MatrixXd& design);

struct LassoOptions {
    /// Empty: 50 log-spaced values from lambda_max down to 1e-3 lambda_max.
    std::vector<double> lambdas;
    int max_iter = 20000;
    /// Sup-norm of the proximal gradient mapping.
    double tol = 1e-9;
    double active_threshold = 1e-6;
    std::optional<double> fixed_sigma;
    FitOptions refit;
    unsigned threads = 1;
};

struct LassoFit {
    ParamVector params;
    double lambda = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct LassoPathPoint {
    double lambda = 0.0;
    std::uint64_t active = 0;
    int active_count = 0;
    /// Criterion of the unpenalized refit on the active set; +inf when empty
    /// or when the refit failed.
    double criterion = std::numeric_limits<double>::infinity();
};

struct LassoResult {
    std::uint64_t mask = 0;
    double lambda = 0.0;
    double criterion = 0.0;
    std::vector<LassoPathPoint> path;  ///< lambda descending
};

/// Smallest lambda at which every penalized coefficient of the likelihood
/// fit is zero (sigma at its null-model value unless fixed).
double lambda_max(const RegressionProblem& problem, std::optional<double> fixed_sigma = std::nullopt);
std::vector<double> default_lambda_grid(const RegressionProblem& problem, std::optional<double> fixed_sigma = std::nullopt,
                                        int count = 50, double ratio = 1e-3);

/// Minimizes H_n + lambda * sum |coef_j| over the non-intercept coefficients
/// by proximal gradient with backtracking.
LassoFit lasso_fit(const RegressionProblem& problem, const TuningTriple& t, EstimatorKind kind, double lambda,
                   const LassoOptions& opts = {}, const std::optional<ParamVector>& init = std::nullopt);

/// Runs the path, refits each distinct active set without penalty and keeps
/// the lambda whose refit minimizes the matching criterion (ties: larger
/// lambda). Penalized columns must be standardized (DomainError otherwise).
/// Throws EmptyActiveSet when every lambda leaves no covariate.
LassoResult lasso_screen(const RegressionProblem& problem, const TuningTriple& t, EstimatorKind kind,
                         const LassoOptions& opts = {});

struct RankedEntry {
    CandidateModel model;
    double total = std::numeric_limits<double>::infinity();  ///< +inf for a failed fit
};

struct RankedList {
    CriterionKind kind = CriterionKind::EPDIC;
    std::vector<RankedEntry> entries;  ///< ascending total, ties by mask
};

/// Criterion totals for one subset, in the order of the requested kinds;
/// +inf marks a failed fit.
using SubsetScorer = std::function<std::vector<double>(std::uint64_t mask)>;

/// Scores every non-empty subset of `mask` (concurrently) and returns one
/// ascending list per kind. Throws CapExceeded above kMaxSubsetCovariates.
std::vector<RankedList> rank_subsets(const std::vector<std::string>& covariate_labels, std::uint64_t mask,
                                     const std::vector<CriterionKind>& kinds, const SubsetScorer& scorer,
                                     unsigned threads = 1);

struct EnumerationTunings {
    TuningTriple dpd{0.0, 0.0, 0.5};
    TuningTriple epd{0.1, 0.3, 0.3};
};

/// Fits every non-empty subset of `mask` with the estimator behind each
/// requested criterion and returns one ascending list per criterion. Throws
/// CapExceeded above kMaxSubsetCovariates covariates.
std::vector<RankedList> enumerate_and_rank(const RegressionProblem& problem,
                                           const std::vector<std::string>& covariate_labels, std::uint64_t mask,
                                           const std::vector<CriterionKind>& kinds,
                                           const EnumerationTunings& tunings = {}, const FitOptions& opts = {},
                                           unsigned threads = 1);

struct ConsolidatedEntry {
    CandidateModel model;
    int freq = 0;
    double sel_freq = 0.0;
    /// Totals by criterion (EPDIC, DPDIC, MLIC); NaN when no list reports one.
    double epdic = std::numeric_limits<double>::quiet_NaN();
    double dpdic = std::numeric_limits<double>::quiet_NaN();
    double mlic = std::numeric_limits<double>::quiet_NaN();
};

/// Top-k of each list, counted across lists; sorted by freq descending,
/// EPDIC ascending, then mask. Needs at least two lists.
std::vector<ConsolidatedEntry> consolidate(const std::vector<RankedList>& lists, std::size_t top_k = 15);

} // namespace epdic
