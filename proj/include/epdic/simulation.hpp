#pragma once

// Seeded synthetic regression data with vertical or leverage contamination,
// and the Monte Carlo study that fits and scores all three estimators.

#include "epdic/criteria.hpp"
#include "epdic/tuning.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace epdic {

enum class Scheme { Pure, ErrorContam, CovContam };

std::string_view to_string(Scheme scheme);
/// Accepts "pure"/"0", "error"/"1", "covariate"/"2".
Scheme scheme_from_string(std::string_view name);

/// How a leverage-contaminated row is redrawn.
enum class CovContamMode { AllCoordinates, SingleCoordinate };

inline constexpr double kErrorContamMean = 10.6;
inline constexpr double kErrorContamSd = 1.0;
inline constexpr double kCovContamMean = 45.6;
inline constexpr double kCovContamSd = 6.3;

struct SimConfig {
    int n = 150;
    int p = 5;
    double rho = 0.5;
    Eigen::VectorXd beta0 = (Eigen::VectorXd(5) << 1.5, -1.0, 0.8, 0.5, -0.7).finished();
    double sigma = 1.0;
    Scheme scheme = Scheme::Pure;
    double delta = 0.0;
    int reps = 1;
    std::uint64_t base_seed = 1;
    CovContamMode cov_mode = CovContamMode::AllCoordinates;

    /// Throws DomainError on inconsistent sizes, delta outside [0, 0.5), etc.
    void validate() const;
};

/// ceil(delta n), guarded against representation error in delta * n.
std::size_t contaminated_count(int n, double delta);

struct GeneratedSample {
    Eigen::MatrixXd design;
    Eigen::VectorXd response;
    std::vector<std::size_t> contaminated;  ///< sorted row indices
};

/// Draws replication `rep`. Everything is a function of (base_seed, rep):
/// covariates first, then errors, then the contaminated rows, then their
/// replacement values.
GeneratedSample generate_sample(const SimConfig& config, int rep);
RegressionProblem generate(const SimConfig& config, int rep);

/// Tunings shipped for the preset contamination levels (scheme 1:
/// 0.052/0.093/0.134, scheme 2: 0.058/0.099/0.140, and delta = 0).
struct PresetTuning {
    TuningTriple dpd;
    TuningTriple epd;
};
std::optional<PresetTuning> preset_tuning(Scheme scheme, double delta);
std::vector<double> preset_deltas(Scheme scheme);

struct StudyTunings {
    TuningTriple dpd{0.0, 0.0, 0.35};
    TuningTriple epd{0.1, 0.7, 0.3};
    /// Re-select both tunings per replication by score matching.
    bool select_by_gsm = false;
    TuningGrid dpd_grid = TuningGrid::dpd_default();
    TuningGrid epd_grid = TuningGrid::epd_default();
};

struct StudyOptions {
    unsigned threads = 1;
    FitOptions fit;
    double max_failure_fraction = 0.1;
};

struct ReplicationRecord {
    int rep = 0;
    EstimatorKind estimator = EstimatorKind::MLE;
    TuningTriple tuning;
    ParamVector params;
    CriterionReport criterion;
};

struct ReplicationFailure {
    int rep = 0;
    std::string reason;
};

struct EstimatorSummary {
    EstimatorKind estimator = EstimatorKind::MLE;
    CriterionKind criterion = CriterionKind::MLIC;
    int count = 0;
    Eigen::VectorXd coef_mean;
    Eigen::VectorXd coef_sd;
    double sigma_mean = 0.0;
    double criterion_mean = 0.0;
    double criterion_sd = 0.0;
    double penalty_mean = 0.0;
};

struct MonteCarloSummary {
    SimConfig config;
    std::vector<EstimatorSummary> estimators;  ///< MLE, DPDE, EPDE
    std::vector<ReplicationRecord> records;    ///< rep-major, MLE/DPDE/EPDE within a rep
    std::vector<ReplicationFailure> failures;
};

/// Runs config.reps replications. A replication in which any estimator fails
/// is recorded as a failure; more than max_failure_fraction of failures
/// throws TooManyFailures. Results do not depend on the thread count.
MonteCarloSummary run_study(const SimConfig& config, const StudyTunings& tunings, const StudyOptions& opts = {});

} // namespace epdic
