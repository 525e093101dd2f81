#pragma once

// Small feed-forward binary classifier: tanh hidden layers, two output logits
// and a softmax, trained by full-batch gradient descent on the divergence
// loss of the Bernoulli model.

#include "epdic/criteria.hpp"
#include "epdic/selection.hpp"
#include "epdic/tuning.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace epdic {

struct ArchitectureSpec {
    int hidden_layers = 1;  ///< 1 or 2
    int hidden_width = 2;   ///< 2 or 3
    int input_dim = 1;
    std::string label;      ///< A1..A4

    /// Throws DomainError off the grid or when the label does not match.
    void validate() const;
    [[nodiscard]] int parameter_count() const;
};

/// A1 = (1, 2), A2 = (1, 3), A3 = (2, 2), A4 = (2, 3).
ArchitectureSpec make_architecture(const std::string& label, int input_dim);
std::vector<ArchitectureSpec> architecture_grid(int input_dim);

/// Logit differences z1 - z0 are clamped to this magnitude.
inline constexpr double kLogitClamp = 30.0;

struct NetworkParams {
    ArchitectureSpec arch;
    /// weights[l] is out x in; the last layer has two rows (logits for y = 0, 1).
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static NetworkParams zeros(const ArchitectureSpec& arch);
    /// Uniform(-0.5, 0.5) / sqrt(fan_in) for weights and biases.
    static NetworkParams random(const ArchitectureSpec& arch, std::uint64_t seed);

    /// Layer by layer: W (column-major) then b.
    [[nodiscard]] Eigen::VectorXd flatten() const;
    static NetworkParams unflatten(const ArchitectureSpec& arch, const Eigen::VectorXd& theta);

    /// Throws ShapeMismatch / DomainError.
    void validate() const;
};

class ClassificationData {
public:
    /// Labels must be 0/1 and features finite. Columns that are not 0/1
    /// indicators must be standardized (mean 0, population sd 1).
    ClassificationData(Eigen::MatrixXd features, std::vector<int> labels);

    [[nodiscard]] const Eigen::MatrixXd& features() const noexcept { return x_; }
    [[nodiscard]] const std::vector<int>& labels() const noexcept { return y_; }
    [[nodiscard]] Eigen::Index n() const noexcept { return x_.rows(); }
    [[nodiscard]] Eigen::Index d() const noexcept { return x_.cols(); }

    [[nodiscard]] ClassificationData subset(const std::vector<Eigen::Index>& rows) const;

private:
    Eigen::MatrixXd x_;
    std::vector<int> y_;
};

/// Standardizes the listed columns in place (population sd); constant
/// columns are left alone.
void standardize_features(Eigen::MatrixXd& x, const std::vector<Eigen::Index>& cols);

/// Raw logit difference z1 - z0, before clamping.
double logit_difference(const NetworkParams& params, const Eigen::VectorXd& x);
/// P(y = 1 | x).
double forward(const NetworkParams& params, const Eigen::VectorXd& x);

/// Mean V(y_i; Bernoulli(p_i)) under the effective tuning of `kind`; mean
/// cross-entropy for MLE.
double epd_loss(const NetworkParams& params, const ClassificationData& data, const TuningTriple& t,
                EstimatorKind kind = EstimatorKind::EPDE);
double cross_entropy(const NetworkParams& params, const ClassificationData& data);

struct LossGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient;        ///< mean over samples, flattened layout
    Eigen::MatrixXd per_sample;      ///< N x q, filled on request
};

LossGradient epd_loss_gradient(const NetworkParams& params, const ClassificationData& data, const TuningTriple& t,
                               EstimatorKind kind = EstimatorKind::EPDE, bool keep_per_sample = false);

struct TrainOptions {
    std::uint64_t seed = 1;
    int max_epochs = 500;
    double step = 0.05;
    /// Step growth after an accepted step; never above `step`.
    double regrow = 1.5;
    double min_step = 1e-14;
};

struct TrainReport {
    NetworkParams params;
    EstimatorKind kind = EstimatorKind::EPDE;
    TuningTriple tuning;  ///< effective tuning
    double loss = 0.0;
    int epochs = 0;
    int halvings = 0;
    bool aborted = false;
    std::string message;
    std::vector<double> loss_trace;
};

/// Aborts (report.aborted) when the loss at the start is not finite;
/// non-finite trial losses count as non-descent and halve the step.
TrainReport train(const ArchitectureSpec& arch, const ClassificationData& data, const TuningTriple& t,
                  EstimatorKind kind, const TrainOptions& opts = {});

/// Training accuracy with the 0.5 threshold.
double accuracy(const NetworkParams& params, const ClassificationData& data);

struct NetworkSandwich {
    Eigen::MatrixXd psi_hat;    ///< Gauss-Newton curvature at the model
    Eigen::MatrixXd omega_hat;  ///< mean outer product of per-sample gradients
};

NetworkSandwich network_sandwich(const TrainReport& fit, const ClassificationData& data);

/// tr(omega psi^+) with eigenvalues of psi shifted by 1e-8 times the largest
/// one; 0 when psi vanishes.
double ridge_sandwich_trace(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& psi, double ridge = 1e-8);

/// N * loss + penalty. Throws KindMismatch like the regression criterion;
/// an aborted fit throws NumericalError.
CriterionReport network_criterion(const TrainReport& fit, const ClassificationData& data, CriterionKind kind);

struct NetworkTunings {
    TuningTriple dpd{0.0, 0.0, 0.9};
    TuningTriple epd{0.1, 0.7, 0.1};
};

struct ArchitectureRanking {
    std::vector<RankedList> lists;
    std::vector<ConsolidatedEntry> consolidated;  ///< top_k = 4
    std::vector<TrainReport> fits;                ///< architecture-major, one per estimator used
};

/// Trains A1..A4 under each estimator the kinds need, ranks each criterion
/// and consolidates. Masks are 1 << index in the grid.
ArchitectureRanking select_architecture(const ClassificationData& data, const std::vector<CriterionKind>& kinds,
                                        const NetworkTunings& tunings = {}, const TrainOptions& opts = {},
                                        unsigned threads = 1);

struct NetworkTuningSelection {
    TuningTriple best;
    double best_brier = 0.0;
    std::vector<TuningPoint> table;  ///< held-out Brier score per triple, grid order
    std::vector<TuningFailure> failures;
};

/// Trains on a seeded 80% split for every grid triple and keeps the lowest
/// held-out Brier score; ties go to the smaller gamma, then beta, then alpha.
NetworkTuningSelection select_network_tuning(const ArchitectureSpec& arch, const ClassificationData& data,
                                             const TuningGrid& grid, TuningFamily family,
                                             const TrainOptions& opts = {}, std::uint64_t split_seed = 7,
                                             unsigned threads = 1);

double brier_score(const NetworkParams& params, const ClassificationData& data);

} // namespace epdic
