#pragma once

// Exponential-polynomial generating function, its derivatives, and the
// samplewise divergence contribution for Gaussian and finite-support models.

#include <cstddef>
#include <vector>

namespace epdic {

/// Below this magnitude alpha and gamma switch to their removable-limit
/// branches (series limit for alpha, log limit for gamma).
inline constexpr double kLimitThreshold = 1e-8;

/// Robustness parameters (alpha, beta, gamma) of the divergence family.
///
/// beta mixes the exponential (beta = 1) and power (beta = 0) parts; beta = 0
/// gives the density power divergence and beta = 0, gamma -> 0 the
/// Kullback-Leibler divergence.
struct TuningTriple {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;

    /// Throws DomainError unless alpha is finite, beta in [0, 1], gamma >= 0.
    void validate() const;

    [[nodiscard]] bool exp_limit() const noexcept;
    [[nodiscard]] bool log_limit() const noexcept;

    friend bool operator==(const TuningTriple&, const TuningTriple&) = default;
};

struct UnivariateGaussian {
    double mu = 0.0;
    double sigma = 1.0;

    void validate() const;
    [[nodiscard]] double density(double y) const;
    [[nodiscard]] double log_density(double y) const;
};

/// Probability vector over a finite support {0, ..., K-1}.
struct DiscreteDensity {
    std::vector<double> probs;

    void validate() const;
};

double generating_fn(double x, const TuningTriple& t);
double generating_fn_d1(double x, const TuningTriple& t);
double generating_fn_d2(double x, const TuningTriple& t);

/// B'(f) evaluated from log f, stable when f underflows in the far tails.
double generating_fn_d1_from_log(double log_f, const TuningTriple& t);

/// w(f) = beta f e^{alpha f} + (1 - beta)(1 + gamma) f^gamma, equal to f B''(f).
double weight_fn(double f, const TuningTriple& t);
double weight_fn_from_log(double log_f, const TuningTriple& t);

/// Integral of f^k over R^dim for a Gaussian density with covariance of log
/// determinant `log_det_cov`: k^{-dim/2} (2 pi)^{-dim (k-1)/2} |Cov|^{-(k-1)/2}.
double gaussian_power_integral(double k, int dim, double log_det_cov);
double gaussian_power_integral(const UnivariateGaussian& g, double k);

/// Integral of e^{alpha f}(alpha f - 1) + 1 for a univariate Gaussian f,
/// summed as a power series in alpha over closed-form power integrals.
double exp_component_integral(const UnivariateGaussian& g, double alpha);

/// Model-side term of the samplewise contribution for a Gaussian family,
/// (beta / alpha^2) E(alpha) + (1 - beta) int f^{1+gamma}, together with its
/// derivative with respect to log|Cov|. Depends on the model only through
/// the dimension and the covariance determinant.
struct GaussianModelTerm {
    double value = 0.0;
    double d_log_det = 0.0;
};
GaussianModelTerm gaussian_model_term(int dim, double log_det_cov, const TuningTriple& t);

/// (e^{alpha f}(alpha f - 1) + 1) / alpha^2, continuous through alpha = 0.
double exp_bregman_scaled(double f, double alpha);

/// V(y; theta) for a univariate Gaussian model.
double samplewise_contribution(double y_obs, const UnivariateGaussian& g, const TuningTriple& t);

/// V(y; theta) for a finite-support model; integrals become sums.
double discrete_samplewise_contribution(std::size_t y_obs, const DiscreteDensity& d,
                                        const TuningTriple& t);

} // namespace epdic
