#include "epdic/divergence.hpp"

#include "epdic/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace epdic {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112; // log(2 pi)
constexpr double kSeriesRelTol = 1e-14;
constexpr int kSeriesMaxTerms = 200;

void require_nonnegative(double x, const char* what)
{
    if (!(x >= 0.0) || !std::isfinite(x))
        throw DomainError(std::string(what) + " must be finite and nonnegative");
}

// (e^{z} - 1 - z) / alpha^2 with z = alpha x.
double exp_part(double x, double alpha)
{
    if (std::abs(alpha) < kLimitThreshold)
        return 0.5 * x * x;
    const double z = alpha * x;
    if (std::abs(z) < 0.5) {
        // x^2 sum_{k>=2} z^{k-2} / k!
        double term = 0.5;
        double sum = term;
        for (int k = 3; k < 40; ++k) {
            term *= z / k;
            sum += term;
            if (std::abs(term) < 1e-17 * std::abs(sum))
                break;
        }
        return x * x * sum;
    }
    return (std::expm1(z) - z) / (alpha * alpha);
}

// (x^{gamma+1} - x) / gamma, with the x log x limit.
double poly_part(double x, double gamma)
{
    if (x == 0.0)
        return 0.0;
    const double lx = std::log(x);
    if (gamma < kLimitThreshold)
        return x * lx;
    return x * std::expm1(gamma * lx) / gamma;
}

// (e^{alpha f} - 1) / alpha
double exp_part_d1(double f, double alpha)
{
    if (std::abs(alpha) < kLimitThreshold)
        return f;
    return std::expm1(alpha * f) / alpha;
}

// ((gamma + 1) f^gamma - 1) / gamma from log f.
double poly_part_d1_from_log(double log_f, double gamma)
{
    if (gamma < kLimitThreshold) {
        if (std::isinf(log_f))
            throw SingularityError("B'(0) is unbounded in the log limit (gamma -> 0)");
        return 1.0 + log_f;
    }
    const double gl = gamma * log_f;
    return std::exp(gl) + std::expm1(gl) / gamma;
}

struct SeriesSum {
    double value = 0.0;
    double d_log_det = 0.0;
};

// sum_{k>=2} alpha^{k-2} (k-1)/k! I_k and its derivative in log|Cov|.
SeriesSum scaled_exp_series(int dim, double log_det_cov, double alpha)
{
    SeriesSum s;
    const double log_abs_alpha = alpha == 0.0 ? 0.0 : std::log(std::abs(alpha));
    for (int k = 2; k < 2 + kSeriesMaxTerms; ++k) {
        if (k > 2 && alpha == 0.0)
            return s;
        const double log_ik = -0.5 * dim * std::log(double(k)) - 0.5 * dim * (k - 1) * kLog2Pi
                              - 0.5 * (k - 1) * log_det_cov;
        double magnitude = std::exp((k - 2) * log_abs_alpha + std::log(double(k - 1))
                                    - std::lgamma(k + 1.0) + log_ik);
        const double term = (alpha < 0.0 && (k % 2) == 1) ? -magnitude : magnitude;
        const double dterm = -0.5 * (k - 1) * term;
        s.value += term;
        s.d_log_det += dterm;
        if (std::abs(term) < kSeriesRelTol * std::abs(s.value)
            && std::abs(dterm) < kSeriesRelTol * std::abs(s.d_log_det))
            return s;
    }
    throw NonConvergence("exponential-component series did not converge within "
                         + std::to_string(kSeriesMaxTerms) + " terms");
}

} // namespace

void TuningTriple::validate() const
{
    if (!std::isfinite(alpha))
        throw DomainError("alpha must be finite");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw DomainError("beta must lie in [0, 1]");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
        throw DomainError("gamma must be finite and nonnegative");
}

bool TuningTriple::exp_limit() const noexcept { return std::abs(alpha) < kLimitThreshold; }
bool TuningTriple::log_limit() const noexcept { return gamma < kLimitThreshold; }

void UnivariateGaussian::validate() const
{
    if (!std::isfinite(mu))
        throw DomainError("Gaussian location must be finite");
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw DomainError("Gaussian scale must be finite and positive");
}

double UnivariateGaussian::log_density(double y) const
{
    const double z = (y - mu) / sigma;
    return -0.5 * kLog2Pi - std::log(sigma) - 0.5 * z * z;
}

double UnivariateGaussian::density(double y) const { return std::exp(log_density(y)); }

void DiscreteDensity::validate() const
{
    if (probs.empty())
        throw DomainError("discrete density has empty support");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0))
            throw DomainError("discrete probabilities must lie in [0, 1]");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw DomainError("discrete probabilities must sum to one");
}

double generating_fn(double x, const TuningTriple& t)
{
    require_nonnegative(x, "generating function argument");
    t.validate();
    double value = 0.0;
    if (t.beta > 0.0)
        value += t.beta * exp_part(x, t.alpha);
    if (t.beta < 1.0)
        value += (1.0 - t.beta) * poly_part(x, t.gamma);
    return value;
}

double generating_fn_d1(double x, const TuningTriple& t)
{
    require_nonnegative(x, "generating function argument");
    return generating_fn_d1_from_log(std::log(x), t);
}

double generating_fn_d1_from_log(double log_f, const TuningTriple& t)
{
    t.validate();
    double value = 0.0;
    if (t.beta > 0.0)
        value += t.beta * exp_part_d1(std::exp(log_f), t.alpha);
    if (t.beta < 1.0)
        value += (1.0 - t.beta) * poly_part_d1_from_log(log_f, t.gamma);
    return value;
}

double generating_fn_d2(double x, const TuningTriple& t)
{
    require_nonnegative(x, "generating function argument");
    t.validate();
    double value = 0.0;
    if (t.beta > 0.0)
        value += t.beta * std::exp(t.alpha * x);
    if (t.beta < 1.0) {
        if (x == 0.0 && t.gamma < 1.0)
            throw SingularityError("B''(0) is unbounded for gamma < 1");
        value += (1.0 - t.beta) * (t.gamma + 1.0) * std::pow(x, t.gamma - 1.0);
    }
    return value;
}

double weight_fn(double f, const TuningTriple& t)
{
    require_nonnegative(f, "weight argument");
    t.validate();
    double value = 0.0;
    if (t.beta > 0.0)
        value += t.beta * f * std::exp(t.alpha * f);
    if (t.beta < 1.0)
        value += (1.0 - t.beta) * (1.0 + t.gamma) * std::pow(f, t.gamma);
    return value;
}

double weight_fn_from_log(double log_f, const TuningTriple& t)
{
    double value = 0.0;
    if (t.beta > 0.0) {
        const double f = std::exp(log_f);
        value += t.beta * f * std::exp(t.alpha * f);
    }
    if (t.beta < 1.0)
        value += (1.0 - t.beta) * (1.0 + t.gamma) * std::exp(t.gamma * log_f);
    return value;
}

double gaussian_power_integral(double k, int dim, double log_det_cov)
{
    if (!(k >= 1.0) || !std::isfinite(k))
        throw DomainError("power-integral exponent must be >= 1");
    if (dim < 1)
        throw DomainError("dimension must be positive");
    return std::exp(-0.5 * dim * std::log(k) - 0.5 * dim * (k - 1.0) * kLog2Pi
                    - 0.5 * (k - 1.0) * log_det_cov);
}

double gaussian_power_integral(const UnivariateGaussian& g, double k)
{
    g.validate();
    return gaussian_power_integral(k, 1, 2.0 * std::log(g.sigma));
}

double exp_component_integral(const UnivariateGaussian& g, double alpha)
{
    g.validate();
    if (!std::isfinite(alpha))
        throw DomainError("alpha must be finite");
    if (alpha == 0.0)
        return 0.0;
    return alpha * alpha * scaled_exp_series(1, 2.0 * std::log(g.sigma), alpha).value;
}

GaussianModelTerm gaussian_model_term(int dim, double log_det_cov, const TuningTriple& t)
{
    t.validate();
    GaussianModelTerm m;
    if (t.beta > 0.0) {
        const SeriesSum s = scaled_exp_series(dim, log_det_cov, t.alpha);
        m.value += t.beta * s.value;
        m.d_log_det += t.beta * s.d_log_det;
    }
    if (t.beta < 1.0) {
        const double p = gaussian_power_integral(1.0 + t.gamma, dim, log_det_cov);
        m.value += (1.0 - t.beta) * p;
        m.d_log_det += (1.0 - t.beta) * (-0.5 * t.gamma) * p;
    }
    return m;
}

double exp_bregman_scaled(double f, double alpha)
{
    const double z = alpha * f;
    if (std::abs(z) < 0.5) {
        // f^2 sum_{k>=2} (k-1)/k! z^{k-2}
        double power = 1.0;  // z^{k-2}
        double fact = 2.0;   // k!
        double sum = 0.5;
        for (int k = 3; k < 60; ++k) {
            power *= z;
            fact *= k;
            const double term = (k - 1) * power / fact;
            sum += term;
            if (std::abs(term) < 1e-17 * std::abs(sum))
                break;
        }
        return f * f * sum;
    }
    return (std::expm1(z) * (z - 1.0) + z) / (alpha * alpha);
}

double samplewise_contribution(double y_obs, const UnivariateGaussian& g, const TuningTriple& t)
{
    g.validate();
    t.validate();
    const GaussianModelTerm model = gaussian_model_term(1, 2.0 * std::log(g.sigma), t);
    return model.value - generating_fn_d1_from_log(g.log_density(y_obs), t);
}

double discrete_samplewise_contribution(std::size_t y_obs, const DiscreteDensity& d,
                                        const TuningTriple& t)
{
    d.validate();
    t.validate();
    if (y_obs >= d.probs.size())
        throw DomainError("observed index outside the support");
    double model = 0.0;
    for (double f : d.probs) {
        if (t.beta > 0.0)
            model += t.beta * exp_bregman_scaled(f, t.alpha);
        if (t.beta < 1.0)
            model += (1.0 - t.beta) * std::pow(f, 1.0 + t.gamma);
    }
    return model - generating_fn_d1(d.probs[y_obs], t);
}

} // namespace epdic
