#include "epdic/criteria.hpp"

#include "epdic/error.hpp"

#include <cmath>
#include <string>

namespace epdic {

std::string_view to_string(CriterionKind kind)
{
    switch (kind) {
    case CriterionKind::EPDIC: return "EPDIC";
    case CriterionKind::DPDIC: return "DPDIC";
    case CriterionKind::MLIC: return "MLIC";
    }
    return "?";
}

CriterionKind criterion_kind_from_string(std::string_view name)
{
    if (name == "EPDIC" || name == "epdic")
        return CriterionKind::EPDIC;
    if (name == "DPDIC" || name == "dpdic")
        return CriterionKind::DPDIC;
    if (name == "MLIC" || name == "mlic")
        return CriterionKind::MLIC;
    throw UsageError("unknown criterion '" + std::string(name) + "'");
}

EstimatorKind estimator_for(CriterionKind kind)
{
    switch (kind) {
    case CriterionKind::EPDIC: return EstimatorKind::EPDE;
    case CriterionKind::DPDIC: return EstimatorKind::DPDE;
    case CriterionKind::MLIC: return EstimatorKind::MLE;
    }
    return EstimatorKind::EPDE;
}

CriterionKind criterion_for(EstimatorKind kind)
{
    switch (kind) {
    case EstimatorKind::MLE: return CriterionKind::MLIC;
    case EstimatorKind::DPDE: return CriterionKind::DPDIC;
    case EstimatorKind::EPDE: return CriterionKind::EPDIC;
    }
    return CriterionKind::EPDIC;
}

double sandwich_trace(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& psi)
{
    Eigen::LLT<Eigen::MatrixXd> llt(psi);
    if (llt.info() != Eigen::Success)
        throw NonPositiveDefinite("Psi-hat is not positive definite");
    return llt.solve(omega).trace();
}

void require_compatible(CriterionKind kind, EstimatorKind estimator, const TuningTriple& tuning)
{
    switch (kind) {
    case CriterionKind::MLIC:
        if (estimator != EstimatorKind::MLE)
            throw KindMismatch("MLIC needs a maximum-likelihood fit");
        break;
    case CriterionKind::DPDIC:
        if (estimator == EstimatorKind::MLE || tuning.beta != 0.0)
            throw KindMismatch("DPDIC needs a beta = 0 divergence fit");
        break;
    case CriterionKind::EPDIC:
        if (estimator == EstimatorKind::MLE)
            throw KindMismatch("EPDIC needs a divergence fit");
        break;
    }
}

CriterionReport criterion(const RegressionProblem& problem, const FitResult& fit, CriterionKind kind)
{
    require_compatible(kind, fit.kind, fit.tuning);
    const SandwichMatrices sw = sandwich(problem, fit);
    CriterionReport rep;
    rep.kind = kind;
    rep.fit_term = double(problem.n()) * empirical_objective(problem, fit.params, fit.tuning, fit.kind);
    rep.penalty = sandwich_trace(sw.omega_hat, sw.psi_hat);
    rep.total = rep.fit_term + rep.penalty;
    return rep;
}

double influence_value(double y_pt, const Eigen::VectorXd& x_pt, const FitResult& fit)
{
    if (x_pt.size() != fit.params.coef.size())
        throw ShapeMismatch("covariate point length does not match the fit");
    const UnivariateGaussian g{x_pt.dot(fit.params.coef), fit.params.sigma()};
    const double n = double(fit.n);
    if (fit.kind == EstimatorKind::MLE)
        return -n * g.log_density(y_pt);
    return n * samplewise_contribution(y_pt, g, fit.tuning);
}

BoundednessReport boundedness_scan(const FitResult& fit, const Eigen::VectorXd& x_pt,
                                   const InfluenceGrid& grid)
{
    if (grid.points < 2 || !(grid.half_width_sigmas > 0.0) || !(grid.widen_factor > 1.0))
        throw DomainError("invalid influence grid");
    const double mu = x_pt.dot(fit.params.coef);
    const double sigma = fit.params.sigma();

    struct Sup {
        double value = -1.0;
        double at = 0.0;
    };
    auto scan = [&](double half_width) {
        Sup s;
        const double lo = mu - half_width * sigma;
        const double step = 2.0 * half_width * sigma / double(grid.points - 1);
        for (int k = 0; k < grid.points; ++k) {
            const double y = lo + step * k;
            const double v = std::abs(influence_value(y, x_pt, fit));
            if (v > s.value) {
                s.value = v;
                s.at = y;
            }
        }
        return s;
    };

    const Sup inner = scan(grid.half_width_sigmas);
    // The widened scan includes the inner grid, so it can only grow the sup.
    const Sup outer = scan(grid.half_width_sigmas * grid.widen_factor);

    BoundednessReport rep;
    rep.sup_abs = inner.value;
    rep.argmax_y = inner.at;
    rep.sup_abs_widened = std::max(inner.value, outer.value);
    rep.bounded = std::abs(rep.sup_abs_widened - rep.sup_abs) < grid.tolerance;
    return rep;
}

} // namespace epdic
