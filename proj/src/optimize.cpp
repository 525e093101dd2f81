#include "epdic/optimize.hpp"

#include "epdic/error.hpp"

#include <cmath>
#include <limits>

namespace epdic {

namespace {

double safe_eval(const ObjectiveFn& f, const Eigen::VectorXd& x)
{
    try {
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
    }
}

constexpr int kFlatRunLimit = 10;

double sup_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

} // namespace

MinimizeResult minimize_quasi_newton(const ObjectiveFn& f, const GradientFn& grad,
                                     Eigen::VectorXd x0, const MinimizeOptions& opts)
{
    const Eigen::Index n = x0.size();
    MinimizeResult res;
    res.x = std::move(x0);
    res.value = f(res.x);
    if (!std::isfinite(res.value))
        throw NumericalError("objective is not finite at the starting point");
    res.gradient = grad(res.x);
    res.trace.push_back(res.value);

    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    bool hinv_is_identity = true;
    bool stalled = false;
    int flat_run = 0;

    while (res.iterations < opts.max_iter) {
        if (sup_norm(res.gradient) <= opts.grad_tol)
            break;

        Eigen::VectorXd dir = -hinv * res.gradient;
        double slope = res.gradient.dot(dir);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            hinv_is_identity = true;
            dir = -res.gradient;
            slope = res.gradient.dot(dir);
        }

        double step = 1.0;
        double trial_value = std::numeric_limits<double>::infinity();
        Eigen::VectorXd trial;
        bool accepted = false;
        for (int h = 0; h <= opts.max_halvings; ++h, step *= 0.5) {
            trial = res.x + step * dir;
            trial_value = safe_eval(f, trial);
            if (trial_value <= res.value + opts.armijo * step * slope) {
                accepted = true;
                break;
            }
        }
        Eigen::VectorXd trial_grad;
        if (!accepted && -slope <= 1e-12 * std::max(1.0, std::abs(res.value))) {
            // The predicted decrease is below what the objective can resolve.
            // Fall back to the gradient as the merit function, tolerating
            // only rounding-level changes in the objective.
            const double gnorm = sup_norm(res.gradient);
            const double noise = kRoundingSlack * std::max(1.0, std::abs(res.value));
            step = 1.0;
            for (int h = 0; h <= opts.max_halvings && !accepted; ++h, step *= 0.5) {
                trial = res.x + step * dir;
                trial_value = safe_eval(f, trial);
                if (!(trial_value <= res.value + noise))
                    continue;
                trial_grad = grad(trial);
                accepted = sup_norm(trial_grad) < gnorm;
            }
        }
        if (!accepted) {
            if (!hinv_is_identity) {
                hinv.setIdentity();
                hinv_is_identity = true;
                continue;
            }
            stalled = true;
            break;
        }

        if (trial_grad.size() == 0)
            trial_grad = grad(trial);
        const Eigen::VectorXd s = trial - res.x;
        const Eigen::VectorXd y = trial_grad - res.gradient;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (hinv_is_identity)
                hinv *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
            hinv = left * hinv * left.transpose() + rho * s * s.transpose();
            hinv_is_identity = false;
        }

        const double prev_value = res.value;
        const double x_scale = std::max(1.0, sup_norm(res.x));
        res.x = std::move(trial);
        res.value = trial_value;
        res.gradient = std::move(trial_grad);
        res.trace.push_back(res.value);
        ++res.iterations;

        // Near the optimum of a badly scaled problem the objective stops
        // resolving changes before the gradient does, so only a run of flat
        // steps counts as a stall.
        const bool flat = std::abs(prev_value - res.value) <= opts.rel_obj_tol * std::max(1.0, std::abs(prev_value))
                       && sup_norm(s) <= opts.rel_obj_tol * x_scale;
        flat_run = flat ? flat_run + 1 : 0;
        if (flat_run >= kFlatRunLimit) {
            stalled = true;
            break;
        }
    }

    const double gnorm = sup_norm(res.gradient);
    res.converged = gnorm <= opts.grad_tol || (stalled && gnorm <= 10.0 * opts.grad_tol);
    return res;
}

Eigen::VectorXd central_difference_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x,
                                            double rel_step)
{
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x[j]));
        xp[j] = x[j] + h;
        const double fp = f(xp);
        xp[j] = x[j] - h;
        const double fm = f(xp);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd central_difference_hessian(const GradientFn& grad, const Eigen::VectorXd& x,
                                           double rel_step)
{
    const Eigen::Index n = x.size();
    Eigen::MatrixXd hess(n, n);
    Eigen::VectorXd xp = x;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x[j]));
        xp[j] = x[j] + h;
        const Eigen::VectorXd gp = grad(xp);
        xp[j] = x[j] - h;
        const Eigen::VectorXd gm = grad(xp);
        xp[j] = x[j];
        hess.col(j) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (hess + hess.transpose());
}

} // namespace epdic
