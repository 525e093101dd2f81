#pragma once

// Damped BFGS with Armijo backtracking, used by every estimator in the
// library, plus central-difference derivative helpers.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace epdic {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Relative objective change treated as rounding noise (16 ulps).
inline constexpr double kRoundingSlack = 16.0 * 2.220446049250313e-16;

struct MinimizeOptions {
    int max_iter = 500;
    double grad_tol = 1e-8;
    double rel_obj_tol = 1e-10;
    double armijo = 1e-4;
    int max_halvings = 60;
};

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;
    int iterations = 0;
    /// Set when the sup-norm of the final gradient is within 10 * grad_tol.
    bool converged = false;
    /// Objective value after each accepted step, starting with the initial point.
    std::vector<double> trace;
};

/// Minimizes `f` from `x0`. Accepted steps satisfy the Armijo condition,
/// except once the predicted decrease drops below the objective's rounding
/// level: then a step is taken if it shrinks the gradient and raises the
/// objective by at most kRoundingSlack relative. `trace` is therefore
/// non-increasing up to that slack. Objective evaluations that throw
/// NumericalError or return non-finite values are treated as +inf and cause
/// the step to be halved.
MinimizeResult minimize_quasi_newton(const ObjectiveFn& f, const GradientFn& grad,
                                     Eigen::VectorXd x0, const MinimizeOptions& opts = {});

/// Central differences with step rel_step * max(1, |x_j|).
Eigen::VectorXd central_difference_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x,
                                            double rel_step = 1e-6);

/// Symmetrized central-difference Jacobian of a gradient.
Eigen::MatrixXd central_difference_hessian(const GradientFn& grad, const Eigen::VectorXd& x,
                                           double rel_step = 1e-4);

} // namespace epdic
