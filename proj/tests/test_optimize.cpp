#include "doctest.h"

#include "epdic/error.hpp"
#include "epdic/optimize.hpp"

#include <cmath>

using namespace epdic;

TEST_CASE("rosenbrock")
{
    const ObjectiveFn f = [](const Eigen::VectorXd& x) {
        return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
    };
    const GradientFn g = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd d(2);
        d[0] = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
        d[1] = 200.0 * (x[1] - x[0] * x[0]);
        return d;
    };
    const MinimizeResult r = minimize_quasi_newton(f, g, Eigen::Vector2d(-1.2, 1.0));
    CHECK(r.converged);
    CHECK(std::abs(r.x[0] - 1.0) < 1e-6);
    CHECK(std::abs(r.x[1] - 1.0) < 1e-6);
    for (std::size_t k = 1; k < r.trace.size(); ++k)
        CHECK(r.trace[k] <= r.trace[k - 1] + kRoundingSlack * std::max(1.0, std::abs(r.trace[k - 1])));
    CHECK(r.trace.size() == std::size_t(r.iterations) + 1);
}

TEST_CASE("failed evaluations shorten the step")
{
    // log barrier: anything at or below zero throws
    const ObjectiveFn f = [](const Eigen::VectorXd& x) {
        if (x[0] <= 0.0)
            throw SingularityError("outside the domain");
        return x[0] - std::log(x[0]);
    };
    const GradientFn g = [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, 1.0 - 1.0 / x[0]); };
    const MinimizeResult r = minimize_quasi_newton(f, g, Eigen::VectorXd::Constant(1, 20.0));
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("badly scaled quadratic reaches a small gradient")
{
    Eigen::VectorXd scale(3);
    scale << 1e4, 1.0, 1e-2;
    const ObjectiveFn f = [&](const Eigen::VectorXd& x) {
        return 1.0 + 0.5 * (scale.array() * (x.array() - 0.3).square()).sum();
    };
    const GradientFn g = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return scale.array() * (x.array() - 0.3);
    };
    const MinimizeResult r = minimize_quasi_newton(f, g, Eigen::Vector3d(1.0, -1.0, 2.0));
    CHECK(r.converged);
    CHECK(r.gradient.cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("iteration cap reports non-convergence")
{
    const ObjectiveFn f = [](const Eigen::VectorXd& x) { return std::pow(x[0], 4) + x[1] * x[1]; };
    const GradientFn g = [](const Eigen::VectorXd& x) {
        return Eigen::Vector2d(4 * std::pow(x[0], 3), 2 * x[1]).eval();
    };
    MinimizeOptions opts;
    opts.max_iter = 2;
    const MinimizeResult r = minimize_quasi_newton(f, g, Eigen::Vector2d(3.0, 3.0), opts);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 2);
    CHECK_THROWS_AS(minimize_quasi_newton([](const Eigen::VectorXd&) { return NAN; }, g, Eigen::Vector2d(1, 1)),
                    NumericalError);
}

TEST_CASE("finite-difference helpers")
{
    const ObjectiveFn f = [](const Eigen::VectorXd& x) { return std::sin(x[0]) * std::exp(x[1]); };
    const Eigen::Vector2d x(0.4, -0.3);
    const Eigen::VectorXd g = central_difference_gradient(f, x);
    CHECK(g[0] == doctest::Approx(std::cos(0.4) * std::exp(-0.3)).epsilon(1e-8));
    CHECK(g[1] == doctest::Approx(std::sin(0.4) * std::exp(-0.3)).epsilon(1e-8));
    const GradientFn grad = [](const Eigen::VectorXd& y) {
        return Eigen::Vector2d(std::cos(y[0]) * std::exp(y[1]), std::sin(y[0]) * std::exp(y[1])).eval();
    };
    const Eigen::MatrixXd h = central_difference_hessian(grad, x);
    CHECK(h(0, 1) == h(1, 0));
    CHECK(h(0, 0) == doctest::Approx(-std::sin(0.4) * std::exp(-0.3)).epsilon(1e-6));
    CHECK(h(0, 1) == doctest::Approx(std::cos(0.4) * std::exp(-0.3)).epsilon(1e-6));
}
