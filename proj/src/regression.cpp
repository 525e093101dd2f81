#include "epdic/regression.hpp"

#include "epdic/error.hpp"
#include "epdic/optimize.hpp"

#include <cmath>
#include <string>

namespace epdic {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Evaluation {
    double value = 0.0;
    Eigen::MatrixXd scores;  // n x (p+1), empty unless requested
};

// Per-sample V_i and, optionally, its gradient rows. For the MLE kind V_i is
// the negative log-density; otherwise the divergence contribution.
Evaluation evaluate(const RegressionProblem& problem, const ParamVector& params,
                    const TuningTriple& t, EstimatorKind kind, bool want_scores)
{
    const Eigen::Index n = problem.n();
    const Eigen::Index p = problem.p();
    if (params.coef.size() != p)
        throw ShapeMismatch("coefficient vector length does not match the design");
    if (!std::isfinite(params.log_sigma) || !params.coef.allFinite())
        throw DomainError("parameters must be finite");

    const double sigma = params.sigma();
    const double inv_var = 1.0 / (sigma * sigma);
    const Eigen::VectorXd resid = problem.response() - problem.design() * params.coef;

    const bool mle = kind == EstimatorKind::MLE;
    GaussianModelTerm model;
    if (!mle)
        model = gaussian_model_term(1, 2.0 * params.log_sigma, t);
    const double dmodel_dls = 2.0 * model.d_log_det;

    Evaluation ev;
    if (want_scores)
        ev.scores.resize(n, p + 1);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = resid[i];
        const double log_f = -0.5 * kLog2Pi - params.log_sigma - 0.5 * r * r * inv_var;
        double w = 1.0;
        if (mle) {
            total += -log_f;
        } else {
            total += model.value - generating_fn_d1_from_log(log_f, t);
            if (want_scores)
                w = weight_fn_from_log(log_f, t);
        }
        if (want_scores) {
            // gradient of V_i = grad(model) - w(f_i) u_i, u the likelihood score
            ev.scores.row(i).head(p) = (-w * r * inv_var) * problem.design().row(i);
            ev.scores(i, p) = (mle ? 0.0 : dmodel_dls) - w * (r * r * inv_var - 1.0);
        }
    }
    ev.value = total / double(n);
    return ev;
}

// Psi-hat coefficient multipliers for the coef block (times X'X / (n sigma^2))
// and the log-sigma entry.
struct PsiScale {
    double coef = 0.0;
    double log_sigma = 0.0;
};

PsiScale at_model_curvature(double log_det, const TuningTriple& t, EstimatorKind kind)
{
    if (kind == EstimatorKind::MLE)
        return {1.0, 2.0};

    // Q_k = I_k * diag(1/k, 3/k^2 - 2/k + 1): int f^k u u' for the Gaussian
    // score in (coef, log sigma), with the coef block scaled by x x'/sigma^2.
    auto moment = [](double k) { return 3.0 / (k * k) - 2.0 / k + 1.0; };

    PsiScale s;
    if (t.beta > 0.0) {
        // beta sum_j alpha^j / j! Q_{j+2}
        double coef_sum = 0.0;
        double ls_sum = 0.0;
        double alpha_pow_over_fact = 1.0;
        bool done = false;
        for (int j = 0; j < 200; ++j) {
            if (j > 0)
                alpha_pow_over_fact *= t.alpha / j;
            const double k = j + 2.0;
            const double ik = gaussian_power_integral(k, 1, log_det);
            const double tc = alpha_pow_over_fact * ik / k;
            const double tl = alpha_pow_over_fact * ik * moment(k);
            coef_sum += tc;
            ls_sum += tl;
            if (std::abs(tc) <= 1e-14 * std::abs(coef_sum) && std::abs(tl) <= 1e-14 * std::abs(ls_sum)) {
                done = true;
                break;
            }
        }
        if (!done)
            throw NonConvergence("curvature series did not converge");
        s.coef += t.beta * coef_sum;
        s.log_sigma += t.beta * ls_sum;
    }
    if (t.beta < 1.0) {
        const double k = 1.0 + t.gamma;
        const double ik = gaussian_power_integral(k, 1, log_det);
        s.coef += (1.0 - t.beta) * ik;
        s.log_sigma += (1.0 - t.beta) * k * ik * moment(k);
    }
    return s;
}

} // namespace

std::string_view to_string(EstimatorKind kind)
{
    switch (kind) {
    case EstimatorKind::MLE: return "MLE";
    case EstimatorKind::DPDE: return "DPDE";
    case EstimatorKind::EPDE: return "EPDE";
    }
    return "?";
}

EstimatorKind estimator_kind_from_string(std::string_view name)
{
    if (name == "MLE" || name == "mle")
        return EstimatorKind::MLE;
    if (name == "DPDE" || name == "dpde" || name == "dpd" || name == "DPD")
        return EstimatorKind::DPDE;
    if (name == "EPDE" || name == "epde" || name == "epd" || name == "EPD")
        return EstimatorKind::EPDE;
    throw UsageError("unknown estimator kind '" + std::string(name) + "'");
}

TuningTriple effective_tuning(EstimatorKind kind, const TuningTriple& t)
{
    switch (kind) {
    case EstimatorKind::MLE: return {0.0, 0.0, 0.0};
    case EstimatorKind::DPDE: {
        TuningTriple d{0.0, 0.0, t.gamma};
        d.validate();
        return d;
    }
    case EstimatorKind::EPDE: t.validate(); return t;
    }
    return t;
}

RegressionProblem::RegressionProblem(Eigen::MatrixXd design, Eigen::VectorXd response)
    : design_(std::move(design)), response_(std::move(response))
{
    const Eigen::Index n = design_.rows();
    const Eigen::Index p = design_.cols();
    if (p < 1 || n <= p)
        throw DomainError("regression problem needs n > p >= 1 (n=" + std::to_string(n)
                          + ", p=" + std::to_string(p) + ")");
    if (response_.size() != n)
        throw ShapeMismatch("response length does not match the design rows");
    if (!design_.allFinite() || !response_.allFinite())
        throw DomainError("design and response must be finite");

    for (Eigen::Index j = 0; j < p; ++j) {
        const auto col = design_.col(j);
        if (col.maxCoeff() == col.minCoeff()) {
            if (intercept_)
                throw DomainError("more than one constant design column");
            intercept_ = j;
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design_);
    if (qr.rank() < p)
        throw SingularDesign("design matrix is rank deficient");
}

RegressionProblem RegressionProblem::select_columns(const std::vector<Eigen::Index>& cols) const
{
    Eigen::MatrixXd sub(n(), Eigen::Index(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] < 0 || cols[j] >= p())
            throw DomainError("column index out of range");
        sub.col(Eigen::Index(j)) = design_.col(cols[j]);
    }
    return RegressionProblem(std::move(sub), response_);
}

ParamVector ols_start(const RegressionProblem& problem)
{
    ParamVector start;
    start.coef = problem.design().colPivHouseholderQr().solve(problem.response());
    const Eigen::VectorXd resid = problem.response() - problem.design() * start.coef;
    const double dof = double(problem.n() - problem.p());
    const double var = std::max(resid.squaredNorm() / dof, 1e-12);
    start.log_sigma = 0.5 * std::log(var);
    return start;
}

double empirical_objective(const RegressionProblem& problem, const ParamVector& params,
                           const TuningTriple& t, EstimatorKind kind)
{
    return evaluate(problem, params, effective_tuning(kind, t), kind, false).value;
}

Eigen::MatrixXd per_sample_gradients(const RegressionProblem& problem, const ParamVector& params,
                                     const TuningTriple& t, EstimatorKind kind)
{
    Eigen::MatrixXd scores = evaluate(problem, params, effective_tuning(kind, t), kind, true).scores;
    if (!scores.allFinite())
        throw NumericalError("non-finite gradient");
    return scores;
}

Eigen::VectorXd objective_gradient(const RegressionProblem& problem, const ParamVector& params,
                                   const TuningTriple& t, EstimatorKind kind)
{
    return per_sample_gradients(problem, params, t, kind).colwise().mean().transpose();
}

FitResult fit(const RegressionProblem& problem, const TuningTriple& t, EstimatorKind kind,
              const std::optional<ParamVector>& init, const FitOptions& opts)
{
    const TuningTriple teff = effective_tuning(kind, t);
    const Eigen::Index p = problem.p();
    ParamVector start = init ? *init : ols_start(problem);
    if (start.coef.size() != p)
        throw ShapeMismatch("initial coefficient vector length does not match the design");
    const bool fixed = opts.fixed_sigma.has_value();
    if (fixed) {
        if (!(*opts.fixed_sigma > 0.0))
            throw DomainError("fixed sigma must be positive");
        start.log_sigma = std::log(*opts.fixed_sigma);
    }
    const Eigen::Index q = p + (fixed ? 0 : 1);

    auto unpack = [&](const Eigen::VectorXd& x) {
        ParamVector pv;
        pv.coef = x.head(p);
        pv.log_sigma = fixed ? start.log_sigma : x[p];
        return pv;
    };
    const ObjectiveFn objective = [&](const Eigen::VectorXd& x) {
        return evaluate(problem, unpack(x), teff, kind, false).value;
    };
    const GradientFn gradient = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const Eigen::MatrixXd s = evaluate(problem, unpack(x), teff, kind, true).scores;
        Eigen::VectorXd g = s.colwise().mean().transpose();
        if (!g.allFinite())
            throw NumericalError("non-finite gradient");
        return g.head(q);
    };

    Eigen::VectorXd x0(q);
    x0.head(p) = start.coef;
    if (!fixed)
        x0[p] = start.log_sigma;

    MinimizeOptions mopts;
    mopts.max_iter = opts.max_iter;
    mopts.grad_tol = opts.grad_tol;
    mopts.rel_obj_tol = opts.rel_obj_tol;
    MinimizeResult mres;
    if (kind == EstimatorKind::MLE) {
        // Closed form: least squares coef and sigma^2 = RSS / n. Iterating
        // from here gains nothing and can stall on the objective's rounding
        // floor when the design has high-leverage rows.
        const ParamVector ols = ols_start(problem);
        x0.head(p) = ols.coef;
        if (!fixed) {
            const double rss = (problem.response() - problem.design() * ols.coef).squaredNorm();
            x0[p] = 0.5 * std::log(std::max(rss / double(problem.n()), 1e-300));
        }
        mres.x = x0;
        mres.value = objective(x0);
        mres.gradient = gradient(x0);
        mres.trace.push_back(mres.value);
        mres.converged = mres.gradient.cwiseAbs().maxCoeff() <= 10.0 * opts.grad_tol;
    }
    if (!mres.converged)
        mres = minimize_quasi_newton(objective, gradient, x0, mopts);

    FitResult res;
    res.params = unpack(mres.x);
    res.kind = kind;
    res.tuning = teff;
    res.iterations = mres.iterations;
    res.converged = mres.converged;
    res.sigma_fixed = fixed;
    res.n = problem.n();
    const Evaluation final_eval = evaluate(problem, res.params, teff, kind, true);
    res.objective_value = final_eval.value;
    res.per_sample_scores = final_eval.scores.leftCols(q);
    res.gradient_norm = res.per_sample_scores.colwise().mean().cwiseAbs().maxCoeff();
    res.objective_trace = mres.trace;
    return res;
}

SandwichMatrices sandwich(const RegressionProblem& problem, const FitResult& fit)
{
    if (!fit.converged)
        throw NotConverged("sandwich matrices need a converged fit");
    if (fit.n != problem.n() || fit.params.coef.size() != problem.p())
        throw ShapeMismatch("fit does not belong to this problem");

    const Eigen::Index p = problem.p();
    const Eigen::Index q = fit.free_dim();
    const double n = double(problem.n());
    const double sigma = fit.params.sigma();

    const PsiScale scale = at_model_curvature(2.0 * fit.params.log_sigma, fit.tuning, fit.kind);
    SandwichMatrices sw;
    sw.psi_hat = Eigen::MatrixXd::Zero(q, q);
    const Eigen::MatrixXd xtx = problem.design().transpose() * problem.design();
    sw.psi_hat.topLeftCorner(p, p) = (scale.coef / (n * sigma * sigma)) * xtx;
    if (q > p)
        sw.psi_hat(p, p) = scale.log_sigma;
    sw.psi_hat = 0.5 * (sw.psi_hat + sw.psi_hat.transpose()).eval();

    const Eigen::MatrixXd& s = fit.per_sample_scores;
    sw.omega_hat = (s.transpose() * s) / n;
    sw.omega_hat = 0.5 * (sw.omega_hat + sw.omega_hat.transpose()).eval();
    sw.xi_hat = s.colwise().mean().transpose();

    Eigen::LLT<Eigen::MatrixXd> llt(sw.psi_hat);
    if (llt.info() != Eigen::Success || !sw.psi_hat.allFinite())
        throw NonPositiveDefinite("Psi-hat is not positive definite");
    return sw;
}

} // namespace epdic
