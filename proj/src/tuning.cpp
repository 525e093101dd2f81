#include "epdic/tuning.hpp"

#include "epdic/error.hpp"
#include "epdic/parallel.hpp"

#include <cmath>
#include <optional>
#include <tuple>

namespace epdic {

namespace {

std::vector<double> lattice(int first, int last, double step)
{
    std::vector<double> v;
    for (int k = first; k <= last; ++k)
        v.push_back(k * step);
    return v;
}

bool tie_less(const TuningTriple& a, const TuningTriple& b)
{
    return std::tie(a.gamma, a.beta, a.alpha) < std::tie(b.gamma, b.beta, b.alpha);
}

} // namespace

double sm_contribution(double y, double mu, double sigma)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw DomainError("score matching needs sigma > 0");
    const double v = sigma * sigma;
    const double r = y - mu;
    return -2.0 / v + r * r / (v * v);
}

double gsm_objective(const RegressionProblem& problem, const ParamVector& params)
{
    if (params.coef.size() != problem.p())
        throw ShapeMismatch("coefficient vector length does not match the design");
    const Eigen::VectorXd mu = problem.design() * params.coef;
    const double sigma = params.sigma();
    double s = 0.0;
    for (Eigen::Index i = 0; i < problem.n(); ++i)
        s += sm_contribution(problem.response()[i], mu[i], sigma);
    return s / double(problem.n());
}

void TuningGrid::validate(TuningFamily family) const
{
    if (gammas.empty())
        throw DomainError("tuning grid has no gamma values");
    for (double g : gammas)
        if (!(g > 0.0) || !std::isfinite(g))
            throw DomainError("grid gammas must be positive");
    if (family == TuningFamily::DPD)
        return;
    if (alphas.empty() || betas.empty())
        throw DomainError("tuning grid has an empty axis");
    for (double a : alphas)
        if (!(a > 0.0) || !std::isfinite(a))
            throw DomainError("grid alphas must be positive");
    for (double b : betas)
        if (!(b >= 0.0 && b <= 1.0))
            throw DomainError("grid betas must lie in [0, 1]");
}

std::vector<TuningTriple> TuningGrid::points(TuningFamily family) const
{
    std::vector<TuningTriple> pts;
    if (family == TuningFamily::DPD) {
        for (double g : gammas)
            pts.push_back({0.0, 0.0, g});
        return pts;
    }
    for (double a : alphas)
        for (double b : betas)
            for (double g : gammas)
                pts.push_back({a, b, g});
    return pts;
}

TuningGrid TuningGrid::epd_default() { return {lattice(1, 10, 0.1), lattice(1, 9, 0.1), lattice(1, 10, 0.1)}; }

TuningGrid TuningGrid::dpd_default() { return {{}, {}, lattice(1, 20, 0.05)}; }

TuningSelection select_tuning(const RegressionProblem& problem, const TuningGrid& grid, TuningFamily family,
                              const FitOptions& opts, unsigned threads)
{
    grid.validate(family);
    const std::vector<TuningTriple> pts = grid.points(family);
    const EstimatorKind kind = family == TuningFamily::DPD ? EstimatorKind::DPDE : EstimatorKind::EPDE;

    std::vector<std::optional<double>> scores(pts.size());
    std::vector<std::string> reasons(pts.size());
    parallel_for(pts.size(), threads, [&](std::size_t k) {
        try {
            const FitResult f = fit(problem, pts[k], kind, std::nullopt, opts);
            if (!f.converged) {
                reasons[k] = "fit did not converge";
                return;
            }
            scores[k] = gsm_objective(problem, f.params);
        } catch (const Error& e) {
            reasons[k] = e.what();
        }
    });

    TuningSelection sel;
    bool have_best = false;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (!scores[k]) {
            sel.failures.push_back({pts[k], reasons[k]});
            continue;
        }
        const double s = *scores[k];
        sel.table.push_back({pts[k], s});
        if (!have_best || s < sel.best_score || (s == sel.best_score && tie_less(pts[k], sel.best))) {
            sel.best = pts[k];
            sel.best_score = s;
            have_best = true;
        }
    }
    if (!have_best)
        throw AllPointsFailed("no tuning grid point produced a converged fit");
    return sel;
}

} // namespace epdic
