#include "epdic/selection.hpp"

#include "epdic/error.hpp"
#include "epdic/optimize.hpp"
#include "epdic/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

namespace epdic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t covariate_limit_mask(std::size_t k)
{
    return k >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << k) - 1;
}

double soft_threshold(double v, double thr)
{
    if (v > thr)
        return v - thr;
    if (v < -thr)
        return v + thr;
    return 0.0;
}

// Null model: intercept at the mean response (when present), slopes zero.
ParamVector null_params(const RegressionProblem& problem, std::optional<double> fixed_sigma)
{
    ParamVector p;
    p.coef = Eigen::VectorXd::Zero(problem.p());
    Eigen::VectorXd r = problem.response();
    if (const auto ic = problem.intercept_column()) {
        const double c = problem.design()(0, *ic);
        p.coef[*ic] = r.mean() / c;
        r.array() -= r.mean();
    }
    const double var = std::max(r.squaredNorm() / double(problem.n()), 1e-12);
    p.log_sigma = fixed_sigma ? std::log(*fixed_sigma) : 0.5 * std::log(var);
    return p;
}

double safe_objective(const RegressionProblem& problem, const ParamVector& pv, const TuningTriple& t,
                      EstimatorKind kind)
{
    try {
        const double v = empirical_objective(problem, pv, t, kind);
        return std::isfinite(v) ? v : kInf;
    } catch (const NumericalError&) {
        return kInf;
    }
}

void check_standardized(const RegressionProblem& problem)
{
    const double n = double(problem.n());
    for (Eigen::Index j : covariate_columns(problem)) {
        const auto col = problem.design().col(j);
        const double mean = col.sum() / n;
        const double msq = col.squaredNorm() / n;
        if (std::abs(mean) > 1e-8 || std::abs(msq - 1.0) > 1e-6)
            throw DomainError("lasso screening needs standardized covariates (mean 0, mean square 1)");
    }
}

} // namespace

std::string CandidateModel::name() const
{
    std::string s;
    for (const auto& l : labels) {
        if (!s.empty())
            s += '+';
        s += l;
    }
    return s;
}

std::vector<Eigen::Index> covariate_columns(const RegressionProblem& problem)
{
    std::vector<Eigen::Index> cols;
    const auto ic = problem.intercept_column();
    for (Eigen::Index j = 0; j < problem.p(); ++j)
        if (!ic || *ic != j)
            cols.push_back(j);
    return cols;
}

CandidateModel make_candidate(std::uint64_t mask, const std::vector<std::string>& covariate_labels)
{
    if (mask == 0)
        throw DomainError("candidate model needs at least one covariate");
    if ((mask & ~covariate_limit_mask(covariate_labels.size())) != 0)
        throw DomainError("candidate mask refers to a covariate without a label");
    CandidateModel m;
    m.mask = mask;
    for (std::size_t j = 0; j < covariate_labels.size(); ++j)
        if (mask >> j & 1u)
            m.labels.push_back(covariate_labels[j]);
    return m;
}

RegressionProblem candidate_problem(const RegressionProblem& problem, std::uint64_t mask)
{
    const std::vector<Eigen::Index> cov = covariate_columns(problem);
    if (mask == 0 || (mask & ~covariate_limit_mask(cov.size())) != 0)
        throw DomainError("candidate mask is empty or out of range");
    std::vector<Eigen::Index> cols;
    if (const auto ic = problem.intercept_column())
        cols.push_back(*ic);
    for (std::size_t j = 0; j < cov.size(); ++j)
        if (mask >> j & 1u)
            cols.push_back(cov[j]);
    return problem.select_columns(cols);
}

void standardize_columns(Eigen::MatrixXd& design)
{
    const double n = double(design.rows());
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
        auto col = design.col(j);
        if ((col.array() == col[0]).all())
            continue;
        col.array() -= col.mean();
        col /= std::sqrt(col.squaredNorm() / n);
    }
}

double lambda_max(const RegressionProblem& problem, std::optional<double> fixed_sigma)
{
    const ParamVector p0 = null_params(problem, fixed_sigma);
    const Eigen::VectorXd r = problem.response() - problem.design() * p0.coef;
    const double s2 = std::exp(2.0 * p0.log_sigma);
    double lm = 0.0;
    for (Eigen::Index j : covariate_columns(problem))
        lm = std::max(lm, std::abs(problem.design().col(j).dot(r)) / (double(problem.n()) * s2));
    return lm;
}

std::vector<double> default_lambda_grid(const RegressionProblem& problem, std::optional<double> fixed_sigma,
                                        int count, double ratio)
{
    if (count < 2 || !(ratio > 0.0 && ratio < 1.0))
        throw DomainError("lambda grid needs count >= 2 and ratio in (0, 1)");
    const double top = lambda_max(problem, fixed_sigma);
    std::vector<double> g(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k)
        g[std::size_t(k)] = top * std::pow(ratio, double(k) / double(count - 1));
    return g;
}

LassoFit lasso_fit(const RegressionProblem& problem, const TuningTriple& t, EstimatorKind kind, double lambda,
                   const LassoOptions& opts, const std::optional<ParamVector>& init)
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw DomainError("lambda must be finite and nonnegative");
    if (opts.fixed_sigma && !(*opts.fixed_sigma > 0.0))
        throw DomainError("fixed sigma must be positive");
    const Eigen::Index p = problem.p();
    std::vector<bool> penalized(std::size_t(p), true);
    if (const auto ic = problem.intercept_column())
        penalized[std::size_t(*ic)] = false;

    LassoFit out;
    out.lambda = lambda;
    ParamVector cur = init ? *init : null_params(problem, opts.fixed_sigma);
    if (cur.coef.size() != p)
        throw ShapeMismatch("lasso start has the wrong length");
    if (opts.fixed_sigma)
        cur.log_sigma = std::log(*opts.fixed_sigma);

    double f = safe_objective(problem, cur, t, kind);
    if (!std::isfinite(f))
        throw SingularityError("lasso objective is not finite at the start");
    auto gradient_at = [&](const ParamVector& pv) {
        Eigen::VectorXd g = objective_gradient(problem, pv, t, kind);
        if (opts.fixed_sigma)
            g[p] = 0.0;
        return g;
    };
    Eigen::VectorXd g = gradient_at(cur);
    double step = 1.0;
    for (int it = 0; it < opts.max_iter; ++it) {
        ParamVector trial;
        Eigen::VectorXd d(p + 1);
        Eigen::VectorXd gt;
        double ft = kInf;
        bool accepted = false;
        for (int h = 0; h < 80 && !accepted; ++h, step *= 0.5) {
            trial.coef.resize(p);
            for (Eigen::Index j = 0; j < p; ++j) {
                const double v = cur.coef[j] - step * g[j];
                trial.coef[j] = penalized[std::size_t(j)] ? soft_threshold(v, step * lambda) : v;
            }
            trial.log_sigma = cur.log_sigma - step * g[p];
            d.head(p) = trial.coef - cur.coef;
            d[p] = trial.log_sigma - cur.log_sigma;
            ft = safe_objective(problem, trial, t, kind);
            if (!std::isfinite(ft))
                continue;
            // Near the optimum the quadratic bound drops below the rounding
            // level of f; a local Lipschitz estimate from gradients is used then.
            const double bound = d.squaredNorm() / (2.0 * step);
            if (bound > 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f))) {
                accepted = ft - f - g.dot(d) <= bound;
                if (accepted)
                    gt = gradient_at(trial);
            } else {
                gt = gradient_at(trial);
                accepted = (gt - g).dot(d) <= 2.0 * bound;
            }
            if (accepted)
                break;
        }
        if (!accepted)
            break;
        cur = trial;
        f = ft;
        g = gt;
        out.iterations = it + 1;
        if (d.cwiseAbs().maxCoeff() / step <= opts.tol) {
            out.converged = true;
            break;
        }
        step = std::min(step * 1.25, 1e6);
    }
    out.params = cur;
    return out;
}

LassoResult lasso_screen(const RegressionProblem& problem, const TuningTriple& t, EstimatorKind kind,
                         const LassoOptions& opts)
{
    check_standardized(problem);
    const std::vector<Eigen::Index> cov = covariate_columns(problem);
    if (cov.empty())
        throw DomainError("lasso screening needs at least one non-intercept covariate");
    if (cov.size() > 64)
        throw CapExceeded("lasso screening supports at most 64 covariates");

    std::vector<double> grid = opts.lambdas.empty() ? default_lambda_grid(problem, opts.fixed_sigma) : opts.lambdas;
    for (double l : grid)
        if (!(l >= 0.0) || !std::isfinite(l))
            throw DomainError("lambda grid values must be finite and nonnegative");
    std::sort(grid.begin(), grid.end(), std::greater<>());

    LassoResult res;
    std::optional<ParamVector> warm;
    for (double l : grid) {
        const LassoFit lf = lasso_fit(problem, t, kind, l, opts, warm);
        warm = lf.params;
        LassoPathPoint pt;
        pt.lambda = l;
        for (std::size_t j = 0; j < cov.size(); ++j)
            if (std::abs(lf.params.coef[cov[j]]) > opts.active_threshold)
                pt.active |= std::uint64_t{1} << j;
        pt.active_count = std::popcount(pt.active);
        res.path.push_back(pt);
    }

    // one unpenalized refit per distinct active set
    std::vector<std::uint64_t> sets;
    for (const auto& pt : res.path)
        if (pt.active != 0 && std::find(sets.begin(), sets.end(), pt.active) == sets.end())
            sets.push_back(pt.active);
    if (sets.empty())
        throw EmptyActiveSet("every lambda on the grid removes all covariates; use smaller lambda values");

    const CriterionKind ck = criterion_for(kind);
    std::vector<double> crit(sets.size(), kInf);
    parallel_for(sets.size(), opts.threads, [&](std::size_t k) {
        try {
            const RegressionProblem sub = candidate_problem(problem, sets[k]);
            const FitResult fr = fit(sub, t, kind, std::nullopt, opts.refit);
            if (fr.converged)
                crit[k] = criterion(sub, fr, ck).total;
        } catch (const Error&) {
        }
    });
    for (auto& pt : res.path)
        if (pt.active != 0)
            pt.criterion = crit[std::size_t(std::find(sets.begin(), sets.end(), pt.active) - sets.begin())];

    bool found = false;
    for (const auto& pt : res.path) {
        if (std::isfinite(pt.criterion) && (!found || pt.criterion < res.criterion)) {
            res.mask = pt.active;
            res.lambda = pt.lambda;
            res.criterion = pt.criterion;
            found = true;
        }
    }
    if (!found)
        throw NonConvergence("no refit along the lasso path produced a usable criterion");
    return res;
}

std::vector<RankedList> rank_subsets(const std::vector<std::string>& covariate_labels, std::uint64_t mask,
                                     const std::vector<CriterionKind>& kinds, const SubsetScorer& scorer,
                                     unsigned threads)
{
    if (mask == 0 || (mask & ~covariate_limit_mask(covariate_labels.size())) != 0)
        throw DomainError("covariate mask is empty or out of range");
    if (std::popcount(mask) > kMaxSubsetCovariates)
        throw CapExceeded("subset enumeration is capped at " + std::to_string(kMaxSubsetCovariates)
                          + " covariates; screen first");
    if (kinds.empty())
        throw DomainError("no criterion requested");

    std::vector<std::uint64_t> subsets;
    for (std::uint64_t s = mask; s != 0; s = (s - 1) & mask)
        subsets.push_back(s);
    std::sort(subsets.begin(), subsets.end());

    std::vector<std::vector<double>> totals(subsets.size());
    parallel_for(subsets.size(), threads, [&](std::size_t k) {
        totals[k] = scorer(subsets[k]);
        if (totals[k].size() != kinds.size())
            throw ShapeMismatch("subset scorer returned the wrong number of totals");
    });

    std::vector<RankedList> lists;
    for (std::size_t c = 0; c < kinds.size(); ++c) {
        RankedList rl;
        rl.kind = kinds[c];
        for (std::size_t k = 0; k < subsets.size(); ++k)
            rl.entries.push_back({make_candidate(subsets[k], covariate_labels), totals[k][c]});
        std::stable_sort(rl.entries.begin(), rl.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
            return a.total < b.total || (a.total == b.total && a.model.mask < b.model.mask);
        });
        lists.push_back(std::move(rl));
    }
    return lists;
}

std::vector<RankedList> enumerate_and_rank(const RegressionProblem& problem,
                                           const std::vector<std::string>& covariate_labels, std::uint64_t mask,
                                           const std::vector<CriterionKind>& kinds, const EnumerationTunings& tunings,
                                           const FitOptions& opts, unsigned threads)
{
    if (covariate_labels.size() != covariate_columns(problem).size())
        throw ShapeMismatch("one label per non-intercept covariate is required");
    const SubsetScorer scorer = [&](std::uint64_t subset) {
        const RegressionProblem sub = candidate_problem(problem, subset);
        std::vector<double> out(kinds.size(), kInf);
        std::map<EstimatorKind, std::optional<FitResult>> fits;
        for (std::size_t c = 0; c < kinds.size(); ++c) {
            const EstimatorKind ek = estimator_for(kinds[c]);
            try {
                if (!fits.count(ek)) {
                    const TuningTriple& t = ek == EstimatorKind::EPDE ? tunings.epd : tunings.dpd;
                    FitResult fr = fit(sub, t, ek, std::nullopt, opts);
                    fits[ek] = fr.converged ? std::optional<FitResult>(std::move(fr)) : std::nullopt;
                }
                if (fits[ek])
                    out[c] = criterion(sub, *fits[ek], kinds[c]).total;
            } catch (const Error&) {
                fits[ek] = std::nullopt;
            }
        }
        return out;
    };
    return rank_subsets(covariate_labels, mask, kinds, scorer, threads);
}

std::vector<ConsolidatedEntry> consolidate(const std::vector<RankedList>& lists, std::size_t top_k)
{
    if (lists.size() < 2)
        throw DomainError("consolidation needs at least two ranked lists");
    std::map<std::uint64_t, ConsolidatedEntry> by_mask;
    for (const auto& rl : lists) {
        const std::size_t take = std::min(top_k, rl.entries.size());
        for (std::size_t k = 0; k < take; ++k) {
            auto& e = by_mask[rl.entries[k].model.mask];
            e.model = rl.entries[k].model;
            ++e.freq;
        }
    }
    for (auto& [mask, e] : by_mask) {
        e.sel_freq = double(e.freq) / double(lists.size());
        for (const auto& rl : lists) {
            double* slot = rl.kind == CriterionKind::EPDIC ? &e.epdic
                         : rl.kind == CriterionKind::DPDIC ? &e.dpdic
                                                           : &e.mlic;
            if (!std::isnan(*slot))
                continue;
            for (const auto& re : rl.entries)
                if (re.model.mask == mask) {
                    *slot = re.total;
                    break;
                }
        }
    }
    std::vector<ConsolidatedEntry> out;
    for (auto& [mask, e] : by_mask)
        out.push_back(std::move(e));
    std::stable_sort(out.begin(), out.end(), [](const ConsolidatedEntry& a, const ConsolidatedEntry& b) {
        if (a.freq != b.freq)
            return a.freq > b.freq;
        const double ea = std::isnan(a.epdic) ? kInf : a.epdic;
        const double eb = std::isnan(b.epdic) ? kInf : b.epdic;
        if (ea != eb)
            return ea < eb;
        return a.model.mask < b.model.mask;
    });
    return out;
}

} // namespace epdic
