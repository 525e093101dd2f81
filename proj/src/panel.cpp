#include "epdic/panel.hpp"

#include "epdic/error.hpp"
#include "epdic/optimize.hpp"
#include "epdic/parallel.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace epdic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BlockDensity {
    double log_f = 0.0;
    double log_det = 0.0;
};

BlockDensity block_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                           const PanelParams& params)
{
    if (params.coef.size() != x.cols())
        throw ShapeMismatch("panel coefficient length does not match the design");
    if (!std::isfinite(params.log_sigma_alpha) || !std::isfinite(params.log_sigma_u) || !params.coef.allFinite())
        throw DomainError("panel parameters must be finite");
    const Eigen::LLT<Eigen::MatrixXd> llt(marginal_covariance(z, params));
    if (llt.info() != Eigen::Success)
        throw NonPositiveDefinite("marginal covariance is not positive definite");
    const Eigen::MatrixXd& l = llt.matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index k = 0; k < l.rows(); ++k) {
        if (!(l(k, k) > 0.0))
            throw NonPositiveDefinite("marginal covariance is not positive definite");
        log_det += 2.0 * std::log(l(k, k));
    }
    const Eigen::VectorXd w = llt.matrixL().solve(y - x * params.coef);
    const double m = double(y.size());
    return {-0.5 * (m * std::log(2.0 * std::numbers::pi) + log_det + w.squaredNorm()), log_det};
}

double pairwise_sum(const double* v, std::size_t n)
{
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

// V_i for every individual, in order.
Eigen::VectorXd contributions(const PanelData& data, const PanelParams& params, const TuningTriple& t,
                              EstimatorKind kind, unsigned threads)
{
    const TuningTriple teff = effective_tuning(kind, t);
    teff.validate();
    const auto& blocks = data.blocks();
    std::vector<BlockDensity> dens(blocks.size());
    parallel_for(blocks.size(), threads,
                 [&](std::size_t i) { dens[i] = block_density(blocks[i].y, blocks[i].x, blocks[i].z, params); });

    Eigen::VectorXd v(data.n());
    if (kind == EstimatorKind::MLE) {
        for (std::size_t i = 0; i < dens.size(); ++i)
            v[Eigen::Index(i)] = -dens[i].log_f;
        return v;
    }
    // the model term depends on the block only through |Omega_i|
    std::map<double, double> model;
    const int m = int(data.m());
    for (std::size_t i = 0; i < dens.size(); ++i) {
        auto it = model.find(dens[i].log_det);
        if (it == model.end())
            it = model.emplace(dens[i].log_det, gaussian_model_term(m, dens[i].log_det, teff).value).first;
        v[Eigen::Index(i)] = it->second - generating_fn_d1_from_log(dens[i].log_f, teff);
    }
    return v;
}

} // namespace

PanelData::PanelData(std::vector<PanelBlock> blocks) : blocks_(std::move(blocks))
{
    if (blocks_.empty())
        throw DataError("panel has no individuals");
    const Eigen::Index m = blocks_.front().y.size();
    const Eigen::Index p = blocks_.front().x.cols();
    const Eigen::Index r = blocks_.front().z.cols();
    if (m < 1 || p < 1 || r < 1)
        throw DataError("panel blocks need m, p, r >= 1");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        if (b.y.size() != m)
            throw DataError("unbalanced panel: individual " + std::to_string(i) + " has " + std::to_string(b.y.size())
                            + " observations, expected " + std::to_string(m));
        if (b.x.rows() != m || b.x.cols() != p || b.z.rows() != m || b.z.cols() != r)
            throw DataError("panel block " + std::to_string(i) + " has inconsistent shapes");
        if (!b.x.allFinite() || !b.z.allFinite() || !b.y.allFinite())
            throw DataError("panel block " + std::to_string(i) + " has non-finite entries");
    }
    const Eigen::MatrixXd x = stacked_design();
    if (x.rows() <= p)
        throw SingularDesign("panel has no more observations than coefficients");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < p)
        throw SingularDesign("stacked panel design is rank deficient");
}

PanelData PanelData::random_intercept(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, int m)
{
    if (m < 1 || design.rows() != response.size() || design.rows() % m != 0)
        throw DataError("rows must split into whole individuals of m observations");
    std::vector<PanelBlock> blocks;
    for (Eigen::Index s = 0; s < design.rows(); s += m)
        blocks.push_back({design.middleRows(s, m), Eigen::MatrixXd::Ones(m, 1), response.segment(s, m)});
    return PanelData(std::move(blocks));
}

Eigen::MatrixXd PanelData::stacked_design() const
{
    Eigen::MatrixXd x(n() * m(), p());
    for (Eigen::Index i = 0; i < n(); ++i)
        x.middleRows(i * m(), m()) = blocks_[std::size_t(i)].x;
    return x;
}

Eigen::VectorXd PanelData::stacked_response() const
{
    Eigen::VectorXd y(n() * m());
    for (Eigen::Index i = 0; i < n(); ++i)
        y.segment(i * m(), m()) = blocks_[std::size_t(i)].y;
    return y;
}

RegressionProblem PanelData::pooled() const { return RegressionProblem(stacked_design(), stacked_response()); }

PanelData PanelData::select_columns(const std::vector<Eigen::Index>& cols) const
{
    std::vector<PanelBlock> out;
    for (const auto& b : blocks_) {
        PanelBlock nb{Eigen::MatrixXd(m(), Eigen::Index(cols.size())), b.z, b.y};
        for (std::size_t j = 0; j < cols.size(); ++j) {
            if (cols[j] < 0 || cols[j] >= p())
                throw DomainError("column index out of range");
            nb.x.col(Eigen::Index(j)) = b.x.col(cols[j]);
        }
        out.push_back(std::move(nb));
    }
    return PanelData(std::move(out));
}

Eigen::VectorXd PanelParams::pack() const
{
    Eigen::VectorXd v(coef.size() + 2);
    v << coef, log_sigma_alpha, log_sigma_u;
    return v;
}

PanelParams PanelParams::unpack(const Eigen::VectorXd& v)
{
    const Eigen::Index p = v.size() - 2;
    return {v.head(p), v[p], v[p + 1]};
}

Eigen::MatrixXd marginal_covariance(const Eigen::MatrixXd& z, const PanelParams& params)
{
    const double sa2 = std::exp(2.0 * params.log_sigma_alpha);
    const double su2 = std::exp(2.0 * params.log_sigma_u);
    Eigen::MatrixXd omega = sa2 * z * z.transpose();
    omega.diagonal().array() += su2;
    return omega;
}

double marginal_log_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                            const PanelParams& params)
{
    if (y.size() != x.rows() || z.rows() != y.size())
        throw ShapeMismatch("panel block shapes disagree");
    return block_density(y, x, z, params).log_f;
}

double marginal_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                        const PanelParams& params)
{
    return std::exp(marginal_log_density(y, x, z, params));
}

double panel_contribution(const PanelBlock& block, const PanelParams& params, const TuningTriple& t,
                          EstimatorKind kind)
{
    const TuningTriple teff = effective_tuning(kind, t);
    teff.validate();
    const BlockDensity d = block_density(block.y, block.x, block.z, params);
    if (kind == EstimatorKind::MLE)
        return -d.log_f;
    return gaussian_model_term(int(block.y.size()), d.log_det, teff).value - generating_fn_d1_from_log(d.log_f, teff);
}

double panel_objective(const PanelData& data, const PanelParams& params, const TuningTriple& t, EstimatorKind kind,
                       unsigned threads)
{
    const Eigen::VectorXd v = contributions(data, params, t, kind, threads);
    return pairwise_sum(v.data(), std::size_t(v.size())) / double(v.size());
}

PanelParams panel_start(const PanelData& data)
{
    const ParamVector ols = ols_start(data.pooled());
    const Eigen::Index n = data.n();
    const Eigen::Index m = data.m();
    Eigen::VectorXd means(n);
    double within = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = data.blocks()[std::size_t(i)];
        const Eigen::VectorXd e = b.y - b.x * ols.coef;
        means[i] = e.mean();
        within += (e.array() - means[i]).square().sum();
    }
    const double total = std::exp(2.0 * ols.log_sigma);
    within = m > 1 ? within / double(n * (m - 1)) : total;
    within = std::max(within, 1e-12);
    const double between = (means.array() - means.mean()).square().sum() / double(n);
    const double sa2 = std::max(between - within / double(m), 1e-4 * within);
    return {ols.coef, 0.5 * std::log(sa2), 0.5 * std::log(within)};
}

Eigen::VectorXd gls_coefficients(const PanelData& data, double sigma_alpha, double sigma_u)
{
    PanelParams pv{Eigen::VectorXd::Zero(data.p()), std::log(sigma_alpha), std::log(sigma_u)};
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(data.p(), data.p());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(data.p());
    for (const auto& blk : data.blocks()) {
        const Eigen::LLT<Eigen::MatrixXd> llt(marginal_covariance(blk.z, pv));
        if (llt.info() != Eigen::Success)
            throw NonPositiveDefinite("marginal covariance is not positive definite");
        a += blk.x.transpose() * llt.solve(blk.x);
        b += blk.x.transpose() * llt.solve(blk.y);
    }
    return a.ldlt().solve(b);
}

PanelFitResult fit_panel(const PanelData& data, const TuningTriple& t, EstimatorKind kind,
                         const std::optional<PanelParams>& init, const FitOptions& opts, unsigned threads)
{
    if (opts.fixed_sigma)
        throw DomainError("panel fits do not support a fixed scale");
    const TuningTriple teff = effective_tuning(kind, t);
    teff.validate();
    const PanelParams start = init ? *init : panel_start(data);
    if (start.coef.size() != data.p())
        throw ShapeMismatch("panel start has the wrong length");

    const ObjectiveFn f = [&](const Eigen::VectorXd& v) {
        return panel_objective(data, PanelParams::unpack(v), teff, kind, threads);
    };
    const GradientFn g = [&](const Eigen::VectorXd& v) { return central_difference_gradient(f, v, 1e-6); };
    MinimizeOptions mo;
    mo.max_iter = opts.max_iter;
    mo.grad_tol = opts.grad_tol;
    mo.rel_obj_tol = opts.rel_obj_tol;
    MinimizeResult r = minimize_quasi_newton(f, g, start.pack(), mo);
    // near sigma_alpha = 0 the log scale is almost flat and the curvature
    // estimate degrades; a fresh start from the last iterate usually finishes
    for (int restart = 0; restart < 3 && !r.converged && r.iterations < opts.max_iter; ++restart) {
        const int used = r.iterations;
        std::vector<double> trace = std::move(r.trace);
        r = minimize_quasi_newton(f, g, r.x, mo);
        trace.insert(trace.end(), r.trace.begin() + 1, r.trace.end());
        r.trace = std::move(trace);
        r.iterations += used;
    }

    PanelFitResult out;
    out.params = PanelParams::unpack(r.x);
    out.kind = kind;
    out.tuning = teff;
    out.objective_value = r.value;
    out.iterations = r.iterations;
    out.converged = r.converged;
    out.gradient_norm = r.gradient.cwiseAbs().maxCoeff();
    out.n = data.n();
    out.objective_trace = r.trace;
    return out;
}

PanelSandwich panel_sandwich(const PanelData& data, const PanelFitResult& fit)
{
    if (!fit.converged)
        throw NotConverged("sandwich matrices need a converged panel fit");
    const Eigen::VectorXd theta = fit.params.pack();
    const Eigen::Index q = theta.size();
    const double n = double(data.n());
    auto values = [&](const Eigen::VectorXd& v) {
        return contributions(data, PanelParams::unpack(v), fit.tuning, fit.kind, 1);
    };
    auto mean = [&](const Eigen::VectorXd& v) {
        const Eigen::VectorXd c = values(v);
        return pairwise_sum(c.data(), std::size_t(c.size())) / n;
    };

    PanelSandwich sw;
    // per-individual scores, central differences
    Eigen::MatrixXd scores(data.n(), q);
    for (Eigen::Index j = 0; j < q; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
        Eigen::VectorXd up = theta;
        Eigen::VectorXd dn = theta;
        up[j] += h;
        dn[j] -= h;
        scores.col(j) = (values(up) - values(dn)) / (2.0 * h);
    }
    sw.omega_hat = scores.transpose() * scores / n;

    // Hessian from second differences of H_n
    Eigen::VectorXd h(q);
    for (Eigen::Index j = 0; j < q; ++j)
        h[j] = 1e-4 * std::max(1.0, std::abs(theta[j]));
    const double f0 = mean(theta);
    sw.psi_hat.resize(q, q);
    for (Eigen::Index j = 0; j < q; ++j) {
        Eigen::VectorXd up = theta;
        Eigen::VectorXd dn = theta;
        up[j] += h[j];
        dn[j] -= h[j];
        sw.psi_hat(j, j) = (mean(up) - 2.0 * f0 + mean(dn)) / (h[j] * h[j]);
        for (Eigen::Index k = 0; k < j; ++k) {
            Eigen::VectorXd pp = theta, pm = theta, mp = theta, mm = theta;
            pp[j] += h[j], pp[k] += h[k];
            pm[j] += h[j], pm[k] -= h[k];
            mp[j] -= h[j], mp[k] += h[k];
            mm[j] -= h[j], mm[k] -= h[k];
            sw.psi_hat(j, k) = sw.psi_hat(k, j) = (mean(pp) - mean(pm) - mean(mp) + mean(mm)) / (4.0 * h[j] * h[k]);
        }
    }
    return sw;
}

CriterionReport panel_criterion(const PanelData& data, const PanelFitResult& fit, CriterionKind kind)
{
    require_compatible(kind, fit.kind, fit.tuning);
    const PanelSandwich sw = panel_sandwich(data, fit);
    CriterionReport rep;
    rep.kind = kind;
    rep.fit_term = double(data.n()) * panel_objective(data, fit.params, fit.tuning, fit.kind);
    rep.penalty = sandwich_trace(sw.omega_hat, sw.psi_hat);
    rep.total = rep.fit_term + rep.penalty;
    return rep;
}

std::vector<RankedList> enumerate_and_rank_panel(const PanelData& data,
                                                 const std::vector<std::string>& covariate_labels,
                                                 std::uint64_t mask, const std::vector<CriterionKind>& kinds,
                                                 const EnumerationTunings& tunings, const FitOptions& opts,
                                                 unsigned threads)
{
    const RegressionProblem pooled = data.pooled();
    const std::vector<Eigen::Index> cov = covariate_columns(pooled);
    if (covariate_labels.size() != cov.size())
        throw ShapeMismatch("one label per non-intercept covariate is required");
    const auto intercept = pooled.intercept_column();

    const SubsetScorer scorer = [&](std::uint64_t subset) {
        std::vector<Eigen::Index> cols;
        if (intercept)
            cols.push_back(*intercept);
        for (std::size_t j = 0; j < cov.size(); ++j)
            if (subset >> j & 1u)
                cols.push_back(cov[j]);
        std::vector<double> out(kinds.size(), kInf);
        std::map<EstimatorKind, std::optional<PanelFitResult>> fits;
        try {
            const PanelData sub = data.select_columns(cols);
            for (std::size_t c = 0; c < kinds.size(); ++c) {
                const EstimatorKind ek = estimator_for(kinds[c]);
                try {
                    if (!fits.count(ek)) {
                        const TuningTriple& t = ek == EstimatorKind::EPDE ? tunings.epd : tunings.dpd;
                        PanelFitResult fr = fit_panel(sub, t, ek, std::nullopt, opts);
                        fits[ek] = fr.converged ? std::optional<PanelFitResult>(std::move(fr)) : std::nullopt;
                    }
                    if (fits[ek])
                        out[c] = panel_criterion(sub, *fits[ek], kinds[c]).total;
                } catch (const NumericalError&) {
                    fits[ek] = std::nullopt;
                }
            }
        } catch (const NumericalError&) {
        }
        return out;
    };
    return rank_subsets(covariate_labels, mask, kinds, scorer, threads);
}

} // namespace epdic
