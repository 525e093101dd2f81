#include "epdic/simulation.hpp"

#include "epdic/error.hpp"
#include "epdic/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace epdic {

std::string_view to_string(Scheme scheme)
{
    switch (scheme) {
    case Scheme::Pure: return "pure";
    case Scheme::ErrorContam: return "error";
    case Scheme::CovContam: return "covariate";
    }
    return "?";
}

Scheme scheme_from_string(std::string_view name)
{
    if (name == "pure" || name == "0")
        return Scheme::Pure;
    if (name == "error" || name == "1")
        return Scheme::ErrorContam;
    if (name == "covariate" || name == "2")
        return Scheme::CovContam;
    throw UsageError("unknown contamination scheme '" + std::string(name) + "' (pure|error|covariate or 0|1|2)");
}

void SimConfig::validate() const
{
    if (p < 1 || n <= p)
        throw DomainError("simulation needs n > p >= 1");
    if (beta0.size() != p)
        throw DomainError("beta0 length must equal p");
    if (!(rho > -1.0 && rho < 1.0))
        throw DomainError("rho must lie in (-1, 1)");
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw DomainError("sigma must be positive");
    if (!(delta >= 0.0 && delta < 0.5))
        throw DomainError("delta must lie in [0, 0.5)");
    if (reps < 1)
        throw DomainError("reps must be at least 1");
}

std::size_t contaminated_count(int n, double delta)
{
    if (!(delta >= 0.0 && delta < 1.0))
        throw DomainError("delta must lie in [0, 1)");
    return std::size_t(std::ceil(delta * n - 1e-9));
}

GeneratedSample generate_sample(const SimConfig& config, int rep)
{
    config.validate();
    if (rep < 0)
        throw DomainError("replication index must be nonnegative");
    const int n = config.n;
    const int p = config.p;

    std::seed_seq seq{std::uint32_t(config.base_seed & 0xffffffffu), std::uint32_t(config.base_seed >> 32),
                      std::uint32_t(rep)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> z(0.0, 1.0);

    Eigen::MatrixXd cov(p, p);
    for (int j = 0; j < p; ++j)
        for (int k = 0; k < p; ++k)
            cov(j, k) = std::pow(config.rho, std::abs(j - k));
    const Eigen::MatrixXd chol = cov.llt().matrixL();

    GeneratedSample s;
    s.design.resize(n, p);
    Eigen::VectorXd e(p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j)
            e[j] = z(rng);
        s.design.row(i) = (chol * e).transpose();
    }
    Eigen::VectorXd err(n);
    for (int i = 0; i < n; ++i)
        err[i] = config.sigma * z(rng);

    // the clean response is fixed before any covariate row is redrawn
    s.response = s.design * config.beta0 + err;

    const std::size_t m = config.scheme == Scheme::Pure ? 0 : contaminated_count(n, config.delta);
    if (m > 0) {
        std::vector<std::size_t> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::sample(all.begin(), all.end(), std::back_inserter(s.contaminated), m, rng);
        if (config.scheme == Scheme::ErrorContam) {
            std::normal_distribution<double> out(kErrorContamMean, kErrorContamSd);
            for (std::size_t i : s.contaminated) {
                err[Eigen::Index(i)] = out(rng);
                s.response[Eigen::Index(i)] = s.design.row(Eigen::Index(i)).dot(config.beta0) + err[Eigen::Index(i)];
            }
        } else {
            std::normal_distribution<double> out(kCovContamMean, kCovContamSd);
            std::uniform_int_distribution<int> coord(0, p - 1);
            for (std::size_t i : s.contaminated) {
                if (config.cov_mode == CovContamMode::AllCoordinates) {
                    for (int j = 0; j < p; ++j)
                        s.design(Eigen::Index(i), j) = out(rng);
                } else {
                    const int j = coord(rng);
                    s.design(Eigen::Index(i), j) = out(rng);
                }
            }
        }
    }
    return s;
}

RegressionProblem generate(const SimConfig& config, int rep)
{
    GeneratedSample s = generate_sample(config, rep);
    return RegressionProblem(std::move(s.design), std::move(s.response));
}

std::vector<double> preset_deltas(Scheme scheme)
{
    switch (scheme) {
    case Scheme::Pure: return {0.0};
    case Scheme::ErrorContam: return {0.052, 0.093, 0.134};
    case Scheme::CovContam: return {0.058, 0.099, 0.140};
    }
    return {};
}

std::optional<PresetTuning> preset_tuning(Scheme scheme, double delta)
{
    auto near = [delta](double d) { return std::abs(delta - d) < 1e-9; };
    auto dpd = [](double g) { return TuningTriple{0.0, 0.0, g}; };
    if (near(0.0) || scheme == Scheme::Pure)
        return near(0.0) ? std::optional<PresetTuning>({dpd(0.95), {0.1, 0.7, 0.3}}) : std::nullopt;
    if (scheme == Scheme::ErrorContam) {
        if (near(0.052))
            return PresetTuning{dpd(0.25), {0.1, 0.6, 0.7}};
        if (near(0.093))
            return PresetTuning{dpd(0.35), {0.1, 0.7, 0.3}};
        if (near(0.134))
            return PresetTuning{dpd(0.40), {0.4, 0.7, 0.6}};
    } else {
        if (near(0.058))
            return PresetTuning{dpd(0.15), {0.1, 0.7, 0.9}};
        if (near(0.099))
            return PresetTuning{dpd(0.25), {0.1, 0.6, 0.7}};
        if (near(0.140))
            return PresetTuning{dpd(0.20), {0.1, 0.7, 0.9}};
    }
    return std::nullopt;
}

namespace {

constexpr EstimatorKind kEstimators[] = {EstimatorKind::MLE, EstimatorKind::DPDE, EstimatorKind::EPDE};

struct RepOutcome {
    std::vector<ReplicationRecord> records;
    std::string failure;
};

RepOutcome run_replication(const SimConfig& config, int rep, const StudyTunings& tunings, const StudyOptions& opts)
{
    RepOutcome out;
    try {
        const RegressionProblem prob = generate(config, rep);
        TuningTriple dpd = tunings.dpd;
        TuningTriple epd = tunings.epd;
        if (tunings.select_by_gsm) {
            dpd = select_tuning(prob, tunings.dpd_grid, TuningFamily::DPD, opts.fit).best;
            epd = select_tuning(prob, tunings.epd_grid, TuningFamily::EPD, opts.fit).best;
        }
        for (EstimatorKind kind : kEstimators) {
            const TuningTriple t = kind == EstimatorKind::EPDE ? epd : dpd;
            const FitResult f = fit(prob, t, kind, std::nullopt, opts.fit);
            if (!f.converged)
                throw NotConverged(std::string(to_string(kind)) + " fit did not converge");
            ReplicationRecord r;
            r.rep = rep;
            r.estimator = kind;
            r.tuning = f.tuning;
            r.params = f.params;
            r.criterion = criterion(prob, f, criterion_for(kind));
            out.records.push_back(std::move(r));
        }
    } catch (const NumericalError& e) {
        out.records.clear();
        out.failure = e.what();
    }
    return out;
}

} // namespace

MonteCarloSummary run_study(const SimConfig& config, const StudyTunings& tunings, const StudyOptions& opts)
{
    config.validate();
    std::vector<RepOutcome> outcomes(std::size_t(config.reps));
    parallel_for(outcomes.size(), opts.threads,
                 [&](std::size_t r) { outcomes[r] = run_replication(config, int(r), tunings, opts); });

    MonteCarloSummary sum;
    sum.config = config;
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
        if (!outcomes[r].failure.empty())
            sum.failures.push_back({int(r), outcomes[r].failure});
        for (auto& rec : outcomes[r].records)
            sum.records.push_back(std::move(rec));
    }
    if (double(sum.failures.size()) > opts.max_failure_fraction * config.reps)
        throw TooManyFailures(std::to_string(sum.failures.size()) + " of " + std::to_string(config.reps)
                              + " replications failed; first: " + sum.failures.front().reason);

    // sequential, rep-ordered accumulation keeps the aggregates schedule-free
    for (EstimatorKind kind : kEstimators) {
        EstimatorSummary es;
        es.estimator = kind;
        es.criterion = criterion_for(kind);
        es.coef_mean = Eigen::VectorXd::Zero(config.p);
        Eigen::VectorXd coef_sq = Eigen::VectorXd::Zero(config.p);
        double crit_sq = 0.0;
        for (const auto& rec : sum.records) {
            if (rec.estimator != kind)
                continue;
            ++es.count;
            es.coef_mean += rec.params.coef;
            coef_sq += rec.params.coef.cwiseAbs2();
            es.sigma_mean += rec.params.sigma();
            es.criterion_mean += rec.criterion.total;
            crit_sq += rec.criterion.total * rec.criterion.total;
            es.penalty_mean += rec.criterion.penalty;
        }
        if (es.count > 0) {
            const double c = es.count;
            es.coef_mean /= c;
            es.sigma_mean /= c;
            es.criterion_mean /= c;
            es.penalty_mean /= c;
            const double dof = es.count > 1 ? c / (c - 1.0) : 0.0;
            es.coef_sd = ((coef_sq / c - es.coef_mean.cwiseAbs2()).cwiseMax(0.0) * dof).cwiseSqrt();
            es.criterion_sd = std::sqrt(std::max(0.0, crit_sq / c - es.criterion_mean * es.criterion_mean) * dof);
        } else {
            es.coef_sd = Eigen::VectorXd::Zero(config.p);
        }
        sum.estimators.push_back(std::move(es));
    }
    return sum;
}

} // namespace epdic
