#include "epdic/cli.hpp"

#include "epdic/error.hpp"
#include "epdic/io.hpp"
#include "epdic/simulation.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

namespace epdic {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v)
{
    return format_double(v);
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos)
            out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

std::vector<CriterionKind> parse_criteria(const std::string& s)
{
    if (s == "all")
        return {CriterionKind::EPDIC, CriterionKind::DPDIC, CriterionKind::MLIC};
    std::vector<CriterionKind> kinds;
    for (const auto& name : split_list(s)) {
        std::string upper = name;
        for (char& c : upper)
            c = char(std::toupper(static_cast<unsigned char>(c)));
        const CriterionKind k = criterion_kind_from_string(upper);
        if (std::find(kinds.begin(), kinds.end(), k) == kinds.end())
            kinds.push_back(k);
    }
    if (kinds.empty())
        throw UsageError("--criteria needs at least one of epdic, dpdic, mlic, or all");
    return kinds;
}

// Options shared by every subcommand, plus the bookkeeping to write results.
struct Common {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    unsigned threads = 1;
};

struct Run {
    CLI::App* app = nullptr;
    Common common;
    Manifest manifest;

    std::string path(const std::string& name) const
    {
        return (fs::path(common.out_dir) / (app->get_name() + "_" + name)).string();
    }
    void emit(const std::string& name, const Table& table)
    {
        write_table(path(name), table);
        manifest.outputs.push_back(app->get_name() + "_" + name);
    }
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--seed", c.seed, "Base seed; all randomness derives from it");
    sub->add_option("--out", c.out_dir, "Output directory");
    sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
}

nlohmann::json resolved_config(const CLI::App* sub)
{
    nlohmann::json cfg = nlohmann::json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_lnames().empty())
            continue;
        const std::string& name = opt->get_lnames().front();
        if (name == "help" || name == "out" || name == "config")
            continue;
        if (opt->get_expected_max() == 0) {
            cfg[name] = opt->count() > 0 && opt->as<bool>();
            continue;
        }
        if (opt->count() > 0) {
            std::string joined;
            for (const auto& r : opt->reduced_results())
                joined += (joined.empty() ? "" : ",") + r;
            cfg[name] = joined;
        } else {
            cfg[name] = opt->get_default_str();
        }
    }
    return cfg;
}

TuningTriple triple_from(double a, double b, double g)
{
    TuningTriple t{a, b, g};
    t.validate();
    return t;
}

// simulate -------------------------------------------------------------------

struct SimulateArgs {
    std::string scheme = "pure";
    double delta = 0.0;
    std::string deltas;
    int reps = 200;
    int n = 150;
    bool gsm = false;
    double dpd_gamma = 0.35;
    double epd_alpha = 0.1, epd_beta = 0.7, epd_gamma = 0.3;
    int max_iter = 500;
};

void run_simulate(Run& run, const SimulateArgs& a)
{
    const Scheme scheme = scheme_from_string(a.scheme);
    std::vector<double> deltas;
    if (!a.deltas.empty()) {
        for (const auto& s : split_list(a.deltas))
            deltas.push_back(parse_double(s));
    } else {
        deltas.push_back(a.delta);
    }
    auto given = [&](const char* name) { return run.app->get_option(name)->count() > 0; };

    Table records, summary, failures;
    SimConfig base;
    records.header = {"delta", "rep", "estimator", "alpha", "beta", "gamma"};
    for (int j = 1; j <= base.p; ++j)
        records.header.push_back("coef_" + std::to_string(j));
    for (const char* h : {"sigma", "criterion", "fit_term", "penalty", "total"})
        records.header.push_back(h);
    summary.header = {"delta",        "estimator",     "criterion",    "count", "criterion_mean",
                      "criterion_sd", "penalty_mean",  "sigma_mean"};
    for (int j = 1; j <= base.p; ++j)
        summary.header.push_back("coef_mean_" + std::to_string(j));
    for (int j = 1; j <= base.p; ++j)
        summary.header.push_back("coef_sd_" + std::to_string(j));
    failures.header = {"delta", "rep", "reason"};

    for (double delta : deltas) {
        SimConfig cfg;
        cfg.n = a.n;
        cfg.scheme = scheme;
        cfg.delta = delta;
        cfg.reps = a.reps;
        cfg.base_seed = run.common.seed;
        cfg.validate();
        StudyTunings tunings;
        if (const auto preset = preset_tuning(scheme, delta)) {
            tunings.dpd = preset->dpd;
            tunings.epd = preset->epd;
        }
        if (given("--dpd-gamma"))
            tunings.dpd = triple_from(0.0, 0.0, a.dpd_gamma);
        if (given("--epd-alpha") || given("--epd-beta") || given("--epd-gamma"))
            tunings.epd = triple_from(given("--epd-alpha") ? a.epd_alpha : tunings.epd.alpha,
                                      given("--epd-beta") ? a.epd_beta : tunings.epd.beta,
                                      given("--epd-gamma") ? a.epd_gamma : tunings.epd.gamma);
        tunings.select_by_gsm = a.gsm;
        StudyOptions opts;
        opts.threads = run.common.threads;
        opts.fit.max_iter = a.max_iter;
        const MonteCarloSummary s = run_study(cfg, tunings, opts);

        for (const ReplicationRecord& r : s.records) {
            std::vector<std::string> row = {fmt(delta), std::to_string(r.rep), std::string(to_string(r.estimator)),
                                            fmt(r.tuning.alpha), fmt(r.tuning.beta), fmt(r.tuning.gamma)};
            for (Eigen::Index j = 0; j < r.params.coef.size(); ++j)
                row.push_back(fmt(r.params.coef(j)));
            row.push_back(fmt(r.params.sigma()));
            row.push_back(std::string(to_string(r.criterion.kind)));
            row.push_back(fmt(r.criterion.fit_term));
            row.push_back(fmt(r.criterion.penalty));
            row.push_back(fmt(r.criterion.total));
            records.add_row(std::move(row));
        }
        for (const EstimatorSummary& e : s.estimators) {
            std::vector<std::string> row = {fmt(delta),
                                            std::string(to_string(e.estimator)),
                                            std::string(to_string(e.criterion)),
                                            std::to_string(e.count),
                                            fmt(e.criterion_mean),
                                            fmt(e.criterion_sd),
                                            fmt(e.penalty_mean),
                                            fmt(e.sigma_mean)};
            for (Eigen::Index j = 0; j < e.coef_mean.size(); ++j)
                row.push_back(fmt(e.coef_mean(j)));
            for (Eigen::Index j = 0; j < e.coef_sd.size(); ++j)
                row.push_back(fmt(e.coef_sd(j)));
            summary.add_row(std::move(row));
        }
        for (const ReplicationFailure& f : s.failures)
            failures.add_row({fmt(delta), std::to_string(f.rep), f.reason});
    }
    run.emit("records.csv", records);
    run.emit("summary.csv", summary);
    run.emit("failures.csv", failures);
}

// Regression input: a CSV with named columns, or one simulated sample --------

struct RegressionArgs {
    std::string data;
    std::string response;
    std::string covariates;
    bool no_intercept = false;
    std::string scheme = "pure";
    double delta = 0.0;
    int n = 150;
};

struct RegressionInput {
    RegressionProblem problem;
    std::vector<std::string> labels;  ///< one per design column
};

void add_regression_args(CLI::App* sub, RegressionArgs& a)
{
    sub->add_option("--data", a.data, "CSV file; omit to simulate one sample");
    sub->add_option("--response", a.response, "Response column (with --data)");
    sub->add_option("--covariates", a.covariates, "Comma-separated covariate columns (with --data)");
    sub->add_flag("--no-intercept", a.no_intercept, "Do not add a constant column (with --data)");
    sub->add_option("--scheme", a.scheme, "Simulation scheme without --data: pure, error, covariate");
    sub->add_option("--delta", a.delta, "Contamination fraction without --data");
    sub->add_option("--n", a.n, "Sample size without --data");
}

RegressionInput regression_input(Run& run, const RegressionArgs& a)
{
    if (a.data.empty()) {
        SimConfig cfg;
        cfg.n = a.n;
        cfg.scheme = scheme_from_string(a.scheme);
        cfg.delta = a.delta;
        cfg.base_seed = run.common.seed;
        cfg.validate();
        std::vector<std::string> labels;
        for (int j = 1; j <= cfg.p; ++j)
            labels.push_back("x" + std::to_string(j));
        run.manifest.inputs.push_back({{"source", "simulated"}, {"scheme", std::string(to_string(cfg.scheme))},
                                       {"delta", cfg.delta}, {"n", cfg.n}, {"rep", 0}});
        return {generate(cfg, 0), labels};
    }
    if (a.response.empty() || a.covariates.empty())
        throw UsageError("--data needs --response and --covariates");
    CsvSchema schema;
    const auto covs = split_list(a.covariates);
    schema.columns.resize(covs.size() + 1);
    schema.columns[0].name = a.response;
    for (std::size_t j = 0; j < covs.size(); ++j)
        schema.columns[j + 1].name = covs[j];
    const Dataset ds = load_csv(a.data, schema);
    run.manifest.inputs.push_back(ds.describe());
    const Eigen::Index off = a.no_intercept ? 0 : 1;
    Eigen::MatrixXd x(ds.rows(), Eigen::Index(covs.size()) + off);
    std::vector<std::string> labels;
    if (off) {
        x.col(0).setOnes();
        labels.push_back("intercept");
    }
    for (std::size_t j = 0; j < covs.size(); ++j) {
        x.col(Eigen::Index(j) + off) = ds.column(covs[j]);
        labels.push_back(covs[j]);
    }
    return {RegressionProblem(std::move(x), ds.column(a.response)), labels};
}

struct EstimatorArgs {
    std::string estimator = "all";
    double alpha = 0.1, beta = 0.7, gamma = 0.3;
    double dpd_gamma = 0.35;
};

void add_estimator_args(CLI::App* sub, EstimatorArgs& a)
{
    sub->add_option("--estimator", a.estimator, "mle, dpde, epde or all");
    sub->add_option("--alpha", a.alpha, "EPD alpha");
    sub->add_option("--beta", a.beta, "EPD beta");
    sub->add_option("--gamma", a.gamma, "EPD gamma");
    sub->add_option("--dpd-gamma", a.dpd_gamma, "DPD gamma");
}

std::vector<std::pair<EstimatorKind, TuningTriple>> estimators_from(const EstimatorArgs& a)
{
    std::vector<std::pair<EstimatorKind, TuningTriple>> out;
    const TuningTriple epd = triple_from(a.alpha, a.beta, a.gamma);
    const TuningTriple dpd = triple_from(0.0, 0.0, a.dpd_gamma);
    if (a.estimator == "all") {
        out = {{EstimatorKind::MLE, {}}, {EstimatorKind::DPDE, dpd}, {EstimatorKind::EPDE, epd}};
    } else {
        std::string upper = a.estimator;
        for (char& c : upper)
            c = char(std::toupper(static_cast<unsigned char>(c)));
        const EstimatorKind k = estimator_kind_from_string(upper);
        out.push_back({k, k == EstimatorKind::DPDE ? dpd : k == EstimatorKind::EPDE ? epd : TuningTriple{}});
    }
    return out;
}

// fit ------------------------------------------------------------------------

void run_fit(Run& run, const RegressionArgs& ra, const EstimatorArgs& ea, int max_iter)
{
    const RegressionInput in = regression_input(run, ra);
    Table coef, crit;
    coef.header = {"estimator", "parameter", "estimate"};
    crit.header = {"estimator", "alpha", "beta", "gamma", "criterion", "fit_term", "penalty",
                   "total", "iterations", "converged"};
    FitOptions opts;
    opts.max_iter = max_iter;
    for (const auto& [kind, t] : estimators_from(ea)) {
        const FitResult f = fit(in.problem, t, kind, std::nullopt, opts);
        const std::string name(to_string(kind));
        for (Eigen::Index j = 0; j < f.params.coef.size(); ++j)
            coef.add_row({name, in.labels[std::size_t(j)], fmt(f.params.coef(j))});
        coef.add_row({name, "sigma", fmt(f.params.sigma())});
        const CriterionReport r = criterion(in.problem, f, criterion_for(kind));
        crit.add_row({name, fmt(f.tuning.alpha), fmt(f.tuning.beta), fmt(f.tuning.gamma),
                      std::string(to_string(r.kind)), fmt(r.fit_term), fmt(r.penalty), fmt(r.total),
                      std::to_string(f.iterations), f.converged ? "true" : "false"});
    }
    run.emit("coefficients.csv", coef);
    run.emit("criteria.csv", crit);
}

// tune -----------------------------------------------------------------------

void run_tune(Run& run, const RegressionArgs& ra, const std::string& family_name, int max_iter)
{
    const RegressionInput in = regression_input(run, ra);
    std::vector<TuningFamily> families;
    if (family_name == "dpd" || family_name == "both")
        families.push_back(TuningFamily::DPD);
    if (family_name == "epd" || family_name == "both")
        families.push_back(TuningFamily::EPD);
    if (families.empty())
        throw UsageError("--family must be dpd, epd or both");
    Table table, best, failures;
    table.header = {"family", "alpha", "beta", "gamma", "score"};
    best.header = {"family", "alpha", "beta", "gamma", "score"};
    failures.header = {"family", "alpha", "beta", "gamma", "reason"};
    FitOptions opts;
    opts.max_iter = max_iter;
    for (TuningFamily fam : families) {
        const std::string name = fam == TuningFamily::DPD ? "DPD" : "EPD";
        const TuningGrid grid = fam == TuningFamily::DPD ? TuningGrid::dpd_default() : TuningGrid::epd_default();
        const TuningSelection sel = select_tuning(in.problem, grid, fam, opts, run.common.threads);
        for (const TuningPoint& p : sel.table)
            table.add_row({name, fmt(p.triple.alpha), fmt(p.triple.beta), fmt(p.triple.gamma), fmt(p.score)});
        for (const TuningFailure& f : sel.failures)
            failures.add_row({name, fmt(f.triple.alpha), fmt(f.triple.beta), fmt(f.triple.gamma), f.reason});
        best.add_row({name, fmt(sel.best.alpha), fmt(sel.best.beta), fmt(sel.best.gamma), fmt(sel.best_score)});
    }
    run.emit("table.csv", table);
    run.emit("best.csv", best);
    run.emit("failures.csv", failures);
}

// influence ------------------------------------------------------------------

void run_influence(Run& run, const RegressionArgs& ra, const EstimatorArgs& ea, double half_width, int points)
{
    const RegressionInput in = regression_input(run, ra);
    Table curve, report;
    curve.header = {"estimator", "y", "influence"};
    report.header = {"estimator", "sup_abs", "argmax_y", "sup_abs_widened", "bounded"};
    const Eigen::VectorXd x_pt = in.problem.design().colwise().mean().transpose();
    for (const auto& [kind, t] : estimators_from(ea)) {
        const FitResult f = fit(in.problem, t, kind);
        const std::string name(to_string(kind));
        const double mu = x_pt.dot(f.params.coef);
        const double sigma = f.params.sigma();
        for (int k = 0; k < points; ++k) {
            const double y = mu - half_width * sigma + 2.0 * half_width * sigma * k / double(points - 1);
            curve.add_row({name, fmt(y), fmt(influence_value(y, x_pt, f))});
        }
        const BoundednessReport b = boundedness_scan(f, x_pt);
        report.add_row({name, fmt(b.sup_abs), fmt(b.argmax_y), fmt(b.sup_abs_widened), b.bounded ? "true" : "false"});
    }
    run.emit("curve.csv", curve);
    run.emit("bounded.csv", report);
}

// select / panel ---------------------------------------------------------------

Table ranked_table(const std::vector<RankedList>& lists)
{
    Table t;
    t.header = {"criterion", "rank", "model", "size", "total"};
    for (const RankedList& list : lists)
        for (std::size_t k = 0; k < list.entries.size(); ++k) {
            const RankedEntry& e = list.entries[k];
            t.add_row({std::string(to_string(list.kind)), std::to_string(k + 1), e.model.name(),
                       std::to_string(std::popcount(e.model.mask)), fmt(e.total)});
        }
    return t;
}

Table consolidated_table(const std::vector<ConsolidatedEntry>& entries, const char* first_column)
{
    Table t;
    t.header = {first_column, "freq", "sel_freq", "EPDIC", "DPDIC", "MLIC"};
    for (const ConsolidatedEntry& e : entries)
        t.add_row({e.model.name(), std::to_string(e.freq), fmt(e.sel_freq), fmt(e.epdic), fmt(e.dpdic), fmt(e.mlic)});
    return t;
}

WageData wage_input(Run& run, const std::string& path, bool raw_response)
{
    WageData w = load_wages(path);
    if (!raw_response)
        standardize_response(w);
    nlohmann::json d = w.table.describe();
    d["response_mean"] = w.response_mean;
    d["response_sd"] = w.response_sd;
    run.manifest.inputs.push_back(std::move(d));
    return w;
}

struct SelectArgs {
    std::string data;
    std::string criteria = "all";
    int top_k = 15;
    std::string covariates;
    std::string model = "panel";
    int lambdas = 50;
    bool raw_response = false;
    double dpd_gamma = 0.5;
    double epd_alpha = 0.1, epd_beta = 0.3, epd_gamma = 0.3;
};

void run_select(Run& run, const SelectArgs& a)
{
    if (a.data.empty())
        throw UsageError("select needs --data (wage panel CSV)");
    if (a.model != "panel" && a.model != "pooled")
        throw UsageError("--model must be panel or pooled");
    const WageData w = wage_input(run, a.data, a.raw_response);
    const std::vector<CriterionKind> kinds = parse_criteria(a.criteria);
    EnumerationTunings tunings;
    tunings.dpd = triple_from(0.0, 0.0, a.dpd_gamma);
    tunings.epd = triple_from(a.epd_alpha, a.epd_beta, a.epd_gamma);

    std::vector<std::string> screened;
    if (!a.covariates.empty()) {
        screened = split_list(a.covariates);
    } else {
        // Screen on the pooled rows with every covariate standardized.
        Eigen::MatrixXd x = wage_design(w, w.covariates);
        standardize_columns(x);
        const RegressionProblem pooled(x, w.y);
        Table path;
        path.header = {"estimator", "lambda", "active_count", "active", "criterion"};
        std::uint64_t common = ~std::uint64_t(0);
        std::uint64_t any = 0;
        for (CriterionKind k : kinds) {
            const EstimatorKind e = estimator_for(k);
            const TuningTriple t = e == EstimatorKind::DPDE ? tunings.dpd : e == EstimatorKind::EPDE ? tunings.epd
                                                                                                    : TuningTriple{};
            LassoOptions lo;
            lo.lambdas = default_lambda_grid(pooled, std::nullopt, a.lambdas);
            lo.threads = run.common.threads;
            const LassoResult res = lasso_screen(pooled, t, e, lo);
            for (const LassoPathPoint& pt : res.path)
                path.add_row({std::string(to_string(e)), fmt(pt.lambda), std::to_string(pt.active_count),
                              pt.active ? make_candidate(pt.active, w.covariates).name() : "",
                              fmt(pt.criterion)});
            common &= res.mask;
            any |= res.mask;
        }
        run.emit("lasso_path.csv", path);
        const std::uint64_t chosen = common ? common : any;
        for (std::size_t j = 0; j < w.covariates.size(); ++j)
            if (chosen >> j & 1u)
                screened.push_back(w.covariates[j]);
    }
    if (int(screened.size()) > kMaxSubsetCovariates)
        throw CapExceeded("subset enumeration is capped at " + std::to_string(kMaxSubsetCovariates) + " covariates");
    Table chosen;
    chosen.header = {"covariate"};
    for (const auto& c : screened)
        chosen.add_row({c});
    run.emit("screened.csv", chosen);

    const std::uint64_t mask = (std::uint64_t(1) << screened.size()) - 1;
    std::vector<RankedList> lists;
    if (a.model == "panel") {
        lists = enumerate_and_rank_panel(wage_panel(w, screened), screened, mask, kinds, tunings, {},
                                         run.common.threads);
    } else {
        const RegressionProblem pooled(wage_design(w, screened), w.y);
        lists = enumerate_and_rank(pooled, screened, mask, kinds, tunings, {}, run.common.threads);
    }
    run.emit("ranked.csv", ranked_table(lists));
    if (lists.size() >= 2)
        run.emit("consolidated.csv", consolidated_table(consolidate(lists, std::size_t(a.top_k)), "model"));
}

struct PanelArgs {
    std::string data;
    std::string covariates;
    bool raw_response = false;
    double dpd_gamma = kPanelDpdTuning.gamma;
    double epd_alpha = kPanelEpdTuning.alpha, epd_beta = kPanelEpdTuning.beta, epd_gamma = kPanelEpdTuning.gamma;
};

void run_panel(Run& run, const PanelArgs& a)
{
    if (a.data.empty())
        throw UsageError("panel needs --data (wage panel CSV)");
    const WageData w = wage_input(run, a.data, a.raw_response);
    const std::vector<std::string> covs = a.covariates.empty() ? w.covariates : split_list(a.covariates);
    const PanelData data = wage_panel(w, covs);
    Table est, crit;
    est.header = {"estimator", "parameter", "estimate"};
    crit.header = {"estimator", "alpha", "beta", "gamma", "criterion", "fit_term", "penalty",
                   "total", "iterations", "converged"};
    const std::vector<std::pair<EstimatorKind, TuningTriple>> runs = {
        {EstimatorKind::MLE, {}},
        {EstimatorKind::DPDE, triple_from(0.0, 0.0, a.dpd_gamma)},
        {EstimatorKind::EPDE, triple_from(a.epd_alpha, a.epd_beta, a.epd_gamma)}};
    for (const auto& [kind, t] : runs) {
        const PanelFitResult f = fit_panel(data, t, kind, std::nullopt, {}, run.common.threads);
        const std::string name(to_string(kind));
        est.add_row({name, "intercept", fmt(f.params.coef(0))});
        for (std::size_t j = 0; j < covs.size(); ++j)
            est.add_row({name, covs[j], fmt(f.params.coef(Eigen::Index(j) + 1))});
        est.add_row({name, "sigma_alpha", fmt(f.params.sigma_alpha())});
        est.add_row({name, "sigma_u", fmt(f.params.sigma_u())});
        const CriterionReport r = panel_criterion(data, f, criterion_for(kind));
        crit.add_row({name, fmt(f.tuning.alpha), fmt(f.tuning.beta), fmt(f.tuning.gamma),
                      std::string(to_string(r.kind)), fmt(r.fit_term), fmt(r.penalty), fmt(r.total),
                      std::to_string(f.iterations), f.converged ? "true" : "false"});
    }
    run.emit("estimates.csv", est);
    run.emit("criteria.csv", crit);
}

// nn ---------------------------------------------------------------------------

struct NnArgs {
    std::string data;
    std::string criteria = "all";
    int epochs = 500;
    double step = 0.05;
    double dpd_gamma = 0.9;
    double epd_alpha = 0.1, epd_beta = 0.7, epd_gamma = 0.1;
    bool tune = false;
    std::string tune_arch = "A1";
};

void run_nn(Run& run, const NnArgs& a)
{
    if (a.data.empty())
        throw UsageError("nn needs --data (maintenance CSV)");
    const MaintenanceData m = load_ai4i(a.data);
    run.manifest.inputs.push_back(m.table.describe());
    TrainOptions opts;
    opts.seed = run.common.seed;
    opts.max_epochs = a.epochs;
    opts.step = a.step;
    NetworkTunings tunings;
    tunings.dpd = triple_from(0.0, 0.0, a.dpd_gamma);
    tunings.epd = triple_from(a.epd_alpha, a.epd_beta, a.epd_gamma);

    if (a.tune) {
        const ArchitectureSpec arch = make_architecture(a.tune_arch, int(m.data.d()));
        // A coarse grid keeps the held-out search affordable at N = 10^4.
        const TuningGrid grid{{0.1, 0.5, 1.0}, {0.1, 0.4, 0.7}, {0.1, 0.5, 1.0}};
        const NetworkTuningSelection sel =
            select_network_tuning(arch, m.data, grid, TuningFamily::EPD, opts, run.common.seed, run.common.threads);
        Table t;
        t.header = {"alpha", "beta", "gamma", "brier"};
        for (const TuningPoint& p : sel.table)
            t.add_row({fmt(p.triple.alpha), fmt(p.triple.beta), fmt(p.triple.gamma), fmt(p.score)});
        run.emit("tuning.csv", t);
        tunings.epd = sel.best;
    }

    const std::vector<CriterionKind> kinds = parse_criteria(a.criteria);
    const ArchitectureRanking r = select_architecture(m.data, kinds, tunings, opts, run.common.threads);
    Table training;
    training.header = {"architecture", "estimator", "alpha", "beta", "gamma", "loss", "epochs", "halvings", "accuracy"};
    for (const TrainReport& f : r.fits)
        training.add_row({f.params.arch.label, std::string(to_string(f.kind)), fmt(f.tuning.alpha),
                          fmt(f.tuning.beta), fmt(f.tuning.gamma), fmt(f.loss), std::to_string(f.epochs),
                          std::to_string(f.halvings), fmt(accuracy(f.params, m.data))});
    run.emit("training.csv", training);
    run.emit("ranked.csv", ranked_table(r.lists));
    if (!r.consolidated.empty())
        run.emit("ranking.csv", consolidated_table(r.consolidated, "architecture"));
}

// Config file: flat key=value lines, '#' comments. Each pair becomes
// --key=value placed before the command-line flags, so flags win.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open config file " + path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos)
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        auto strip = [](std::string s) {
            const auto lo = s.find_first_not_of(" \t\r");
            const auto hi = s.find_last_not_of(" \t\r");
            return lo == std::string::npos ? std::string() : s.substr(lo, hi - lo + 1);
        };
        std::string key = strip(line.substr(0, eq));
        if (key.rfind("--", 0) == 0)
            key.erase(0, 2);
        if (key.empty())
            throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
        pairs.emplace_back(key, strip(line.substr(eq + 1)));
    }
    return pairs;
}

} // namespace

int cli_dispatch(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Divergence-based estimation and information criteria", "epdic"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersionString);

    Common common;
    SimulateArgs sim;
    RegressionArgs fit_ra, tune_ra, infl_ra;
    EstimatorArgs fit_ea, infl_ea;
    int fit_max_iter = 500, tune_max_iter = 500;
    std::string family = "both";
    double infl_half_width = 20.0;
    int infl_points = 401;
    SelectArgs sel;
    PanelArgs pan;
    NnArgs nn;
    std::string config_path;

    std::map<std::string, std::function<void(Run&)>> actions;
    auto make_sub = [&](const char* name, const char* desc) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
        sub->add_option("--config", config_path, "key=value file; command-line flags override it");
        add_common(sub, common);
        return sub;
    };

    CLI::App* s_sim = make_sub("simulate", "Monte Carlo study of MLE, DPDE and EPDE with criteria");
    s_sim->add_option("--scheme", sim.scheme, "pure (0), error (1) or covariate (2)");
    s_sim->add_option("--delta", sim.delta, "Contamination fraction");
    s_sim->add_option("--deltas", sim.deltas, "Comma-separated fractions; overrides --delta");
    s_sim->add_option("--reps", sim.reps, "Replications")->check(CLI::PositiveNumber);
    s_sim->add_option("--n", sim.n, "Sample size")->check(CLI::PositiveNumber);
    s_sim->add_flag("--gsm", sim.gsm, "Select tunings per replication by score matching");
    s_sim->add_option("--dpd-gamma", sim.dpd_gamma, "DPD gamma (default: preset for the level)");
    s_sim->add_option("--epd-alpha", sim.epd_alpha, "EPD alpha (default: preset for the level)");
    s_sim->add_option("--epd-beta", sim.epd_beta, "EPD beta (default: preset for the level)");
    s_sim->add_option("--epd-gamma", sim.epd_gamma, "EPD gamma (default: preset for the level)");
    s_sim->add_option("--max-iter", sim.max_iter, "Optimizer iteration cap")->check(CLI::PositiveNumber);
    actions["simulate"] = [&](Run& r) { run_simulate(r, sim); };

    CLI::App* s_fit = make_sub("fit", "Fit a linear regression by MLE, DPDE and/or EPDE");
    add_regression_args(s_fit, fit_ra);
    add_estimator_args(s_fit, fit_ea);
    s_fit->add_option("--max-iter", fit_max_iter, "Optimizer iteration cap")->check(CLI::PositiveNumber);
    actions["fit"] = [&](Run& r) { run_fit(r, fit_ra, fit_ea, fit_max_iter); };

    CLI::App* s_tune = make_sub("tune", "Select tunings by generalized score matching");
    add_regression_args(s_tune, tune_ra);
    s_tune->add_option("--family", family, "dpd, epd or both");
    s_tune->add_option("--max-iter", tune_max_iter, "Optimizer iteration cap")->check(CLI::PositiveNumber);
    actions["tune"] = [&](Run& r) { run_tune(r, tune_ra, family, tune_max_iter); };

    CLI::App* s_infl = make_sub("influence", "Influence curve of the fit term and boundedness scan");
    add_regression_args(s_infl, infl_ra);
    add_estimator_args(s_infl, infl_ea);
    s_infl->add_option("--half-width", infl_half_width, "Curve half-width in fitted sigmas")
        ->check(CLI::PositiveNumber);
    s_infl->add_option("--points", infl_points, "Curve points")->check(CLI::Range(2, 1000000));
    actions["influence"] = [&](Run& r) { run_influence(r, infl_ra, infl_ea, infl_half_width, infl_points); };

    CLI::App* s_sel = make_sub("select", "Screen, enumerate and consolidate wage-panel models");
    s_sel->add_option("--data", sel.data, "Wage panel CSV");
    s_sel->add_option("--criteria", sel.criteria, "all, or a comma list of epdic, dpdic, mlic");
    s_sel->add_option("--top-k", sel.top_k, "Models kept from each ranked list")->check(CLI::PositiveNumber);
    s_sel->add_option("--covariates", sel.covariates, "Skip screening and enumerate these covariates");
    s_sel->add_option("--model", sel.model, "panel or pooled");
    s_sel->add_option("--lambdas", sel.lambdas, "Points on the penalty path")->check(CLI::Range(2, 1000));
    s_sel->add_flag("--raw-response", sel.raw_response, "Fit lwage as read instead of standardized");
    s_sel->add_option("--dpd-gamma", sel.dpd_gamma, "DPD gamma");
    s_sel->add_option("--epd-alpha", sel.epd_alpha, "EPD alpha");
    s_sel->add_option("--epd-beta", sel.epd_beta, "EPD beta");
    s_sel->add_option("--epd-gamma", sel.epd_gamma, "EPD gamma");
    actions["select"] = [&](Run& r) { run_select(r, sel); };

    CLI::App* s_pan = make_sub("panel", "Fit the random-intercept wage panel with all three estimators");
    s_pan->add_option("--data", pan.data, "Wage panel CSV");
    s_pan->add_option("--covariates", pan.covariates, "Comma-separated covariates (default: all)");
    s_pan->add_flag("--raw-response", pan.raw_response, "Fit lwage as read instead of standardized");
    s_pan->add_option("--dpd-gamma", pan.dpd_gamma, "DPD gamma");
    s_pan->add_option("--epd-alpha", pan.epd_alpha, "EPD alpha");
    s_pan->add_option("--epd-beta", pan.epd_beta, "EPD beta");
    s_pan->add_option("--epd-gamma", pan.epd_gamma, "EPD gamma");
    actions["panel"] = [&](Run& r) { run_panel(r, pan); };

    CLI::App* s_nn = make_sub("nn", "Train the four small networks and rank architectures");
    s_nn->add_option("--data", nn.data, "Maintenance CSV");
    s_nn->add_option("--criteria", nn.criteria, "all, or a comma list of epdic, dpdic, mlic");
    s_nn->add_option("--epochs", nn.epochs, "Full-batch epochs")->check(CLI::NonNegativeNumber);
    s_nn->add_option("--step", nn.step, "Initial step size")->check(CLI::PositiveNumber);
    s_nn->add_option("--dpd-gamma", nn.dpd_gamma, "DPD gamma");
    s_nn->add_option("--epd-alpha", nn.epd_alpha, "EPD alpha");
    s_nn->add_option("--epd-beta", nn.epd_beta, "EPD beta");
    s_nn->add_option("--epd-gamma", nn.epd_gamma, "EPD gamma");
    s_nn->add_flag("--tune", nn.tune, "Pick the EPD tuning by held-out Brier score first");
    s_nn->add_option("--tune-arch", nn.tune_arch, "Architecture used for tuning");
    actions["nn"] = [&](Run& r) { run_nn(r, nn); };

    CLI::App* sub = nullptr;
    if (!args_in.empty())
        for (CLI::App* s : app.get_subcommands({}))
            if (s->get_name() == args_in.front())
                sub = s;
    auto usage = [&](const std::string& msg) {
        err << "error: " << msg << "\n\n" << (sub ? sub->help() : app.help());
        return 1;
    };

    // Splice config pairs in right after the subcommand name.
    std::vector<std::string> args = args_in;
    try {
        for (std::size_t i = 1; i < args.size(); ++i) {
            std::string path;
            if (args[i] == "--config" && i + 1 < args.size())
                path = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0)
                path = args[i].substr(9);
            else
                continue;
            if (!sub)
                break;
            std::vector<std::string> injected;
            for (const auto& [key, value] : read_config(path)) {
                if (key == "config" || !sub->get_option_no_throw("--" + key))
                    throw UsageError("unknown key '" + key + "' in config file " + path);
                injected.push_back("--" + key + "=" + value);
            }
            args.insert(args.begin() + 1, injected.begin(), injected.end());
            break;
        }
    } catch (const UsageError& e) {
        return usage(e.what());
    }

    std::vector<const char*> argv = {"epdic"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << (sub ? sub->help() : app.help());
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersionString << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        return usage(e.what());
    }

    Run run;
    run.app = app.get_subcommands().front();
    run.common = common;
    run.manifest.command = run.app->get_name();
    run.manifest.seed = common.seed;
    run.manifest.config = resolved_config(run.app);
    try {
        fs::create_directories(common.out_dir);
        actions.at(run.app->get_name())(run);
        run.manifest.outputs.push_back(run.app->get_name() + "_manifest.json");
        write_manifest(run.path("manifest.json"), run.manifest);
    } catch (const UsageError& e) {
        return usage(e.what());
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    for (const auto& name : run.manifest.outputs)
        out << (fs::path(common.out_dir) / name).string() << "\n";
    return 0;
}

} // namespace epdic
