#include "epdic/neural.hpp"

#include "epdic/error.hpp"
#include "epdic/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

namespace epdic {

namespace {

struct ArchRow {
    const char* label;
    int layers;
    int width;
};

constexpr ArchRow kArchTable[] = {{"A1", 1, 2}, {"A2", 1, 3}, {"A3", 2, 2}, {"A4", 2, 3}};

// Layer shapes (rows, cols) of an architecture, input to output.
std::vector<std::pair<int, int>> layer_shapes(const ArchitectureSpec& arch)
{
    std::vector<std::pair<int, int>> shapes;
    int in = arch.input_dim;
    for (int l = 0; l < arch.hidden_layers; ++l) {
        shapes.emplace_back(arch.hidden_width, in);
        in = arch.hidden_width;
    }
    shapes.emplace_back(2, in);
    return shapes;
}

double softplus(double x)
{
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double model_part(double f, const TuningTriple& t)
{
    double v = 0.0;
    if (t.beta > 0.0)
        v += t.beta * exp_bregman_scaled(f, t.alpha);
    if (t.beta < 1.0)
        v += (1.0 - t.beta) * std::pow(f, 1.0 + t.gamma);
    return v;
}

// Loss of one sample and its derivative in the (clamped) logit difference d.
struct SampleLoss {
    double value;
    double d_dd;
};

SampleLoss sample_loss(double d, int y, const TuningTriple& t, bool mle)
{
    const double s = y == 1 ? 1.0 : -1.0;
    const double p1 = 1.0 / (1.0 + std::exp(-d));
    const double p0 = 1.0 / (1.0 + std::exp(d));
    const double f_y = y == 1 ? p1 : p0;
    const double f_other = y == 1 ? p0 : p1;
    if (mle)
        return {softplus(-s * d), -s * f_other};
    const double value = model_part(p0, t) + model_part(p1, t) - generating_fn_d1(f_y, t);
    // dM/df = w(f) and B''(f) = w(f) / f, with dp1/dd = p0 p1.
    const double slope = p0 * p1 * (weight_fn(p1, t) - weight_fn(p0, t)) - s * weight_fn(f_y, t) * f_other;
    return {value, slope};
}

struct BatchPass {
    std::vector<Eigen::MatrixXd> activations;  // activations[0] = X', then each hidden layer
    Eigen::VectorXd d_raw;
};

BatchPass forward_batch(const NetworkParams& params, const Eigen::MatrixXd& x)
{
    BatchPass pass;
    pass.activations.push_back(x.transpose());
    const std::size_t layers = params.weights.size();
    for (std::size_t l = 0; l + 1 < layers; ++l) {
        Eigen::MatrixXd z = params.weights[l] * pass.activations.back();
        z.colwise() += params.biases[l];
        pass.activations.push_back(z.array().tanh().matrix());
    }
    Eigen::MatrixXd out = params.weights.back() * pass.activations.back();
    out.colwise() += params.biases.back();
    pass.d_raw = (out.row(1) - out.row(0)).transpose();
    return pass;
}

double clamp_logit(double d)
{
    return std::clamp(d, -kLogitClamp, kLogitClamp);
}

// N x q Jacobian of the clamped logit difference.
Eigen::MatrixXd logit_jacobian(const NetworkParams& params, const BatchPass& pass)
{
    const Eigen::Index n = pass.d_raw.size();
    const std::size_t layers = params.weights.size();
    std::vector<Eigen::Index> offsets(layers);
    Eigen::Index q = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = q;
        q += params.weights[l].size() + params.biases[l].size();
    }
    Eigen::MatrixXd jac(n, q);

    Eigen::MatrixXd delta(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double live = std::abs(pass.d_raw(i)) > kLogitClamp ? 0.0 : 1.0;
        delta(0, i) = -live;
        delta(1, i) = live;
    }
    for (std::size_t l = layers; l-- > 0;) {
        const Eigen::MatrixXd& a = pass.activations[l];
        const Eigen::MatrixXd& w = params.weights[l];
        Eigen::Index col = offsets[l];
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                jac.col(col++) = (delta.row(r).array() * a.row(c).array()).transpose();
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            jac.col(col++) = delta.row(r).transpose();
        if (l > 0) {
            Eigen::MatrixXd back = w.transpose() * delta;
            delta = back.array() * (1.0 - a.array().square());
        }
    }
    return jac;
}

void check_input(const NetworkParams& params, const ClassificationData& data)
{
    if (data.d() != params.arch.input_dim)
        throw ShapeMismatch("feature count does not match the network input");
}

double pairwise_mean(const std::vector<double>& v)
{
    // Pairwise summation keeps the loss independent of the sample order up
    // to rounding in the tree, which is fixed by the count.
    std::vector<double> buf = v;
    std::size_t len = buf.size();
    while (len > 1) {
        std::size_t half = (len + 1) / 2;
        for (std::size_t i = 0; i < len / 2; ++i)
            buf[i] = buf[2 * i] + buf[2 * i + 1];
        if (len % 2)
            buf[len / 2] = buf[len - 1];
        len = half;
    }
    return buf.empty() ? 0.0 : buf[0] / double(v.size());
}

bool is_indicator(const Eigen::VectorXd& col)
{
    return (col.array() == 0.0 || col.array() == 1.0).all();
}

} // namespace

void ArchitectureSpec::validate() const
{
    if (input_dim < 1)
        throw DomainError("network input dimension must be positive");
    for (const auto& row : kArchTable)
        if (row.layers == hidden_layers && row.width == hidden_width) {
            if (label != row.label)
                throw DomainError("architecture label " + label + " does not match its shape");
            return;
        }
    throw DomainError("architecture outside the grid: layers in {1, 2}, width in {2, 3}");
}

int ArchitectureSpec::parameter_count() const
{
    int q = 0;
    for (const auto& [rows, cols] : layer_shapes(*this))
        q += rows * cols + rows;
    return q;
}

ArchitectureSpec make_architecture(const std::string& label, int input_dim)
{
    for (const auto& row : kArchTable)
        if (label == row.label) {
            ArchitectureSpec a{row.layers, row.width, input_dim, row.label};
            a.validate();
            return a;
        }
    throw DomainError("unknown architecture label " + label);
}

std::vector<ArchitectureSpec> architecture_grid(int input_dim)
{
    std::vector<ArchitectureSpec> grid;
    for (const auto& row : kArchTable)
        grid.push_back(make_architecture(row.label, input_dim));
    return grid;
}

NetworkParams NetworkParams::zeros(const ArchitectureSpec& arch)
{
    arch.validate();
    NetworkParams p;
    p.arch = arch;
    for (const auto& [rows, cols] : layer_shapes(arch)) {
        p.weights.push_back(Eigen::MatrixXd::Zero(rows, cols));
        p.biases.push_back(Eigen::VectorXd::Zero(rows));
    }
    return p;
}

NetworkParams NetworkParams::random(const ArchitectureSpec& arch, std::uint64_t seed)
{
    NetworkParams p = zeros(arch);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const double scale = 1.0 / std::sqrt(double(p.weights[l].cols()));
        for (Eigen::Index k = 0; k < p.weights[l].size(); ++k)
            p.weights[l].data()[k] = unif(rng) * scale;
        for (Eigen::Index k = 0; k < p.biases[l].size(); ++k)
            p.biases[l](k) = unif(rng) * scale;
    }
    return p;
}

Eigen::VectorXd NetworkParams::flatten() const
{
    Eigen::Index q = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        q += weights[l].size() + biases[l].size();
    Eigen::VectorXd theta(q);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        theta.segment(k, weights[l].size()) = weights[l].reshaped();
        k += weights[l].size();
        theta.segment(k, biases[l].size()) = biases[l];
        k += biases[l].size();
    }
    return theta;
}

NetworkParams NetworkParams::unflatten(const ArchitectureSpec& arch, const Eigen::VectorXd& theta)
{
    NetworkParams p = zeros(arch);
    if (theta.size() != arch.parameter_count())
        throw ShapeMismatch("parameter vector length does not match the architecture");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        p.weights[l].reshaped() = theta.segment(k, p.weights[l].size());
        k += p.weights[l].size();
        p.biases[l] = theta.segment(k, p.biases[l].size());
        k += p.biases[l].size();
    }
    return p;
}

void NetworkParams::validate() const
{
    arch.validate();
    const auto shapes = layer_shapes(arch);
    if (weights.size() != shapes.size() || biases.size() != shapes.size())
        throw ShapeMismatch("layer count does not match the architecture");
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        if (weights[l].rows() != shapes[l].first || weights[l].cols() != shapes[l].second ||
            biases[l].size() != shapes[l].first)
            throw ShapeMismatch("layer shape does not match the architecture");
        if (!weights[l].allFinite() || !biases[l].allFinite())
            throw DomainError("network parameters must be finite");
    }
}

ClassificationData::ClassificationData(Eigen::MatrixXd features, std::vector<int> labels)
    : x_(std::move(features)), y_(std::move(labels))
{
    if (x_.rows() != Eigen::Index(y_.size()))
        throw ShapeMismatch("feature rows and label count differ");
    if (x_.rows() < 1 || x_.cols() < 1)
        throw DataError("classification data is empty");
    if (!x_.allFinite())
        throw DataError("features must be finite");
    for (int y : y_)
        if (y != 0 && y != 1)
            throw DataError("labels must be 0 or 1");
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
        const Eigen::VectorXd col = x_.col(j);
        if (is_indicator(col))
            continue;
        const double mean = col.mean();
        const double msq = (col.array() - mean).square().mean();
        if (std::abs(mean) > 1e-6 || std::abs(std::sqrt(msq) - 1.0) > 1e-6)
            throw DataError("feature column " + std::to_string(j) + " is not standardized");
    }
}

ClassificationData ClassificationData::subset(const std::vector<Eigen::Index>& rows) const
{
    Eigen::MatrixXd x(Eigen::Index(rows.size()), x_.cols());
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        x.row(Eigen::Index(i)) = x_.row(rows[i]);
        y[i] = y_[std::size_t(rows[i])];
    }
    // A subset of standardized columns is no longer exactly standardized.
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (!is_indicator(x_.col(j)))
            cols.push_back(j);
    standardize_features(x, cols);
    return ClassificationData(std::move(x), std::move(y));
}

void standardize_features(Eigen::MatrixXd& x, const std::vector<Eigen::Index>& cols)
{
    for (Eigen::Index j : cols) {
        if (j < 0 || j >= x.cols())
            throw ShapeMismatch("column index out of range");
        const double mean = x.col(j).mean();
        x.col(j).array() -= mean;
        const double sd = std::sqrt(x.col(j).squaredNorm() / double(x.rows()));
        if (sd > 0.0)
            x.col(j) /= sd;
    }
}

double logit_difference(const NetworkParams& params, const Eigen::VectorXd& x)
{
    params.validate();
    if (x.size() != params.arch.input_dim)
        throw ShapeMismatch("input length does not match the network");
    Eigen::VectorXd a = x;
    const std::size_t layers = params.weights.size();
    for (std::size_t l = 0; l + 1 < layers; ++l)
        a = (params.weights[l] * a + params.biases[l]).array().tanh().matrix();
    const Eigen::VectorXd z = params.weights.back() * a + params.biases.back();
    return z(1) - z(0);
}

double forward(const NetworkParams& params, const Eigen::VectorXd& x)
{
    return 1.0 / (1.0 + std::exp(-clamp_logit(logit_difference(params, x))));
}

LossGradient epd_loss_gradient(const NetworkParams& params, const ClassificationData& data, const TuningTriple& t,
                               EstimatorKind kind, bool keep_per_sample)
{
    params.validate();
    check_input(params, data);
    const TuningTriple eff = effective_tuning(kind, t);
    const bool mle = kind == EstimatorKind::MLE;
    const BatchPass pass = forward_batch(params, data.features());
    const Eigen::Index n = data.n();
    std::vector<double> values(static_cast<std::size_t>(n));
    Eigen::VectorXd slopes(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const SampleLoss s = sample_loss(clamp_logit(pass.d_raw(i)), data.labels()[std::size_t(i)], eff, mle);
        values[std::size_t(i)] = s.value;
        slopes(i) = s.d_dd;
    }
    LossGradient out;
    out.loss = pairwise_mean(values);
    const Eigen::MatrixXd jac = logit_jacobian(params, pass);
    out.gradient = jac.transpose() * slopes / double(n);
    if (keep_per_sample)
        out.per_sample = jac.array().colwise() * slopes.array();
    return out;
}

double epd_loss(const NetworkParams& params, const ClassificationData& data, const TuningTriple& t,
                EstimatorKind kind)
{
    params.validate();
    check_input(params, data);
    const TuningTriple eff = effective_tuning(kind, t);
    const bool mle = kind == EstimatorKind::MLE;
    const BatchPass pass = forward_batch(params, data.features());
    std::vector<double> values(static_cast<std::size_t>(data.n()));
    for (Eigen::Index i = 0; i < data.n(); ++i)
        values[std::size_t(i)] =
            sample_loss(clamp_logit(pass.d_raw(i)), data.labels()[std::size_t(i)], eff, mle).value;
    return pairwise_mean(values);
}

double cross_entropy(const NetworkParams& params, const ClassificationData& data)
{
    return epd_loss(params, data, {}, EstimatorKind::MLE);
}

TrainReport train(const ArchitectureSpec& arch, const ClassificationData& data, const TuningTriple& t,
                  EstimatorKind kind, const TrainOptions& opts)
{
    arch.validate();
    if (opts.max_epochs < 0 || !(opts.step > 0.0) || !(opts.regrow >= 1.0))
        throw DomainError("training needs max_epochs >= 0, step > 0 and regrow >= 1");
    TrainReport report;
    report.kind = kind;
    report.tuning = effective_tuning(kind, t);
    report.params = NetworkParams::random(arch, opts.seed);
    check_input(report.params, data);

    Eigen::VectorXd theta = report.params.flatten();
    LossGradient cur = epd_loss_gradient(report.params, data, t, kind);
    report.loss = cur.loss;
    report.loss_trace.push_back(cur.loss);
    if (!std::isfinite(cur.loss) || !cur.gradient.allFinite()) {
        report.aborted = true;
        report.message = "non-finite loss at the initial weights";
        return report;
    }
    double step = opts.step;
    for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
        bool accepted = false;
        while (step >= opts.min_step) {
            const Eigen::VectorXd trial = theta - step * cur.gradient;
            const NetworkParams trial_params = NetworkParams::unflatten(arch, trial);
            double trial_loss = std::numeric_limits<double>::quiet_NaN();
            if (trial.allFinite())
                trial_loss = epd_loss(trial_params, data, t, kind);
            if (std::isfinite(trial_loss) && trial_loss <= cur.loss) {
                theta = trial;
                report.params = trial_params;
                accepted = true;
                break;
            }
            step *= 0.5;
            ++report.halvings;
        }
        if (!accepted) {
            report.message = "step fell below the minimum; loss is flat";
            break;
        }
        cur = epd_loss_gradient(report.params, data, t, kind);
        report.loss = cur.loss;
        report.loss_trace.push_back(cur.loss);
        report.epochs = epoch + 1;
        step = std::min(step * opts.regrow, opts.step);
        if (cur.gradient.lpNorm<Eigen::Infinity>() == 0.0) {
            report.message = "zero gradient";
            break;
        }
    }
    if (report.message.empty())
        report.message = "epoch limit reached";
    return report;
}

double accuracy(const NetworkParams& params, const ClassificationData& data)
{
    params.validate();
    check_input(params, data);
    const BatchPass pass = forward_batch(params, data.features());
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const int pred = pass.d_raw(i) > 0.0 ? 1 : 0;
        hits += pred == data.labels()[std::size_t(i)];
    }
    return double(hits) / double(data.n());
}

double brier_score(const NetworkParams& params, const ClassificationData& data)
{
    params.validate();
    check_input(params, data);
    const BatchPass pass = forward_batch(params, data.features());
    std::vector<double> sq(static_cast<std::size_t>(data.n()));
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-clamp_logit(pass.d_raw(i))));
        const double e = p - data.labels()[std::size_t(i)];
        sq[std::size_t(i)] = e * e;
    }
    return pairwise_mean(sq);
}

NetworkSandwich network_sandwich(const TrainReport& fit, const ClassificationData& data)
{
    if (fit.aborted)
        throw NumericalError("network fit was aborted: " + fit.message);
    const NetworkParams& params = fit.params;
    params.validate();
    check_input(params, data);
    const TuningTriple& t = fit.tuning;
    const bool mle = fit.kind == EstimatorKind::MLE;
    const BatchPass pass = forward_batch(params, data.features());
    const Eigen::MatrixXd jac = logit_jacobian(params, pass);
    const Eigen::Index n = data.n();
    Eigen::VectorXd curv(n), slopes(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = clamp_logit(pass.d_raw(i));
        const double p1 = 1.0 / (1.0 + std::exp(-d));
        const double p0 = 1.0 / (1.0 + std::exp(d));
        // At-model curvature in p is w(p1)/p1 + w(p0)/p0; times (dp1/dd)^2.
        curv(i) = mle ? p0 * p1 : p0 * p1 * (weight_fn(p1, t) * p0 + weight_fn(p0, t) * p1);
        slopes(i) = sample_loss(d, data.labels()[std::size_t(i)], t, mle).d_dd;
    }
    NetworkSandwich s;
    s.psi_hat = jac.transpose() * curv.asDiagonal() * jac / double(n);
    const Eigen::MatrixXd scores = jac.array().colwise() * slopes.array();
    s.omega_hat = scores.transpose() * scores / double(n);
    return s;
}

double ridge_sandwich_trace(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& psi, double ridge)
{
    if (omega.rows() != psi.rows() || omega.cols() != psi.cols() || psi.rows() != psi.cols())
        throw ShapeMismatch("sandwich matrices must be square and of equal size");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (psi + psi.transpose()));
    if (eig.info() != Eigen::Success)
        throw NumericalError("eigen-decomposition of psi failed");
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    const double top = lam.size() ? lam.maxCoeff() : 0.0;
    if (!(top > 0.0))
        return 0.0;
    const Eigen::MatrixXd& v = eig.eigenvectors();
    double trace = 0.0;
    for (Eigen::Index k = 0; k < lam.size(); ++k)
        trace += v.col(k).dot(omega * v.col(k)) / (lam(k) + ridge * top);
    return trace;
}

CriterionReport network_criterion(const TrainReport& fit, const ClassificationData& data, CriterionKind kind)
{
    require_compatible(kind, fit.kind, fit.tuning);
    const NetworkSandwich s = network_sandwich(fit, data);
    CriterionReport r;
    r.kind = kind;
    r.fit_term = double(data.n()) * epd_loss(fit.params, data, fit.tuning, fit.kind);
    r.penalty = ridge_sandwich_trace(s.omega_hat, s.psi_hat);
    r.total = r.fit_term + r.penalty;
    return r;
}

ArchitectureRanking select_architecture(const ClassificationData& data, const std::vector<CriterionKind>& kinds,
                                        const NetworkTunings& tunings, const TrainOptions& opts, unsigned threads)
{
    if (kinds.empty())
        throw DomainError("no criteria requested");
    std::vector<EstimatorKind> estimators;
    for (CriterionKind k : kinds) {
        const EstimatorKind e = estimator_for(k);
        if (std::find(estimators.begin(), estimators.end(), e) == estimators.end())
            estimators.push_back(e);
    }
    auto tuning_of = [&](EstimatorKind e) {
        switch (e) {
        case EstimatorKind::MLE: return TuningTriple{};
        case EstimatorKind::DPDE: return tunings.dpd;
        case EstimatorKind::EPDE: return tunings.epd;
        }
        return TuningTriple{};
    };
    const std::vector<ArchitectureSpec> grid = architecture_grid(int(data.d()));
    const std::size_t ne = estimators.size();
    ArchitectureRanking out;
    out.fits.resize(grid.size() * ne);
    parallel_for(out.fits.size(), threads, [&](std::size_t k) {
        const EstimatorKind e = estimators[k % ne];
        out.fits[k] = train(grid[k / ne], data, tuning_of(e), e, opts);
    });
    for (const TrainReport& f : out.fits)
        if (f.aborted)
            throw NumericalError("training " + f.params.arch.label + " aborted: " + f.message);

    std::vector<std::string> labels;
    for (const auto& a : grid)
        labels.push_back(a.label);
    for (CriterionKind kind : kinds) {
        const EstimatorKind e = estimator_for(kind);
        const std::size_t ei = std::size_t(std::find(estimators.begin(), estimators.end(), e) - estimators.begin());
        RankedList list;
        list.kind = kind;
        for (std::size_t a = 0; a < grid.size(); ++a) {
            RankedEntry entry;
            entry.model = make_candidate(std::uint64_t(1) << a, labels);
            entry.total = network_criterion(out.fits[a * ne + ei], data, kind).total;
            list.entries.push_back(entry);
        }
        std::stable_sort(list.entries.begin(), list.entries.end(), [](const RankedEntry& x, const RankedEntry& y) {
            return std::tie(x.total, x.model.mask) < std::tie(y.total, y.model.mask);
        });
        out.lists.push_back(std::move(list));
    }
    if (out.lists.size() >= 2)
        out.consolidated = consolidate(out.lists, grid.size());
    return out;
}

NetworkTuningSelection select_network_tuning(const ArchitectureSpec& arch, const ClassificationData& data,
                                             const TuningGrid& grid, TuningFamily family, const TrainOptions& opts,
                                             std::uint64_t split_seed, unsigned threads)
{
    grid.validate(family);
    if (data.n() < 5)
        throw DataError("held-out tuning needs at least 5 samples");
    std::vector<Eigen::Index> order(std::size_t(data.n()));
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::mt19937_64 rng(split_seed);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t cut = std::size_t(std::llround(0.8 * double(data.n())));
    std::vector<Eigen::Index> train_rows(order.begin(), order.begin() + std::ptrdiff_t(cut));
    std::vector<Eigen::Index> test_rows(order.begin() + std::ptrdiff_t(cut), order.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    const ClassificationData train_set = data.subset(train_rows);
    // The held-out rows keep the training split's scaling.
    Eigen::MatrixXd test_x(Eigen::Index(test_rows.size()), data.d());
    std::vector<int> test_y(test_rows.size());
    {
        Eigen::MatrixXd train_raw(Eigen::Index(train_rows.size()), data.d());
        for (std::size_t i = 0; i < train_rows.size(); ++i)
            train_raw.row(Eigen::Index(i)) = data.features().row(train_rows[i]);
        for (std::size_t i = 0; i < test_rows.size(); ++i) {
            test_x.row(Eigen::Index(i)) = data.features().row(test_rows[i]);
            test_y[i] = data.labels()[std::size_t(test_rows[i])];
        }
        for (Eigen::Index j = 0; j < data.d(); ++j) {
            if (is_indicator(data.features().col(j)))
                continue;
            const double mean = train_raw.col(j).mean();
            const double sd = std::sqrt((train_raw.col(j).array() - mean).square().mean());
            test_x.col(j).array() -= mean;
            if (sd > 0.0)
                test_x.col(j) /= sd;
        }
    }

    const std::vector<TuningTriple> pts = grid.points(family);
    const EstimatorKind kind = family == TuningFamily::DPD ? EstimatorKind::DPDE : EstimatorKind::EPDE;
    std::vector<double> scores(pts.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> reasons(pts.size());
    parallel_for(pts.size(), threads, [&](std::size_t k) {
        const TrainReport fit = train(arch, train_set, pts[k], kind, opts);
        if (fit.aborted) {
            reasons[k] = fit.message;
            return;
        }
        const BatchPass pass = forward_batch(fit.params, test_x);
        std::vector<double> sq(test_y.size());
        for (std::size_t i = 0; i < test_y.size(); ++i) {
            const double p = 1.0 / (1.0 + std::exp(-clamp_logit(pass.d_raw(Eigen::Index(i)))));
            sq[i] = (p - test_y[i]) * (p - test_y[i]);
        }
        scores[k] = pairwise_mean(sq);
    });

    NetworkTuningSelection sel;
    bool have = false;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (!std::isfinite(scores[k])) {
            sel.failures.push_back({pts[k], reasons[k].empty() ? "non-finite Brier score" : reasons[k]});
            continue;
        }
        sel.table.push_back({pts[k], scores[k]});
        const auto key = [](const TuningTriple& a) { return std::tie(a.gamma, a.beta, a.alpha); };
        if (!have || scores[k] < sel.best_brier || (scores[k] == sel.best_brier && key(pts[k]) < key(sel.best))) {
            sel.best = pts[k];
            sel.best_brier = scores[k];
            have = true;
        }
    }
    if (!have)
        throw AllPointsFailed("no tuning grid point produced a finite held-out Brier score");
    return sel;
}

} // namespace epdic
