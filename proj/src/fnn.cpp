#include "fundsel/fnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fundsel/csv.hpp"
#include "fundsel/error.hpp"
#include "fundsel/rng.hpp"

namespace fundsel::fnn {

namespace {

double sigmoid(double z) {
    double s;
    if (z >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        s = e / (1.0 + e);
    }
    // Keep the output strictly inside (0, 1) even where it would round to an endpoint.
    static const double upper = std::nextafter(1.0, 0.0);
    return std::clamp(s, std::numeric_limits<double>::min(), upper);
}

void check_input(const FnnModel& model, Eigen::Index cols) {
    if (static_cast<std::size_t>(cols) != model.n_in())
        fail(ErrorKind::DimensionMismatch,
             "model expects " + std::to_string(model.n_in()) + " inputs, got " + std::to_string(cols));
}

Eigen::VectorXd scaled_targets(const TargetScaler& scaler, const Eigen::VectorXd& targets) {
    Eigen::VectorXd out(targets.size());
    for (Eigen::Index i = 0; i < targets.size(); ++i)
        out(i) = scaler.scale(targets(i));
    return out;
}

} // namespace

TargetScaler fit_target_scaler(const Eigen::VectorXd& targets, double margin) {
    if (targets.size() < 2)
        fail(ErrorKind::DegenerateTargets, "need at least two targets to fit the scaler");
    if (!(margin >= 0.0))
        fail(ErrorKind::InvalidArgument, "scaler margin must be non-negative");
    const double lo = targets.minCoeff();
    const double hi = targets.maxCoeff();
    if (!(hi > lo))
        fail(ErrorKind::DegenerateTargets, "all training targets are equal");
    const double range = hi - lo;
    return TargetScaler{lo - margin * range, hi + margin * range};
}

Eigen::VectorXd FnnModel::parameters() const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < w1.rows(); ++r)
        for (Eigen::Index c = 0; c < w1.cols(); ++c)
            theta(k++) = w1(r, c);
    theta.segment(k, b1.size()) = b1;
    k += b1.size();
    theta.segment(k, w2.size()) = w2;
    k += w2.size();
    theta(k) = b2;
    return theta;
}

void FnnModel::set_parameters(const Eigen::VectorXd& theta) {
    if (static_cast<std::size_t>(theta.size()) != parameter_count())
        fail(ErrorKind::DimensionMismatch, "parameter vector has the wrong length");
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < w1.rows(); ++r)
        for (Eigen::Index c = 0; c < w1.cols(); ++c)
            w1(r, c) = theta(k++);
    b1 = theta.segment(k, b1.size());
    k += b1.size();
    w2 = theta.segment(k, w2.size());
    k += w2.size();
    b2 = theta(k);
}

FnnModel init_fnn(std::size_t n_in, std::size_t n_hidden, std::uint64_t seed) {
    if (n_in == 0 || n_hidden == 0)
        fail(ErrorKind::InvalidArgument, "network needs at least one input and one hidden unit");
    FnnModel m;
    m.seed = seed;
    const auto ni = static_cast<Eigen::Index>(n_in), nh = static_cast<Eigen::Index>(n_hidden);
    m.w1.resize(nh, ni);
    m.b1 = Eigen::VectorXd::Zero(nh);
    m.w2.resize(nh);
    Rng rng(seed);
    const double bound1 = std::sqrt(6.0 / static_cast<double>(n_in + n_hidden));
    for (Eigen::Index r = 0; r < nh; ++r)
        for (Eigen::Index c = 0; c < ni; ++c)
            m.w1(r, c) = rng.uniform(-bound1, bound1);
    const double bound2 = std::sqrt(6.0 / static_cast<double>(n_hidden + 1));
    for (Eigen::Index r = 0; r < nh; ++r)
        m.w2(r) = rng.uniform(-bound2, bound2);
    return m;
}

double forward(const FnnModel& model, const Eigen::VectorXd& x) {
    check_input(model, x.size());
    if (!x.allFinite())
        fail(ErrorKind::InvalidArgument, "input contains non-finite values");
    const Eigen::VectorXd hidden = (model.w1 * x + model.b1).cwiseMax(0.0);
    return sigmoid(model.w2.dot(hidden) + model.b2);
}

Eigen::VectorXd forward_batch(const FnnModel& model, const Eigen::MatrixXd& x) {
    check_input(model, x.cols());
    const Eigen::MatrixXd hidden = ((x * model.w1.transpose()).rowwise() + model.b1.transpose()).cwiseMax(0.0);
    Eigen::VectorXd z = hidden * model.w2;
    for (Eigen::Index i = 0; i < z.size(); ++i)
        z(i) = sigmoid(z(i) + model.b2);
    return z;
}

double mse_loss(const FnnModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& unit_targets) {
    return (forward_batch(model, x) - unit_targets).squaredNorm() / static_cast<double>(x.rows());
}

Gradient mse_gradient(const FnnModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& unit_targets) {
    check_input(model, x.cols());
    if (x.rows() != unit_targets.size() || x.rows() == 0)
        fail(ErrorKind::DimensionMismatch, "need one target per sample");
    const auto n = static_cast<double>(x.rows());

    const Eigen::MatrixXd pre = (x * model.w1.transpose()).rowwise() + model.b1.transpose();
    const Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
    Eigen::VectorXd out = hidden * model.w2;
    Eigen::VectorXd delta(out.size()); // dE/dz at the output's induced local field
    double loss = 0.0;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double s = sigmoid(out(i) + model.b2);
        const double err = s - unit_targets(i);
        loss += err * err;
        delta(i) = 2.0 * err * s * (1.0 - s) / n;
    }

    // Hidden-layer local gradients, masked by the rectifier.
    Eigen::MatrixXd hidden_delta = delta * model.w2.transpose();
    for (Eigen::Index r = 0; r < pre.rows(); ++r)
        for (Eigen::Index c = 0; c < pre.cols(); ++c)
            if (!(pre(r, c) > 0.0))
                hidden_delta(r, c) = 0.0;

    FnnModel shape = model;
    shape.w1 = hidden_delta.transpose() * x;
    shape.b1 = hidden_delta.colwise().sum().transpose();
    shape.w2 = hidden.transpose() * delta;
    shape.b2 = delta.sum();
    return Gradient{shape.parameters(), loss / n};
}

FnnModel train_fnn(FnnModel model, const Eigen::MatrixXd& x, const Eigen::VectorXd& targets,
                   const TrainConfig& cfg, double scaler_margin) {
    cfg.validate();
    check_input(model, x.cols());
    if (x.rows() != targets.size())
        fail(ErrorKind::DimensionMismatch, "need one target per sample");
    if (static_cast<std::size_t>(x.rows()) < cfg.batch_size)
        fail(ErrorKind::InvalidArgument, "fewer samples than the batch size");

    model.scaler = fit_target_scaler(targets, scaler_margin);
    model.hyper = cfg;
    const Eigen::VectorXd unit = scaled_targets(*model.scaler, targets);
    model.initial_loss = mse_loss(model, x, unit);
    model.final_loss = model.initial_loss;
    if (cfg.epochs == 0)
        return model;

    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(cfg.seed);

    Eigen::VectorXd theta = model.parameters();
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
    double beta1_pow = 1.0, beta2_pow = 1.0;

    Eigen::MatrixXd xb;
    Eigen::VectorXd tb;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const auto rows = static_cast<Eigen::Index>(stop - start);
            xb.resize(rows, x.cols());
            tb.resize(rows);
            for (Eigen::Index r = 0; r < rows; ++r) {
                xb.row(r) = x.row(order[start + static_cast<std::size_t>(r)]);
                tb(r) = unit(order[start + static_cast<std::size_t>(r)]);
            }
            const Gradient g = mse_gradient(model, xb, tb);
            if (cfg.optimizer == Optimizer::Sgd) {
                theta -= cfg.learning_rate * g.theta;
            } else {
                beta1_pow *= cfg.beta1;
                beta2_pow *= cfg.beta2;
                m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g.theta;
                m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.theta.cwiseAbs2();
                for (Eigen::Index k = 0; k < theta.size(); ++k) {
                    const double mhat = m1(k) / (1.0 - beta1_pow);
                    const double vhat = m2(k) / (1.0 - beta2_pow);
                    theta(k) -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
                }
            }
            model.set_parameters(theta);
        }
        const double loss = mse_loss(model, x, unit);
        if (!std::isfinite(loss) || !theta.allFinite())
            fail(ErrorKind::NonFiniteLoss, "training diverged at epoch " + std::to_string(epoch + 1) +
                                               " (initial loss " + csv::format_exact(model.initial_loss) + ")");
        model.final_loss = loss;
    }
    return model;
}

double predict_return(const FnnModel& model, const Eigen::VectorXd& x) {
    if (!model.scaler)
        fail(ErrorKind::ScalerUnset, "model has no target scaler; train it first");
    return model.scaler->unscale(forward(model, x));
}

double compare_with_finite_differences(const FnnModel& model, const Eigen::MatrixXd& x,
                                       const Eigen::VectorXd& targets, double h,
                                       const Eigen::VectorXd& analytic) {
    if (!model.scaler)
        fail(ErrorKind::ScalerUnset, "gradient check needs a target scaler");
    const Eigen::VectorXd unit = scaled_targets(*model.scaler, targets);
    const Eigen::VectorXd theta = model.parameters();
    if (analytic.size() != theta.size())
        fail(ErrorKind::DimensionMismatch, "analytic gradient has the wrong length");

    FnnModel probe = model;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        Eigen::VectorXd shifted = theta;
        shifted(k) = theta(k) + h;
        probe.set_parameters(shifted);
        const double up = mse_loss(probe, x, unit);
        shifted(k) = theta(k) - h;
        probe.set_parameters(shifted);
        const double down = mse_loss(probe, x, unit);
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(numeric), std::abs(analytic(k)), 1e-7});
        worst = std::max(worst, std::abs(numeric - analytic(k)) / scale);
    }
    return worst;
}

double gradient_check(const FnnModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& targets, double h) {
    FnnModel m = model;
    if (!m.scaler)
        m.scaler = fit_target_scaler(targets);
    const Eigen::VectorXd unit = scaled_targets(*m.scaler, targets);
    return compare_with_finite_differences(m, x, targets, h, mse_gradient(m, x, unit).theta);
}

std::string serialize(const FnnModel& model) {
    std::ostringstream out;
    out << "fnn 1\n";
    out << "shape " << model.n_in() << ' ' << model.n_hidden() << '\n';
    out << "seed " << model.seed << '\n';
    out << "w1\n";
    for (Eigen::Index r = 0; r < model.w1.rows(); ++r) {
        for (Eigen::Index c = 0; c < model.w1.cols(); ++c)
            out << (c ? " " : "") << csv::format_exact(model.w1(r, c));
        out << '\n';
    }
    auto vec = [&](const char* name, const Eigen::VectorXd& v) {
        out << name;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            out << ' ' << csv::format_exact(v(i));
        out << '\n';
    };
    vec("b1", model.b1);
    vec("w2", model.w2);
    out << "b2 " << csv::format_exact(model.b2) << '\n';
    if (model.scaler)
        out << "scaler " << csv::format_exact(model.scaler->lo) << ' ' << csv::format_exact(model.scaler->hi) << '\n';
    else
        out << "scaler none\n";
    return out.str();
}

FnnModel deserialize(const std::string& text) {
    std::istringstream in(text);
    auto expect = [&](const std::string& word) {
        std::string got;
        if (!(in >> got) || got != word)
            fail(ErrorKind::SchemaError, "fnn model: expected '" + word + "', got '" + got + "'");
    };
    auto number = [&]() {
        std::string token;
        if (!(in >> token))
            fail(ErrorKind::SchemaError, "fnn model: truncated");
        auto v = csv::parse_double(token);
        if (!v)
            fail(ErrorKind::SchemaError, "fnn model: bad number '" + token + "'");
        return *v;
    };

    expect("fnn");
    expect("1");
    expect("shape");
    std::size_t n_in = 0, n_hidden = 0;
    if (!(in >> n_in >> n_hidden) || n_in == 0 || n_hidden == 0)
        fail(ErrorKind::SchemaError, "fnn model: bad shape");
    FnnModel m = init_fnn(n_in, n_hidden, 0);
    expect("seed");
    if (!(in >> m.seed))
        fail(ErrorKind::SchemaError, "fnn model: bad seed");
    expect("w1");
    for (Eigen::Index r = 0; r < m.w1.rows(); ++r)
        for (Eigen::Index c = 0; c < m.w1.cols(); ++c)
            m.w1(r, c) = number();
    expect("b1");
    for (Eigen::Index i = 0; i < m.b1.size(); ++i)
        m.b1(i) = number();
    expect("w2");
    for (Eigen::Index i = 0; i < m.w2.size(); ++i)
        m.w2(i) = number();
    expect("b2");
    m.b2 = number();
    expect("scaler");
    std::string first;
    in >> first;
    if (first != "none") {
        auto lo = csv::parse_double(first);
        if (!lo)
            fail(ErrorKind::SchemaError, "fnn model: bad scaler");
        m.scaler = TargetScaler{*lo, number()};
    }
    return m;
}

} // namespace fundsel::fnn
