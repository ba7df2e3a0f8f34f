#include "fundsel/anfis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fundsel/csv.hpp"
#include "fundsel/error.hpp"

namespace fundsel::anfis {

void SubClustConfig::validate() const {
    if (!(radius > 0.0))
        fail(ErrorKind::InvalidArgument, "cluster radius must be positive");
    if (!(squash >= 1.0))
        fail(ErrorKind::InvalidArgument, "squash factor must be at least 1");
    if (!(reject_ratio > 0.0 && reject_ratio < accept_ratio && accept_ratio <= 1.0))
        fail(ErrorKind::InvalidArgument, "need 0 < reject_ratio < accept_ratio <= 1");
}

ClusterResult subtractive_cluster(const Eigen::MatrixXd& points, const SubClustConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = points.rows();
    if (n == 0)
        fail(ErrorKind::EmptyInput, "subtractive clustering needs at least one sample");

    const double alpha = 4.0 / (cfg.radius * cfg.radius);
    const double rb = cfg.squash * cfg.radius;
    const double beta = 4.0 / (rb * rb);

    // Pairwise squared distances, symmetric.
    Eigen::MatrixXd d2(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d2(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < points.cols(); ++k) {
                const double d = points(i, k) - points(j, k);
                s += d * d;
            }
            d2(i, j) = d2(j, i) = s;
        }
    }

    Eigen::VectorXd potential(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            p += std::exp(-alpha * d2(i, j));
        potential(i) = p;
    }

    auto argmax = [&potential]() {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < potential.size(); ++i)
            if (potential(i) > potential(best))
                best = i;
        return best;
    };

    ClusterResult result;
    double first_potential = 0.0;
    while (true) {
        const Eigen::Index k = argmax();
        const double pk = potential(k);
        if (result.indices.empty()) {
            first_potential = pk;
        } else if (pk < cfg.accept_ratio * first_potential) {
            if (pk < cfg.reject_ratio * first_potential)
                break;
            double dmin = std::numeric_limits<double>::infinity();
            for (auto c : result.indices)
                dmin = std::min(dmin, std::sqrt(d2(k, static_cast<Eigen::Index>(c))));
            if (dmin / cfg.radius + pk / first_potential < 1.0) {
                potential(k) = 0.0;
                continue;
            }
        }
        result.indices.push_back(static_cast<std::size_t>(k));
        for (Eigen::Index i = 0; i < n; ++i)
            potential(i) -= pk * std::exp(-beta * d2(i, k));
    }

    result.centers.resize(static_cast<Eigen::Index>(result.indices.size()), points.cols());
    for (std::size_t c = 0; c < result.indices.size(); ++c)
        result.centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(result.indices[c]));
    return result;
}

std::vector<Range> column_ranges(const Eigen::MatrixXd& x) {
    std::vector<Range> out;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        out.push_back(Range{x.col(c).minCoeff(), x.col(c).maxCoeff()});
    return out;
}

AnfisModel build_anfis(const Eigen::MatrixXd& unit_centers, const std::vector<Range>& x_ranges, Range t_range,
                       double radius) {
    const auto n_in = static_cast<Eigen::Index>(x_ranges.size());
    if (unit_centers.rows() == 0)
        fail(ErrorKind::EmptyInput, "need at least one cluster center");
    if (unit_centers.cols() != n_in && unit_centers.cols() != n_in + 1)
        fail(ErrorKind::DimensionMismatch, "centers must have one column per input (plus optionally the target)");
    if (!(radius > 0.0))
        fail(ErrorKind::InvalidArgument, "radius must be positive");
    for (Eigen::Index j = 0; j < n_in; ++j)
        if (!(x_ranges[static_cast<std::size_t>(j)].width() > 0.0))
            fail(ErrorKind::DegenerateRange, "input " + std::to_string(j) + " has zero range");

    AnfisModel model;
    model.input_ranges = x_ranges;
    model.target_range = t_range;
    for (Eigen::Index r = 0; r < unit_centers.rows(); ++r) {
        Rule rule;
        rule.center.resize(n_in);
        rule.sigma.resize(n_in);
        for (Eigen::Index j = 0; j < n_in; ++j) {
            const Range& range = x_ranges[static_cast<std::size_t>(j)];
            rule.center(j) = range.min + unit_centers(r, j) * range.width();
            rule.sigma(j) = radius * range.width() / std::sqrt(8.0);
        }
        rule.coeffs = Eigen::VectorXd::Zero(n_in);
        model.rules.push_back(std::move(rule));
    }
    return model;
}

AnfisModel anfis_from_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, const SubClustConfig& cfg) {
    if (x.rows() != t.size())
        fail(ErrorKind::DimensionMismatch, "need one target per sample");
    if (x.rows() == 0)
        fail(ErrorKind::EmptyInput, "no training samples");
    const std::vector<Range> x_ranges = column_ranges(x);
    const Range t_range{t.minCoeff(), t.maxCoeff()};
    for (std::size_t j = 0; j < x_ranges.size(); ++j)
        if (!(x_ranges[j].width() > 0.0))
            fail(ErrorKind::DegenerateRange, "input " + std::to_string(j) + " is constant over the training rows");
    if (!(t_range.width() > 0.0))
        fail(ErrorKind::DegenerateTargets, "all training targets are equal");

    Eigen::MatrixXd joint(x.rows(), x.cols() + 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            joint(i, j) = (x(i, j) - x_ranges[static_cast<std::size_t>(j)].min) / x_ranges[static_cast<std::size_t>(j)].width();
        joint(i, x.cols()) = (t(i) - t_range.min) / t_range.width();
    }
    const ClusterResult clusters = subtractive_cluster(joint, cfg);
    return build_anfis(clusters.centers, x_ranges, t_range, cfg.radius);
}

ForwardResult anfis_forward(const AnfisModel& model, const Eigen::VectorXd& x) {
    if (static_cast<std::size_t>(x.size()) != model.n_in())
        fail(ErrorKind::DimensionMismatch,
             "model expects " + std::to_string(model.n_in()) + " inputs, got " + std::to_string(x.size()));
    if (!x.allFinite())
        fail(ErrorKind::InvalidArgument, "input contains non-finite values");
    if (model.rules.empty())
        fail(ErrorKind::EmptyInput, "model has no rules");

    const auto r_count = static_cast<Eigen::Index>(model.n_rules());
    const auto n = x.size();
    ForwardResult out;
    ForwardTrace& tr = out.trace;
    tr.membership.resize(r_count, n);
    tr.firing.resize(r_count);
    tr.consequent.resize(r_count);

    double total = 0.0;
    for (Eigen::Index i = 0; i < r_count; ++i) {
        const Rule& rule = model.rules[static_cast<std::size_t>(i)];
        double w = 1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = (x(j) - rule.center(j)) / rule.sigma(j);
            tr.membership(i, j) = std::exp(-0.5 * d * d);
            w *= tr.membership(i, j);
        }
        tr.firing(i) = w;
        total += w;
        tr.consequent(i) = rule.coeffs.dot(x) + rule.intercept;
    }

    if (total >= kUnderflow) {
        tr.normalized = tr.firing / total;
    } else {
        // Every rule is effectively silent; hand the input to the rule with
        // the largest log firing strength.
        tr.underflow = true;
        Eigen::Index best = 0;
        double best_log = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < r_count; ++i) {
            const Rule& rule = model.rules[static_cast<std::size_t>(i)];
            double log_w = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                const double d = (x(j) - rule.center(j)) / rule.sigma(j);
                log_w -= 0.5 * d * d;
            }
            if (log_w > best_log) {
                best_log = log_w;
                best = i;
            }
        }
        tr.normalized = Eigen::VectorXd::Zero(r_count);
        tr.normalized(best) = 1.0;
    }
    tr.weighted = tr.normalized.cwiseProduct(tr.consequent);
    out.y = tr.weighted.sum();
    return out;
}

double anfis_predict(const AnfisModel& model, const Eigen::VectorXd& x) {
    return anfis_forward(model, x).y;
}

double mse(const AnfisModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
    if (x.rows() != t.size() || x.rows() == 0)
        fail(ErrorKind::DimensionMismatch, "need one target per sample");
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double e = anfis_predict(model, x.row(i).transpose()) - t(i);
        s += e * e;
    }
    return s / static_cast<double>(x.rows());
}

AnfisModel fit_consequents_lse(AnfisModel model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double ridge) {
    if (x.rows() != t.size() || x.rows() == 0)
        fail(ErrorKind::DimensionMismatch, "need one target per sample");
    if (!(ridge >= 0.0))
        fail(ErrorKind::InvalidArgument, "ridge must be non-negative");

    const auto n_in = static_cast<Eigen::Index>(model.n_in());
    const Eigen::Index block = n_in + 1;
    const auto p = static_cast<Eigen::Index>(model.consequent_count());
    const Eigen::Index rows = x.rows();

    // Design matrix: the columns of rule i are wbar_i(x) * [x, 1].
    Eigen::MatrixXd a(rows, p);
    for (Eigen::Index s = 0; s < rows; ++s) {
        const Eigen::VectorXd xs = x.row(s).transpose();
        const ForwardResult f = anfis_forward(model, xs);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(model.n_rules()); ++i) {
            const double w = f.trace.normalized(i);
            a.block(s, i * block, 1, n_in) = w * x.row(s);
            a(s, i * block + n_in) = w;
        }
    }

    Eigen::VectorXd theta;
    if (ridge == 0.0) {
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
        if (qr.rank() < p)
            fail(ErrorKind::SingularSystem, "consequent system has rank " + std::to_string(qr.rank()) + " < " +
                                                std::to_string(p) + "; use a positive ridge");
        theta = qr.solve(t);
    } else if (p <= rows) {
        Eigen::MatrixXd normal = a.transpose() * a;
        normal.diagonal().array() += ridge;
        const Eigen::LLT<Eigen::MatrixXd> llt(normal);
        if (llt.info() != Eigen::Success)
            fail(ErrorKind::SingularSystem, "ridge normal equations are not positive definite");
        theta = llt.solve(a.transpose() * t);
    } else {
        // More unknowns than samples: (A'A + lI)^-1 A' = A' (AA' + lI)^-1.
        Eigen::MatrixXd gram = a * a.transpose();
        gram.diagonal().array() += ridge;
        const Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success)
            fail(ErrorKind::SingularSystem, "ridge gram system is not positive definite");
        theta = a.transpose() * llt.solve(t);
    }
    if (!theta.allFinite())
        fail(ErrorKind::SingularSystem, "consequent solve produced non-finite coefficients");

    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(model.n_rules()); ++i) {
        Rule& rule = model.rules[static_cast<std::size_t>(i)];
        rule.coeffs = theta.segment(i * block, n_in);
        rule.intercept = theta(i * block + n_in);
    }
    return model;
}

Eigen::VectorXd premise_parameters(const AnfisModel& model) {
    const auto n_in = static_cast<Eigen::Index>(model.n_in());
    Eigen::VectorXd theta(static_cast<Eigen::Index>(model.n_rules()) * 2 * n_in);
    for (std::size_t i = 0; i < model.n_rules(); ++i) {
        const auto base = static_cast<Eigen::Index>(i) * 2 * n_in;
        theta.segment(base, n_in) = model.rules[i].center;
        theta.segment(base + n_in, n_in) = model.rules[i].sigma;
    }
    return theta;
}

void set_premise_parameters(AnfisModel& model, const Eigen::VectorXd& theta) {
    const auto n_in = static_cast<Eigen::Index>(model.n_in());
    if (theta.size() != static_cast<Eigen::Index>(model.n_rules()) * 2 * n_in)
        fail(ErrorKind::DimensionMismatch, "premise vector has the wrong length");
    for (std::size_t i = 0; i < model.n_rules(); ++i) {
        const auto base = static_cast<Eigen::Index>(i) * 2 * n_in;
        model.rules[i].center = theta.segment(base, n_in);
        model.rules[i].sigma = theta.segment(base + n_in, n_in);
    }
}

Eigen::VectorXd premise_gradient(const AnfisModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
    if (x.rows() != t.size() || x.rows() == 0)
        fail(ErrorKind::DimensionMismatch, "need one target per sample");
    const auto n_in = static_cast<Eigen::Index>(model.n_in());
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_rules()) * 2 * n_in);
    const double scale = 2.0 / static_cast<double>(x.rows());

    for (Eigen::Index s = 0; s < x.rows(); ++s) {
        const Eigen::VectorXd xs = x.row(s).transpose();
        const ForwardResult f = anfis_forward(model, xs);
        if (f.trace.underflow)
            continue; // normalized strengths are locally constant there
        const double err = scale * (f.y - t(s));
        for (std::size_t i = 0; i < model.n_rules(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            // dy/dw_i * w_i = wbar_i * (f_i - y)
            const double g = err * f.trace.normalized(ii) * (f.trace.consequent(ii) - f.y);
            if (g == 0.0)
                continue;
            const Rule& rule = model.rules[i];
            const auto base = ii * 2 * n_in;
            for (Eigen::Index j = 0; j < n_in; ++j) {
                const double d = xs(j) - rule.center(j);
                const double inv_s2 = 1.0 / (rule.sigma(j) * rule.sigma(j));
                grad(base + j) += g * d * inv_s2;
                grad(base + n_in + j) += g * d * d * inv_s2 / rule.sigma(j);
            }
        }
    }
    return grad;
}

double premise_gradient_check(const AnfisModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double h) {
    const Eigen::VectorXd analytic = premise_gradient(model, x, t);
    const Eigen::VectorXd theta = premise_parameters(model);
    AnfisModel probe = model;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        Eigen::VectorXd shifted = theta;
        shifted(k) = theta(k) + h;
        set_premise_parameters(probe, shifted);
        const double up = mse(probe, x, t);
        shifted(k) = theta(k) - h;
        set_premise_parameters(probe, shifted);
        const double down = mse(probe, x, t);
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic(k)), 1e-7});
        worst = std::max(worst, std::abs(numeric - analytic(k)) / denom);
    }
    return worst;
}

AnfisModel train_anfis(AnfisModel model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t, const TrainConfig& cfg,
                       double ridge) {
    cfg.validate();
    model.loss_history.clear();
    const auto n_in = static_cast<Eigen::Index>(model.n_in());

    auto record = [&](std::size_t epoch) {
        const double loss = mse(model, x, t);
        if (!std::isfinite(loss))
            fail(ErrorKind::NonFiniteLoss, "ANFIS training loss is not finite at epoch " + std::to_string(epoch));
        model.loss_history.push_back(loss);
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        model = fit_consequents_lse(std::move(model), x, t, ridge);
        record(epoch);
        Eigen::VectorXd theta = premise_parameters(model);
        theta -= cfg.learning_rate * premise_gradient(model, x, t);
        for (std::size_t i = 0; i < model.n_rules(); ++i) {
            const auto base = static_cast<Eigen::Index>(i) * 2 * n_in;
            for (Eigen::Index j = 0; j < n_in; ++j) {
                const double floor = 1e-6 * model.input_ranges[static_cast<std::size_t>(j)].width();
                theta(base + n_in + j) = std::max(theta(base + n_in + j), floor);
            }
        }
        if (!theta.allFinite())
            fail(ErrorKind::NonFiniteLoss, "premise update produced non-finite parameters");
        set_premise_parameters(model, theta);
    }
    model = fit_consequents_lse(std::move(model), x, t, ridge);
    record(cfg.epochs);
    return model;
}

std::string serialize(const AnfisModel& model) {
    std::ostringstream out;
    out << "anfis 1\n";
    out << model.n_in() << ' ' << model.n_rules() << '\n';
    out << "ranges";
    for (const auto& r : model.input_ranges)
        out << ' ' << csv::format_exact(r.min) << ' ' << csv::format_exact(r.max);
    out << '\n';
    out << "target_range " << csv::format_exact(model.target_range.min) << ' '
        << csv::format_exact(model.target_range.max) << '\n';
    auto vec = [&](const char* name, const Eigen::VectorXd& v) {
        out << name;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            out << ' ' << csv::format_exact(v(i));
        out << '\n';
    };
    for (const auto& rule : model.rules) {
        vec("c", rule.center);
        vec("sigma", rule.sigma);
        vec("p", rule.coeffs);
        out << "r " << csv::format_exact(rule.intercept) << '\n';
    }
    return out.str();
}

AnfisModel deserialize(const std::string& text) {
    std::istringstream in(text);
    auto expect = [&](const std::string& word) {
        std::string got;
        if (!(in >> got) || got != word)
            fail(ErrorKind::SchemaError, "anfis model: expected '" + word + "', got '" + got + "'");
    };
    auto number = [&]() {
        std::string token;
        if (!(in >> token))
            fail(ErrorKind::SchemaError, "anfis model: truncated");
        auto v = csv::parse_double(token);
        if (!v)
            fail(ErrorKind::SchemaError, "anfis model: bad number '" + token + "'");
        return *v;
    };
    expect("anfis");
    expect("1");
    std::size_t n_in = 0, n_rules = 0;
    if (!(in >> n_in >> n_rules))
        fail(ErrorKind::SchemaError, "anfis model: bad shape line");
    AnfisModel m;
    expect("ranges");
    for (std::size_t j = 0; j < n_in; ++j) {
        const double lo = number();
        m.input_ranges.push_back(Range{lo, number()});
    }
    expect("target_range");
    m.target_range.min = number();
    m.target_range.max = number();
    const auto n = static_cast<Eigen::Index>(n_in);
    for (std::size_t i = 0; i < n_rules; ++i) {
        Rule rule;
        rule.center.resize(n);
        rule.sigma.resize(n);
        rule.coeffs.resize(n);
        expect("c");
        for (Eigen::Index j = 0; j < n; ++j)
            rule.center(j) = number();
        expect("sigma");
        for (Eigen::Index j = 0; j < n; ++j)
            rule.sigma(j) = number();
        expect("p");
        for (Eigen::Index j = 0; j < n; ++j)
            rule.coeffs(j) = number();
        expect("r");
        rule.intercept = number();
        m.rules.push_back(std::move(rule));
    }
    return m;
}

} // namespace fundsel::anfis
