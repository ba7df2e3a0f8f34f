#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fundsel/anfis.hpp"
#include "fundsel/backtest.hpp"
#include "fundsel/cli.hpp"
#include "fundsel/csv.hpp"
#include "fundsel/fnn.hpp"
#include "fundsel/preprocess.hpp"
#include "fundsel/rng.hpp"
#include "fundsel/synth.hpp"

namespace fundsel::cli {

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = rng.uniform(lo, hi);
    return m;
}

std::string sci(double v) { return csv::format_sig(v, 3); }

CheckResult fnn_gradient(bool sabotage) {
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        fnn::FnnModel m = fnn::init_fnn(21, 21, 1000 + trial);
        const Eigen::MatrixXd x = random_matrix(rng, 4, 21);
        const Eigen::VectorXd t = random_matrix(rng, 4, 1, -0.1, 0.1);
        m.scaler = fnn::fit_target_scaler(t);
        Eigen::VectorXd unit(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i)
            unit(i) = m.scaler->scale(t(i));
        Eigen::VectorXd analytic = fnn::mse_gradient(m, x, unit).theta;
        if (sabotage)
            analytic(0) += 1e-2 + std::abs(analytic(0));
        worst = std::max(worst, fnn::compare_with_finite_differences(m, x, t, 1e-5, analytic));
    }
    return {"gradient_check", worst < 1e-4, "max rel err " + sci(worst)};
}

anfis::AnfisModel random_rule_base(Rng& rng, std::size_t n_in, std::size_t n_rules) {
    anfis::AnfisModel m;
    for (std::size_t j = 0; j < n_in; ++j)
        m.input_ranges.push_back({-1.0, 1.0});
    m.target_range = {-1.0, 1.0};
    for (std::size_t r = 0; r < n_rules; ++r) {
        anfis::Rule rule;
        rule.center = random_matrix(rng, static_cast<Eigen::Index>(n_in), 1);
        rule.sigma = random_matrix(rng, static_cast<Eigen::Index>(n_in), 1, 0.5, 1.5);
        rule.coeffs = random_matrix(rng, static_cast<Eigen::Index>(n_in), 1);
        rule.intercept = rng.uniform(-1.0, 1.0);
        m.rules.push_back(std::move(rule));
    }
    return m;
}

CheckResult anfis_gradient() {
    Rng rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        const auto m = random_rule_base(rng, 4, 3);
        const Eigen::MatrixXd x = random_matrix(rng, 4, 4);
        const Eigen::VectorXd t = random_matrix(rng, 4, 1);
        worst = std::max(worst, anfis::premise_gradient_check(m, x, t, 1e-5));
    }
    return {"anfis_gradient_check", worst < 1e-4, "max rel err " + sci(worst)};
}

// Recomputes every potential from scratch at each step.
std::vector<std::size_t> cluster_oracle(const Eigen::MatrixXd& p, const anfis::SubClustConfig& cfg) {
    const auto n = static_cast<std::size_t>(p.rows());
    auto d2 = [&](std::size_t a, std::size_t b) {
        const auto lo = static_cast<Eigen::Index>(std::min(a, b)), hi = static_cast<Eigen::Index>(std::max(a, b));
        double s = 0.0;
        for (Eigen::Index k = 0; k < p.cols(); ++k)
            s += (p(lo, k) - p(hi, k)) * (p(lo, k) - p(hi, k));
        return s;
    };
    const double alpha = 4.0 / (cfg.radius * cfg.radius);
    const double rb = cfg.squash * cfg.radius;
    const double beta = 4.0 / (rb * rb);
    std::vector<std::size_t> chosen;
    std::vector<double> chosen_p;
    std::vector<bool> rejected(n, false);
    double p1 = 0.0;
    for (;;) {
        std::size_t best = 0;
        double best_p = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            // A rejected point can never be selected again.
            double v = -std::numeric_limits<double>::infinity();
            if (!rejected[i]) {
                v = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    v += std::exp(-alpha * d2(i, j));
                for (std::size_t c = 0; c < chosen.size(); ++c)
                    v -= chosen_p[c] * std::exp(-beta * d2(i, chosen[c]));
            }
            if (v > best_p) {
                best_p = v;
                best = i;
            }
        }
        if (chosen.empty()) {
            p1 = best_p;
        } else if (best_p < cfg.accept_ratio * p1) {
            if (best_p < cfg.reject_ratio * p1)
                break;
            double dmin = std::numeric_limits<double>::infinity();
            for (auto c : chosen)
                dmin = std::min(dmin, std::sqrt(d2(best, c)));
            if (dmin / cfg.radius + best_p / p1 < 1.0) {
                rejected[best] = true;
                continue;
            }
        }
        chosen.push_back(best);
        chosen_p.push_back(best_p);
    }
    return chosen;
}

CheckResult clustering() {
    Rng rng(303);
    for (int trial = 0; trial < 5; ++trial) {
        const auto n = static_cast<Eigen::Index>(10 + rng.below(40));
        const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
        const Eigen::MatrixXd p = random_matrix(rng, n, d, 0.0, 1.0);
        if (anfis::subtractive_cluster(p).indices != cluster_oracle(p, {}))
            return {"clustering_oracle", false, "fixture " + std::to_string(trial) + " disagrees"};
    }
    return {"clustering_oracle", true, "5 fixtures"};
}

CheckResult lse_recovery() {
    anfis::AnfisModel m;
    m.input_ranges = {{-1.0, 1.0}, {-1.0, 1.0}};
    m.target_range = {-3.0, 3.0};
    anfis::Rule a, b;
    a.center = Eigen::Vector2d(-0.5, -0.5);
    a.sigma = Eigen::Vector2d(0.6, 0.6);
    a.coeffs = Eigen::Vector2d::Zero();
    b.center = Eigen::Vector2d(0.5, 0.5);
    b.sigma = Eigen::Vector2d(0.6, 0.6);
    b.coeffs = Eigen::Vector2d::Zero();
    m.rules = {a, b};

    anfis::AnfisModel truth = m;
    truth.rules[0].coeffs = Eigen::Vector2d(1.5, -0.7);
    truth.rules[0].intercept = 0.3;
    truth.rules[1].coeffs = Eigen::Vector2d(-0.4, 2.0);
    truth.rules[1].intercept = -1.1;

    Rng rng(404);
    const Eigen::MatrixXd x = random_matrix(rng, 40, 2);
    Eigen::VectorXd t(40);
    for (Eigen::Index i = 0; i < 40; ++i)
        t(i) = anfis::anfis_predict(truth, x.row(i).transpose());
    const auto fit = anfis::fit_consequents_lse(m, x, t, 0.0);
    double err = 0.0;
    for (std::size_t r = 0; r < 2; ++r) {
        err = std::max(err, (fit.rules[r].coeffs - truth.rules[r].coeffs).cwiseAbs().maxCoeff());
        err = std::max(err, std::abs(fit.rules[r].intercept - truth.rules[r].intercept));
    }
    const double rmse = std::sqrt(anfis::mse(fit, x, t));
    return {"lse_recovery", err < 1e-6 && rmse < 1e-8, "coef err " + sci(err) + ", rmse " + sci(rmse)};
}

CheckResult normalization() {
    Rng rng(505);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const auto m = random_rule_base(rng, 3, 4);
        for (int s = 0; s < 50; ++s) {
            const Eigen::VectorXd x = random_matrix(rng, 3, 1, -3.0, 3.0);
            worst = std::max(worst, std::abs(anfis::anfis_forward(m, x).trace.normalized.sum() - 1.0));
        }
    }
    return {"normalization", worst <= 1e-12, "max |sum - 1| " + sci(worst)};
}

CheckResult portfolio() {
    Rng rng(606);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(30);
        const std::size_t k = 1 + rng.below(n / 2);
        backtest::CrossSection cs;
        for (std::size_t i = 0; i < n; ++i) {
            cs.tickers.push_back("T" + std::to_string(rng.below(1000000)) + "_" + std::to_string(i));
            cs.scores.push_back(static_cast<double>(rng.below(5)));
            cs.realized.push_back(0.0);
        }
        auto [buy, sell] = backtest::construct_portfolios(cs, k);

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](auto a, auto b) {
            return cs.scores[a] != cs.scores[b] ? cs.scores[a] > cs.scores[b] : cs.tickers[a] < cs.tickers[b];
        });
        std::vector<std::string> want_buy, want_sell;
        for (std::size_t j = 0; j < k; ++j)
            want_buy.push_back(cs.tickers[order[j]]);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) {
            return cs.scores[a] != cs.scores[b] ? cs.scores[a] < cs.scores[b] : cs.tickers[a] < cs.tickers[b];
        });
        for (auto i : order) {
            if (want_sell.size() == k)
                break;
            if (std::find(want_buy.begin(), want_buy.end(), cs.tickers[i]) == want_buy.end())
                want_sell.push_back(cs.tickers[i]);
        }
        if (buy.members != want_buy || sell.members != want_sell)
            return {"portfolio_oracle", false, "trial " + std::to_string(trial) + " disagrees"};
    }
    return {"portfolio_oracle", true, "200 score vectors"};
}

CheckResult accounting() {
    synth::SynthSpec spec;
    spec.n_stocks = 8;
    spec.n_quarters = 24;
    spec.n_features = 3;
    spec.seed = 7;
    const auto data = synth::generate_panel(spec);
    const auto ds = preprocess::build_dataset(data.panel, data.bench);

    backtest::BacktestConfig cfg;
    cfg.k = 2;
    cfg.models.fnn_hidden = 4;
    cfg.models.fnn.epochs = 20;
    cfg.models.fnn.batch_size = 4;
    const auto report = backtest::run_backtest(ds, backtest::Algo::Fnn, cfg);
    double worst = 0.0;
    for (const auto& q : report.final_stage.quarters) {
        const double k = static_cast<double>(cfg.k);
        const double n = static_cast<double>(q.universe);
        const double lhs = k * q.buy + k * q.sell + (n - 2.0 * k) * q.middle;
        worst = std::max(worst, std::abs(lhs - n * q.full_sample));
    }
    return {"accounting_identity", worst <= 1e-12, "max residual " + sci(worst)};
}

} // namespace

std::vector<CheckResult> run_selfcheck(const std::string& fault) {
    std::vector<CheckResult> out;
    auto guarded = [&out](const char* name, auto&& fn) {
        try {
            out.push_back(fn());
        } catch (const std::exception& e) {
            out.push_back({name, false, e.what()});
        }
    };
    guarded("gradient_check", [&] { return fnn_gradient(fault == "gradient_check"); });
    guarded("anfis_gradient_check", anfis_gradient);
    guarded("clustering_oracle", clustering);
    guarded("lse_recovery", lse_recovery);
    guarded("normalization", normalization);
    guarded("portfolio_oracle", portfolio);
    guarded("accounting_identity", accounting);
    return out;
}

} // namespace fundsel::cli
