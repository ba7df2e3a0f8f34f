#include "fundsel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fundsel/csv.hpp"
#include "fundsel/error.hpp"
#include "fundsel/rng.hpp"

namespace fundsel::synth {

void SynthSpec::validate() const {
    if (n_stocks < 1)
        fail(ErrorKind::InvalidArgument, "synth needs at least one stock");
    if (n_quarters < 12)
        fail(ErrorKind::InvalidArgument, "synth needs at least 12 quarters");
    if (n_features < 1)
        fail(ErrorKind::InvalidArgument, "synth needs at least one feature");
    if (!signal_weights.empty() && signal_weights.size() != n_features)
        fail(ErrorKind::InvalidArgument, "signal_weights must have one entry per feature");
    if (!(signal_scale > 0.0))
        fail(ErrorKind::InvalidArgument, "signal_scale must be positive");
    if (!(signal_norm > 0.0))
        fail(ErrorKind::InvalidArgument, "signal_norm must be positive");
    if (!(noise_sigma >= 0.0))
        fail(ErrorKind::InvalidArgument, "noise_sigma must be non-negative");
    if (!(blank_fraction >= 0.0 && blank_fraction < 1.0))
        fail(ErrorKind::InvalidArgument, "blank_fraction must be in [0, 1)");
    if (!(feature_step > 0.0 && feature_step <= 0.1))
        fail(ErrorKind::InvalidArgument, "feature_step must be in (0, 0.1]");
    if (!(market_vol >= 0.0))
        fail(ErrorKind::InvalidArgument, "market_vol must be non-negative");
}

std::optional<double> TruthTable::lookup(const std::string& ticker, Quarter q) const {
    auto t = std::find(tickers.begin(), tickers.end(), ticker);
    auto qi = std::find(quarters.begin(), quarters.end(), q);
    if (t == tickers.end() || qi == quarters.end())
        return std::nullopt;
    const double v = at(static_cast<std::size_t>(t - tickers.begin()), static_cast<std::size_t>(qi - quarters.begin()));
    if (std::isnan(v))
        return std::nullopt;
    return v;
}

namespace {

std::string padded(char prefix, std::size_t i, std::size_t count) {
    const std::size_t width = std::max<std::size_t>(2, std::to_string(count).size());
    std::string digits = std::to_string(i + 1);
    return prefix + std::string(width - digits.size(), '0') + digits;
}

} // namespace

SynthData generate_panel(const SynthSpec& spec) {
    spec.validate();
    const std::size_t ns = spec.n_stocks, nq = spec.n_quarters, nf = spec.n_features;
    Rng rng(spec.seed);

    SynthData out;
    out.weights = spec.signal_weights;
    if (out.weights.empty()) {
        out.weights.resize(nf);
        double norm = 0.0;
        while (norm == 0.0) {
            for (auto& w : out.weights)
                w = rng.normal();
            norm = std::sqrt(std::inner_product(out.weights.begin(), out.weights.end(), out.weights.begin(), 0.0));
        }
        for (auto& w : out.weights)
            w *= spec.signal_norm / norm;
    }

    std::vector<Quarter> quarters;
    for (Quarter q = spec.start; quarters.size() < nq; q = next_quarter(q))
        quarters.push_back(q);

    // Benchmark random walk; market[i] is its return over axis quarter i.
    std::vector<double> market(nq, 0.0);
    std::vector<double> levels(nq);
    levels[0] = 1000.0;
    for (std::size_t i = 1; i < nq; ++i) {
        market[i] = std::max(rng.normal(spec.market_drift, spec.market_vol), -0.5);
        levels[i] = levels[i - 1] * (1.0 + market[i]);
    }

    std::vector<std::string> tickers, features;
    for (std::size_t i = 0; i < ns; ++i)
        tickers.push_back(padded('S', i, ns));
    for (std::size_t f = 0; f < nf; ++f)
        features.push_back(padded('f', f, nf));

    std::vector<std::optional<double>> values(ns * nq * nf);
    std::vector<std::optional<double>> prices(ns * nq);
    out.truth.tickers = tickers;
    out.truth.quarters = quarters;
    out.truth.values.assign(ns * nq, std::numeric_limits<double>::quiet_NaN());
    out.planted_returns.assign(ns, std::vector<double>(nq - 1));

    for (std::size_t t = 0; t < ns; ++t) {
        // x[i] drives the level change into axis quarter i (i >= 1).
        std::vector<double> x(nq * nf, 0.0);
        std::vector<double> level(nf);
        for (std::size_t f = 0; f < nf; ++f)
            level[f] = 10.0 * std::exp(rng.normal());
        for (std::size_t i = 0; i < nq; ++i) {
            for (std::size_t f = 0; f < nf; ++f) {
                if (i > 0) {
                    x[i * nf + f] = rng.normal();
                    level[f] *= 1.0 + spec.feature_step * x[i * nf + f];
                }
                values[(t * nq + i) * nf + f] = level[f];
            }
        }

        double price = 100.0;
        prices[t * nq] = price;
        for (std::size_t i = 1; i < nq; ++i) {
            double expected = 0.0;
            if (i >= 2) {
                const std::size_t formation = i - 1;
                double z = 0.0;
                for (std::size_t f = 0; f < nf; ++f)
                    z += out.weights[f] * x[formation * nf + f];
                expected = spec.signal_scale * std::tanh(z);
                out.truth.values[t * nq + formation] = expected;
            }
            double r = expected + spec.noise_sigma * rng.normal();
            // Keep the price strictly positive whatever the draw.
            r = std::max(r, -0.95 - market[i]);
            out.planted_returns[t][i - 1] = r;
            price *= 1.0 + market[i] + r;
            prices[t * nq + i] = price;
        }
    }

    if (spec.blank_fraction > 0.0) {
        for (auto& v : values)
            if (rng.uniform() < spec.blank_fraction)
                v.reset();
    }

    out.panel = panel::QuarterlyPanel(tickers, quarters, features, std::move(values), std::move(prices));
    out.bench = panel::BenchmarkSeries(quarters, levels);
    return out;
}

namespace {

std::vector<double> truth_column(const TruthTable& truth, Quarter q) {
    auto qi = std::find(truth.quarters.begin(), truth.quarters.end(), q);
    if (qi == truth.quarters.end())
        fail(ErrorKind::MissingSample, q.to_string() + " is outside the truth table");
    const auto j = static_cast<std::size_t>(qi - truth.quarters.begin());
    std::vector<double> col;
    for (std::size_t t = 0; t < truth.tickers.size(); ++t) {
        const double v = truth.at(t, j);
        if (std::isnan(v))
            fail(ErrorKind::MissingSample, q.to_string() + " has no formation truth");
        col.push_back(v);
    }
    return col;
}

} // namespace

double oracle_spread(const TruthTable& truth, std::size_t k, const std::vector<Quarter>& formation_quarters) {
    if (formation_quarters.empty())
        return 0.0;
    if (k == 0 || 2 * k > truth.tickers.size())
        fail(ErrorKind::UniverseTooSmall, "oracle spread needs 2k <= universe size");
    double total = 0.0;
    for (Quarter q : formation_quarters) {
        std::vector<double> col = truth_column(truth, q);
        std::sort(col.begin(), col.end());
        double bottom = 0.0, top = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            bottom += col[j];
            top += col[col.size() - 1 - j];
        }
        total += (top - bottom) / static_cast<double>(k);
    }
    return total / static_cast<double>(formation_quarters.size());
}

double truth_mean(const TruthTable& truth, const std::vector<std::string>& members, Quarter q) {
    if (members.empty())
        fail(ErrorKind::InvalidArgument, "no members");
    double sum = 0.0;
    for (const auto& m : members) {
        auto v = truth.lookup(m, q);
        if (!v)
            fail(ErrorKind::MissingSample, m + " has no truth at " + q.to_string());
        sum += *v;
    }
    return sum / static_cast<double>(members.size());
}

void write_synth(const SynthData& data, const std::filesystem::path& root) {
    panel::write_panel(data.panel, root);
    panel::write_benchmark(data.bench, root / "benchmark.csv");

    std::ostringstream truth;
    truth << "ticker,quarter,expected\n";
    for (std::size_t t = 0; t < data.truth.tickers.size(); ++t)
        for (std::size_t q = 0; q < data.truth.quarters.size(); ++q)
            if (!std::isnan(data.truth.at(t, q)))
                truth << data.truth.tickers[t] << ',' << data.truth.quarters[q].to_string() << ','
                      << csv::format_exact(data.truth.at(t, q)) << '\n';
    csv::write_text(root / "truth.csv", truth.str());

    std::ostringstream weights;
    weights << "feature,weight\n";
    for (std::size_t f = 0; f < data.weights.size(); ++f)
        weights << data.panel.features()[f] << ',' << csv::format_exact(data.weights[f]) << '\n';
    csv::write_text(root / "weights.csv", weights.str());
}

} // namespace fundsel::synth
