#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fundsel/panel.hpp"
#include "fundsel/quarter.hpp"

namespace fundsel::synth {

/// Synthetic universe with a planted link from fundamentals to the next
/// quarter's relative return: r_{t+1} = scale * tanh(w . x_t) + noise.
///
/// Fundamentals are stored as positive level series whose fractional change
/// into quarter t is feature_step * x_t, so stationarizing recovers x_t up to
/// that constant factor.
struct SynthSpec {
    std::size_t n_stocks = 70;
    std::size_t n_quarters = 88;
    std::size_t n_features = 20; // plus the momentum feature added in preprocessing
    /// Planted w. Empty draws a seeded direction scaled to `signal_norm`.
    std::vector<double> signal_weights;
    double signal_norm = 1.0;
    double signal_scale = 0.04;
    double noise_sigma = 0.03;
    std::uint64_t seed = 1;
    double blank_fraction = 0.0;
    double feature_step = 0.05;
    double market_drift = 0.015;
    double market_vol = 0.07;
    Quarter start{1996, 1};

    void validate() const;
};

/// Noiseless expected relative return keyed by formation quarter: the value
/// at (ticker, t) is realized over quarter t + 1.
struct TruthTable {
    std::vector<std::string> tickers;
    std::vector<Quarter> quarters;
    /// [ticker][quarter]; NaN where no formation exists (first and last axis
    /// quarter).
    std::vector<double> values;

    double at(std::size_t ticker, std::size_t quarter) const { return values[ticker * quarters.size() + quarter]; }
    std::optional<double> lookup(const std::string& ticker, Quarter q) const;
};

struct SynthData {
    panel::QuarterlyPanel panel;
    panel::BenchmarkSeries bench;
    TruthTable truth;
    std::vector<double> weights;
    /// Realized relative return over each axis quarter i >= 1, [ticker][i - 1].
    std::vector<std::vector<double>> planted_returns;
};

SynthData generate_panel(const SynthSpec& spec);

/// Mean over `formation_quarters` of (top-k truth mean - bottom-k truth mean).
double oracle_spread(const TruthTable& truth, std::size_t k, const std::vector<Quarter>& formation_quarters);

/// Truth values of `members` at formation quarter q, averaged.
double truth_mean(const TruthTable& truth, const std::vector<std::string>& members, Quarter q);

/// Panel and benchmark in the ingestion layout, plus truth.csv and weights.csv.
void write_synth(const SynthData& data, const std::filesystem::path& root);

} // namespace fundsel::synth
