#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fundsel/panel.hpp"
#include "fundsel/quarter.hpp"

namespace fundsel::preprocess {

using OptionalSeries = std::vector<std::optional<double>>;

struct SparseDropResult {
    panel::QuarterlyPanel panel;
    std::vector<std::string> dropped;
    /// Panel-wide missing fraction of every input feature, in input order.
    std::vector<std::pair<std::string, double>> missing_fraction;
};

/// Removes features whose panel-wide missing fraction exceeds the threshold.
SparseDropResult drop_sparse_features(const panel::QuarterlyPanel& panel, double max_missing_frac);

/// Period-over-period fractional change. Output has one element fewer than
/// the input; an entry is missing when either endpoint is missing or the
/// earlier value is zero.
OptionalSeries stationarize(const OptionalSeries& series);

/// Fills each gap with the mean of the nearest observed values on either side,
/// or copies the single side that exists.
std::vector<double> impute_neighbor_mean(const OptionalSeries& series);

/// Point-in-time variant: the value at t only sees entries up to t, so a gap
/// takes the latest earlier observation. Leading gaps (nothing observed yet)
/// become `leading_fill`.
std::vector<double> impute_causal(const OptionalSeries& series, double leading_fill = 0.0);

struct StandardizationStats {
    std::vector<std::string> features;
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t size() const { return features.size(); }
    /// (x - mean) / stddev, column by column.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;

    friend bool operator==(const StandardizationStats&, const StandardizationStats&) = default;
};

struct FittedStats {
    StandardizationStats stats;
    /// Columns with zero sample variance; callers drop them.
    std::vector<std::size_t> zero_variance;
};

/// Per-column mean and sample standard deviation (n - 1 denominator).
FittedStats fit_standardization(const Eigen::MatrixXd& train_rows, std::vector<std::string> names);

struct RelativeReturnSeries {
    std::string ticker;
    std::vector<Quarter> quarters; // quarter t of each return (p_{t-1} -> p_t)
    std::vector<double> values;

    std::optional<double> at(Quarter q) const;
};

/// r_t = (p_t / p_{t-1} - 1) - (b_t / b_{t-1} - 1) wherever both series have
/// t and t-1. `prices[i]` belongs to `quarters[i]`, which must be consecutive.
RelativeReturnSeries relative_returns(const std::string& ticker, const std::vector<Quarter>& quarters,
                                      const OptionalSeries& prices, const panel::BenchmarkSeries& bench);

enum class Split { Train, Validation, Test };
enum class StatsRange { Train, TrainValidation };
enum class Imputation { Causal, TwoSided, Off };

std::string to_string(Split s);
std::string to_string(StatsRange r);
std::string to_string(Imputation m);
std::optional<Imputation> parse_imputation(const std::string& text);

/// Index boundaries on the common sample axis: train [0, train_end),
/// validation [train_end, validation_end), test [validation_end, n).
struct SplitRanges {
    std::size_t train_end = 0;
    std::size_t validation_end = 0;
    std::size_t n = 0;

    std::pair<std::size_t, std::size_t> range(Split s) const;
    std::size_t count(Split s) const;
    Split which(std::size_t index) const;

    friend bool operator==(const SplitRanges&, const SplitRanges&) = default;
};

/// floor(train_frac * n), floor(validation_frac * n), remainder to test.
SplitRanges split_counts(std::size_t n, double train_frac, double validation_frac);

struct PreprocessConfig {
    double max_missing_frac = 0.20;
    Imputation imputation = Imputation::Causal;
    double train_frac = 0.6;
    double validation_frac = 0.2;
    double test_frac = 0.2;
    StatsRange stats_range = StatsRange::Train;
    std::size_t min_samples = 10;
    std::string momentum_feature = "rel_return";

    void validate() const;
};

/// Supervised samples for the whole universe on one common quarter axis.
/// Row s of `x[i]` is the standardized feature vector of ticker i at
/// `sample_quarters[s]`; `y[i](s)` is the relative return realized over the
/// following quarter.
struct Dataset {
    std::vector<std::string> tickers;
    std::vector<std::string> feature_names;
    std::vector<Quarter> sample_quarters;
    std::vector<Eigen::MatrixXd> x;
    std::vector<Eigen::VectorXd> y;
    /// Imputed, unstandardized features. Empty for datasets read back from disk.
    std::vector<Eigen::MatrixXd> raw_x;
    SplitRanges split;
    StatsRange stats_range = StatsRange::Train;
    std::shared_ptr<const StandardizationStats> stats;

    std::vector<std::string> dropped_tickers;
    std::vector<std::string> dropped_features;
    std::vector<std::string> warnings;

    std::size_t n_tickers() const { return tickers.size(); }
    std::size_t n_samples() const { return sample_quarters.size(); }
    std::size_t n_features() const { return feature_names.size(); }
    std::optional<std::size_t> ticker_index(const std::string& ticker) const;
    std::optional<std::size_t> sample_index(Quarter q) const;
    /// Quarter over which y at sample s is realized.
    Quarter holding_quarter(std::size_t s) const { return next_quarter(sample_quarters[s]); }
};

/// Full pipeline: sparse-feature dropping, stationarization, imputation,
/// momentum feature, target alignment, split, standardization.
Dataset build_dataset(const panel::QuarterlyPanel& panel, const panel::BenchmarkSeries& bench,
                      const PreprocessConfig& config = {});

/// Re-fits the standardization on a different range of the same samples.
/// Requires `raw_x`.
Dataset with_stats_range(const Dataset& dataset, StatsRange range);

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

} // namespace fundsel::preprocess
