#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fundsel/quarter.hpp"

namespace fundsel::panel {

/// Per-ticker, per-quarter fundamentals with explicit missing values, plus
/// quarter-end prices. Immutable once constructed; the constructor enforces
/// the invariants (consecutive quarters, unique names, positive prices).
class QuarterlyPanel {
public:
    QuarterlyPanel() = default;

    /// `values` is laid out [ticker][quarter][feature], `prices` [ticker][quarter].
    /// `first_observed` may be left empty, in which case it is derived from the data.
    QuarterlyPanel(std::vector<std::string> tickers, std::vector<Quarter> quarters,
                   std::vector<std::string> features, std::vector<std::optional<double>> values,
                   std::vector<std::optional<double>> prices,
                   std::vector<std::optional<Quarter>> first_observed = {});

    const std::vector<std::string>& tickers() const { return tickers_; }
    const std::vector<Quarter>& quarters() const { return quarters_; }
    const std::vector<std::string>& features() const { return features_; }
    std::size_t n_tickers() const { return tickers_.size(); }
    std::size_t n_quarters() const { return quarters_.size(); }
    std::size_t n_features() const { return features_.size(); }

    const std::optional<double>& value(std::size_t ticker, std::size_t quarter, std::size_t feature) const {
        return values_[(ticker * n_quarters() + quarter) * n_features() + feature];
    }
    const std::optional<double>& price(std::size_t ticker, std::size_t quarter) const {
        return prices_[ticker * n_quarters() + quarter];
    }
    /// Earliest quarter with any fundamental value or price. Survives
    /// windowing, so it still reflects data outside the current axis.
    const std::optional<Quarter>& first_observed(std::size_t ticker) const { return first_observed_[ticker]; }

    std::optional<std::size_t> ticker_index(const std::string& ticker) const;
    std::optional<std::size_t> quarter_index(Quarter q) const;
    std::optional<std::size_t> feature_index(const std::string& name) const;

    std::size_t missing_count() const;
    std::size_t missing_count(std::size_t feature) const;

    const std::vector<std::optional<double>>& raw_values() const { return values_; }
    const std::vector<std::optional<double>>& raw_prices() const { return prices_; }
    const std::vector<std::optional<Quarter>>& raw_first_observed() const { return first_observed_; }

    friend bool operator==(const QuarterlyPanel&, const QuarterlyPanel&) = default;

private:
    std::vector<std::string> tickers_;
    std::vector<Quarter> quarters_;
    std::vector<std::string> features_;
    std::vector<std::optional<double>> values_;
    std::vector<std::optional<double>> prices_;
    std::vector<std::optional<Quarter>> first_observed_;
};

/// Quarterly index levels of the market benchmark.
class BenchmarkSeries {
public:
    BenchmarkSeries() = default;
    BenchmarkSeries(std::vector<Quarter> quarters, std::vector<double> levels);

    const std::vector<Quarter>& quarters() const { return quarters_; }
    const std::vector<double>& levels() const { return levels_; }
    std::size_t size() const { return quarters_.size(); }

    std::optional<double> level_at(Quarter q) const;
    bool covers(Quarter first, Quarter last) const;

    friend bool operator==(const BenchmarkSeries&, const BenchmarkSeries&) = default;

private:
    std::vector<Quarter> quarters_;
    std::vector<double> levels_;
};

/// On-disk layout below a data root.
struct PanelLayout {
    std::filesystem::path fundamentals_dir = "fundamentals";
    std::filesystem::path prices_file = "prices.csv";
    std::filesystem::path benchmark_file = "benchmark.csv";
    /// Universe to load. Empty means every ticker listed in the prices file.
    std::vector<std::string> tickers;
};

struct CellCounts {
    std::size_t missing = 0;     // empty or NA cells present in the file
    std::size_t unparseable = 0; // non-numeric tokens turned into missing values
};

struct LoadReport {
    /// Keyed by (ticker, feature); price cells use the feature name "close".
    std::map<std::pair<std::string, std::string>, CellCounts> cells;
    /// Cells implied missing because a ticker's file lacks a quarter row
    /// that other files cover.
    std::size_t absent_row_cells = 0;
    std::vector<std::string> warnings;

    std::size_t total_missing() const;
    std::size_t total_unparseable() const;
};

struct LoadedPanel {
    QuarterlyPanel panel;
    LoadReport report;
};

LoadedPanel load_panel(const std::filesystem::path& root, const PanelLayout& layout = {});
BenchmarkSeries load_benchmark(const std::filesystem::path& path);

/// Writes the panel in the layout load_panel reads. Every axis quarter is
/// written for every ticker, missing cells as NA.
void write_panel(const QuarterlyPanel& panel, const std::filesystem::path& root,
                 const PanelLayout& layout = {});
void write_benchmark(const BenchmarkSeries& bench, const std::filesystem::path& path);

struct WindowResult {
    QuarterlyPanel panel;
    std::vector<std::string> dropped;
};

/// Clips the quarter axis to [start, end] and drops tickers first observed
/// after `start`. Throws EmptyUniverse when nothing is left.
WindowResult restrict_window(const QuarterlyPanel& panel, Quarter start, Quarter end);

} // namespace fundsel::panel
