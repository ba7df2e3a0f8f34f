#include "fundsel/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fundsel/csv.hpp"
#include "fundsel/error.hpp"

namespace fundsel::preprocess {

using panel::BenchmarkSeries;
using panel::QuarterlyPanel;

SparseDropResult drop_sparse_features(const QuarterlyPanel& panel, double max_missing_frac) {
    if (!(max_missing_frac >= 0.0 && max_missing_frac <= 1.0))
        fail(ErrorKind::InvalidArgument, "max_missing_frac must lie in [0, 1]");

    const double cells = static_cast<double>(panel.n_tickers() * panel.n_quarters());
    SparseDropResult result;
    std::vector<std::size_t> keep;
    for (std::size_t f = 0; f < panel.n_features(); ++f) {
        const double frac = cells > 0 ? static_cast<double>(panel.missing_count(f)) / cells : 0.0;
        result.missing_fraction.emplace_back(panel.features()[f], frac);
        if (frac > max_missing_frac)
            result.dropped.push_back(panel.features()[f]);
        else
            keep.push_back(f);
    }
    if (keep.empty())
        fail(ErrorKind::AllFeaturesDropped,
             "every feature exceeds the missing-value threshold " + csv::format_exact(max_missing_frac));

    const std::size_t nt = panel.n_tickers(), nq = panel.n_quarters(), nf = keep.size();
    std::vector<std::string> names;
    for (auto f : keep)
        names.push_back(panel.features()[f]);
    std::vector<std::optional<double>> values(nt * nq * nf);
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t q = 0; q < nq; ++q)
            for (std::size_t k = 0; k < nf; ++k)
                values[(t * nq + q) * nf + k] = panel.value(t, q, keep[k]);

    result.panel = QuarterlyPanel(panel.tickers(), panel.quarters(), std::move(names), std::move(values),
                                  panel.raw_prices(), panel.raw_first_observed());
    return result;
}

OptionalSeries stationarize(const OptionalSeries& series) {
    if (series.size() < 2)
        fail(ErrorKind::SeriesTooShort, "stationarize needs at least two observations");
    OptionalSeries out(series.size() - 1);
    for (std::size_t t = 1; t < series.size(); ++t) {
        const auto& prev = series[t - 1];
        const auto& cur = series[t];
        if (prev && cur && *prev != 0.0)
            out[t - 1] = (*cur - *prev) / *prev;
    }
    return out;
}

std::vector<double> impute_neighbor_mean(const OptionalSeries& series) {
    const std::size_t n = series.size();
    std::vector<std::optional<std::size_t>> before(n), after(n);
    std::optional<std::size_t> last;
    for (std::size_t i = 0; i < n; ++i) {
        before[i] = last;
        if (series[i])
            last = i;
    }
    if (!last)
        fail(ErrorKind::AllMissing, "series has no observed value to impute from");
    last.reset();
    for (std::size_t i = n; i-- > 0;) {
        after[i] = last;
        if (series[i])
            last = i;
    }

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (series[i]) {
            out[i] = *series[i];
        } else if (before[i] && after[i]) {
            out[i] = (*series[*before[i]] + *series[*after[i]]) / 2.0;
        } else {
            out[i] = *series[before[i] ? *before[i] : *after[i]];
        }
    }
    return out;
}

std::vector<double> impute_causal(const OptionalSeries& series, double leading_fill) {
    std::vector<double> out(series.size());
    std::optional<double> last;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i])
            last = series[i];
        out[i] = last ? *last : leading_fill;
    }
    return out;
}

Eigen::MatrixXd StandardizationStats::apply(const Eigen::MatrixXd& rows) const {
    if (static_cast<std::size_t>(rows.cols()) != size())
        fail(ErrorKind::DimensionMismatch, "standardization expects " + std::to_string(size()) + " columns");
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c)
        for (Eigen::Index r = 0; r < rows.rows(); ++r)
            out(r, c) = (rows(r, c) - mean[c]) / stddev[c];
    return out;
}

FittedStats fit_standardization(const Eigen::MatrixXd& train_rows, std::vector<std::string> names) {
    if (train_rows.rows() < 2)
        fail(ErrorKind::TooFewRows, "standardization needs at least two training rows");
    if (static_cast<std::size_t>(train_rows.cols()) != names.size())
        fail(ErrorKind::DimensionMismatch, "one feature name per column required");

    FittedStats fitted;
    fitted.stats.features = std::move(names);
    const auto n = static_cast<double>(train_rows.rows());
    for (Eigen::Index c = 0; c < train_rows.cols(); ++c) {
        double sum = 0.0;
        for (Eigen::Index r = 0; r < train_rows.rows(); ++r)
            sum += train_rows(r, c);
        const double mean = sum / n;
        double ss = 0.0;
        for (Eigen::Index r = 0; r < train_rows.rows(); ++r) {
            const double d = train_rows(r, c) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / (n - 1.0));
        fitted.stats.mean.push_back(mean);
        fitted.stats.stddev.push_back(sd);
        const bool constant = train_rows.col(c).maxCoeff() == train_rows.col(c).minCoeff();
        if (constant || !(sd > 0.0))
            fitted.zero_variance.push_back(static_cast<std::size_t>(c));
    }
    return fitted;
}

std::optional<double> RelativeReturnSeries::at(Quarter q) const {
    auto it = std::lower_bound(quarters.begin(), quarters.end(), q);
    if (it == quarters.end() || *it != q)
        return std::nullopt;
    return values[static_cast<std::size_t>(it - quarters.begin())];
}

RelativeReturnSeries relative_returns(const std::string& ticker, const std::vector<Quarter>& quarters,
                                      const OptionalSeries& prices, const BenchmarkSeries& bench) {
    if (quarters.size() != prices.size())
        fail(ErrorKind::DimensionMismatch, "one price per quarter required");
    RelativeReturnSeries out;
    out.ticker = ticker;
    std::size_t overlap = 0;
    for (std::size_t i = 0; i < quarters.size(); ++i) {
        if (prices[i] && bench.level_at(quarters[i]))
            ++overlap;
        if (i == 0)
            continue;
        if (quarters[i] != next_quarter(quarters[i - 1]))
            fail(ErrorKind::InvalidArgument, "price quarters must be consecutive");
        const auto b0 = bench.level_at(quarters[i - 1]);
        const auto b1 = bench.level_at(quarters[i]);
        if (!prices[i - 1] || !prices[i] || !b0 || !b1)
            continue;
        const double stock = *prices[i] / *prices[i - 1] - 1.0;
        const double market = *b1 / *b0 - 1.0;
        out.quarters.push_back(quarters[i]);
        out.values.push_back(stock - market);
    }
    if (overlap < 2 || out.values.empty())
        fail(ErrorKind::NoOverlap, ticker + ": prices and benchmark share fewer than two consecutive quarters");
    return out;
}

std::string to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    }
    return "?";
}

std::string to_string(StatsRange r) {
    return r == StatsRange::Train ? "train" : "train+validation";
}

std::string to_string(Imputation m) {
    switch (m) {
    case Imputation::Causal: return "causal";
    case Imputation::TwoSided: return "two_sided";
    case Imputation::Off: return "off";
    }
    return "?";
}

std::optional<Imputation> parse_imputation(const std::string& text) {
    if (text == "causal" || text == "on")
        return Imputation::Causal;
    if (text == "two_sided")
        return Imputation::TwoSided;
    if (text == "off")
        return Imputation::Off;
    return std::nullopt;
}

std::pair<std::size_t, std::size_t> SplitRanges::range(Split s) const {
    switch (s) {
    case Split::Train: return {0, train_end};
    case Split::Validation: return {train_end, validation_end};
    case Split::Test: return {validation_end, n};
    }
    return {0, 0};
}

std::size_t SplitRanges::count(Split s) const {
    auto [a, b] = range(s);
    return b - a;
}

Split SplitRanges::which(std::size_t index) const {
    if (index < train_end)
        return Split::Train;
    if (index < validation_end)
        return Split::Validation;
    return Split::Test;
}

SplitRanges split_counts(std::size_t n, double train_frac, double validation_frac) {
    // The epsilon keeps products like 0.6 * 50 from flooring to 29.
    const auto floor_of = [n](double frac) {
        return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
    };
    SplitRanges s;
    s.n = n;
    s.train_end = floor_of(train_frac);
    s.validation_end = s.train_end + floor_of(validation_frac);
    return s;
}

void PreprocessConfig::validate() const {
    auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_unit(train_frac) || !in_unit(validation_frac) || !in_unit(test_frac))
        fail(ErrorKind::InvalidArgument, "split fractions must lie in (0, 1)");
    if (std::abs(train_frac + validation_frac + test_frac - 1.0) > 1e-9)
        fail(ErrorKind::InvalidArgument, "split fractions must sum to 1");
    if (!(max_missing_frac >= 0.0 && max_missing_frac <= 1.0))
        fail(ErrorKind::InvalidArgument, "max_missing_frac must lie in [0, 1]");
}

std::optional<std::size_t> Dataset::ticker_index(const std::string& ticker) const {
    auto it = std::find(tickers.begin(), tickers.end(), ticker);
    if (it == tickers.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - tickers.begin());
}

std::optional<std::size_t> Dataset::sample_index(Quarter q) const {
    auto it = std::lower_bound(sample_quarters.begin(), sample_quarters.end(), q);
    if (it == sample_quarters.end() || *it != q)
        return std::nullopt;
    return static_cast<std::size_t>(it - sample_quarters.begin());
}

namespace {

std::size_t fit_row_count(const SplitRanges& split, StatsRange range) {
    return range == StatsRange::Train ? split.train_end : split.validation_end;
}

Eigen::MatrixXd stack_rows(const std::vector<Eigen::MatrixXd>& per_ticker, std::size_t rows_each) {
    const auto cols = per_ticker.empty() ? 0 : per_ticker.front().cols();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows_each * per_ticker.size()), cols);
    for (std::size_t i = 0; i < per_ticker.size(); ++i)
        out.middleRows(static_cast<Eigen::Index>(i * rows_each), static_cast<Eigen::Index>(rows_each)) =
            per_ticker[i].topRows(static_cast<Eigen::Index>(rows_each));
    return out;
}

std::vector<double> impute(const OptionalSeries& s, Imputation mode, const std::string& what) {
    switch (mode) {
    case Imputation::Causal:
        return impute_causal(s);
    case Imputation::TwoSided:
        return impute_neighbor_mean(s);
    case Imputation::Off:
        break;
    }
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s[i])
            fail(ErrorKind::UnimputedMissing, what + " has missing values and imputation is off");
        out[i] = *s[i];
    }
    return out;
}

} // namespace

Dataset build_dataset(const QuarterlyPanel& input, const BenchmarkSeries& bench, const PreprocessConfig& config) {
    config.validate();
    Dataset ds;

    SparseDropResult sparse = drop_sparse_features(input, config.max_missing_frac);
    ds.dropped_features = sparse.dropped;
    for (const auto& name : sparse.dropped)
        ds.warnings.push_back("feature " + name + " dropped: too many missing values");
    const QuarterlyPanel& panel = sparse.panel;

    const std::size_t nq = panel.n_quarters();
    if (nq < 3)
        fail(ErrorKind::WindowTooShort, "need at least three quarters to form a sample");
    if (!bench.covers(panel.quarters().front(), panel.quarters().back()))
        fail(ErrorKind::NoOverlap, "benchmark does not cover " + panel.quarters().front().to_string() + ".." +
                                       panel.quarters().back().to_string());

    // Samples sit at axis indices 1..nq-2: index 0 is lost to differencing
    // and the last index has no following quarter to supply a target.
    const std::size_t n = nq - 2;
    if (n < config.min_samples)
        fail(ErrorKind::WindowTooShort, std::to_string(n) + " samples per ticker, need " +
                                            std::to_string(config.min_samples));
    for (std::size_t s = 0; s < n; ++s)
        ds.sample_quarters.push_back(panel.quarters()[s + 1]);

    const std::size_t nf = panel.n_features();
    std::vector<std::string> names = panel.features();
    names.push_back(config.momentum_feature);

    for (std::size_t t = 0; t < panel.n_tickers(); ++t) {
        const std::string& ticker = panel.tickers()[t];
        OptionalSeries prices(nq);
        for (std::size_t q = 0; q < nq; ++q)
            prices[q] = panel.price(t, q);
        if (std::any_of(prices.begin(), prices.end(), [](const auto& p) { return !p; })) {
            ds.dropped_tickers.push_back(ticker);
            ds.warnings.push_back("ticker " + ticker + " dropped: incomplete price history in window");
            continue;
        }
        const RelativeReturnSeries rel = relative_returns(ticker, panel.quarters(), prices, bench);
        // With complete prices and benchmark coverage rel.values[i] is the
        // return over axis quarter i + 1.

        Eigen::MatrixXd raw(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf + 1));
        bool usable = true;
        for (std::size_t f = 0; f < nf && usable; ++f) {
            OptionalSeries level(nq);
            for (std::size_t q = 0; q < nq; ++q)
                level[q] = panel.value(t, q, f);
            const OptionalSeries change = stationarize(level); // change[i] belongs to axis i + 1
            if (std::none_of(change.begin(), change.end(), [](const auto& v) { return v.has_value(); })) {
                usable = false;
                ds.warnings.push_back("ticker " + ticker + " dropped: feature " + panel.features()[f] +
                                      " has no usable observations");
                break;
            }
            const std::vector<double> filled = impute(change, config.imputation, ticker + "/" + panel.features()[f]);
            for (std::size_t s = 0; s < n; ++s)
                raw(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(f)) = filled[s];
        }
        if (!usable) {
            ds.dropped_tickers.push_back(ticker);
            continue;
        }

        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (std::size_t s = 0; s < n; ++s) {
            raw(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(nf)) = rel.values[s];
            y(static_cast<Eigen::Index>(s)) = rel.values[s + 1];
        }
        ds.tickers.push_back(ticker);
        ds.raw_x.push_back(std::move(raw));
        ds.y.push_back(std::move(y));
    }
    if (ds.tickers.empty())
        fail(ErrorKind::EmptyUniverse, "no ticker survived preprocessing");

    ds.split = split_counts(n, config.train_frac, config.validation_frac);
    if (ds.split.train_end < 2)
        fail(ErrorKind::TooFewRows, "training range has fewer than two samples");

    // Zero-variance columns are judged on the training range only.
    const FittedStats probe = fit_standardization(stack_rows(ds.raw_x, ds.split.train_end), names);
    if (!probe.zero_variance.empty()) {
        std::vector<Eigen::Index> keep;
        std::vector<std::string> kept_names;
        for (std::size_t c = 0; c < names.size(); ++c) {
            if (std::find(probe.zero_variance.begin(), probe.zero_variance.end(), c) != probe.zero_variance.end()) {
                ds.dropped_features.push_back(names[c]);
                ds.warnings.push_back("feature " + names[c] + " dropped: zero variance in the training range");
            } else {
                keep.push_back(static_cast<Eigen::Index>(c));
                kept_names.push_back(names[c]);
            }
        }
        if (keep.empty())
            fail(ErrorKind::AllFeaturesDropped, "every feature has zero variance in the training range");
        for (auto& m : ds.raw_x) {
            Eigen::MatrixXd reduced(m.rows(), static_cast<Eigen::Index>(keep.size()));
            for (std::size_t k = 0; k < keep.size(); ++k)
                reduced.col(static_cast<Eigen::Index>(k)) = m.col(keep[k]);
            m = std::move(reduced);
        }
        names = std::move(kept_names);
    }
    ds.feature_names = std::move(names);
    return with_stats_range(ds, config.stats_range);
}

Dataset with_stats_range(const Dataset& dataset, StatsRange range) {
    if (dataset.raw_x.size() != dataset.n_tickers())
        fail(ErrorKind::InvalidArgument, "dataset carries no raw features to re-standardize");
    Dataset out = dataset;
    out.stats_range = range;
    const std::size_t rows = fit_row_count(dataset.split, range);
    FittedStats fitted = fit_standardization(stack_rows(dataset.raw_x, rows), dataset.feature_names);
    if (!fitted.zero_variance.empty())
        fail(ErrorKind::TooFewRows, "feature " + dataset.feature_names[fitted.zero_variance.front()] +
                                        " has zero variance in the fitting range");
    out.stats = std::make_shared<const StandardizationStats>(std::move(fitted.stats));
    out.x.clear();
    for (const auto& raw : dataset.raw_x)
        out.x.push_back(out.stats->apply(raw));
    return out;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::ostringstream data;
    data << "ticker,quarter,split,y";
    for (const auto& f : ds.feature_names)
        data << ',' << f;
    data << '\n';
    for (std::size_t i = 0; i < ds.n_tickers(); ++i) {
        for (std::size_t s = 0; s < ds.n_samples(); ++s) {
            const auto r = static_cast<Eigen::Index>(s);
            data << ds.tickers[i] << ',' << ds.sample_quarters[s].to_string() << ','
                 << to_string(ds.split.which(s)) << ',' << csv::format_exact(ds.y[i](r));
            for (Eigen::Index c = 0; c < ds.x[i].cols(); ++c)
                data << ',' << csv::format_exact(ds.x[i](r, c));
            data << '\n';
        }
    }
    csv::write_text(dir / "dataset.csv", data.str());

    std::ostringstream stats;
    stats << "feature,mean,std\n";
    for (std::size_t c = 0; c < ds.stats->size(); ++c)
        stats << ds.stats->features[c] << ',' << csv::format_exact(ds.stats->mean[c]) << ','
              << csv::format_exact(ds.stats->stddev[c]) << '\n';
    csv::write_text(dir / "stats.csv", stats.str());
}

Dataset read_dataset(const std::filesystem::path& dir) {
    const csv::Table stats_table = csv::read(dir / "stats.csv");
    if (stats_table.header != std::vector<std::string>{"feature", "mean", "std"})
        fail(ErrorKind::SchemaError, "stats.csv header must be feature,mean,std");
    auto number = [](const std::string& token, const std::string& where) {
        auto v = csv::parse_double(token);
        if (!v)
            fail(ErrorKind::SchemaError, where + ": '" + token + "' is not a number");
        return *v;
    };
    StandardizationStats stats;
    for (const auto& row : stats_table.rows) {
        if (row.size() != 3)
            fail(ErrorKind::SchemaError, "stats.csv rows need 3 columns");
        stats.features.push_back(row[0]);
        stats.mean.push_back(number(row[1], "stats.csv"));
        stats.stddev.push_back(number(row[2], "stats.csv"));
    }

    const csv::Table table = csv::read(dir / "dataset.csv");
    if (table.header.size() < 5 || table.header[0] != "ticker" || table.header[1] != "quarter" ||
        table.header[2] != "split" || table.header[3] != "y")
        fail(ErrorKind::SchemaError, "dataset.csv header must start with ticker,quarter,split,y");
    Dataset ds;
    ds.feature_names.assign(table.header.begin() + 4, table.header.end());
    if (ds.feature_names != stats.features)
        fail(ErrorKind::SchemaError, "dataset.csv features do not match stats.csv");
    const auto k = static_cast<Eigen::Index>(ds.feature_names.size());

    std::vector<std::vector<std::vector<double>>> rows; // ticker -> sample -> [y, x...]
    std::vector<Split> splits;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            fail(ErrorKind::SchemaError, "dataset.csv row has the wrong number of columns");
        auto q = parse_quarter(row[1]);
        if (!q)
            fail(ErrorKind::SchemaError, "dataset.csv: malformed quarter " + row[1]);
        if (ds.tickers.empty() || ds.tickers.back() != row[0]) {
            if (std::find(ds.tickers.begin(), ds.tickers.end(), row[0]) != ds.tickers.end())
                fail(ErrorKind::SchemaError, "dataset.csv rows of " + row[0] + " are not contiguous");
            ds.tickers.push_back(row[0]);
            rows.emplace_back();
        }
        const std::size_t s = rows.back().size();
        if (ds.tickers.size() == 1) {
            ds.sample_quarters.push_back(*q);
            Split sp = row[2] == "train" ? Split::Train : row[2] == "validation" ? Split::Validation : Split::Test;
            if (row[2] != to_string(sp))
                fail(ErrorKind::SchemaError, "dataset.csv: unknown split " + row[2]);
            splits.push_back(sp);
        } else if (s >= ds.sample_quarters.size() || ds.sample_quarters[s] != *q) {
            fail(ErrorKind::SchemaError, "dataset.csv: " + row[0] + " has a different quarter axis");
        }
        std::vector<double> values;
        for (std::size_t c = 3; c < row.size(); ++c)
            values.push_back(number(row[c], "dataset.csv"));
        rows.back().push_back(std::move(values));
    }

    ds.split.n = splits.size();
    ds.split.train_end = static_cast<std::size_t>(std::count(splits.begin(), splits.end(), Split::Train));
    ds.split.validation_end =
        ds.split.train_end + static_cast<std::size_t>(std::count(splits.begin(), splits.end(), Split::Validation));
    for (std::size_t s = 0; s < splits.size(); ++s)
        if (ds.split.which(s) != splits[s])
            fail(ErrorKind::SchemaError, "dataset.csv: split labels are not contiguous");

    for (const auto& per_ticker : rows) {
        if (per_ticker.size() != ds.sample_quarters.size())
            fail(ErrorKind::SchemaError, "dataset.csv: tickers have different sample counts");
        const auto n = static_cast<Eigen::Index>(per_ticker.size());
        Eigen::MatrixXd x(n, k);
        Eigen::VectorXd y(n);
        for (Eigen::Index s = 0; s < n; ++s) {
            y(s) = per_ticker[s][0];
            for (Eigen::Index c = 0; c < k; ++c)
                x(s, c) = per_ticker[s][c + 1];
        }
        ds.x.push_back(std::move(x));
        ds.y.push_back(std::move(y));
    }
    ds.stats = std::make_shared<const StandardizationStats>(std::move(stats));
    return ds;
}

} // namespace fundsel::preprocess
