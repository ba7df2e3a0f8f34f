#include "fundsel/panel.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fundsel/csv.hpp"
#include "fundsel/error.hpp"

namespace fundsel::panel {

namespace fs = std::filesystem;

QuarterlyPanel::QuarterlyPanel(std::vector<std::string> tickers, std::vector<Quarter> quarters,
                               std::vector<std::string> features,
                               std::vector<std::optional<double>> values,
                               std::vector<std::optional<double>> prices,
                               std::vector<std::optional<Quarter>> first_observed)
    : tickers_(std::move(tickers)),
      quarters_(std::move(quarters)),
      features_(std::move(features)),
      values_(std::move(values)),
      prices_(std::move(prices)),
      first_observed_(std::move(first_observed)) {
    for (std::size_t i = 1; i < quarters_.size(); ++i) {
        if (quarters_[i] != next_quarter(quarters_[i - 1]))
            fail(ErrorKind::SchemaError, "panel quarters must be consecutive at " + quarters_[i].to_string());
    }
    if (std::set<std::string>(features_.begin(), features_.end()).size() != features_.size())
        fail(ErrorKind::SchemaError, "duplicate feature name");
    if (std::set<std::string>(tickers_.begin(), tickers_.end()).size() != tickers_.size())
        fail(ErrorKind::SchemaError, "duplicate ticker");
    if (values_.size() != n_tickers() * n_quarters() * n_features())
        fail(ErrorKind::DimensionMismatch, "panel value array has the wrong size");
    if (prices_.size() != n_tickers() * n_quarters())
        fail(ErrorKind::DimensionMismatch, "panel price array has the wrong size");
    for (const auto& p : prices_) {
        if (p && !(*p > 0.0))
            fail(ErrorKind::NonPositiveLevel, "price must be positive");
    }

    if (first_observed_.empty()) {
        first_observed_.resize(n_tickers());
        for (std::size_t t = 0; t < n_tickers(); ++t) {
            for (std::size_t q = 0; q < n_quarters() && !first_observed_[t]; ++q) {
                bool any = price(t, q).has_value();
                for (std::size_t f = 0; f < n_features() && !any; ++f)
                    any = value(t, q, f).has_value();
                if (any)
                    first_observed_[t] = quarters_[q];
            }
        }
    } else if (first_observed_.size() != n_tickers()) {
        fail(ErrorKind::DimensionMismatch, "first_observed must have one entry per ticker");
    }
}

std::optional<std::size_t> QuarterlyPanel::ticker_index(const std::string& ticker) const {
    auto it = std::find(tickers_.begin(), tickers_.end(), ticker);
    if (it == tickers_.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - tickers_.begin());
}

std::optional<std::size_t> QuarterlyPanel::quarter_index(Quarter q) const {
    if (quarters_.empty())
        return std::nullopt;
    const long offset = quarters_between(quarters_.front(), q);
    if (offset < 0 || offset >= static_cast<long>(quarters_.size()))
        return std::nullopt;
    return static_cast<std::size_t>(offset);
}

std::optional<std::size_t> QuarterlyPanel::feature_index(const std::string& name) const {
    auto it = std::find(features_.begin(), features_.end(), name);
    if (it == features_.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - features_.begin());
}

std::size_t QuarterlyPanel::missing_count() const {
    return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](const auto& v) { return !v; }));
}

std::size_t QuarterlyPanel::missing_count(std::size_t feature) const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < n_tickers(); ++t)
        for (std::size_t q = 0; q < n_quarters(); ++q)
            n += value(t, q, feature) ? 0 : 1;
    return n;
}

BenchmarkSeries::BenchmarkSeries(std::vector<Quarter> quarters, std::vector<double> levels)
    : quarters_(std::move(quarters)), levels_(std::move(levels)) {
    if (quarters_.size() != levels_.size())
        fail(ErrorKind::DimensionMismatch, "benchmark quarters and levels differ in length");
    for (std::size_t i = 0; i < quarters_.size(); ++i) {
        if (!(levels_[i] > 0.0))
            fail(ErrorKind::NonPositiveLevel, "benchmark level at " + quarters_[i].to_string() + " is not positive");
        if (i > 0 && quarters_[i] <= quarters_[i - 1])
            fail(ErrorKind::SchemaError, "benchmark quarters must be strictly increasing");
        if (i > 0 && quarters_[i] != next_quarter(quarters_[i - 1]))
            fail(ErrorKind::GapInSeries, "benchmark has no level for " + next_quarter(quarters_[i - 1]).to_string());
    }
}

std::optional<double> BenchmarkSeries::level_at(Quarter q) const {
    if (quarters_.empty())
        return std::nullopt;
    const long offset = quarters_between(quarters_.front(), q);
    if (offset < 0 || offset >= static_cast<long>(quarters_.size()))
        return std::nullopt;
    return levels_[static_cast<std::size_t>(offset)];
}

bool BenchmarkSeries::covers(Quarter first, Quarter last) const {
    return !quarters_.empty() && quarters_.front() <= first && last <= quarters_.back();
}

std::size_t LoadReport::total_missing() const {
    std::size_t n = 0;
    for (const auto& [key, c] : cells)
        n += c.missing;
    return n;
}

std::size_t LoadReport::total_unparseable() const {
    std::size_t n = 0;
    for (const auto& [key, c] : cells)
        n += c.unparseable;
    return n;
}

namespace {

Quarter require_quarter(const std::string& token, const fs::path& file, std::size_t line) {
    auto q = parse_quarter(token);
    if (!q)
        fail(ErrorKind::SchemaError,
             file.string() + ":" + std::to_string(line) + ": malformed quarter '" + token + "'");
    return *q;
}

struct TickerRows {
    std::map<Quarter, std::vector<std::optional<double>>> rows;
};

} // namespace

LoadedPanel load_panel(const fs::path& root, const PanelLayout& layout) {
    LoadReport report;

    const fs::path prices_path = root / layout.prices_file;
    const csv::Table prices_table = csv::read(prices_path);
    if (prices_table.header != std::vector<std::string>{"ticker", "quarter", "close"})
        fail(ErrorKind::SchemaError, prices_path.string() + ": header must be ticker,quarter,close");

    std::vector<std::string> tickers = layout.tickers;
    if (tickers.empty()) {
        std::set<std::string> seen;
        for (const auto& row : prices_table.rows)
            if (!row.empty())
                seen.insert(row[0]);
        tickers.assign(seen.begin(), seen.end());
    } else {
        std::sort(tickers.begin(), tickers.end());
        tickers.erase(std::unique(tickers.begin(), tickers.end()), tickers.end());
    }
    if (tickers.empty())
        fail(ErrorKind::EmptyUniverse, "no tickers listed in " + prices_path.string());
    const std::unordered_set<std::string> universe(tickers.begin(), tickers.end());

    // Prices.
    std::map<std::string, std::map<Quarter, std::optional<double>>> price_rows;
    for (std::size_t r = 0; r < prices_table.rows.size(); ++r) {
        const auto& row = prices_table.rows[r];
        const auto line = prices_table.line_numbers[r];
        if (row.size() != 3)
            fail(ErrorKind::SchemaError, prices_path.string() + ":" + std::to_string(line) + ": expected 3 columns");
        if (!universe.count(row[0]))
            continue;
        const Quarter q = require_quarter(row[1], prices_path, line);
        auto& series = price_rows[row[0]];
        if (series.count(q))
            fail(ErrorKind::DuplicateQuarter, row[0] + " " + q.to_string() + " appears twice in " + prices_path.string());
        auto& counts = report.cells[{row[0], "close"}];
        std::optional<double> value;
        if (csv::is_missing_token(row[2])) {
            ++counts.missing;
        } else if (auto v = csv::parse_double(row[2])) {
            if (!(*v > 0.0))
                fail(ErrorKind::NonPositiveLevel,
                     prices_path.string() + ":" + std::to_string(line) + ": price must be positive");
            value = v;
        } else {
            ++counts.unparseable;
        }
        series[q] = value;
    }

    // Fundamentals.
    std::vector<std::string> features;
    bool have_header = false;
    std::map<std::string, TickerRows> fundamentals;
    for (const auto& ticker : tickers) {
        const fs::path file = root / layout.fundamentals_dir / (ticker + ".csv");
        if (!fs::exists(file))
            fail(ErrorKind::MissingFile, "no fundamentals file for " + ticker + " (" + file.string() + ")");
        const csv::Table table = csv::read(file);
        if (table.header.empty() || table.header.front() != "quarter")
            fail(ErrorKind::SchemaError, file.string() + ": first column must be 'quarter'");
        std::vector<std::string> names(table.header.begin() + 1, table.header.end());
        if (!have_header) {
            if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
                fail(ErrorKind::SchemaError, file.string() + ": duplicate feature name");
            features = names;
            have_header = true;
        } else if (names != features) {
            fail(ErrorKind::SchemaError, file.string() + ": header differs from the other fundamentals files");
        }

        auto& rows = fundamentals[ticker].rows;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            const auto line = table.line_numbers[r];
            if (row.size() != table.header.size())
                fail(ErrorKind::SchemaError, file.string() + ":" + std::to_string(line) + ": wrong number of columns");
            const Quarter q = require_quarter(row[0], file, line);
            if (rows.count(q))
                fail(ErrorKind::DuplicateQuarter, ticker + " " + q.to_string() + " appears twice in " + file.string());
            std::vector<std::optional<double>> values(features.size());
            for (std::size_t f = 0; f < features.size(); ++f) {
                const auto& token = row[f + 1];
                auto& counts = report.cells[{ticker, features[f]}];
                if (csv::is_missing_token(token)) {
                    ++counts.missing;
                } else if (auto v = csv::parse_double(token)) {
                    values[f] = v;
                } else {
                    ++counts.unparseable;
                }
            }
            rows.emplace(q, std::move(values));
        }
    }

    for (const auto& [key, counts] : report.cells) {
        if (counts.unparseable > 0)
            report.warnings.push_back(key.first + "/" + key.second + ": " + std::to_string(counts.unparseable) +
                                      " unparseable cell(s) treated as missing");
    }

    // Common quarter axis.
    std::optional<Quarter> lo, hi;
    auto extend = [&](Quarter q) {
        if (!lo || q < *lo) lo = q;
        if (!hi || q > *hi) hi = q;
    };
    for (const auto& [t, rows] : fundamentals)
        for (const auto& [q, v] : rows.rows)
            extend(q);
    for (const auto& [t, rows] : price_rows)
        for (const auto& [q, v] : rows)
            extend(q);
    if (!lo)
        fail(ErrorKind::EmptyUniverse, "no rows found under " + root.string());

    std::vector<Quarter> quarters;
    for (Quarter q = *lo; q <= *hi; q = next_quarter(q))
        quarters.push_back(q);

    const std::size_t nq = quarters.size(), nf = features.size();
    std::vector<std::optional<double>> values(tickers.size() * nq * nf);
    std::vector<std::optional<double>> prices(tickers.size() * nq);
    for (std::size_t t = 0; t < tickers.size(); ++t) {
        const auto& rows = fundamentals[tickers[t]].rows;
        for (std::size_t qi = 0; qi < nq; ++qi) {
            auto it = rows.find(quarters[qi]);
            if (it == rows.end()) {
                report.absent_row_cells += nf;
                continue;
            }
            std::copy(it->second.begin(), it->second.end(), values.begin() + (t * nq + qi) * nf);
        }
        if (auto pit = price_rows.find(tickers[t]); pit != price_rows.end()) {
            for (const auto& [q, p] : pit->second)
                prices[t * nq + static_cast<std::size_t>(quarters_between(quarters.front(), q))] = p;
        }
    }

    return {QuarterlyPanel(std::move(tickers), std::move(quarters), std::move(features), std::move(values),
                           std::move(prices)),
            std::move(report)};
}

BenchmarkSeries load_benchmark(const fs::path& path) {
    const csv::Table table = csv::read(path);
    if (table.header != std::vector<std::string>{"quarter", "level"})
        fail(ErrorKind::SchemaError, path.string() + ": header must be quarter,level");
    std::map<Quarter, double> rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        if (row.size() != 2)
            fail(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line) + ": expected 2 columns");
        const Quarter q = require_quarter(row[0], path, line);
        auto level = csv::parse_double(row[1]);
        if (!level)
            fail(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line) + ": level is not a number");
        if (!(*level > 0.0))
            fail(ErrorKind::NonPositiveLevel, path.string() + ":" + std::to_string(line) + ": level must be positive");
        if (!rows.emplace(q, *level).second)
            fail(ErrorKind::DuplicateQuarter, q.to_string() + " appears twice in " + path.string());
    }
    std::vector<Quarter> quarters;
    std::vector<double> levels;
    for (const auto& [q, level] : rows) {
        if (!quarters.empty() && q != next_quarter(quarters.back()))
            fail(ErrorKind::GapInSeries, "benchmark has no level for " + next_quarter(quarters.back()).to_string());
        quarters.push_back(q);
        levels.push_back(level);
    }
    return BenchmarkSeries(std::move(quarters), std::move(levels));
}

void write_panel(const QuarterlyPanel& panel, const fs::path& root, const PanelLayout& layout) {
    auto cell = [](const std::optional<double>& v) { return v ? csv::format_exact(*v) : std::string("NA"); };

    for (std::size_t t = 0; t < panel.n_tickers(); ++t) {
        std::ostringstream out;
        out << "quarter";
        for (const auto& f : panel.features())
            out << ',' << f;
        out << '\n';
        for (std::size_t q = 0; q < panel.n_quarters(); ++q) {
            out << panel.quarters()[q].to_string();
            for (std::size_t f = 0; f < panel.n_features(); ++f)
                out << ',' << cell(panel.value(t, q, f));
            out << '\n';
        }
        csv::write_text(root / layout.fundamentals_dir / (panel.tickers()[t] + ".csv"), out.str());
    }

    std::ostringstream prices;
    prices << "ticker,quarter,close\n";
    for (std::size_t t = 0; t < panel.n_tickers(); ++t)
        for (std::size_t q = 0; q < panel.n_quarters(); ++q)
            prices << panel.tickers()[t] << ',' << panel.quarters()[q].to_string() << ',' << cell(panel.price(t, q))
                   << '\n';
    csv::write_text(root / layout.prices_file, prices.str());
}

void write_benchmark(const BenchmarkSeries& bench, const fs::path& path) {
    std::ostringstream out;
    out << "quarter,level\n";
    for (std::size_t i = 0; i < bench.size(); ++i)
        out << bench.quarters()[i].to_string() << ',' << csv::format_exact(bench.levels()[i]) << '\n';
    csv::write_text(path, out.str());
}

WindowResult restrict_window(const QuarterlyPanel& panel, Quarter start, Quarter end) {
    if (end < start)
        fail(ErrorKind::InvalidArgument, "window start " + start.to_string() + " is after end " + end.to_string());

    std::vector<std::size_t> keep_tickers;
    std::vector<std::string> dropped;
    for (std::size_t t = 0; t < panel.n_tickers(); ++t) {
        const auto& first = panel.first_observed(t);
        if (first && *first <= start)
            keep_tickers.push_back(t);
        else
            dropped.push_back(panel.tickers()[t]);
    }
    if (keep_tickers.empty())
        fail(ErrorKind::EmptyUniverse, "every ticker is first observed after " + start.to_string());

    std::vector<std::size_t> keep_quarters;
    for (std::size_t q = 0; q < panel.n_quarters(); ++q)
        if (start <= panel.quarters()[q] && panel.quarters()[q] <= end)
            keep_quarters.push_back(q);
    if (keep_quarters.empty())
        fail(ErrorKind::EmptyUniverse, "panel has no quarters inside the window");

    const std::size_t nq = keep_quarters.size(), nf = panel.n_features();
    std::vector<std::string> tickers;
    std::vector<Quarter> quarters;
    std::vector<std::optional<double>> values(keep_tickers.size() * nq * nf);
    std::vector<std::optional<double>> prices(keep_tickers.size() * nq);
    std::vector<std::optional<Quarter>> first;
    for (auto q : keep_quarters)
        quarters.push_back(panel.quarters()[q]);
    for (std::size_t ti = 0; ti < keep_tickers.size(); ++ti) {
        const auto t = keep_tickers[ti];
        tickers.push_back(panel.tickers()[t]);
        first.push_back(panel.first_observed(t));
        for (std::size_t qi = 0; qi < nq; ++qi) {
            prices[ti * nq + qi] = panel.price(t, keep_quarters[qi]);
            for (std::size_t f = 0; f < nf; ++f)
                values[(ti * nq + qi) * nf + f] = panel.value(t, keep_quarters[qi], f);
        }
    }
    return {QuarterlyPanel(std::move(tickers), std::move(quarters), panel.features(), std::move(values),
                           std::move(prices), std::move(first)),
            std::move(dropped)};
}

} // namespace fundsel::panel
