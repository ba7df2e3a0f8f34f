#include "fundsel/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "fundsel/csv.hpp"
#include "fundsel/error.hpp"
#include "fundsel/rng.hpp"

namespace fundsel::backtest {

using preprocess::Dataset;
using preprocess::Split;

std::string to_string(Algo algo) {
    return algo == Algo::Fnn ? "FNN" : "ANFIS";
}

std::optional<Algo> parse_algo(const std::string& text) {
    if (text == "fnn" || text == "FNN")
        return Algo::Fnn;
    if (text == "anfis" || text == "ANFIS")
        return Algo::Anfis;
    return std::nullopt;
}

double predict(const StockModel& model, const Eigen::VectorXd& x) {
    return std::visit(
        [&x](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, fnn::FnnModel>)
                return fnn::predict_return(m, x);
            else
                return anfis::anfis_predict(m, x);
        },
        model);
}

const StockModel* ModelTable::find(const std::string& ticker) const {
    auto it = std::lower_bound(tickers.begin(), tickers.end(), ticker);
    if (it == tickers.end() || *it != ticker)
        return nullptr;
    return &models[static_cast<std::size_t>(it - tickers.begin())];
}

namespace {

StockModel train_one(const Dataset& ds, std::size_t i, Algo algo, const BacktestConfig& cfg, std::size_t rows) {
    const auto r = static_cast<Eigen::Index>(rows);
    const Eigen::MatrixXd x = ds.x[i].topRows(r);
    const Eigen::VectorXd t = ds.y[i].head(r);
    const std::uint64_t seed = ticker_seed(cfg.base_seed, ds.tickers[i]);
    if (algo == Algo::Fnn) {
        TrainConfig tc = cfg.models.fnn;
        tc.seed = seed;
        fnn::FnnModel init = fnn::init_fnn(ds.n_features(), cfg.models.fnn_hidden, seed);
        return fnn::train_fnn(std::move(init), x, t, tc, cfg.models.fnn_scaler_margin);
    }
    anfis::AnfisModel init = anfis::anfis_from_data(x, t, cfg.models.subclust);
    return anfis::train_anfis(std::move(init), x, t, cfg.models.anfis, cfg.models.anfis_ridge);
}

} // namespace

ModelTable train_universe(const Dataset& ds, Algo algo, const BacktestConfig& cfg, Stage stage) {
    if (cfg.k == 0)
        fail(ErrorKind::InvalidArgument, "k must be at least 1");
    const std::size_t rows = stage == Stage::Final ? ds.split.validation_end : ds.split.train_end;

    const std::size_t n = ds.n_tickers();
    std::vector<std::optional<StockModel>> trained(n);
    std::vector<std::string> failure(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::atomic<bool> has_fatal{false};

    auto worker = [&]() {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                trained[i] = train_one(ds, i, algo, cfg, rows);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::InvalidArgument) {
                    if (!has_fatal.exchange(true))
                        fatal = std::current_exception();
                    return;
                }
                failure[i] = e.what();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    if (fatal)
        std::rethrow_exception(fatal);

    // Dataset tickers are not guaranteed sorted; the table is.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ds.tickers[a] < ds.tickers[b]; });

    ModelTable table;
    table.algo = algo;
    table.stage = stage;
    for (auto i : order) {
        if (trained[i]) {
            table.tickers.push_back(ds.tickers[i]);
            table.models.push_back(std::move(*trained[i]));
        } else {
            table.excluded.push_back({ds.tickers[i], failure[i]});
        }
    }
    if (table.tickers.size() < 2 * cfg.k)
        fail(ErrorKind::UniverseTooSmall, std::to_string(table.tickers.size()) + " trained models, need 2k = " +
                                              std::to_string(2 * cfg.k));
    return table;
}

CrossSection predict_cross_section(const ModelTable& models, const Dataset& ds, Quarter quarter, Split range) {
    const auto s = ds.sample_index(quarter);
    const auto [lo, hi] = ds.split.range(range);
    if (!s || *s < lo || *s >= hi)
        fail(ErrorKind::MissingSample,
             quarter.to_string() + " is not a " + preprocess::to_string(range) + " quarter of the dataset");

    CrossSection cs;
    cs.quarter = quarter;
    const auto row = static_cast<Eigen::Index>(*s);
    for (std::size_t m = 0; m < models.tickers.size(); ++m) {
        const auto i = ds.ticker_index(models.tickers[m]);
        if (!i)
            fail(ErrorKind::MissingSample, models.tickers[m] + " has no samples in the dataset");
        cs.tickers.push_back(models.tickers[m]);
        cs.scores.push_back(predict(models.models[m], ds.x[*i].row(row).transpose()));
        cs.realized.push_back(ds.y[*i](row));
    }
    return cs;
}

std::pair<Portfolio, Portfolio> construct_portfolios(const CrossSection& cs, std::size_t k) {
    if (k == 0)
        fail(ErrorKind::InvalidArgument, "portfolio size must be at least 1");
    const std::size_t n = cs.tickers.size();
    if (cs.scores.size() != n)
        fail(ErrorKind::DimensionMismatch, "one score per ticker required");
    if (n < 2 * k)
        fail(ErrorKind::UniverseTooSmall,
             "universe of " + std::to_string(n) + " cannot hold disjoint portfolios of " + std::to_string(k));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});

    auto best_first = [&](std::size_t a, std::size_t b) {
        if (cs.scores[a] != cs.scores[b])
            return cs.scores[a] > cs.scores[b];
        return cs.tickers[a] < cs.tickers[b];
    };
    auto worst_first = [&](std::size_t a, std::size_t b) {
        if (cs.scores[a] != cs.scores[b])
            return cs.scores[a] < cs.scores[b];
        return cs.tickers[a] < cs.tickers[b];
    };

    Portfolio buy{cs.quarter, Side::Buy, {}};
    Portfolio sell{cs.quarter, Side::Sell, {}};

    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), best_first);
    std::vector<bool> taken(n, false);
    for (std::size_t j = 0; j < k; ++j) {
        buy.members.push_back(cs.tickers[idx[j]]);
        taken[idx[j]] = true;
    }

    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i)
        if (!taken[i])
            rest.push_back(i);
    std::partial_sort(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(k), rest.end(), worst_first);
    for (std::size_t j = 0; j < k; ++j)
        sell.members.push_back(cs.tickers[rest[j]]);
    return {std::move(buy), std::move(sell)};
}

double portfolio_return(const Portfolio& portfolio, const CrossSection& cs) {
    if (portfolio.members.empty())
        fail(ErrorKind::InvalidArgument, "portfolio has no members");
    double sum = 0.0;
    for (const auto& m : portfolio.members) {
        auto it = std::find(cs.tickers.begin(), cs.tickers.end(), m);
        if (it == cs.tickers.end())
            fail(ErrorKind::MissingRealized, "no realized return for " + m);
        sum += cs.realized[static_cast<std::size_t>(it - cs.tickers.begin())];
    }
    return sum / static_cast<double>(portfolio.members.size());
}

Summary evaluate(std::span<const double> series) {
    if (series.size() < 2)
        fail(ErrorKind::SeriesTooShort, "need at least two periods");
    const auto n = static_cast<double>(series.size());
    Summary s;
    s.mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
    double ss = 0.0;
    double growth = 1.0;
    for (double r : series) {
        ss += (r - s.mean) * (r - s.mean);
        growth *= 1.0 + r;
    }
    s.stddev = std::sqrt(ss / (n - 1.0));
    s.compound = growth - 1.0;
    return s;
}

std::vector<double> compound_curve(std::span<const double> series) {
    std::vector<double> out;
    double growth = 1.0;
    for (double r : series) {
        growth *= 1.0 + r;
        out.push_back(growth - 1.0);
    }
    return out;
}

std::vector<double> StageResult::series(const char* which) const {
    const std::string w = which;
    std::vector<double> out;
    for (const auto& q : quarters)
        out.push_back(w == "buy" ? q.buy : w == "sell" ? q.sell : q.full_sample);
    return out;
}

StageResult evaluate_stage(const ModelTable& models, const Dataset& ds, std::size_t k) {
    const Split range = models.stage == Stage::Final ? Split::Test : Split::Validation;
    const auto [lo, hi] = ds.split.range(range);

    StageResult result;
    result.stage = models.stage;
    result.universe = models.tickers;
    result.excluded = models.excluded;
    for (std::size_t s = lo; s < hi; ++s) {
        const CrossSection cs = predict_cross_section(models, ds, ds.sample_quarters[s], range);
        auto [buy, sell] = construct_portfolios(cs, k);

        QuarterResult q;
        q.formation = cs.quarter;
        q.holding = next_quarter(cs.quarter);
        q.universe = cs.tickers.size();
        q.buy = portfolio_return(buy, cs);
        q.sell = portfolio_return(sell, cs);
        q.full_sample = std::accumulate(cs.realized.begin(), cs.realized.end(), 0.0) / static_cast<double>(q.universe);
        if (q.universe > 2 * k) {
            double sum = 0.0;
            for (std::size_t i = 0; i < cs.tickers.size(); ++i) {
                const auto& t = cs.tickers[i];
                if (std::find(buy.members.begin(), buy.members.end(), t) == buy.members.end() &&
                    std::find(sell.members.begin(), sell.members.end(), t) == sell.members.end())
                    sum += cs.realized[i];
            }
            q.middle = sum / static_cast<double>(q.universe - 2 * k);
        }
        q.buy_members = std::move(buy.members);
        q.sell_members = std::move(sell.members);
        result.quarters.push_back(std::move(q));
    }
    result.buy = evaluate(result.series("buy"));
    result.sell = evaluate(result.series("sell"));
    result.full_sample = evaluate(result.series("full_sample"));
    return result;
}

nlohmann::ordered_json config_echo(const Dataset& ds, Algo algo, const BacktestConfig& cfg) {
    using nlohmann::ordered_json;
    auto train_json = [](const TrainConfig& t) {
        return ordered_json{{"learning_rate", t.learning_rate},
                            {"epochs", t.epochs},
                            {"batch_size", t.batch_size},
                            {"beta1", t.beta1},
                            {"beta2", t.beta2},
                            {"eps", t.eps},
                            {"optimizer", t.optimizer == Optimizer::Adam ? "adam" : "sgd"}};
    };
    ordered_json echo;
    echo["algorithm"] = to_string(algo);
    echo["k"] = cfg.k;
    echo["base_seed"] = cfg.base_seed;
    echo["model_selection"] = cfg.model_selection;
    echo["std_denominator"] = "n-1";
    echo["compound"] = "prod(1+r)-1";
    if (algo == Algo::Fnn) {
        echo["fnn"] = {{"hidden", cfg.models.fnn_hidden},
                       {"scaler_margin", cfg.models.fnn_scaler_margin},
                       {"train", train_json(cfg.models.fnn)}};
    } else {
        echo["anfis"] = {{"radius", cfg.models.subclust.radius},
                         {"squash", cfg.models.subclust.squash},
                         {"accept_ratio", cfg.models.subclust.accept_ratio},
                         {"reject_ratio", cfg.models.subclust.reject_ratio},
                         {"ridge", cfg.models.anfis_ridge},
                         {"epochs", cfg.models.anfis.epochs},
                         {"learning_rate", cfg.models.anfis.learning_rate}};
    }
    auto boundary = [&](Split s) {
        const auto [lo, hi] = ds.split.range(s);
        ordered_json j{{"samples", hi - lo}};
        if (hi > lo) {
            j["first_formation"] = ds.sample_quarters[lo].to_string();
            j["last_formation"] = ds.sample_quarters[hi - 1].to_string();
        }
        return j;
    };
    echo["split"] = {{"train", boundary(Split::Train)},
                     {"validation", boundary(Split::Validation)},
                     {"test", boundary(Split::Test)}};
    echo["features"] = ds.feature_names;
    ordered_json seeds = ordered_json::object();
    for (const auto& t : ds.tickers)
        seeds[t] = ticker_seed(cfg.base_seed, t);
    echo["ticker_seeds"] = seeds;
    echo["dropped_tickers"] = ds.dropped_tickers;
    echo["dropped_features"] = ds.dropped_features;
    return echo;
}

BacktestReport run_backtest(const Dataset& dataset, Algo algo, const BacktestConfig& cfg) {
    BacktestReport report;
    report.algo = algo;
    report.echo = config_echo(dataset, algo, cfg);

    const bool can_restandardize = dataset.raw_x.size() == dataset.n_tickers();
    if (cfg.model_selection) {
        const Dataset selection = can_restandardize && dataset.stats_range != preprocess::StatsRange::Train
                                      ? preprocess::with_stats_range(dataset, preprocess::StatsRange::Train)
                                      : dataset;
        const ModelTable models = train_universe(selection, algo, cfg, Stage::Validation);
        report.validation_stage = evaluate_stage(models, selection, cfg.k);
    }

    const Dataset final_ds = can_restandardize && dataset.stats_range != preprocess::StatsRange::TrainValidation
                                 ? preprocess::with_stats_range(dataset, preprocess::StatsRange::TrainValidation)
                                 : dataset;
    report.echo["final_stats_range"] = preprocess::to_string(final_ds.stats_range);
    const ModelTable models = train_universe(final_ds, algo, cfg, Stage::Final);
    report.final_stage = evaluate_stage(models, final_ds, cfg.k);

    nlohmann::ordered_json excluded = nlohmann::ordered_json::array();
    for (const auto& e : report.final_stage.excluded)
        excluded.push_back({{"ticker", e.ticker}, {"reason", e.reason}});
    report.echo["excluded_tickers"] = excluded;
    report.echo["universe_size"] = report.final_stage.universe.size();
    return report;
}

namespace {

std::string fmt(double v) { return csv::format_sig(v, 10); }

std::string returns_csv(const StageResult& stage) {
    std::ostringstream out;
    out << "quarter,buy,sell,full_sample\n";
    for (const auto& q : stage.quarters)
        out << q.holding.to_string() << ',' << fmt(q.buy) << ',' << fmt(q.sell) << ',' << fmt(q.full_sample) << '\n';
    return out.str();
}

std::string summary_csv(const Summary& buy, const Summary& sell, const Summary& full) {
    std::ostringstream out;
    out << "series,mean,std,compound\n";
    auto row = [&](const char* name, const Summary& s) {
        out << name << ',' << fmt(s.mean) << ',' << fmt(s.stddev) << ',' << fmt(s.compound) << '\n';
    };
    row("buy", buy);
    row("sell", sell);
    row("full_sample", full);
    return out.str();
}

std::string curve_csv(const std::vector<Quarter>& quarters, const std::vector<double>& buy,
                      const std::vector<double>& sell, const std::vector<double>& full) {
    const auto cb = compound_curve(buy), cs = compound_curve(sell), cf = compound_curve(full);
    std::ostringstream out;
    out << "quarter,buy,sell,full_sample\n";
    for (std::size_t i = 0; i < quarters.size(); ++i)
        out << quarters[i].to_string() << ',' << fmt(cb[i]) << ',' << fmt(cs[i]) << ',' << fmt(cf[i]) << '\n';
    return out.str();
}

void write_stage(const StageResult& stage, const std::filesystem::path& dir, const std::string& prefix) {
    std::vector<Quarter> quarters;
    for (const auto& q : stage.quarters)
        quarters.push_back(q.holding);
    csv::write_text(dir / (prefix + "portfolio_returns.csv"), returns_csv(stage));
    csv::write_text(dir / (prefix + "summary.csv"), summary_csv(stage.buy, stage.sell, stage.full_sample));
    csv::write_text(dir / (prefix + "compound_curve.csv"),
                    curve_csv(quarters, stage.series("buy"), stage.series("sell"), stage.series("full_sample")));

    std::ostringstream members;
    members << "quarter,side,tickers\n";
    for (const auto& q : stage.quarters) {
        auto join = [](const std::vector<std::string>& v) {
            std::string s;
            for (const auto& t : v)
                s += (s.empty() ? "" : " ") + t;
            return s;
        };
        members << q.holding.to_string() << ",buy," << join(q.buy_members) << '\n';
        members << q.holding.to_string() << ",sell," << join(q.sell_members) << '\n';
    }
    csv::write_text(dir / (prefix + "portfolios.csv"), members.str());
}

} // namespace

void write_report(const BacktestReport& report, const std::filesystem::path& dir,
                  const nlohmann::ordered_json& run_config) {
    write_stage(report.final_stage, dir, "");
    if (report.validation_stage)
        write_stage(*report.validation_stage, dir, "validation_");
    nlohmann::ordered_json doc;
    doc["config"] = run_config;
    doc["run"] = report.echo;
    csv::write_text(dir / "config.json", doc.dump(2) + "\n");
}

void write_combined_summary(const std::vector<BacktestReport>& reports, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "series,mean,std,compound,full_sample_mean,full_sample_std,full_sample_compound\n";
    for (const char* side : {"buy", "sell"}) {
        for (const auto& r : reports) {
            const StageResult& st = r.final_stage;
            const Summary& s = std::string(side) == "buy" ? st.buy : st.sell;
            out << to_string(r.algo) << '-' << side << ',' << fmt(s.mean) << ',' << fmt(s.stddev) << ','
                << fmt(s.compound) << ',' << fmt(st.full_sample.mean) << ',' << fmt(st.full_sample.stddev) << ','
                << fmt(st.full_sample.compound) << '\n';
        }
    }
    csv::write_text(path, out.str());
}

std::vector<ReturnRow> read_portfolio_returns(const std::filesystem::path& path) {
    const csv::Table table = csv::read(path);
    if (table.header != std::vector<std::string>{"quarter", "buy", "sell", "full_sample"})
        fail(ErrorKind::SchemaError, path.string() + ": header must be quarter,buy,sell,full_sample");
    std::vector<ReturnRow> rows;
    for (const auto& row : table.rows) {
        if (row.size() != 4)
            fail(ErrorKind::SchemaError, path.string() + ": expected 4 columns");
        auto q = parse_quarter(row[0]);
        auto b = csv::parse_double(row[1]), s = csv::parse_double(row[2]), f = csv::parse_double(row[3]);
        if (!q || !b || !s || !f)
            fail(ErrorKind::SchemaError, path.string() + ": malformed row for " + row[0]);
        rows.push_back({*q, *b, *s, *f});
    }
    return rows;
}

StageResult stage_from_returns(const std::vector<ReturnRow>& rows) {
    StageResult st;
    for (const auto& r : rows) {
        QuarterResult q;
        q.formation = prev_quarter(r.quarter);
        q.holding = r.quarter;
        q.buy = r.buy;
        q.sell = r.sell;
        q.full_sample = r.full_sample;
        st.quarters.push_back(std::move(q));
    }
    st.buy = evaluate(st.series("buy"));
    st.sell = evaluate(st.series("sell"));
    st.full_sample = evaluate(st.series("full_sample"));
    return st;
}

void render_summaries(const std::vector<ReturnRow>& rows, const std::filesystem::path& dir) {
    std::vector<Quarter> quarters;
    std::vector<double> buy, sell, full;
    for (const auto& r : rows) {
        quarters.push_back(r.quarter);
        buy.push_back(r.buy);
        sell.push_back(r.sell);
        full.push_back(r.full_sample);
    }
    csv::write_text(dir / "summary.csv", summary_csv(evaluate(buy), evaluate(sell), evaluate(full)));
    csv::write_text(dir / "compound_curve.csv", curve_csv(quarters, buy, sell, full));
}

} // namespace fundsel::backtest
