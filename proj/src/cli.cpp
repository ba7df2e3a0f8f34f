#include "fundsel/cli.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "fundsel/backtest.hpp"
#include "fundsel/csv.hpp"
#include "fundsel/panel.hpp"
#include "fundsel/preprocess.hpp"
#include "fundsel/synth.hpp"

namespace fundsel::cli {

namespace fs = std::filesystem;

int exit_code(ErrorCategory category) {
    switch (category) {
    case ErrorCategory::Usage: return 1;
    case ErrorCategory::Data: return 2;
    case ErrorCategory::Numerical: return 3;
    }
    return 2;
}

namespace {

struct Inputs {
    panel::QuarterlyPanel panel;
    panel::BenchmarkSeries bench;
    panel::LoadReport report;
    std::vector<std::string> window_dropped;
};

Inputs load_inputs(const RunConfig& cfg) {
    Inputs in;
    auto loaded = panel::load_panel(cfg.data_dir);
    in.bench = panel::load_benchmark(cfg.data_dir / "benchmark.csv");
    in.report = std::move(loaded.report);
    in.panel = std::move(loaded.panel);
    if (cfg.window_start || cfg.window_end) {
        const Quarter start = cfg.window_start.value_or(in.panel.quarters().front());
        const Quarter end = cfg.window_end.value_or(in.panel.quarters().back());
        auto w = panel::restrict_window(in.panel, start, end);
        in.panel = std::move(w.panel);
        in.window_dropped = std::move(w.dropped);
    }
    return in;
}

preprocess::Dataset load_dataset(const RunConfig& cfg, std::ostream& err) {
    Inputs in = load_inputs(cfg);
    for (const auto& t : in.window_dropped)
        err << "warning: " << t << " first observed after the window start, dropped\n";
    preprocess::Dataset ds = preprocess::build_dataset(in.panel, in.bench, cfg.preprocess);
    for (const auto& w : ds.warnings)
        err << "warning: " << w << '\n';
    return ds;
}

fs::path report_dir(const RunConfig& cfg) { return cfg.out_dir / "report" / cfg.run_id; }

std::string pct(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * v << '%';
    return s.str();
}

} // namespace

void cmd_ingest(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const Inputs in = load_inputs(cfg);
    const auto& p = in.panel;
    for (const auto& w : in.report.warnings)
        err << "warning: " << w << '\n';

    out << "tickers " << p.n_tickers() << ", quarters " << p.n_quarters() << " (" << p.quarters().front().to_string()
        << " .. " << p.quarters().back().to_string() << "), features " << p.n_features() << '\n';
    out << "benchmark " << in.bench.size() << " quarters, covers panel: "
        << (in.bench.covers(p.quarters().front(), p.quarters().back()) ? "yes" : "no") << '\n';
    if (!in.window_dropped.empty()) {
        out << "dropped by window:";
        for (const auto& t : in.window_dropped)
            out << ' ' << t;
        out << '\n';
    }

    out << "\nticker,first_observed,priced_quarters,missing_cells\n";
    for (std::size_t t = 0; t < p.n_tickers(); ++t) {
        std::size_t priced = 0, missing = 0;
        for (std::size_t q = 0; q < p.n_quarters(); ++q) {
            priced += p.price(t, q).has_value();
            for (std::size_t f = 0; f < p.n_features(); ++f)
                missing += !p.value(t, q, f).has_value();
        }
        const auto first = p.first_observed(t);
        out << p.tickers()[t] << ',' << (first ? first->to_string() : "none") << ',' << priced << ',' << missing
            << '\n';
    }

    out << "\nfeature,missing_fraction\n";
    const double cells = static_cast<double>(p.n_tickers() * p.n_quarters());
    for (std::size_t f = 0; f < p.n_features(); ++f)
        out << p.features()[f] << ',' << csv::format_sig(cells > 0 ? p.missing_count(f) / cells : 0.0, 6) << '\n';
    out << "\nmissing cells " << in.report.total_missing() << ", unparseable " << in.report.total_unparseable()
        << ", absent rows " << in.report.absent_row_cells << '\n';
}

void cmd_preprocess(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const preprocess::Dataset ds = load_dataset(cfg, err);
    const fs::path dir = cfg.out_dir / "dataset";
    preprocess::write_dataset(ds, dir);
    out << "dataset: " << ds.n_tickers() << " tickers, " << ds.n_samples() << " samples (train "
        << ds.split.count(preprocess::Split::Train) << ", validation "
        << ds.split.count(preprocess::Split::Validation) << ", test " << ds.split.count(preprocess::Split::Test)
        << "), " << ds.n_features() << " features\n";
    out << "wrote " << (dir / "dataset.csv").generic_string() << " and " << (dir / "stats.csv").generic_string()
        << '\n';
}

void cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const preprocess::Dataset raw = load_dataset(cfg, err);
    const preprocess::Dataset ds = preprocess::with_stats_range(raw, preprocess::StatsRange::TrainValidation);
    for (auto algo : cfg.algorithms()) {
        const auto table = backtest::train_universe(ds, algo, cfg.backtest, backtest::Stage::Final);
        const fs::path dir = cfg.out_dir / "models" / backtest::to_string(algo);
        std::ostringstream index;
        index << "ticker,status\n";
        for (std::size_t i = 0; i < table.tickers.size(); ++i) {
            const std::string text = std::visit([](const auto& m) { return serialize(m); }, table.models[i]);
            csv::write_text(dir / (table.tickers[i] + ".model"), text);
            index << table.tickers[i] << ",trained\n";
        }
        for (const auto& e : table.excluded) {
            index << e.ticker << ",excluded\n";
            err << "warning: " << backtest::to_string(algo) << " " << e.ticker << " excluded: " << e.reason << '\n';
        }
        csv::write_text(dir / "models.csv", index.str());
        out << backtest::to_string(algo) << ": " << table.tickers.size() << " models, " << table.excluded.size()
            << " excluded, written to " << dir.generic_string() << '\n';
    }
}

fs::path cmd_backtest(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const preprocess::Dataset ds = load_dataset(cfg, err);
    const fs::path dir = report_dir(cfg);
    const auto algos = cfg.algorithms();
    const auto run_config = cfg.to_json();

    std::vector<backtest::BacktestReport> reports;
    for (auto algo : algos) {
        auto report = backtest::run_backtest(ds, algo, cfg.backtest);
        for (const auto& e : report.final_stage.excluded)
            err << "warning: " << backtest::to_string(algo) << " " << e.ticker << " excluded: " << e.reason << '\n';
        const fs::path sub = algos.size() == 1 ? dir : dir / backtest::to_string(algo);
        backtest::write_report(report, sub, run_config);

        const auto& st = report.final_stage;
        out << backtest::to_string(algo) << " over " << st.quarters.size() << " test quarters, universe "
            << st.universe.size() << '\n';
        out << "  buy   mean " << pct(st.buy.mean) << "  std " << pct(st.buy.stddev) << "  compound "
            << pct(st.buy.compound) << '\n';
        out << "  sell  mean " << pct(st.sell.mean) << "  std " << pct(st.sell.stddev) << "  compound "
            << pct(st.sell.compound) << '\n';
        out << "  full  mean " << pct(st.full_sample.mean) << "  std " << pct(st.full_sample.stddev)
            << "  compound " << pct(st.full_sample.compound) << '\n';
        reports.push_back(std::move(report));
    }
    if (algos.size() > 1) {
        backtest::write_combined_summary(reports, dir / "summary.csv");
        nlohmann::ordered_json doc;
        doc["config"] = run_config;
        csv::write_text(dir / "config.json", doc.dump(2) + "\n");
    }
    out << "report written to " << dir.generic_string() << '\n';
    return dir;
}

void cmd_report(const fs::path& run_dir, std::ostream& out) {
    if (fs::exists(run_dir / "portfolio_returns.csv")) {
        backtest::render_summaries(backtest::read_portfolio_returns(run_dir / "portfolio_returns.csv"), run_dir);
        out << "re-rendered " << run_dir.generic_string() << '\n';
        return;
    }
    std::vector<backtest::BacktestReport> reports;
    for (auto algo : {backtest::Algo::Fnn, backtest::Algo::Anfis}) {
        const fs::path sub = run_dir / backtest::to_string(algo);
        if (!fs::exists(sub / "portfolio_returns.csv"))
            continue;
        const auto rows = backtest::read_portfolio_returns(sub / "portfolio_returns.csv");
        backtest::render_summaries(rows, sub);
        backtest::BacktestReport r;
        r.algo = algo;
        r.final_stage = backtest::stage_from_returns(rows);
        reports.push_back(std::move(r));
        out << "re-rendered " << sub.generic_string() << '\n';
    }
    if (reports.empty())
        fail(ErrorKind::MissingFile, "no portfolio_returns.csv below " + run_dir.string());
    if (reports.size() > 1)
        backtest::write_combined_summary(reports, run_dir / "summary.csv");
}

void cmd_synth(const RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    const synth::SynthData data = synth::generate_panel(cfg.synth);
    synth::write_synth(data, dir);
    out << "synthetic panel: " << data.panel.n_tickers() << " tickers x " << data.panel.n_quarters()
        << " quarters x " << data.panel.n_features() << " features, seed " << cfg.synth.seed << ", written to "
        << dir.generic_string() << '\n';
}

int cmd_selfcheck(const std::string& fault, std::ostream& out) {
    const auto results = run_selfcheck(fault);
    bool ok = true;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.detail.empty())
            out << "  (" << r.detail << ')';
        out << '\n';
        ok = ok && r.passed;
    }
    return ok ? 0 : 3;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Per-stock FNN/ANFIS return models and quarterly portfolio backtests"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, algo, run_id;
    std::uint64_t seed = 0;
    std::size_t threads = 0, k = 0;
    std::vector<std::string> sets;

    struct Flags {
        CLI::Option *config, *out, *data, *seed, *threads, *algo, *k, *run_id, *set;
    };
    auto common = [&](CLI::App* sub) {
        Flags f{};
        f.config = sub->add_option("--config", config_path, "key=value config file or a report's config.json");
        f.out = sub->add_option("--out", out_dir, "output directory");
        f.data = sub->add_option("--data", data_dir, "data directory");
        f.seed = sub->add_option("--seed", seed, "base seed");
        f.threads = sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        f.algo = sub->add_option("--algo", algo, "fnn, anfis or both")->check(CLI::IsMember({"fnn", "anfis", "both"}));
        f.k = sub->add_option("--k", k, "portfolio size");
        f.run_id = sub->add_option("--run-id", run_id, "report subdirectory name");
        f.set = sub->add_option("--set", sets, "extra key=value override, repeatable");
        return f;
    };

    auto* ingest = app.add_subcommand("ingest", "validate the raw panel and benchmark");
    auto* prep = app.add_subcommand("preprocess", "write dataset.csv and stats.csv");
    auto* train = app.add_subcommand("train", "train and serialize the per-stock models");
    auto* bt = app.add_subcommand("backtest", "run the full experiment and write the report");
    auto* report = app.add_subcommand("report", "re-render summaries from stored quarterly returns");
    auto* synth = app.add_subcommand("synth", "write a synthetic data tree");
    auto* check = app.add_subcommand("selfcheck", "run the embedded verification suite");

    std::vector<std::pair<CLI::App*, Flags>> subs;
    for (auto* s : {ingest, prep, train, bt, report, synth})
        subs.emplace_back(s, common(s));
    std::string run_dir;
    report->add_option("--run", run_dir, "report directory (default <out>/report/<run_id>)");
    std::string fault;
    check->add_option("--inject-fault", fault)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    try {
        if (check->parsed())
            return cmd_selfcheck(fault, out);

        const Flags* flags = nullptr;
        for (const auto& [s, f] : subs)
            if (s->parsed())
                flags = &f;

        RunConfig cfg;
        cfg.backtest.threads = std::max(1u, std::thread::hardware_concurrency());
        if (flags->config->count())
            apply_config_file(cfg, config_path);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                fail(ErrorKind::InvalidArgument, "--set expects key=value, got '" + s + "'");
            apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        if (flags->out->count())
            cfg.out_dir = out_dir;
        if (flags->data->count())
            cfg.data_dir = data_dir;
        if (flags->seed->count())
            (synth->parsed() ? cfg.synth.seed : cfg.backtest.base_seed) = seed;
        if (flags->threads->count())
            cfg.backtest.threads = threads;
        if (flags->algo->count())
            cfg.algo = algo;
        if (flags->k->count())
            cfg.backtest.k = k;
        if (flags->run_id->count())
            cfg.run_id = run_id;
        cfg.validate();

        if (ingest->parsed())
            cmd_ingest(cfg, out, err);
        else if (prep->parsed())
            cmd_preprocess(cfg, out, err);
        else if (train->parsed())
            cmd_train(cfg, out, err);
        else if (bt->parsed())
            cmd_backtest(cfg, out, err);
        else if (report->parsed())
            cmd_report(run_dir.empty() ? report_dir(cfg) : fs::path(run_dir), out);
        else if (synth->parsed())
            cmd_synth(cfg, flags->out->count() ? cfg.out_dir : cfg.data_dir, out);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(error_category(e.kind()));
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: MissingFile: " << e.what() << '\n';
        return 2;
    }
}

} // namespace fundsel::cli
