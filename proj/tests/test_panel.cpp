#include <gtest/gtest.h>

#include "fundsel/csv.hpp"
#include "fundsel/error.hpp"
#include "fundsel/panel.hpp"
#include "fundsel/synth.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using fundsel::ErrorKind;
using fundsel::Quarter;
using namespace fundsel::panel;
using testing_util::kind_of;

namespace {

// Two tickers, three quarters, fully populated.
fs::path small_tree(const std::string& name) {
    const auto root = oracle::scratch_dir(name);
    fundsel::csv::write_text(root / "fundamentals" / "AAA.csv",
                             "quarter,pe,assets\n1997-Q1,10,100\n1997-Q2,11,101\n1997-Q3,12,102\n");
    fundsel::csv::write_text(root / "fundamentals" / "BBB.csv",
                             "quarter,pe,assets\n1997-Q1,20,200\n1997-Q2,21,201\n1997-Q3,22,202\n");
    fundsel::csv::write_text(root / "prices.csv", "ticker,quarter,close\n"
                                                  "AAA,1997-Q1,5\nAAA,1997-Q2,6\nAAA,1997-Q3,7\n"
                                                  "BBB,1997-Q1,50\nBBB,1997-Q2,55\nBBB,1997-Q3,60\n");
    fundsel::csv::write_text(root / "benchmark.csv", "quarter,level\n1997-Q1,1000\n1997-Q2,1010\n1997-Q3,990\n");
    return root;
}

QuarterlyPanel grid(const std::vector<std::string>& tickers, Quarter start, std::size_t nq,
                    std::vector<std::optional<Quarter>> first = {}) {
    std::vector<Quarter> quarters;
    for (Quarter q = start; quarters.size() < nq; q = fundsel::next_quarter(q))
        quarters.push_back(q);
    std::vector<std::optional<double>> values(tickers.size() * nq, 1.0);
    std::vector<std::optional<double>> prices(tickers.size() * nq, 10.0);
    return QuarterlyPanel(tickers, quarters, {"f"}, values, prices, std::move(first));
}

} // namespace

TEST(LoadPanel, FullyPopulatedFixtureHasNoMissing) {
    const auto loaded = load_panel(small_tree("full"));
    const auto& p = loaded.panel;
    EXPECT_EQ(p.tickers(), (std::vector<std::string>{"AAA", "BBB"}));
    EXPECT_EQ(p.n_quarters(), 3u);
    EXPECT_EQ(p.features(), (std::vector<std::string>{"pe", "assets"}));
    EXPECT_EQ(p.missing_count(), 0u);
    EXPECT_EQ(*p.value(1, 2, 1), 202.0);
    EXPECT_EQ(*p.price(0, 1), 6.0);
    EXPECT_EQ(p.first_observed(0), (Quarter{1997, 1}));
}

TEST(LoadPanel, EmptyCellBecomesOneMissingEntry) {
    const auto root = small_tree("one_missing");
    fundsel::csv::write_text(root / "fundamentals" / "BBB.csv",
                             "quarter,pe,assets\n1997-Q1,20,200\n1997-Q2,,201\n1997-Q3,22,202\n");
    const auto loaded = load_panel(root);
    EXPECT_EQ(loaded.panel.missing_count(), 1u);
    EXPECT_FALSE(loaded.panel.value(1, 1, 0));
    EXPECT_EQ(loaded.report.total_missing(), 1u);
}

TEST(LoadPanel, UnparseableCellsAreCountedAsMissing) {
    const auto root = small_tree("unparseable");
    fundsel::csv::write_text(root / "fundamentals" / "AAA.csv",
                             "quarter,pe,assets\n1997-Q1,10,NA\n1997-Q2,abc,101\n1997-Q3,12,102\n");
    const auto loaded = load_panel(root);
    EXPECT_EQ(loaded.panel.missing_count(), 2u);
    EXPECT_EQ(loaded.report.total_unparseable(), 1u);
    EXPECT_EQ(loaded.report.total_missing(), 1u);
    EXPECT_EQ((loaded.report.cells.at({"AAA", "pe"}).unparseable), 1u);
    EXPECT_EQ(loaded.report.total_missing() + loaded.report.total_unparseable() + loaded.report.absent_row_cells,
              loaded.panel.missing_count());
    EXPECT_FALSE(loaded.report.warnings.empty());
}

TEST(LoadPanel, DuplicateQuarterRow) {
    const auto root = small_tree("dup");
    fundsel::csv::write_text(root / "fundamentals" / "AAA.csv",
                             "quarter,pe,assets\n1997-Q1,10,100\n1997-Q2,11,101\n1997-Q2,11,101\n");
    EXPECT_EQ(kind_of([&] { load_panel(root); }), ErrorKind::DuplicateQuarter);
}

TEST(LoadPanel, MissingTickerFile) {
    const auto root = small_tree("missing_file");
    fs::remove(root / "fundamentals" / "BBB.csv");
    EXPECT_EQ(kind_of([&] { load_panel(root); }), ErrorKind::MissingFile);
}

TEST(LoadPanel, HeaderMismatch) {
    const auto root = small_tree("header");
    fundsel::csv::write_text(root / "fundamentals" / "BBB.csv", "quarter,pe,debt\n1997-Q1,20,200\n");
    EXPECT_EQ(kind_of([&] { load_panel(root); }), ErrorKind::SchemaError);
    fundsel::csv::write_text(root / "prices.csv", "ticker,date,close\nAAA,1997-Q1,5\n");
    EXPECT_EQ(kind_of([&] { load_panel(root); }), ErrorKind::SchemaError);
}

TEST(LoadPanel, NonPositivePrice) {
    const auto root = small_tree("neg_price");
    fundsel::csv::write_text(root / "prices.csv", "ticker,quarter,close\nAAA,1997-Q1,0\n");
    EXPECT_EQ(kind_of([&] { load_panel(root); }), ErrorKind::NonPositiveLevel);
}

TEST(LoadPanel, AbsentRowsBecomeMissing) {
    const auto root = small_tree("absent");
    fundsel::csv::write_text(root / "fundamentals" / "AAA.csv", "quarter,pe,assets\n1997-Q1,10,100\n1997-Q3,12,102\n");
    const auto loaded = load_panel(root);
    EXPECT_EQ(loaded.panel.n_quarters(), 3u);
    EXPECT_EQ(loaded.report.absent_row_cells, 2u);
    EXPECT_EQ(loaded.panel.missing_count(), 2u);
}

TEST(LoadBenchmark, ValidSeries) {
    const auto root = oracle::scratch_dir("bench_ok");
    std::string text = "quarter,level\n";
    Quarter q{1995, 1};
    for (int i = 0; i < 90; ++i, q = fundsel::next_quarter(q))
        text += q.to_string() + "," + std::to_string(1000 + i) + "\n";
    fundsel::csv::write_text(root / "b.csv", text);
    EXPECT_EQ(load_benchmark(root / "b.csv").size(), 90u);
}

TEST(LoadBenchmark, Errors) {
    const auto root = oracle::scratch_dir("bench_err");
    fundsel::csv::write_text(root / "zero.csv", "quarter,level\n1996-Q1,10\n1996-Q2,0\n");
    EXPECT_EQ(kind_of([&] { load_benchmark(root / "zero.csv"); }), ErrorKind::NonPositiveLevel);
    fundsel::csv::write_text(root / "gap.csv", "quarter,level\n1996-Q1,1\n1996-Q2,1\n1996-Q3,1\n1997-Q1,1\n");
    EXPECT_EQ(kind_of([&] { load_benchmark(root / "gap.csv"); }), ErrorKind::GapInSeries);
    fundsel::csv::write_text(root / "schema.csv", "quarter,close\n1996-Q1,1\n");
    EXPECT_EQ(kind_of([&] { load_benchmark(root / "schema.csv"); }), ErrorKind::SchemaError);
    fundsel::csv::write_text(root / "text.csv", "quarter,level\n1996-Q1,high\n");
    EXPECT_EQ(kind_of([&] { load_benchmark(root / "text.csv"); }), ErrorKind::SchemaError);
    EXPECT_EQ(kind_of([&] { load_benchmark(root / "absent.csv"); }), ErrorKind::MissingFile);
}

TEST(PanelInvariants, ConstructorRejectsBadInput) {
    EXPECT_EQ(kind_of([] {
                  QuarterlyPanel({"A"}, {{1996, 1}, {1996, 3}}, {"f"}, {1.0, 1.0}, {1.0, 1.0});
              }),
              ErrorKind::SchemaError);
    EXPECT_EQ(kind_of([] { QuarterlyPanel({"A"}, {{1996, 1}}, {"f", "f"}, {1.0, 1.0}, {1.0}); }),
              ErrorKind::SchemaError);
    EXPECT_EQ(kind_of([] { QuarterlyPanel({"A"}, {{1996, 1}}, {"f"}, {1.0}, {-2.0}); }),
              ErrorKind::NonPositiveLevel);
}

TEST(PanelRoundTrip, WriteThenLoadIsIdentical) {
    fundsel::synth::SynthSpec spec;
    spec.n_stocks = 5;
    spec.n_quarters = 16;
    spec.n_features = 4;
    spec.blank_fraction = 0.1;
    spec.seed = 3;
    const auto data = fundsel::synth::generate_panel(spec);
    const auto root = oracle::scratch_dir("roundtrip");
    write_panel(data.panel, root);
    write_benchmark(data.bench, root / "benchmark.csv");
    const auto loaded = load_panel(root);
    EXPECT_EQ(loaded.panel.tickers(), data.panel.tickers());
    EXPECT_EQ(loaded.panel.quarters(), data.panel.quarters());
    EXPECT_EQ(loaded.panel.raw_values(), data.panel.raw_values());
    EXPECT_EQ(loaded.panel.raw_prices(), data.panel.raw_prices());
    EXPECT_EQ(load_benchmark(root / "benchmark.csv"), data.bench);
}

TEST(RestrictWindow, DropsLateStartersOnly) {
    // AAA first seen 1995Q3, BBB 1997Q1.
    const auto panel = grid({"AAA", "BBB"}, {1995, 3}, 12, {Quarter{1995, 3}, Quarter{1997, 1}});
    const auto w = restrict_window(panel, {1996, 1}, {1997, 4});
    EXPECT_EQ(w.panel.tickers(), (std::vector<std::string>{"AAA"}));
    EXPECT_EQ(w.dropped, (std::vector<std::string>{"BBB"}));
    EXPECT_EQ(w.panel.quarters().front(), (Quarter{1996, 1}));
    EXPECT_EQ(w.panel.quarters().back(), (Quarter{1997, 4}));
    EXPECT_EQ(w.panel.n_quarters(), 8u);
}

TEST(RestrictWindow, IsIdempotent) {
    const auto panel = grid({"AAA", "BBB", "CCC"}, {1995, 1}, 20, {Quarter{1995, 1}, Quarter{1996, 2}, Quarter{1995, 4}});
    const auto once = restrict_window(panel, {1996, 1}, {1998, 2});
    const auto twice = restrict_window(once.panel, {1996, 1}, {1998, 2});
    EXPECT_EQ(once.panel, twice.panel);
    EXPECT_TRUE(twice.dropped.empty());
}

TEST(RestrictWindow, EmptyUniverse) {
    const auto panel = grid({"AAA", "BBB"}, {2000, 1}, 8);
    EXPECT_EQ(kind_of([&] { restrict_window(panel, {1996, 1}, {2001, 4}); }), ErrorKind::EmptyUniverse);
}
