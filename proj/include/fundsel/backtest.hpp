#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fundsel/anfis.hpp"
#include "fundsel/fnn.hpp"
#include "fundsel/preprocess.hpp"
#include "fundsel/quarter.hpp"
#include "fundsel/train_config.hpp"

namespace fundsel::backtest {

enum class Algo { Fnn, Anfis };
std::string to_string(Algo algo);   // "FNN" / "ANFIS"
std::optional<Algo> parse_algo(const std::string& text);

/// Validation: fit on train, evaluate validation quarters.
/// Final: fit on train+validation, evaluate test quarters.
enum class Stage { Validation, Final };

struct ModelConfig {
    std::size_t fnn_hidden = 21;
    TrainConfig fnn{};
    double fnn_scaler_margin = 0.1;

    anfis::SubClustConfig subclust{};
    TrainConfig anfis{.learning_rate = 0.01, .epochs = 10};
    double anfis_ridge = 1e-6;
};

struct BacktestConfig {
    ModelConfig models{};
    std::size_t k = 30;
    std::uint64_t base_seed = 0;
    std::size_t threads = 1;
    /// Also run the validation-stage pass.
    bool model_selection = false;
};

using StockModel = std::variant<fnn::FnnModel, anfis::AnfisModel>;

/// Predicted next-quarter relative return.
double predict(const StockModel& model, const Eigen::VectorXd& x);

struct Exclusion {
    std::string ticker;
    std::string reason;
};

struct ModelTable {
    Algo algo = Algo::Fnn;
    Stage stage = Stage::Final;
    std::vector<std::string> tickers; // sorted, parallel to `models`
    std::vector<StockModel> models;
    std::vector<Exclusion> excluded;

    const StockModel* find(const std::string& ticker) const;
};

/// Trains one model per ticker on the stage's fitting range. Tickers whose
/// training fails are recorded in `excluded`. Throws UniverseTooSmall when
/// fewer than 2k tickers remain.
ModelTable train_universe(const preprocess::Dataset& dataset, Algo algo, const BacktestConfig& cfg,
                          Stage stage = Stage::Final);

struct CrossSection {
    Quarter quarter; // formation quarter of the feature vectors
    std::vector<std::string> tickers;
    std::vector<double> scores;
    std::vector<double> realized; // relative return over the following quarter
};

/// Scores every modeled ticker at `quarter`, which must belong to `range`.
CrossSection predict_cross_section(const ModelTable& models, const preprocess::Dataset& dataset, Quarter quarter,
                                   preprocess::Split range = preprocess::Split::Test);

enum class Side { Buy, Sell };

struct Portfolio {
    Quarter quarter;
    Side side = Side::Buy;
    std::vector<std::string> members; // in selection order
};

/// Buy takes the k highest scores, Sell the k lowest; ties go to the
/// alphabetically earlier ticker and Buy is filled first.
std::pair<Portfolio, Portfolio> construct_portfolios(const CrossSection& cs, std::size_t k);

/// Equal-weight mean of the members' realized relative returns.
double portfolio_return(const Portfolio& portfolio, const CrossSection& cs);

struct Summary {
    double mean = 0.0;
    double stddev = 0.0; // sample (n - 1)
    double compound = 0.0; // prod(1 + r) - 1
};

Summary evaluate(std::span<const double> series);

/// Running prod(1 + r) - 1 after each period.
std::vector<double> compound_curve(std::span<const double> series);

struct QuarterResult {
    Quarter formation;
    Quarter holding;
    std::size_t universe = 0;
    double buy = 0.0;
    double sell = 0.0;
    double middle = 0.0; // unselected remainder, 0 when empty
    double full_sample = 0.0;
    std::vector<std::string> buy_members;
    std::vector<std::string> sell_members;
};

struct StageResult {
    Stage stage = Stage::Final;
    std::vector<QuarterResult> quarters;
    Summary buy, sell, full_sample;
    std::vector<std::string> universe;
    std::vector<Exclusion> excluded;

    std::vector<double> series(const char* which) const; // "buy", "sell", "full_sample"
};

struct BacktestReport {
    Algo algo = Algo::Fnn;
    StageResult final_stage;
    std::optional<StageResult> validation_stage;
    nlohmann::ordered_json echo; // hyperparameters, seeds, split boundaries
};

/// Runs the evaluation loop over one stage with already trained models.
StageResult evaluate_stage(const ModelTable& models, const preprocess::Dataset& dataset, std::size_t k);

/// Trains on train+validation, evaluates every test quarter; optionally runs
/// the validation-stage pass first.
BacktestReport run_backtest(const preprocess::Dataset& dataset, Algo algo, const BacktestConfig& cfg);

nlohmann::ordered_json config_echo(const preprocess::Dataset& dataset, Algo algo, const BacktestConfig& cfg);

/// portfolio_returns.csv, summary.csv, compound_curve.csv (plus the
/// validation_* equivalents when present) and config.json.
void write_report(const BacktestReport& report, const std::filesystem::path& dir,
                  const nlohmann::ordered_json& run_config = nlohmann::ordered_json::object());

/// Tables-style summary for several algorithms: one row per (algorithm,
/// side) with that run's full-sample statistics alongside.
void write_combined_summary(const std::vector<BacktestReport>& reports, const std::filesystem::path& path);

struct ReturnRow {
    Quarter quarter;
    double buy = 0.0;
    double sell = 0.0;
    double full_sample = 0.0;
};

std::vector<ReturnRow> read_portfolio_returns(const std::filesystem::path& path);

/// Stage result carrying only the stored per-quarter returns and their
/// summaries (no memberships). Quarters are holding quarters.
StageResult stage_from_returns(const std::vector<ReturnRow>& rows);

/// summary.csv and compound_curve.csv recomputed from stored quarterly returns.
void render_summaries(const std::vector<ReturnRow>& rows, const std::filesystem::path& dir);

} // namespace fundsel::backtest
