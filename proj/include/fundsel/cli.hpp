#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fundsel/config.hpp"
#include "fundsel/error.hpp"

namespace fundsel::cli {

/// 0 ok, 1 usage, 2 data, 3 numerical.
int exit_code(ErrorCategory category);

/// Entry point behind the `fundsel` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Loads and validates panel and benchmark, prints coverage statistics.
void cmd_ingest(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Writes dataset.csv and stats.csv below <out>/dataset.
void cmd_preprocess(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Trains the final-stage models and serializes them below <out>/models.
void cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Full pipeline; returns the report directory <out>/report/<run_id>.
std::filesystem::path cmd_backtest(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Recomputes summary.csv and compound_curve.csv from stored
/// portfolio_returns.csv files below `run_dir`.
void cmd_report(const std::filesystem::path& run_dir, std::ostream& out);

/// Writes a synthetic data tree to `dir`.
void cmd_synth(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& out);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Embedded verification suite. `fault` names a check to sabotage
/// ("gradient_check"), used to prove the suite can fail.
std::vector<CheckResult> run_selfcheck(const std::string& fault = "");

/// Prints one line per check; returns the exit code.
int cmd_selfcheck(const std::string& fault, std::ostream& out);

} // namespace fundsel::cli
