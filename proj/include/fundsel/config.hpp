#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundsel/backtest.hpp"
#include "fundsel/preprocess.hpp"
#include "fundsel/quarter.hpp"
#include "fundsel/synth.hpp"

namespace fundsel {

/// Everything a run depends on. Loaded from a key=value file (or the JSON
/// echo of an earlier run), then overridden by command-line flags.
struct RunConfig {
    std::filesystem::path data_dir = "data";
    std::optional<Quarter> window_start;
    std::optional<Quarter> window_end;
    preprocess::PreprocessConfig preprocess{};
    std::string algo = "both"; // fnn | anfis | both
    backtest::BacktestConfig backtest{};
    std::filesystem::path out_dir = "out";
    std::string run_id = "run";
    synth::SynthSpec synth{};

    /// Throws InvalidArgument.
    void validate() const;

    std::vector<backtest::Algo> algorithms() const;

    /// Flat key/value echo; every key is accepted by apply_setting. The
    /// thread count is left out because it never changes results.
    nlohmann::ordered_json to_json() const;
};

/// Sets one key. Throws InvalidArgument for unknown keys or bad values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines (# starts a comment). A file whose first
/// non-blank character is `{` is read as JSON instead: either a flat object
/// or a report's config.json, whose "config" member is used.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "config");

} // namespace fundsel
