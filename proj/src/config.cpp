#include "fundsel/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fundsel/csv.hpp"
#include "fundsel/error.hpp"

namespace fundsel {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
    fail(ErrorKind::InvalidArgument, key + " = '" + value + "': " + why);
}

double to_double(const std::string& key, const std::string& value) {
    auto v = csv::parse_double(value);
    if (!v || !std::isfinite(*v))
        bad(key, value, "expected a number");
    return *v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const auto* first = value.data();
    const auto* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last)
        bad(key, value, "expected a non-negative integer");
    return out;
}

std::size_t to_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(to_u64(key, value));
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on")
        return true;
    if (value == "false" || value == "0" || value == "no" || value == "off")
        return false;
    bad(key, value, "expected true or false");
}

Quarter to_quarter(const std::string& key, const std::string& value) {
    auto q = parse_quarter(value);
    if (!q)
        bad(key, value, "expected a quarter like 1996-Q1");
    return *q;
}

Optimizer to_optimizer(const std::string& key, const std::string& value) {
    if (value == "adam")
        return Optimizer::Adam;
    if (value == "sgd")
        return Optimizer::Sgd;
    bad(key, value, "expected adam or sgd");
}

const char* optimizer_name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

bool apply_train(TrainConfig& t, const std::string& field, const std::string& key, const std::string& value) {
    if (field == "learning_rate")
        t.learning_rate = to_double(key, value);
    else if (field == "epochs")
        t.epochs = to_size(key, value);
    else if (field == "batch_size")
        t.batch_size = to_size(key, value);
    else if (field == "beta1")
        t.beta1 = to_double(key, value);
    else if (field == "beta2")
        t.beta2 = to_double(key, value);
    else if (field == "eps")
        t.eps = to_double(key, value);
    else if (field == "optimizer")
        t.optimizer = to_optimizer(key, value);
    else
        return false;
    return true;
}

} // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto& pp = cfg.preprocess;
    auto& bt = cfg.backtest;
    auto& sy = cfg.synth;

    if (key == "data_dir")
        cfg.data_dir = value;
    else if (key == "window_start")
        cfg.window_start = value.empty() ? std::nullopt : std::optional<Quarter>(to_quarter(key, value));
    else if (key == "window_end")
        cfg.window_end = value.empty() ? std::nullopt : std::optional<Quarter>(to_quarter(key, value));
    else if (key == "train_frac")
        pp.train_frac = to_double(key, value);
    else if (key == "val_frac")
        pp.validation_frac = to_double(key, value);
    else if (key == "test_frac")
        pp.test_frac = to_double(key, value);
    else if (key == "max_missing_frac")
        pp.max_missing_frac = to_double(key, value);
    else if (key == "min_samples")
        pp.min_samples = to_size(key, value);
    else if (key == "imputation") {
        auto m = preprocess::parse_imputation(value);
        if (!m)
            bad(key, value, "expected causal, two_sided, on or off");
        pp.imputation = *m;
    } else if (key == "algo") {
        if (value != "fnn" && value != "anfis" && value != "both")
            bad(key, value, "expected fnn, anfis or both");
        cfg.algo = value;
    } else if (key == "k")
        bt.k = to_size(key, value);
    else if (key == "base_seed")
        bt.base_seed = to_u64(key, value);
    else if (key == "threads")
        bt.threads = to_size(key, value);
    else if (key == "model_selection")
        bt.model_selection = to_bool(key, value);
    else if (key == "out_dir")
        cfg.out_dir = value;
    else if (key == "run_id")
        cfg.run_id = value;
    else if (key == "fnn.hidden")
        bt.models.fnn_hidden = to_size(key, value);
    else if (key == "fnn.scaler_margin")
        bt.models.fnn_scaler_margin = to_double(key, value);
    else if (key.starts_with("fnn.") && apply_train(bt.models.fnn, key.substr(4), key, value))
        ;
    else if (key == "anfis.radius")
        bt.models.subclust.radius = to_double(key, value);
    else if (key == "anfis.squash")
        bt.models.subclust.squash = to_double(key, value);
    else if (key == "anfis.accept_ratio")
        bt.models.subclust.accept_ratio = to_double(key, value);
    else if (key == "anfis.reject_ratio")
        bt.models.subclust.reject_ratio = to_double(key, value);
    else if (key == "anfis.ridge")
        bt.models.anfis_ridge = to_double(key, value);
    else if (key == "anfis.epochs")
        bt.models.anfis.epochs = to_size(key, value);
    else if (key == "anfis.learning_rate")
        bt.models.anfis.learning_rate = to_double(key, value);
    else if (key == "synth.n_stocks")
        sy.n_stocks = to_size(key, value);
    else if (key == "synth.n_quarters")
        sy.n_quarters = to_size(key, value);
    else if (key == "synth.n_features")
        sy.n_features = to_size(key, value);
    else if (key == "synth.signal_scale")
        sy.signal_scale = to_double(key, value);
    else if (key == "synth.signal_norm")
        sy.signal_norm = to_double(key, value);
    else if (key == "synth.noise_sigma")
        sy.noise_sigma = to_double(key, value);
    else if (key == "synth.seed")
        sy.seed = to_u64(key, value);
    else if (key == "synth.blank_fraction")
        sy.blank_fraction = to_double(key, value);
    else if (key == "synth.feature_step")
        sy.feature_step = to_double(key, value);
    else if (key == "synth.start")
        sy.start = to_quarter(key, value);
    else
        fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
}

void RunConfig::validate() const {
    preprocess.validate();
    backtest.models.fnn.validate();
    backtest.models.anfis.validate();
    backtest.models.subclust.validate();
    if (backtest.k < 1)
        fail(ErrorKind::InvalidArgument, "k must be at least 1");
    if (backtest.models.fnn_hidden < 1)
        fail(ErrorKind::InvalidArgument, "fnn.hidden must be at least 1");
    if (!(backtest.models.fnn_scaler_margin >= 0.0))
        fail(ErrorKind::InvalidArgument, "fnn.scaler_margin must be non-negative");
    if (!(backtest.models.anfis_ridge >= 0.0))
        fail(ErrorKind::InvalidArgument, "anfis.ridge must be non-negative");
    if (window_start && window_end && *window_end < *window_start)
        fail(ErrorKind::InvalidArgument, "window_end precedes window_start");
    if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos)
        fail(ErrorKind::InvalidArgument, "run_id must be a plain directory name");
}

std::vector<backtest::Algo> RunConfig::algorithms() const {
    if (algo == "fnn")
        return {backtest::Algo::Fnn};
    if (algo == "anfis")
        return {backtest::Algo::Anfis};
    return {backtest::Algo::Fnn, backtest::Algo::Anfis};
}

nlohmann::ordered_json RunConfig::to_json() const {
    const auto& pp = preprocess;
    const auto& bt = backtest;
    const auto& m = bt.models;
    const auto& sy = synth;
    auto num = [](double v) { return csv::format_exact(v); };

    nlohmann::ordered_json j;
    j["data_dir"] = data_dir.generic_string();
    j["window_start"] = window_start ? window_start->to_string() : "";
    j["window_end"] = window_end ? window_end->to_string() : "";
    j["train_frac"] = num(pp.train_frac);
    j["val_frac"] = num(pp.validation_frac);
    j["test_frac"] = num(pp.test_frac);
    j["max_missing_frac"] = num(pp.max_missing_frac);
    j["min_samples"] = std::to_string(pp.min_samples);
    j["imputation"] = preprocess::to_string(pp.imputation);
    j["algo"] = algo;
    j["k"] = std::to_string(bt.k);
    j["base_seed"] = std::to_string(bt.base_seed);
    j["model_selection"] = bt.model_selection ? "true" : "false";
    j["out_dir"] = out_dir.generic_string();
    j["run_id"] = run_id;
    j["fnn.hidden"] = std::to_string(m.fnn_hidden);
    j["fnn.learning_rate"] = num(m.fnn.learning_rate);
    j["fnn.epochs"] = std::to_string(m.fnn.epochs);
    j["fnn.batch_size"] = std::to_string(m.fnn.batch_size);
    j["fnn.beta1"] = num(m.fnn.beta1);
    j["fnn.beta2"] = num(m.fnn.beta2);
    j["fnn.eps"] = num(m.fnn.eps);
    j["fnn.optimizer"] = optimizer_name(m.fnn.optimizer);
    j["fnn.scaler_margin"] = num(m.fnn_scaler_margin);
    j["anfis.radius"] = num(m.subclust.radius);
    j["anfis.squash"] = num(m.subclust.squash);
    j["anfis.accept_ratio"] = num(m.subclust.accept_ratio);
    j["anfis.reject_ratio"] = num(m.subclust.reject_ratio);
    j["anfis.ridge"] = num(m.anfis_ridge);
    j["anfis.epochs"] = std::to_string(m.anfis.epochs);
    j["anfis.learning_rate"] = num(m.anfis.learning_rate);
    j["synth.n_stocks"] = std::to_string(sy.n_stocks);
    j["synth.n_quarters"] = std::to_string(sy.n_quarters);
    j["synth.n_features"] = std::to_string(sy.n_features);
    j["synth.signal_scale"] = num(sy.signal_scale);
    j["synth.signal_norm"] = num(sy.signal_norm);
    j["synth.noise_sigma"] = num(sy.noise_sigma);
    j["synth.seed"] = std::to_string(sy.seed);
    j["synth.blank_fraction"] = num(sy.blank_fraction);
    j["synth.feature_step"] = num(sy.feature_step);
    j["synth.start"] = sy.start.to_string();
    return j;
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    const auto first = text.find_first_not_of(" \t\r\n\xEF\xBB\xBF");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::InvalidArgument, origin + ": " + e.what());
        }
        const nlohmann::json& obj = doc.contains("config") ? doc["config"] : doc;
        if (!obj.is_object())
            fail(ErrorKind::InvalidArgument, origin + ": expected a JSON object");
        for (const auto& [key, value] : obj.items()) {
            std::string s;
            if (value.is_string())
                s = value.get<std::string>();
            else if (value.is_boolean())
                s = value.get<bool>() ? "true" : "false";
            else if (value.is_number_unsigned())
                s = std::to_string(value.get<std::uint64_t>());
            else if (value.is_number_integer())
                s = std::to_string(value.get<std::int64_t>());
            else if (value.is_number_float())
                s = csv::format_exact(value.get<double>());
            else
                fail(ErrorKind::InvalidArgument, origin + ": value of '" + key + "' must be a scalar");
            apply_setting(cfg, key, s);
        }
        return;
    }

    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::InvalidArgument, origin + ":" + std::to_string(lineno) + ": expected key = value");
        apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::MissingFile, "cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    apply_config_text(cfg, buf.str(), path.string());
}

} // namespace fundsel
