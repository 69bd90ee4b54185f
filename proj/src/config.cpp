#include "snnconv/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "snnconv/dataset.hpp"

namespace snn {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw Error(ErrorKind::InvalidArgument, "config key " + key + ": '" + value + "' is not " + expected);
}

double as_double(const std::string& key, const std::string& value) {
    if (value == "inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used == value.size()) return v;
    } catch (const std::exception&) {
    }
    bad_value(key, value, "a number");
}

std::uint64_t as_unsigned(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "a non-negative integer");
    return v;
}

bool as_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "true or false");
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::stringstream ss{std::string(text)};
    while (std::getline(ss, item, sep)) parts.push_back(trim(item));
    return parts;
}

std::string num(double v) {
    if (std::isinf(v)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0;
    // prefer the short form when it round-trips
    char short_buf[32];
    std::snprintf(short_buf, sizeof(short_buf), "%.15g", v);
    back = std::strtod(short_buf, nullptr);
    return back == v ? short_buf : buf;
}

std::string join_rates(const std::vector<double>& rates) {
    std::string out;
    for (std::size_t i = 0; i < rates.size(); ++i) out += (i ? "," : "") + num(rates[i]);
    return out;
}

std::string path_text(const std::vector<Displacement>& path) {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) out += (i ? ";" : "") + num(path[i].dx) + ":" + num(path[i].dy);
    return out;
}

std::vector<Displacement> parse_path(const std::string& key, const std::string& value) {
    std::vector<Displacement> path;
    for (const auto& point : split(value, ';')) {
        const auto xy = split(point, ':');
        if (xy.size() != 2) bad_value(key, value, "a list of dx:dy points separated by ';'");
        path.push_back({as_double(key, xy[0]), as_double(key, xy[1])});
    }
    if (path.empty()) bad_value(key, value, "a non-empty path");
    return path;
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
}

std::filesystem::path RunConfig::data_path(const std::string& file) const {
    const std::filesystem::path f(file);
    return f.is_absolute() ? f : resolve(data_dir) / f;
}

std::vector<double> parse_rate_list(std::string_view text) {
    std::vector<double> rates;
    for (const auto& item : split(text, ',')) {
        if (item.empty()) throw Error(ErrorKind::InvalidArgument, "empty entry in rate list '" + std::string(text) + "'");
        rates.push_back(as_double("rates", item));
    }
    if (rates.empty()) throw Error(ErrorKind::InvalidArgument, "rate list is empty");
    return rates;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::InvalidArgument, "config line " + std::to_string(number) + " has no '='");
        auto key = trim(std::string_view(stripped).substr(0, eq));
        auto value = trim(std::string_view(stripped).substr(eq + 1));
        if (key.empty()) throw Error(ErrorKind::InvalidArgument, "config line " + std::to_string(number) + " has no key");
        if (!seen.insert(key).second) throw Error(ErrorKind::InvalidArgument, "config key " + key + " given twice");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
    auto& n = c.conversion.neuron_template;
    if (key == "data.dir") c.data_dir = v;
    else if (key == "data.train_images") c.train_images = v;
    else if (key == "data.train_labels") c.train_labels = v;
    else if (key == "data.test_images") c.test_images = v;
    else if (key == "data.test_labels") c.test_labels = v;
    else if (key == "model.block_channels") {
        c.model.block_channels.clear();
        for (const auto& item : split(v, ',')) c.model.block_channels.push_back(as_unsigned(key, item));
        if (c.model.block_channels.empty()) bad_value(key, v, "a channel list");
    } else if (key == "model.hidden_width") c.model.hidden_width = as_unsigned(key, v);
    else if (key == "model.batch_norm") c.model.batch_norm = as_bool(key, v);
    else if (key == "model.max_pool") c.model.max_pool = as_bool(key, v);
    else if (key == "model.hidden_dropout") c.model.hidden_dropout = as_double(key, v);
    else if (key == "train.lr") c.train.learning_rate = as_double(key, v);
    else if (key == "train.momentum") c.train.momentum = as_double(key, v);
    else if (key == "train.batch_size") c.train.batch_size = as_unsigned(key, v);
    else if (key == "train.epochs") c.train.epochs = as_unsigned(key, v);
    else if (key == "train.seed") c.train.seed = as_unsigned(key, v);
    else if (key == "train.subset") c.train_subset = as_unsigned(key, v);
    else if (key == "convert.percentile") c.conversion.normalization_percentile = as_double(key, v);
    else if (key == "convert.replication") c.conversion.replication_factor = as_unsigned(key, v);
    else if (key == "convert.calibration_samples") c.conversion.calibration_sample_count = as_unsigned(key, v);
    else if (key == "convert.pool_before_relu") c.conversion.pool_before_relu = as_bool(key, v);
    else if (key == "convert.substitute_dropout_rate") c.conversion.substitute_dropout_rate = as_double(key, v);
    else if (key == "neuron.model") n.model = neuron_model_from_string(v);
    else if (key == "neuron.capacitance") n.capacitance = as_double(key, v);
    else if (key == "neuron.resistance") n.resistance = as_double(key, v);
    else if (key == "neuron.v_threshold") n.v_threshold = as_double(key, v);
    else if (key == "neuron.v_reset") n.v_reset = as_double(key, v);
    else if (key == "neuron.refractory_steps") n.refractory_steps = static_cast<int>(as_unsigned(key, v));
    else if (key == "neuron.reset_mode") n.reset_mode = reset_mode_from_string(v);
    else if (key == "neuron.v_min") {
        if (v == "none") n.v_min.reset();
        else n.v_min = as_double(key, v);
    } else if (key == "sim.dt") c.sim.dt = c.sim.encoder.dt = as_double(key, v);
    else if (key == "sim.horizon_steps") c.sim.horizon_steps = c.sim.encoder.horizon_steps = static_cast<int>(as_unsigned(key, v));
    else if (key == "sim.seed") c.sim.seed = as_unsigned(key, v);
    else if (key == "sim.rates") c.rates = parse_rate_list(v);
    else if (key == "sim.subset") c.eval_subset = as_unsigned(key, v);
    else if (key == "sim.encoder") c.sim.encoder.scheme = encoder_scheme_from_string(v);
    else if (key == "sim.on_only") c.sim.on_only = as_bool(key, v);
    else if (key == "dvs.path") c.sim.saccade.path = parse_path(key, v);
    else if (key == "dvs.steps_per_segment") c.sim.saccade.steps_per_segment = static_cast<int>(as_unsigned(key, v));
    else if (key == "dvs.contrast_threshold") c.sim.saccade.contrast_threshold = as_double(key, v);
    else if (key == "dvs.log_epsilon") c.sim.saccade.log_epsilon = as_double(key, v);
    else if (key == "dvs.canvas_padding") c.sim.saccade.canvas_padding = static_cast<int>(as_unsigned(key, v));
    else if (key == "dvs.format") {
        if (v != "csv" && v != "binary" && v != "both") bad_value(key, v, "csv, binary or both");
        c.event_format = v;
    } else if (key == "run.out") c.out_dir = v;
    else if (key == "run.threads") c.threads = static_cast<unsigned>(as_unsigned(key, v));
    else throw Error(ErrorKind::InvalidArgument, "unknown config key " + key);
}

RunConfig run_config_from_text(std::string_view text, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.base_dir = base_dir;
    for (const auto& [key, value] : parse_key_values(text)) apply_setting(cfg, key, value);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return run_config_from_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), base);
}

std::vector<std::pair<std::string, std::string>> config_snapshot(const RunConfig& c) {
    const auto& n = c.conversion.neuron_template;
    std::string channels;
    for (std::size_t i = 0; i < c.model.block_channels.size(); ++i)
        channels += (i ? "," : "") + std::to_string(c.model.block_channels[i]);
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };
    return {
        {"data.dir", c.data_dir.string()},
        {"data.train_images", c.train_images},
        {"data.train_labels", c.train_labels},
        {"data.test_images", c.test_images},
        {"data.test_labels", c.test_labels},
        {"model.block_channels", channels},
        {"model.hidden_width", std::to_string(c.model.hidden_width)},
        {"model.batch_norm", b(c.model.batch_norm)},
        {"model.max_pool", b(c.model.max_pool)},
        {"model.hidden_dropout", num(c.model.hidden_dropout)},
        {"train.lr", num(c.train.learning_rate)},
        {"train.momentum", num(c.train.momentum)},
        {"train.batch_size", std::to_string(c.train.batch_size)},
        {"train.epochs", std::to_string(c.train.epochs)},
        {"train.seed", std::to_string(c.train.seed)},
        {"train.subset", std::to_string(c.train_subset)},
        {"convert.percentile", num(c.conversion.normalization_percentile)},
        {"convert.replication", std::to_string(c.conversion.replication_factor)},
        {"convert.calibration_samples", std::to_string(c.conversion.calibration_sample_count)},
        {"convert.pool_before_relu", b(c.conversion.pool_before_relu)},
        {"convert.substitute_dropout_rate", num(c.conversion.substitute_dropout_rate)},
        {"neuron.model", std::string(to_string(n.model))},
        {"neuron.capacitance", num(n.capacitance)},
        {"neuron.resistance", num(n.resistance)},
        {"neuron.v_threshold", num(n.v_threshold)},
        {"neuron.v_reset", num(n.v_reset)},
        {"neuron.refractory_steps", std::to_string(n.refractory_steps)},
        {"neuron.reset_mode", std::string(to_string(n.reset_mode))},
        {"neuron.v_min", n.v_min ? num(*n.v_min) : "none"},
        {"sim.dt", num(c.sim.dt)},
        {"sim.horizon_steps", std::to_string(c.sim.horizon_steps)},
        {"sim.seed", std::to_string(c.sim.seed)},
        {"sim.rates", join_rates(c.rates)},
        {"sim.subset", std::to_string(c.eval_subset)},
        {"sim.encoder", std::string(to_string(c.sim.encoder.scheme))},
        {"sim.on_only", b(c.sim.on_only)},
        {"dvs.path", path_text(c.sim.saccade.path)},
        {"dvs.steps_per_segment", std::to_string(c.sim.saccade.steps_per_segment)},
        {"dvs.contrast_threshold", num(c.sim.saccade.contrast_threshold)},
        {"dvs.log_epsilon", num(c.sim.saccade.log_epsilon)},
        {"dvs.canvas_padding", std::to_string(c.sim.saccade.canvas_padding)},
        {"dvs.format", c.event_format},
        {"run.out", c.out_dir.string()},
        {"run.threads", std::to_string(c.threads)},
    };
}

std::string config_to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, value] : config_snapshot(cfg)) out += key + " = " + value + "\n";
    return out;
}

void validate(const RunConfig& cfg) {
    if (cfg.rates.empty()) throw Error(ErrorKind::InvalidArgument, "rate list is empty");
    for (std::size_t i = 0; i < cfg.rates.size(); ++i) {
        if (!(cfg.rates[i] >= 0.0)) throw Error(ErrorKind::InvalidArgument, "rates must be non-negative");
        if (i > 0 && !(cfg.rates[i] > cfg.rates[i - 1]))
            throw Error(ErrorKind::InvalidArgument, "rates must strictly increase");
        if (cfg.rates[i] * cfg.sim.dt > 1.0 + 1e-12)
            throw Error(ErrorKind::RateOverflow, "rate " + num(cfg.rates[i]) + " Hz exceeds one spike per step");
    }
    if (cfg.eval_subset == 0) throw Error(ErrorKind::InvalidArgument, "sim.subset must be positive");
    if (cfg.train.batch_size == 0) throw Error(ErrorKind::InvalidArgument, "train.batch_size must be positive");
    if (cfg.train.epochs == 0) throw Error(ErrorKind::InvalidArgument, "train.epochs must be positive");
    if (!(cfg.train.learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "train.lr must be positive");
    if (!(cfg.train.momentum >= 0.0 && cfg.train.momentum < 1.0))
        throw Error(ErrorKind::InvalidArgument, "train.momentum must lie in [0,1)");
    validate(cfg.conversion);
    validate(cfg.sim);
    validate(cfg.sim.saccade);
}

}  // namespace snn
