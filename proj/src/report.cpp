#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "snnconv/convert.hpp"

namespace snn {

namespace {

std::string number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string kinds_text(const std::vector<LayerKind>& kinds) {
    std::string out;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (i) out += ",";
        out += to_string(kinds[i]);
    }
    return out;
}

std::vector<LayerKind> kinds_from_text(const std::string& text) {
    std::vector<LayerKind> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(layer_kind_from_string(item));
    return out;
}

double parse_number(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw Error(ErrorKind::CorruptFile, "bad number '" + s + "'");
    return v;
}

}  // namespace

std::string report_to_text(const ConversionReport& r) {
    std::ostringstream out;
    auto kv = [&](const std::string& key, const std::string& value) { out << key << " = " << value << "\n"; };
    const auto& n = r.config.neuron_template;
    out << "# snnconv conversion report\n";
    kv("format", "snnconv-conversion-report");
    kv("version", "1");
    kv("source.fingerprint", r.source_fingerprint);
    kv("source.train.lr", number(r.source_training.learning_rate));
    kv("source.train.momentum", number(r.source_training.momentum));
    kv("source.train.batch_size", std::to_string(r.source_training.batch_size));
    kv("source.train.epochs", std::to_string(r.source_training.epochs));
    kv("source.train.seed", std::to_string(r.source_training.seed));
    kv("source.topology", kinds_text(r.source_topology));
    kv("result.topology", kinds_text(r.result_topology));
    kv("config.normalization_percentile", number(r.config.normalization_percentile));
    kv("config.replication_factor", std::to_string(r.config.replication_factor));
    kv("config.calibration_sample_count", std::to_string(r.config.calibration_sample_count));
    kv("config.pool_before_relu", r.config.pool_before_relu ? "true" : "false");
    kv("config.substitute_dropout_rate", number(r.config.substitute_dropout_rate));
    kv("config.neuron.model", std::string(to_string(n.model)));
    kv("config.neuron.capacitance", number(n.capacitance));
    kv("config.neuron.resistance", number(n.resistance));
    kv("config.neuron.v_threshold", number(n.v_threshold));
    kv("config.neuron.v_reset", number(n.v_reset));
    kv("config.neuron.refractory_steps", std::to_string(n.refractory_steps));
    kv("config.neuron.reset_mode", std::string(to_string(n.reset_mode)));
    kv("config.neuron.v_min", n.v_min ? number(*n.v_min) : "none");
    kv("scales.count", std::to_string(r.scales.size()));
    for (std::size_t i = 0; i < r.scales.size(); ++i) kv("scale." + std::to_string(i), number(r.scales[i]));
    kv("substitutions.count", std::to_string(r.substitutions.size()));
    for (std::size_t i = 0; i < r.substitutions.size(); ++i) {
        const auto prefix = "substitution." + std::to_string(i) + ".";
        kv(prefix + "rule", std::string(to_string(r.substitutions[i].rule)));
        kv(prefix + "layer", std::to_string(r.substitutions[i].layer));
        kv(prefix + "detail", r.substitutions[i].detail);
    }
    return out.str();
}

ConversionReport report_from_text(std::string_view text) {
    std::map<std::string, std::string> kv;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw Error(ErrorKind::CorruptFile, "report line without ' = ': " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw Error(ErrorKind::CorruptFile, "report lacks key " + key);
        return it->second;
    };
    if (get("format") != "snnconv-conversion-report" || get("version") != "1")
        throw Error(ErrorKind::CorruptFile, "not a version-1 conversion report");
    try {
        ConversionReport r;
        r.source_fingerprint = get("source.fingerprint");
        auto& t = r.source_training;
        t.learning_rate = parse_number(get("source.train.lr"));
        t.momentum = parse_number(get("source.train.momentum"));
        t.batch_size = std::stoul(get("source.train.batch_size"));
        t.epochs = std::stoul(get("source.train.epochs"));
        t.seed = std::stoull(get("source.train.seed"));
        r.source_topology = kinds_from_text(get("source.topology"));
        r.result_topology = kinds_from_text(get("result.topology"));
        auto& c = r.config;
        c.normalization_percentile = parse_number(get("config.normalization_percentile"));
        c.replication_factor = std::stoul(get("config.replication_factor"));
        c.calibration_sample_count = std::stoul(get("config.calibration_sample_count"));
        c.pool_before_relu = get("config.pool_before_relu") == "true";
        c.substitute_dropout_rate = parse_number(get("config.substitute_dropout_rate"));
        auto& n = c.neuron_template;
        n.model = neuron_model_from_string(get("config.neuron.model"));
        n.capacitance = parse_number(get("config.neuron.capacitance"));
        n.resistance = parse_number(get("config.neuron.resistance"));
        n.v_threshold = parse_number(get("config.neuron.v_threshold"));
        n.v_reset = parse_number(get("config.neuron.v_reset"));
        n.refractory_steps = std::stoi(get("config.neuron.refractory_steps"));
        n.reset_mode = reset_mode_from_string(get("config.neuron.reset_mode"));
        if (get("config.neuron.v_min") != "none") n.v_min = parse_number(get("config.neuron.v_min"));
        const auto scale_count = std::stoul(get("scales.count"));
        for (std::size_t i = 0; i < scale_count; ++i) r.scales.push_back(parse_number(get("scale." + std::to_string(i))));
        const auto sub_count = std::stoul(get("substitutions.count"));
        for (std::size_t i = 0; i < sub_count; ++i) {
            const auto prefix = "substitution." + std::to_string(i) + ".";
            r.substitutions.push_back({conversion_rule_from_string(get(prefix + "rule")),
                                       std::stoul(get(prefix + "layer")), get(prefix + "detail")});
        }
        return r;
    } catch (const std::invalid_argument& e) {
        throw Error(ErrorKind::CorruptFile, std::string("bad report value: ") + e.what());
    } catch (const std::out_of_range& e) {
        throw Error(ErrorKind::CorruptFile, std::string("report value out of range: ") + e.what());
    }
}

}  // namespace snn
