#include "snnconv/spiking_network.hpp"

#include <cmath>

#include "snnconv/container.hpp"
#include "snnconv/convert.hpp"
#include "snnconv/network_io.hpp"

namespace snn {

namespace {

constexpr std::string_view kSpikingMagic = "SNNCSPK1";

nlohmann::json to_json(const NeuronParams& p) {
    nlohmann::json j{{"model", std::string(to_string(p.model))},
                     {"capacitance", p.capacitance},
                     {"v_threshold", p.v_threshold},
                     {"v_reset", p.v_reset},
                     {"refractory_steps", p.refractory_steps},
                     {"reset_mode", std::string(to_string(p.reset_mode))}};
    j["resistance"] = std::isinf(p.resistance) ? nlohmann::json() : nlohmann::json(p.resistance);
    j["v_min"] = p.v_min ? nlohmann::json(*p.v_min) : nlohmann::json();
    return j;
}

NeuronParams neuron_from_json(const nlohmann::json& j) {
    NeuronParams p;
    p.model = neuron_model_from_string(j.at("model").get<std::string>());
    p.capacitance = j.at("capacitance");
    p.resistance = j.at("resistance").is_null() ? std::numeric_limits<double>::infinity()
                                                : j.at("resistance").get<double>();
    p.v_threshold = j.at("v_threshold");
    p.v_reset = j.at("v_reset");
    p.refractory_steps = j.at("refractory_steps");
    p.reset_mode = reset_mode_from_string(j.at("reset_mode").get<std::string>());
    if (!j.at("v_min").is_null()) p.v_min = j.at("v_min").get<double>();
    return p;
}

}  // namespace

void validate(const ConversionConfig& cfg) {
    validate(cfg.neuron_template);
    if (!(cfg.normalization_percentile > 0.0 && cfg.normalization_percentile <= 100.0))
        throw Error(ErrorKind::InvalidArgument, "normalization percentile must lie in (0,100]");
    if (cfg.replication_factor < 1) throw Error(ErrorKind::InvalidArgument, "replication factor must be >= 1");
    if (cfg.calibration_sample_count < 1)
        throw Error(ErrorKind::InvalidArgument, "calibration sample count must be >= 1");
    if (!(cfg.substitute_dropout_rate >= 0.0 && cfg.substitute_dropout_rate < 1.0))
        throw Error(ErrorKind::InvalidArgument, "substitute dropout rate must lie in [0,1)");
}

std::vector<double> SparseMap::to_dense() const {
    std::vector<double> dense(source_count * target_count, 0.0);
    for (std::size_t j = 0; j < source_count; ++j)
        for (std::size_t e = offsets[j]; e < offsets[j + 1]; ++e) dense[targets[e] * source_count + j] += weights[e];
    return dense;
}

void check(const SpikingNetwork& net) {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::NonCompliantTopology, what); };
    for (auto kind : net.topology)
        if (kind == LayerKind::MaxPool || kind == LayerKind::BatchNorm || kind == LayerKind::Dropout ||
            kind == LayerKind::Softmax)
            fail(std::string(to_string(kind)) + " in a spiking topology");
    if (net.layers.empty()) fail("spiking network has no layers");
    std::size_t previous = net.input_size();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        if (!(layer.scale > 0.0) || !std::isfinite(layer.scale)) fail("non-positive scale at layer " + std::to_string(l));
        if (layer.synapses.source_count != previous || layer.synapses.target_count != layer.size() ||
            layer.bias.size() != layer.size() || layer.synapses.offsets.size() != previous + 1)
            fail("population sizes disagree at spiking layer " + std::to_string(l));
        previous = layer.size();
    }
    if (net.output_size() != net.class_count) fail("output population does not match the class count");
}

std::vector<std::uint8_t> serialize_spiking(const SpikingNetwork& net) {
    Container c;
    const auto& cfg = net.config;
    nlohmann::json scales = nlohmann::json::array();
    for (const auto& l : net.layers) scales.push_back(l.scale);
    c.header = {{"format", "snnconv-spiking-network"},
                {"network", to_json(net.analog.spec)},
                {"config",
                 {{"neuron", to_json(cfg.neuron_template)},
                  {"normalization_percentile", cfg.normalization_percentile},
                  {"replication_factor", cfg.replication_factor},
                  {"calibration_sample_count", cfg.calibration_sample_count},
                  {"pool_before_relu", cfg.pool_before_relu},
                  {"substitute_dropout_rate", cfg.substitute_dropout_rate}}},
                {"scales", scales}};
    c.header["params"] = pack_params(net.analog.params, c.payload);
    return encode_container(kSpikingMagic, c);
}

SpikingNetwork deserialize_spiking(std::span<const std::uint8_t> bytes) {
    const auto c = decode_container(bytes, kSpikingMagic);
    try {
        TrainedNetwork analog;
        analog.spec = network_spec_from_json(c.header.at("network"));
        std::size_t cursor = 0;
        analog.params = unpack_params(c.header.at("params"), c.payload, cursor);
        if (cursor != c.payload.size() || analog.params.size() != analog.spec.layers.size())
            throw Error(ErrorKind::CorruptFile, "parameter table does not match the layer list");
        const auto& j = c.header.at("config");
        ConversionConfig cfg;
        cfg.neuron_template = neuron_from_json(j.at("neuron"));
        cfg.normalization_percentile = j.at("normalization_percentile");
        cfg.replication_factor = j.at("replication_factor");
        cfg.calibration_sample_count = j.at("calibration_sample_count");
        cfg.pool_before_relu = j.at("pool_before_relu");
        cfg.substitute_dropout_rate = j.at("substitute_dropout_rate");
        const auto scales = c.header.at("scales").get<std::vector<double>>();
        return map_to_spiking(analog, cfg, scales);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptFile, std::string("malformed spiking-network header: ") + e.what());
    }
}

void save_spiking(const SpikingNetwork& net, const std::filesystem::path& path) {
    write_bytes(path, serialize_spiking(net));
}

SpikingNetwork load_spiking(const std::filesystem::path& path) { return deserialize_spiking(read_file_bytes(path)); }

}  // namespace snn
