#include "snnconv/network_io.hpp"

#include "snnconv/container.hpp"
#include "snnconv/dataset.hpp"

namespace snn {

namespace {

constexpr std::string_view kNetworkMagic = "SNNCNET1";

}  // namespace

nlohmann::json to_json(const LayerSpec& l) {
    nlohmann::json j{{"kind", std::string(to_string(l.kind))}};
    switch (l.kind) {
        case LayerKind::Conv2d:
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        case LayerKind::Dense:
            j["in_features"] = l.in_features;
            j["out_features"] = l.out_features;
            break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: j["window"] = l.window; break;
        case LayerKind::Dropout: j["rate"] = l.dropout_rate; break;
        case LayerKind::BatchNorm:
            j["channels"] = l.channels;
            j["epsilon"] = l.epsilon;
            j["momentum"] = l.momentum;
            break;
        default: break;
    }
    return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    LayerSpec l;
    l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    switch (l.kind) {
        case LayerKind::Conv2d:
            l.in_channels = j.at("in_channels");
            l.out_channels = j.at("out_channels");
            l.kernel = j.at("kernel");
            l.stride = j.at("stride");
            l.padding = j.at("padding");
            break;
        case LayerKind::Dense:
            l.in_features = j.at("in_features");
            l.out_features = j.at("out_features");
            break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: l.window = j.at("window"); break;
        case LayerKind::Dropout: l.dropout_rate = j.at("rate"); break;
        case LayerKind::BatchNorm:
            l.channels = j.at("channels");
            l.epsilon = j.at("epsilon");
            l.momentum = j.at("momentum");
            break;
        default: break;
    }
    validate(l);
    return l;
}

nlohmann::json to_json(const NetworkSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) layers.push_back(to_json(l));
    return {{"input_shape", spec.input_shape}, {"class_count", spec.class_count}, {"layers", layers}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.input_shape = j.at("input_shape").get<Shape>();
    spec.class_count = j.at("class_count");
    for (const auto& l : j.at("layers")) spec.layers.push_back(layer_from_json(l));
    return spec;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"momentum", c.momentum}, {"batch_size", c.batch_size},
            {"epochs", c.epochs}, {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate");
    c.momentum = j.at("momentum");
    c.batch_size = j.at("batch_size");
    c.epochs = j.at("epochs");
    c.seed = j.at("seed");
    return c;
}

nlohmann::json pack_params(std::span<const LayerParams> params, std::vector<double>& payload) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : params) {
        nlohmann::json entry = nlohmann::json::object();
        auto add = [&](const char* name, const Tensor& t) {
            if (t.empty()) return;
            entry[name] = t.shape();
            payload.insert(payload.end(), t.storage().begin(), t.storage().end());
        };
        add("weight", p.weight);
        add("bias", p.bias);
        add("running_mean", p.running_mean);
        add("running_var", p.running_var);
        out.push_back(entry);
    }
    return out;
}

std::vector<LayerParams> unpack_params(const nlohmann::json& description, std::span<const double> payload,
                                       std::size_t& cursor) {
    std::vector<LayerParams> out;
    for (const auto& entry : description) {
        LayerParams p;
        auto take = [&](const char* name, Tensor& t) {
            if (!entry.contains(name)) return;
            const auto shape = entry.at(name).get<Shape>();
            const auto n = shape_size(shape);
            if (cursor + n > payload.size()) throw Error(ErrorKind::CorruptFile, "parameter payload too short");
            t = Tensor(shape, std::vector<double>(payload.begin() + static_cast<std::ptrdiff_t>(cursor),
                                                  payload.begin() + static_cast<std::ptrdiff_t>(cursor + n)));
            cursor += n;
        };
        take("weight", p.weight);
        take("bias", p.bias);
        take("running_mean", p.running_mean);
        take("running_var", p.running_var);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<std::uint8_t> serialize_network(const TrainedNetwork& net) {
    Container c;
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : net.history)
        history.push_back({{"epoch", h.epoch}, {"loss", h.loss}, {"train_accuracy", h.train_accuracy}});
    c.header = {{"format", "snnconv-network"},
                {"network", to_json(net.spec)},
                {"train_config", to_json(net.config)},
                {"history", history}};
    c.header["params"] = pack_params(net.params, c.payload);
    return encode_container(kNetworkMagic, c);
}

TrainedNetwork deserialize_network(std::span<const std::uint8_t> bytes) {
    const auto c = decode_container(bytes, kNetworkMagic);
    try {
        TrainedNetwork net;
        net.spec = network_spec_from_json(c.header.at("network"));
        net.config = train_config_from_json(c.header.at("train_config"));
        for (const auto& h : c.header.at("history"))
            net.history.push_back({h.at("epoch"), h.at("loss"), h.at("train_accuracy")});
        std::size_t cursor = 0;
        net.params = unpack_params(c.header.at("params"), c.payload, cursor);
        if (cursor != c.payload.size() || net.params.size() != net.spec.layers.size())
            throw Error(ErrorKind::CorruptFile, "parameter table does not match the layer list");
        layer_shapes(net.spec);
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            const auto expected = zero_params(net.spec.layers[i]);
            if (net.params[i].weight.shape() != expected.weight.shape() ||
                net.params[i].bias.shape() != expected.bias.shape() ||
                net.params[i].running_mean.shape() != expected.running_mean.shape() ||
                net.params[i].running_var.shape() != expected.running_var.shape())
                throw Error(ErrorKind::CorruptFile, "parameter shapes of layer " + std::to_string(i) + " are wrong");
        }
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptFile, std::string("malformed network header: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::CorruptFile) throw;
        throw Error(ErrorKind::CorruptFile, e.what());
    }
}

void save_network(const TrainedNetwork& net, const std::filesystem::path& path) {
    write_bytes(path, serialize_network(net));
}

TrainedNetwork load_network(const std::filesystem::path& path) { return deserialize_network(read_file_bytes(path)); }

}  // namespace snn
