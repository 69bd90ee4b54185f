#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "snnconv/network.hpp"

namespace snn {

nlohmann::json to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Appends every non-empty parameter tensor of `params` to `payload` and returns its
/// JSON description (shapes per layer).
nlohmann::json pack_params(std::span<const LayerParams> params, std::vector<double>& payload);
std::vector<LayerParams> unpack_params(const nlohmann::json& description, std::span<const double> payload,
                                       std::size_t& cursor);

/// Trained-network file: container with magic "SNNCNET1" (see docs/formats.md).
std::vector<std::uint8_t> serialize_network(const TrainedNetwork& net);
TrainedNetwork deserialize_network(std::span<const std::uint8_t> bytes);

void save_network(const TrainedNetwork& net, const std::filesystem::path& path);
TrainedNetwork load_network(const std::filesystem::path& path);

}  // namespace snn
