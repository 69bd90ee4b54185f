#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "snnconv/network.hpp"
#include "snnconv/neuron.hpp"

namespace snn {

struct ConversionConfig {
    NeuronParams neuron_template;
    double normalization_percentile = 99.9;
    std::size_t replication_factor = 1;  // spiking neurons per analog relu unit
    std::size_t calibration_sample_count = 100;
    bool pool_before_relu = true;
    double substitute_dropout_rate = 0.1;  // rate of dropout layers that replace batch norm before training

    friend bool operator==(const ConversionConfig&, const ConversionConfig&) = default;
};

void validate(const ConversionConfig& cfg);

/// Presynaptic-major sparse weights: targets of source j live in [offsets[j], offsets[j+1]).
struct SparseMap {
    std::size_t source_count = 0;
    std::size_t target_count = 0;
    std::vector<std::uint32_t> offsets{0};
    std::vector<std::uint32_t> targets;
    std::vector<double> weights;

    std::size_t nnz() const noexcept { return weights.size(); }
    /// Dense equivalent, row-major [target][source]. Intended for tests on small maps.
    std::vector<double> to_dense() const;
};

/// One population of spiking neurons and the synapses that feed it.
struct SpikingLayer {
    std::vector<LayerKind> ops;  // linear stages composed into `synapses`
    SparseMap synapses;          // previous population -> this population
    std::vector<double> bias;    // constant input per neuron, in units of the input rate
    NeuronParams neuron;
    std::size_t replication = 1;
    std::size_t units = 0;  // analog units; neuron n represents unit n / replication
    Shape shape;            // analog shape of the population
    double scale = 1.0;     // normalization factor s_l applied to this stage

    std::size_t size() const noexcept { return units * replication; }
};

/// A converted network. `analog` keeps the normalized, structurally compliant ANN the
/// spiking layers were mapped from.
struct SpikingNetwork {
    Shape input_shape;
    std::size_t class_count = 10;
    std::vector<LayerKind> topology;  // compliant analog layer kinds, softmax removed
    std::vector<SpikingLayer> layers;
    TrainedNetwork analog;
    ConversionConfig config;

    std::size_t input_size() const { return shape_size(input_shape); }
    std::size_t output_size() const { return layers.empty() ? 0 : layers.back().size(); }
};

/// Throws NonCompliantTopology if the network carries max_pool, batch_norm or dropout, has a
/// non-positive scale, or mismatched population sizes.
void check(const SpikingNetwork& net);

/// Spiking-network file: container with magic "SNNCSPK1" holding the normalized analog
/// network, the conversion config and per-stage scales. Synapses are rebuilt on load.
std::vector<std::uint8_t> serialize_spiking(const SpikingNetwork& net);
SpikingNetwork deserialize_spiking(std::span<const std::uint8_t> bytes);
void save_spiking(const SpikingNetwork& net, const std::filesystem::path& path);
SpikingNetwork load_spiking(const std::filesystem::path& path);

}  // namespace snn
