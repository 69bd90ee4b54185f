#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snnconv/dataset.hpp"
#include "snnconv/network.hpp"
#include "snnconv/spiking_network.hpp"

namespace snn {

enum class ConversionRule {
    BatchNormToDropout,         // pre-training: batch_norm replaced by dropout
    DeleteBatchNormBeforePool,  // pre-training: batch_norm followed by pooling is removed
    MaxPoolToAvgPool,
    ReorderPoolBeforeRelu,  // (relu, avg_pool) -> (avg_pool, relu); `layer` is the relu index
    FoldBatchNorm,          // post-training: batch_norm absorbed into its conv/dense predecessor
    RemoveDropout,          // post-training: dropout is the identity at inference
    DropSoftmax,            // softmax has no spiking counterpart; outputs are spike counts
};

std::string_view to_string(ConversionRule rule) noexcept;
ConversionRule conversion_rule_from_string(std::string_view name);

/// One structural edit. `layer` indexes the layer list as it stood when the edit applied.
struct Substitution {
    ConversionRule rule;
    std::size_t layer = 0;
    std::string detail;

    friend bool operator==(const Substitution&, const Substitution&) = default;
};

/// Replays edits on a layer-kind list in order.
std::vector<LayerKind> replay_substitutions(std::vector<LayerKind> kinds, std::span<const Substitution> edits);

struct PreparedSpec {
    NetworkSpec spec;
    std::vector<Substitution> substitutions;
};

/// Rewrites an untrained architecture so that the trained result converts cleanly.
PreparedSpec prepare_for_conversion(const NetworkSpec& spec, const ConversionConfig& cfg);

/// Absorbs every batch_norm into the conv2d/dense directly before it. Throws OrphanBatchNorm.
TrainedNetwork fold_batch_norm(const TrainedNetwork& net, std::vector<Substitution>* log = nullptr);

/// Post-training structural rules: dropout removal, max_pool -> avg_pool and, when
/// cfg.pool_before_relu, (relu, avg_pool) -> (avg_pool, relu).
TrainedNetwork apply_structural_rules(const TrainedNetwork& net, const ConversionConfig& cfg,
                                      std::vector<Substitution>* log = nullptr);

struct NormalizationResult {
    TrainedNetwork net;
    std::vector<double> scales;  // one per nonlinearity stage (each relu, then the output)
};

/// p-th percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double p);

/// Data-based weight normalization. Stage l (the linear layers feeding the l-th
/// nonlinearity) gets s_l = percentile of its pre-activations over the calibration images;
/// its first weight tensor is scaled by s_{l-1}/s_l and its biases by 1/s_l.
/// Throws DegenerateScale, EmptyDataset.
NormalizationResult normalize_weights(const TrainedNetwork& net, const LabeledDataset& calibration,
                                      const ConversionConfig& cfg);

/// Builds spiking layers from a compliant network. `scales` are recorded per stage
/// (all ones when empty). Throws NonCompliantTopology.
SpikingNetwork map_to_spiking(const TrainedNetwork& net, const ConversionConfig& cfg,
                              std::span<const double> scales = {});

struct ConversionReport {
    std::vector<Substitution> substitutions;
    std::vector<double> scales;
    ConversionConfig config;
    std::string source_fingerprint;
    TrainConfig source_training;  // hyperparameters the source network was trained with
    std::vector<LayerKind> source_topology;
    std::vector<LayerKind> result_topology;

    friend bool operator==(const ConversionReport&, const ConversionReport&) = default;
};

/// Key-value text form, one `key = value` per line (see docs/formats.md).
std::string report_to_text(const ConversionReport& report);
ConversionReport report_from_text(std::string_view text);

/// True when replaying the substitutions on the source topology yields the result topology.
bool report_replays(const ConversionReport& report);

struct ConversionResult {
    SpikingNetwork network;
    ConversionReport report;
};

/// fold_batch_norm -> structural rules -> normalize_weights -> map_to_spiking.
ConversionResult convert(const TrainedNetwork& net, const LabeledDataset& calibration, const ConversionConfig& cfg);

}  // namespace snn
