#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "snnconv/dataset.hpp"
#include "snnconv/layers.hpp"

namespace snn {

/// Ordered layer list operating on single items of `input_shape` ([C,H,W]).
struct NetworkSpec {
    Shape input_shape{1, 28, 28};
    std::vector<LayerSpec> layers;
    std::size_t class_count = 10;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Per-item shapes after each layer; throws ShapeMismatch on an incompatible chain.
std::vector<Shape> layer_shapes(const NetworkSpec& spec);

/// Shape-compatible, with exactly one softmax as the last layer and class_count outputs.
void validate_trainable(const NetworkSpec& spec);

std::vector<LayerKind> topology(const NetworkSpec& spec);

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 4;
    std::uint64_t seed = 1;
    unsigned threads = 1;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;

    friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainedNetwork {
    NetworkSpec spec;
    std::vector<LayerParams> params;  // one entry per layer, empty for non-parametric kinds
    TrainConfig config;
    std::vector<EpochStats> history;
};

/// Seeded fan-in-scaled uniform init: He bound sqrt(6/fan_in) for layers feeding a relu,
/// sqrt(3/fan_in) otherwise; zero biases; identity batch norm.
TrainedNetwork initialize(const NetworkSpec& spec, std::uint64_t seed);

struct VggMiniConfig {
    std::vector<std::size_t> block_channels{8, 16};
    std::size_t hidden_width = 64;
    bool batch_norm = true;
    bool max_pool = true;
    double hidden_dropout = 0.0;
};

/// Repeated (conv3x3 [+ batch_norm] + relu + pool) blocks, flatten, one hidden dense + relu,
/// classifier dense + softmax.
NetworkSpec build_vgg_mini(const VggMiniConfig& cfg = {});

/// Stacks the normalized images at `indices` into a batch tensor [count, 1, H, W].
Tensor make_batch(const LabeledDataset& data, std::span<const std::size_t> indices);

/// Forward pass through every layer. With `caches`, one cache per layer is filled.
Tensor forward(const TrainedNetwork& net, const Tensor& batch, Mode mode,
               std::vector<LayerCache>* caches = nullptr, std::mt19937_64* rng = nullptr,
               unsigned threads = 1);

/// Forward pass that also reports the input of every layer (the pre-activations of a relu
/// at layer i are `inputs[i]`).
void forward_inspect(const TrainedNetwork& net, const Tensor& batch,
                     const std::function<void(std::size_t layer, const Tensor& input)>& visit,
                     unsigned threads = 1);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

std::vector<int> predict(const TrainedNetwork& net, const LabeledDataset& data, unsigned threads = 1,
                         std::size_t batch = 256);

/// Fraction of argmax-correct predictions. Throws EmptyDataset.
double evaluate(const TrainedNetwork& net, const LabeledDataset& data, unsigned threads = 1);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch SGD on cross-entropy. Throws Divergence when the loss stops being finite.
TrainedNetwork train(const NetworkSpec& spec, const LabeledDataset& data, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {});

/// Continues training from existing parameters.
void train_in_place(TrainedNetwork& net, const LabeledDataset& data, const TrainConfig& cfg,
                    const EpochCallback& on_epoch = {});

}  // namespace snn
