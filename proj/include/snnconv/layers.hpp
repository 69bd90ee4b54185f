#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

#include "snnconv/tensor.hpp"

namespace snn {

enum class LayerKind { Conv2d, Dense, Relu, MaxPool, AvgPool, BatchNorm, Dropout, Softmax, Flatten };

std::string_view to_string(LayerKind kind) noexcept;
LayerKind layer_kind_from_string(std::string_view name);

enum class Mode { Train, Infer };

/// Architecture of one layer. Only the fields relevant to `kind` are meaningful.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;

    // conv2d: weights [out_channels, in_channels, kernel, kernel]
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    // dense: weights [out_features, in_features]
    std::size_t in_features = 0;
    std::size_t out_features = 0;

    // max_pool / avg_pool: non-overlapping window x window
    std::size_t window = 0;

    double dropout_rate = 0.0;

    // batch_norm over `channels` (dim 1 of the batch tensor)
    std::size_t channels = 0;
    double epsilon = 1e-5;
    double momentum = 0.1;

    static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t padding = 0, std::size_t stride = 1);
    static LayerSpec dense(std::size_t in_features, std::size_t out_features);
    static LayerSpec relu() { return {.kind = LayerKind::Relu}; }
    static LayerSpec max_pool(std::size_t window) { return {.kind = LayerKind::MaxPool, .window = window}; }
    static LayerSpec avg_pool(std::size_t window) { return {.kind = LayerKind::AvgPool, .window = window}; }
    static LayerSpec batch_norm(std::size_t channels, double epsilon = 1e-5);
    static LayerSpec dropout(double rate) { return {.kind = LayerKind::Dropout, .dropout_rate = rate}; }
    static LayerSpec softmax() { return {.kind = LayerKind::Softmax}; }
    static LayerSpec flatten() { return {.kind = LayerKind::Flatten}; }

    bool parametric() const noexcept {
        return kind == LayerKind::Conv2d || kind == LayerKind::Dense || kind == LayerKind::BatchNorm;
    }
    bool is_pool() const noexcept { return kind == LayerKind::MaxPool || kind == LayerKind::AvgPool; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Throws InvalidArgument when parameters are invalid for the kind.
void validate(const LayerSpec& spec);

/// Output shape for one item (no batch dimension). Throws ShapeMismatch.
Shape output_shape(const LayerSpec& spec, const Shape& item_shape);

/// Learned state. For batch_norm, `weight`/`bias` are the scale/shift.
struct LayerParams {
    Tensor weight;
    Tensor bias;
    Tensor running_mean;
    Tensor running_var;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Zero-initialized parameters of the right shapes (batch_norm: unit scale and variance).
LayerParams zero_params(const LayerSpec& spec);

/// Values retained by layer_forward for the backward pass.
struct LayerCache {
    bool valid = false;
    Mode mode = Mode::Infer;
    Tensor input;
    Tensor output;
    Tensor aux;  // dropout mask, max-pool argmax, or batch-norm normalized input
    Tensor batch_mean;
    Tensor batch_var;
};

struct LayerGradients {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

/// Applies one layer to a batch tensor [N, ...item shape].
/// `rng` is required for dropout in train mode. `cache` may be null.
Tensor layer_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& input, Mode mode,
                     LayerCache* cache = nullptr, std::mt19937_64* rng = nullptr, unsigned threads = 1);

/// Exact gradients of the layer function at the cached point. Throws MissingCache.
LayerGradients layer_backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache,
                              const Tensor& grad_output, unsigned threads = 1);

}  // namespace snn
