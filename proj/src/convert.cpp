#include "snnconv/convert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snnconv/checksum.hpp"
#include "snnconv/network_io.hpp"

namespace snn {

std::string_view to_string(ConversionRule rule) noexcept {
    switch (rule) {
        case ConversionRule::BatchNormToDropout: return "batch_norm_to_dropout";
        case ConversionRule::DeleteBatchNormBeforePool: return "delete_batch_norm_before_pool";
        case ConversionRule::MaxPoolToAvgPool: return "max_pool_to_avg_pool";
        case ConversionRule::ReorderPoolBeforeRelu: return "reorder_pool_before_relu";
        case ConversionRule::FoldBatchNorm: return "fold_batch_norm";
        case ConversionRule::RemoveDropout: return "remove_dropout";
        case ConversionRule::DropSoftmax: return "drop_softmax";
    }
    return "unknown";
}

ConversionRule conversion_rule_from_string(std::string_view name) {
    for (auto r : {ConversionRule::BatchNormToDropout, ConversionRule::DeleteBatchNormBeforePool,
                   ConversionRule::MaxPoolToAvgPool, ConversionRule::ReorderPoolBeforeRelu,
                   ConversionRule::FoldBatchNorm, ConversionRule::RemoveDropout, ConversionRule::DropSoftmax})
        if (to_string(r) == name) return r;
    throw Error(ErrorKind::InvalidArgument, "unknown conversion rule '" + std::string(name) + "'");
}

std::vector<LayerKind> replay_substitutions(std::vector<LayerKind> kinds, std::span<const Substitution> edits) {
    for (const auto& e : edits) {
        if (e.layer >= kinds.size())
            throw Error(ErrorKind::InvalidArgument, "substitution refers to missing layer " + std::to_string(e.layer));
        const auto at = kinds.begin() + static_cast<std::ptrdiff_t>(e.layer);
        switch (e.rule) {
            case ConversionRule::BatchNormToDropout: *at = LayerKind::Dropout; break;
            case ConversionRule::MaxPoolToAvgPool: *at = LayerKind::AvgPool; break;
            case ConversionRule::ReorderPoolBeforeRelu:
                if (e.layer + 1 >= kinds.size())
                    throw Error(ErrorKind::InvalidArgument, "reorder at the last layer");
                std::iter_swap(at, at + 1);
                break;
            case ConversionRule::DeleteBatchNormBeforePool:
            case ConversionRule::FoldBatchNorm:
            case ConversionRule::RemoveDropout:
            case ConversionRule::DropSoftmax: kinds.erase(at); break;
        }
    }
    return kinds;
}

namespace {

// Applies max_pool -> avg_pool and the relu/avg_pool reorder on a parallel pair of
// (spec, params) vectors; params may be empty for untrained specs.
void swap_and_reorder(std::vector<LayerSpec>& layers, std::vector<LayerParams>* params, bool pool_before_relu,
                      std::vector<Substitution>& log) {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].kind == LayerKind::MaxPool) {
            layers[i].kind = LayerKind::AvgPool;
            log.push_back({ConversionRule::MaxPoolToAvgPool, i,
                           "window " + std::to_string(layers[i].window)});
        }
    if (!pool_before_relu) return;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
        if (layers[i].kind == LayerKind::Relu && layers[i + 1].kind == LayerKind::AvgPool) {
            std::swap(layers[i], layers[i + 1]);
            if (params) std::swap((*params)[i], (*params)[i + 1]);
            log.push_back({ConversionRule::ReorderPoolBeforeRelu, i, "avg_pool moved ahead of relu"});
        }
}

struct Stage {
    std::size_t begin = 0;         // first linear layer
    std::size_t end = 0;           // one past the last linear layer
    std::size_t nonlinearity = 0;  // relu index, softmax index, or layers.size()
    bool is_output = false;
};

std::vector<Stage> split_stages(const NetworkSpec& spec) {
    std::vector<Stage> stages;
    std::size_t begin = 0;
    const auto& layers = spec.layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Relu) {
            stages.push_back({begin, i, i, false});
            begin = i + 1;
        } else if (layers[i].kind == LayerKind::Softmax) {
            if (i + 1 != layers.size())
                throw Error(ErrorKind::NonCompliantTopology, "softmax is only supported as the last layer");
            stages.push_back({begin, i, i, true});
            return stages;
        }
    }
    if (begin < layers.size())
        stages.push_back({begin, layers.size(), layers.size(), true});
    else if (!stages.empty())
        stages.back().is_output = true;
    if (stages.empty()) throw Error(ErrorKind::NonCompliantTopology, "network has no layers");
    return stages;
}

bool is_linear_op(LayerKind k) {
    return k == LayerKind::Conv2d || k == LayerKind::Dense || k == LayerKind::AvgPool || k == LayerKind::Flatten;
}

// Sparse column in the flattened item space of one shape.
struct SparseVector {
    std::vector<std::uint32_t> index;
    std::vector<double> value;
};

class Accumulator {
public:
    explicit Accumulator(std::size_t size) : dense_(size, 0.0), mark_(size, 0) {}

    void add(std::size_t i, double v) {
        if (!mark_[i]) {
            mark_[i] = 1;
            touched_.push_back(static_cast<std::uint32_t>(i));
        }
        dense_[i] += v;
    }

    SparseVector take() {
        std::sort(touched_.begin(), touched_.end());
        SparseVector out;
        for (auto i : touched_) {
            if (dense_[i] != 0.0) {
                out.index.push_back(i);
                out.value.push_back(dense_[i]);
            }
            dense_[i] = 0.0;
            mark_[i] = 0;
        }
        touched_.clear();
        return out;
    }

private:
    std::vector<double> dense_;
    std::vector<std::uint8_t> mark_;
    std::vector<std::uint32_t> touched_;
};

// Linear part (no bias) of one layer applied to a sparse column.
SparseVector apply_linear(const LayerSpec& s, const LayerParams& p, const Shape& in, const Shape& out,
                          const SparseVector& x, Accumulator& acc) {
    switch (s.kind) {
        case LayerKind::Conv2d: {
            const auto h = in[1], w = in[2], oh = out[1], ow = out[2];
            for (std::size_t n = 0; n < x.index.size(); ++n) {
                const std::size_t idx = x.index[n];
                const std::size_t c = idx / (h * w), y = (idx / w) % h, xx = idx % w;
                for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                    const auto ny = static_cast<std::ptrdiff_t>(y + s.padding) - static_cast<std::ptrdiff_t>(ky);
                    if (ny < 0 || ny % static_cast<std::ptrdiff_t>(s.stride) != 0) continue;
                    const auto oy = static_cast<std::size_t>(ny) / s.stride;
                    if (oy >= oh) continue;
                    for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                        const auto nx =
                            static_cast<std::ptrdiff_t>(xx + s.padding) - static_cast<std::ptrdiff_t>(kx);
                        if (nx < 0 || nx % static_cast<std::ptrdiff_t>(s.stride) != 0) continue;
                        const auto ox = static_cast<std::size_t>(nx) / s.stride;
                        if (ox >= ow) continue;
                        for (std::size_t o = 0; o < s.out_channels; ++o)
                            acc.add((o * oh + oy) * ow + ox,
                                    x.value[n] * p.weight[((o * s.in_channels + c) * s.kernel + ky) * s.kernel + kx]);
                    }
                }
            }
            break;
        }
        case LayerKind::Dense:
            for (std::size_t n = 0; n < x.index.size(); ++n)
                for (std::size_t j = 0; j < s.out_features; ++j)
                    acc.add(j, x.value[n] * p.weight[j * s.in_features + x.index[n]]);
            break;
        case LayerKind::AvgPool: {
            const auto h = in[1], w = in[2], oh = out[1], ow = out[2];
            const double inv_area = 1.0 / static_cast<double>(s.window * s.window);
            for (std::size_t n = 0; n < x.index.size(); ++n) {
                const std::size_t idx = x.index[n];
                const std::size_t c = idx / (h * w), y = (idx / w) % h / s.window, xx = idx % w / s.window;
                if (y < oh && xx < ow) acc.add((c * oh + y) * ow + xx, x.value[n] * inv_area);
            }
            break;
        }
        case LayerKind::Flatten: return x;
        default: throw Error(ErrorKind::NonCompliantTopology, "no synaptic form for " + std::string(to_string(s.kind)));
    }
    return acc.take();
}

}  // namespace

PreparedSpec prepare_for_conversion(const NetworkSpec& spec, const ConversionConfig& cfg) {
    validate(cfg);
    PreparedSpec out{spec, {}};
    auto& layers = out.spec.layers;
    for (std::size_t i = 0; i < layers.size();) {
        if (layers[i].kind != LayerKind::BatchNorm) {
            ++i;
            continue;
        }
        if (i + 1 < layers.size() && layers[i + 1].is_pool()) {
            layers.erase(layers.begin() + static_cast<std::ptrdiff_t>(i));
            out.substitutions.push_back({ConversionRule::DeleteBatchNormBeforePool, i, "pooling follows"});
            continue;
        }
        layers[i] = LayerSpec::dropout(cfg.substitute_dropout_rate);
        out.substitutions.push_back({ConversionRule::BatchNormToDropout, i,
                                     "dropout rate " + std::to_string(cfg.substitute_dropout_rate)});
        ++i;
    }
    swap_and_reorder(layers, nullptr, cfg.pool_before_relu, out.substitutions);
    layer_shapes(out.spec);
    return out;
}

TrainedNetwork fold_batch_norm(const TrainedNetwork& net, std::vector<Substitution>* log) {
    TrainedNetwork out = net;
    auto& layers = out.spec.layers;
    auto& params = out.params;
    for (std::size_t i = 0; i < layers.size();) {
        if (layers[i].kind != LayerKind::BatchNorm) {
            ++i;
            continue;
        }
        const auto& bn = layers[i];
        const auto& bp = params[i];
        if (i == 0 || (layers[i - 1].kind != LayerKind::Conv2d && layers[i - 1].kind != LayerKind::Dense))
            throw Error(ErrorKind::OrphanBatchNorm,
                        "batch_norm at layer " + std::to_string(i) + " has no conv2d/dense directly before it");
        auto& prev = params[i - 1];
        const std::size_t channels = prev.bias.size();
        if (channels != bn.channels) throw Error(ErrorKind::ShapeMismatch, "batch_norm channel count mismatch");
        const std::size_t per_channel = prev.weight.size() / channels;
        for (std::size_t c = 0; c < channels; ++c) {
            const double scale = bp.weight[c] / std::sqrt(bp.running_var[c] + bn.epsilon);
            for (std::size_t k = 0; k < per_channel; ++k) prev.weight[c * per_channel + k] *= scale;
            prev.bias[c] = (prev.bias[c] - bp.running_mean[c]) * scale + bp.bias[c];
        }
        if (log)
            log->push_back({ConversionRule::FoldBatchNorm, i,
                            "absorbed into " + std::string(to_string(layers[i - 1].kind)) + " at layer " +
                                std::to_string(i - 1)});
        layers.erase(layers.begin() + static_cast<std::ptrdiff_t>(i));
        params.erase(params.begin() + static_cast<std::ptrdiff_t>(i));
    }
    return out;
}

TrainedNetwork apply_structural_rules(const TrainedNetwork& net, const ConversionConfig& cfg,
                                      std::vector<Substitution>* log) {
    TrainedNetwork out = net;
    std::vector<Substitution> local;
    auto& layers = out.spec.layers;
    for (std::size_t i = 0; i < layers.size();) {
        if (layers[i].kind == LayerKind::Dropout) {
            local.push_back({ConversionRule::RemoveDropout, i, "identity at inference"});
            layers.erase(layers.begin() + static_cast<std::ptrdiff_t>(i));
            out.params.erase(out.params.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
        }
    }
    swap_and_reorder(layers, &out.params, cfg.pool_before_relu, local);
    if (log) log->insert(log->end(), local.begin(), local.end());
    return out;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw Error(ErrorKind::EmptyDataset, "percentile of no values");
    if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorKind::InvalidArgument, "percentile must lie in (0,100]");
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (frac == 0.0 || lo + 1 >= values.size()) return a;
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + frac * (b - a);
}

NormalizationResult normalize_weights(const TrainedNetwork& net, const LabeledDataset& calibration,
                                      const ConversionConfig& cfg) {
    validate(cfg);
    const auto calib = calibration.slice(0, cfg.calibration_sample_count);
    if (calib.empty()) throw Error(ErrorKind::EmptyDataset, "normalization needs calibration images");
    for (const auto& l : net.spec.layers)
        if (l.kind == LayerKind::BatchNorm)
            throw Error(ErrorKind::NonCompliantTopology, "fold batch_norm before normalizing");
    const auto stages = split_stages(net.spec);

    std::vector<std::vector<double>> observed(stages.size());
    std::vector<std::size_t> indices;
    constexpr std::size_t kChunk = 100;
    for (std::size_t start = 0; start < calib.size(); start += kChunk) {
        indices.resize(std::min(kChunk, calib.size() - start));
        std::iota(indices.begin(), indices.end(), start);
        forward_inspect(net, make_batch(calib, indices), [&](std::size_t layer, const Tensor& input) {
            for (std::size_t l = 0; l < stages.size(); ++l)
                if (stages[l].nonlinearity == layer)
                    observed[l].insert(observed[l].end(), input.storage().begin(), input.storage().end());
        });
    }

    NormalizationResult result{net, {}};
    double previous = 1.0;
    for (std::size_t l = 0; l < stages.size(); ++l) {
        const double s = percentile(std::move(observed[l]), cfg.normalization_percentile);
        if (!(s > 0.0) || !std::isfinite(s))
            throw Error(ErrorKind::DegenerateScale, "stage " + std::to_string(l) + " has percentile activation " +
                                                        std::to_string(s));
        bool first = true;
        for (std::size_t i = stages[l].begin; i < stages[l].end; ++i) {
            const auto kind = net.spec.layers[i].kind;
            if (kind != LayerKind::Conv2d && kind != LayerKind::Dense) continue;
            auto& p = result.net.params[i];
            if (first)
                for (auto& w : p.weight.values()) w *= previous / s;
            for (auto& b : p.bias.values()) b /= s;
            first = false;
        }
        if (first)
            throw Error(ErrorKind::NonCompliantTopology,
                        "stage " + std::to_string(l) + " has no conv2d/dense layer to carry its scale");
        result.scales.push_back(s);
        previous = s;
    }
    return result;
}

SpikingNetwork map_to_spiking(const TrainedNetwork& net, const ConversionConfig& cfg, std::span<const double> scales) {
    validate(cfg);
    const auto& spec = net.spec;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto kind = spec.layers[i].kind;
        if (kind == LayerKind::MaxPool || kind == LayerKind::BatchNorm || kind == LayerKind::Dropout)
            throw Error(ErrorKind::NonCompliantTopology,
                        std::string(to_string(kind)) + " at layer " + std::to_string(i) + " has no spiking form");
    }
    const auto stages = split_stages(spec);
    if (!scales.empty() && scales.size() != stages.size())
        throw Error(ErrorKind::InvalidArgument, "one scale per stage required");
    const auto shapes = layer_shapes(spec);

    SpikingNetwork out;
    out.input_shape = spec.input_shape;
    out.class_count = spec.class_count;
    for (const auto& l : spec.layers)
        if (l.kind != LayerKind::Softmax) out.topology.push_back(l.kind);
    out.analog = net;
    out.config = cfg;

    Shape prev_shape = spec.input_shape;
    std::size_t prev_replication = 1;
    for (std::size_t l = 0; l < stages.size(); ++l) {
        const auto& st = stages[l];
        SpikingLayer layer;
        layer.neuron = cfg.neuron_template;
        layer.scale = scales.empty() ? 1.0 : scales[l];
        layer.replication = st.is_output ? 1 : cfg.replication_factor;
        layer.shape = st.end > st.begin ? shapes[st.end - 1] : prev_shape;
        layer.units = shape_size(layer.shape);
        for (std::size_t i = st.begin; i < st.end; ++i) {
            if (!is_linear_op(spec.layers[i].kind))
                throw Error(ErrorKind::NonCompliantTopology,
                            std::string(to_string(spec.layers[i].kind)) + " inside a synaptic stage");
            layer.ops.push_back(spec.layers[i].kind);
        }

        // Affine offset: push a zero input through the stage.
        Tensor offset(Shape{1});
        {
            Shape batch_shape{1};
            batch_shape.insert(batch_shape.end(), prev_shape.begin(), prev_shape.end());
            Tensor x(batch_shape);
            for (std::size_t i = st.begin; i < st.end; ++i)
                x = layer_forward(spec.layers[i], net.params[i], x, Mode::Infer);
            offset = std::move(x);
        }

        const std::size_t sources = shape_size(prev_shape);
        const std::size_t k = layer.replication;
        auto& syn = layer.synapses;
        syn.source_count = sources * prev_replication;
        syn.target_count = layer.units * k;
        syn.offsets.assign(1, 0);

        std::vector<Accumulator> scratch;
        for (std::size_t i = st.begin; i < st.end; ++i) scratch.emplace_back(shape_size(shapes[i]));
        for (std::size_t j = 0; j < sources; ++j) {
            SparseVector col{{static_cast<std::uint32_t>(j)}, {1.0}};
            Shape in_shape = prev_shape;
            for (std::size_t i = st.begin; i < st.end; ++i) {
                col = apply_linear(spec.layers[i], net.params[i], in_shape, shapes[i], col, scratch[i - st.begin]);
                in_shape = shapes[i];
            }
            for (std::size_t r = 0; r < prev_replication; ++r) {
                for (std::size_t n = 0; n < col.index.size(); ++n)
                    for (std::size_t q = 0; q < k; ++q) {
                        syn.targets.push_back(static_cast<std::uint32_t>(col.index[n] * k + q));
                        syn.weights.push_back(col.value[n] / static_cast<double>(prev_replication));
                    }
                syn.offsets.push_back(static_cast<std::uint32_t>(syn.weights.size()));
            }
        }
        layer.bias.resize(layer.units * k);
        for (std::size_t u = 0; u < layer.units; ++u)
            for (std::size_t q = 0; q < k; ++q) layer.bias[u * k + q] = offset[u];

        prev_shape = layer.shape;
        prev_replication = k;
        out.layers.push_back(std::move(layer));
    }
    check(out);
    return out;
}

bool report_replays(const ConversionReport& report) {
    try {
        return replay_substitutions(report.source_topology, report.substitutions) == report.result_topology;
    } catch (const Error&) {
        return false;
    }
}

ConversionResult convert(const TrainedNetwork& net, const LabeledDataset& calibration, const ConversionConfig& cfg) {
    validate(cfg);
    ConversionReport report;
    report.config = cfg;
    report.source_fingerprint = "sha256:" + sha256_hex(serialize_network(net));
    report.source_training = net.config;
    report.source_training.threads = 1;
    report.source_topology = topology(net.spec);

    auto folded = fold_batch_norm(net, &report.substitutions);
    auto compliant = apply_structural_rules(folded, cfg, &report.substitutions);
    auto normalized = normalize_weights(compliant, calibration, cfg);
    if (!normalized.net.spec.layers.empty() && normalized.net.spec.layers.back().kind == LayerKind::Softmax)
        report.substitutions.push_back(
            {ConversionRule::DropSoftmax, normalized.net.spec.layers.size() - 1, "outputs read as spike counts"});
    auto spiking = map_to_spiking(normalized.net, cfg, normalized.scales);
    report.scales = normalized.scales;
    report.result_topology = spiking.topology;
    return {std::move(spiking), std::move(report)};
}

}  // namespace snn
