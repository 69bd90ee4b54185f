#include "snnconv/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "snnconv/random.hpp"

namespace snn {

std::vector<Shape> layer_shapes(const NetworkSpec& spec) {
    std::vector<Shape> shapes;
    shapes.reserve(spec.layers.size());
    Shape current = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        try {
            current = output_shape(spec.layers[i], current);
        } catch (const Error& e) {
            throw Error(e.kind(), "layer " + std::to_string(i) + ": " + e.what());
        }
        shapes.push_back(current);
    }
    return shapes;
}

void validate_trainable(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw Error(ErrorKind::InvalidArgument, "network has no layers");
    const auto shapes = layer_shapes(spec);
    const auto softmaxes = std::count_if(spec.layers.begin(), spec.layers.end(),
                                         [](const LayerSpec& l) { return l.kind == LayerKind::Softmax; });
    if (softmaxes != 1 || spec.layers.back().kind != LayerKind::Softmax)
        throw Error(ErrorKind::InvalidArgument, "network must end in exactly one softmax");
    if (shapes.back() != Shape{spec.class_count})
        throw Error(ErrorKind::ShapeMismatch, "output width " + shape_string(shapes.back()) + " != class count " +
                                                  std::to_string(spec.class_count));
}

std::vector<LayerKind> topology(const NetworkSpec& spec) {
    std::vector<LayerKind> kinds;
    for (const auto& l : spec.layers) kinds.push_back(l.kind);
    return kinds;
}

namespace {

bool feeds_relu(const NetworkSpec& spec, std::size_t index) {
    for (std::size_t j = index + 1; j < spec.layers.size(); ++j) {
        const auto kind = spec.layers[j].kind;
        if (kind == LayerKind::Relu) return true;
        if (kind == LayerKind::Conv2d || kind == LayerKind::Dense || kind == LayerKind::Softmax) return false;
    }
    return false;
}

}  // namespace

TrainedNetwork initialize(const NetworkSpec& spec, std::uint64_t seed) {
    layer_shapes(spec);
    TrainedNetwork net;
    net.spec = spec;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& layer = spec.layers[i];
        auto params = zero_params(layer);
        if (layer.kind == LayerKind::Conv2d || layer.kind == LayerKind::Dense) {
            const std::size_t fan_in = params.weight.size() / params.weight.dim(0);
            const double bound = std::sqrt((feeds_relu(spec, i) ? 6.0 : 3.0) / static_cast<double>(fan_in));
            for (auto& w : params.weight.values()) w = (2.0 * uniform01(rng) - 1.0) * bound;
        }
        net.params.push_back(std::move(params));
    }
    return net;
}

NetworkSpec build_vgg_mini(const VggMiniConfig& cfg) {
    if (cfg.block_channels.empty() || cfg.hidden_width == 0)
        throw Error(ErrorKind::InvalidArgument, "VGG-mini needs at least one block and a hidden width");
    NetworkSpec spec;
    std::size_t channels = 1, side = 28;
    for (auto out : cfg.block_channels) {
        if (side < 2) throw Error(ErrorKind::InvalidArgument, "too many pooling blocks for a 28x28 input");
        spec.layers.push_back(LayerSpec::conv2d(channels, out, 3, 1));
        if (cfg.batch_norm) spec.layers.push_back(LayerSpec::batch_norm(out));
        spec.layers.push_back(LayerSpec::relu());
        spec.layers.push_back(cfg.max_pool ? LayerSpec::max_pool(2) : LayerSpec::avg_pool(2));
        channels = out;
        side /= 2;
    }
    spec.layers.push_back(LayerSpec::flatten());
    spec.layers.push_back(LayerSpec::dense(channels * side * side, cfg.hidden_width));
    spec.layers.push_back(LayerSpec::relu());
    if (cfg.hidden_dropout > 0.0) spec.layers.push_back(LayerSpec::dropout(cfg.hidden_dropout));
    spec.layers.push_back(LayerSpec::dense(cfg.hidden_width, spec.class_count));
    spec.layers.push_back(LayerSpec::softmax());
    return spec;
}

Tensor make_batch(const LabeledDataset& data, std::span<const std::size_t> indices) {
    const auto px = data.pixels_per_image();
    Tensor batch({indices.size(), 1, data.rows(), data.cols()});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto img = data.image(indices[b]);
        for (std::size_t i = 0; i < px; ++i) batch[b * px + i] = img[i] / 255.0;
    }
    return batch;
}

Tensor forward(const TrainedNetwork& net, const Tensor& batch, Mode mode, std::vector<LayerCache>* caches,
               std::mt19937_64* rng, unsigned threads) {
    if (caches != nullptr) caches->assign(net.spec.layers.size(), LayerCache{});
    Tensor x = batch;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i)
        x = layer_forward(net.spec.layers[i], net.params[i], x, mode, caches ? &(*caches)[i] : nullptr, rng, threads);
    return x;
}

void forward_inspect(const TrainedNetwork& net, const Tensor& batch,
                     const std::function<void(std::size_t, const Tensor&)>& visit, unsigned threads) {
    Tensor x = batch;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        visit(i, x);
        x = layer_forward(net.spec.layers[i], net.params[i], x, Mode::Infer, nullptr, nullptr, threads);
    }
    visit(net.spec.layers.size(), x);
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::vector<int> predict(const TrainedNetwork& net, const LabeledDataset& data, unsigned threads, std::size_t batch) {
    std::vector<int> out;
    out.reserve(data.size());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch) {
        idx.resize(std::min(batch, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const Tensor y = forward(net, make_batch(data, idx), Mode::Infer, nullptr, nullptr, threads);
        const std::size_t width = y.size() / idx.size();
        for (std::size_t b = 0; b < idx.size(); ++b)
            out.push_back(static_cast<int>(argmax(y.values().subspan(b * width, width))));
    }
    return out;
}

double evaluate(const TrainedNetwork& net, const LabeledDataset& data, unsigned threads) {
    if (data.empty()) throw Error(ErrorKind::EmptyDataset, "cannot evaluate on an empty dataset");
    const auto predictions = predict(net, data, threads);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += predictions[i] == data.label(i);
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainedNetwork train(const NetworkSpec& spec, const LabeledDataset& data, const TrainConfig& cfg,
                     const EpochCallback& on_epoch) {
    validate_trainable(spec);
    auto net = initialize(spec, cfg.seed);
    train_in_place(net, data, cfg, on_epoch);
    return net;
}

void train_in_place(TrainedNetwork& net, const LabeledDataset& data, const TrainConfig& cfg,
                    const EpochCallback& on_epoch) {
    validate_trainable(net.spec);
    if (data.empty()) throw Error(ErrorKind::EmptyDataset, "cannot train on an empty dataset");
    if (cfg.batch_size == 0 || cfg.batch_size > data.size())
        throw Error(ErrorKind::InvalidArgument, "batch size must lie in 1..dataset size");
    if (!(cfg.learning_rate >= 0.0) || !(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw Error(ErrorKind::InvalidArgument, "learning rate must be >= 0 and momentum in [0,1)");
    net.config = cfg;

    const auto& layers = net.spec.layers;
    const std::size_t classes = net.spec.class_count;
    // Shuffling and dropout masks draw from separate streams so that adding dropout does
    // not change the batch order.
    std::mt19937_64 order_rng(derive_seed(cfg.seed, 1));
    std::mt19937_64 dropout_rng(derive_seed(cfg.seed, 2));

    std::vector<LayerParams> velocity;
    for (const auto& p : net.params) velocity.push_back({Tensor(p.weight.shape()), Tensor(p.bias.shape()), {}, {}});

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<LayerCache> caches;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[order_rng() % (i + 1)]);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, count);
            const Tensor probs = forward(net, make_batch(data, idx), Mode::Train, &caches, &dropout_rng, cfg.threads);
            const Tensor& logits = caches.back().input;

            // Cross-entropy through the terminal softmax: d loss / d logits = (p - onehot) / count.
            Tensor grad(logits.shape());
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < count; ++b) {
                const int label = data.label(idx[b]);
                const double* z = logits.data() + b * classes;
                const double peak = *std::max_element(z, z + classes);
                double total = 0.0;
                for (std::size_t c = 0; c < classes; ++c) total += std::exp(z[c] - peak);
                batch_loss += peak + std::log(total) - z[label];
                const auto row = probs.values().subspan(b * classes, classes);
                correct += static_cast<int>(argmax(row)) == label;
                for (std::size_t c = 0; c < classes; ++c)
                    grad[b * classes + c] = (row[c] - (static_cast<int>(c) == label ? 1.0 : 0.0)) / count;
            }
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "loss became " << batch_loss << " in epoch " << epoch << " at item " << start
                    << " (learning rate " << cfg.learning_rate << ")";
                throw Error(ErrorKind::Divergence, msg.str());
            }
            loss_sum += batch_loss;

            for (std::size_t l = layers.size() - 1; l-- > 0;) {
                auto g = layer_backward(layers[l], net.params[l], caches[l], grad, cfg.threads);
                auto& p = net.params[l];
                if (layers[l].parametric()) {
                    auto step = [&](Tensor& param, Tensor& vel, const Tensor& gp) {
                        for (std::size_t k = 0; k < param.size(); ++k) {
                            vel[k] = cfg.momentum * vel[k] + gp[k];
                            param[k] -= cfg.learning_rate * vel[k];
                        }
                    };
                    step(p.weight, velocity[l].weight, g.weight);
                    step(p.bias, velocity[l].bias, g.bias);
                    if (layers[l].kind == LayerKind::BatchNorm) {
                        const double m = layers[l].momentum;
                        const auto& cache = caches[l];
                        const double per_channel = static_cast<double>(cache.input.size() / layers[l].channels);
                        const double unbias = per_channel > 1.0 ? per_channel / (per_channel - 1.0) : 1.0;
                        for (std::size_t c = 0; c < layers[l].channels; ++c) {
                            p.running_mean[c] = (1.0 - m) * p.running_mean[c] + m * cache.batch_mean[c];
                            p.running_var[c] = (1.0 - m) * p.running_var[c] + m * cache.batch_var[c] * unbias;
                        }
                    }
                }
                grad = std::move(g.input);
            }
        }
        EpochStats stats{epoch, loss_sum / static_cast<double>(data.size()),
                         static_cast<double>(correct) / static_cast<double>(data.size())};
        net.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
}

}  // namespace snn
