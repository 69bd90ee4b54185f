#include "snnconv/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snnconv/parallel.hpp"
#include "snnconv/random.hpp"

namespace snn {

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::string_view to_string(LayerKind kind) noexcept {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "max_pool";
        case LayerKind::AvgPool: return "avg_pool";
        case LayerKind::BatchNorm: return "batch_norm";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::Flatten: return "flatten";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
    for (auto kind : {LayerKind::Conv2d, LayerKind::Dense, LayerKind::Relu, LayerKind::MaxPool, LayerKind::AvgPool,
                      LayerKind::BatchNorm, LayerKind::Dropout, LayerKind::Softmax, LayerKind::Flatten})
        if (to_string(kind) == name) return kind;
    throw Error(ErrorKind::InvalidArgument, "unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t padding, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.padding = padding;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t in_features, std::size_t out_features) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
}

LayerSpec LayerSpec::batch_norm(std::size_t channels, double epsilon) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.channels = channels;
    s.epsilon = epsilon;
    return s;
}

void validate(const LayerSpec& s) {
    auto fail = [&](const char* what) {
        throw Error(ErrorKind::InvalidArgument, std::string(to_string(s.kind)) + ": " + what);
    };
    switch (s.kind) {
        case LayerKind::Conv2d:
            if (s.in_channels == 0 || s.out_channels == 0 || s.kernel == 0 || s.stride == 0)
                fail("channels, kernel and stride must be positive");
            break;
        case LayerKind::Dense:
            if (s.in_features == 0 || s.out_features == 0) fail("feature widths must be positive");
            break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool:
            if (s.window == 0) fail("pool window must be positive");
            break;
        case LayerKind::Dropout:
            if (!(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0)) fail("dropout rate must lie in [0,1)");
            break;
        case LayerKind::BatchNorm:
            if (s.channels == 0 || !(s.epsilon > 0.0)) fail("channels and epsilon must be positive");
            if (!(s.momentum > 0.0 && s.momentum <= 1.0)) fail("momentum must lie in (0,1]");
            break;
        default: break;
    }
}

Shape output_shape(const LayerSpec& s, const Shape& in) {
    validate(s);
    auto mismatch = [&](const std::string& what) {
        throw Error(ErrorKind::ShapeMismatch,
                    std::string(to_string(s.kind)) + " given " + shape_string(in) + ": " + what);
    };
    switch (s.kind) {
        case LayerKind::Conv2d: {
            if (in.size() != 3 || in[0] != s.in_channels) mismatch("expected [in_channels,H,W]");
            const auto h = in[1] + 2 * s.padding, w = in[2] + 2 * s.padding;
            if (h < s.kernel || w < s.kernel) mismatch("kernel larger than padded input");
            return {s.out_channels, (h - s.kernel) / s.stride + 1, (w - s.kernel) / s.stride + 1};
        }
        case LayerKind::Dense:
            if (in.size() != 1 || in[0] != s.in_features) mismatch("expected [in_features]");
            return {s.out_features};
        case LayerKind::MaxPool:
        case LayerKind::AvgPool:
            if (in.size() != 3 || in[1] < s.window || in[2] < s.window) mismatch("expected [C,H,W] >= window");
            return {in[0], in[1] / s.window, in[2] / s.window};
        case LayerKind::BatchNorm:
            if ((in.size() != 1 && in.size() != 3) || in[0] != s.channels) mismatch("channel count differs");
            return in;
        case LayerKind::Softmax:
            if (in.size() != 1) mismatch("softmax expects a flat vector");
            return in;
        case LayerKind::Flatten: return {shape_size(in)};
        case LayerKind::Relu:
        case LayerKind::Dropout: return in;
    }
    return in;
}

LayerParams zero_params(const LayerSpec& s) {
    LayerParams p;
    switch (s.kind) {
        case LayerKind::Conv2d:
            p.weight = Tensor({s.out_channels, s.in_channels, s.kernel, s.kernel});
            p.bias = Tensor({s.out_channels});
            break;
        case LayerKind::Dense:
            p.weight = Tensor({s.out_features, s.in_features});
            p.bias = Tensor({s.out_features});
            break;
        case LayerKind::BatchNorm:
            p.weight = Tensor({s.channels}, 1.0);
            p.bias = Tensor({s.channels});
            p.running_mean = Tensor({s.channels});
            p.running_var = Tensor({s.channels}, 1.0);
            break;
        default: break;
    }
    return p;
}

namespace {

Shape item_shape_of(const Tensor& batch) {
    if (batch.rank() < 2) throw Error(ErrorKind::ShapeMismatch, "batch tensor needs a leading batch dimension");
    return Shape(batch.shape().begin() + 1, batch.shape().end());
}

Shape with_batch(std::size_t n, const Shape& item) {
    Shape s{n};
    s.insert(s.end(), item.begin(), item.end());
    return s;
}

// Output columns x whose input column x*stride + k - pad lies in [0, width).
struct Span1d {
    std::size_t begin;
    std::size_t end;
};

Span1d valid_range(std::size_t out_len, std::size_t in_len, std::size_t k, std::size_t stride, std::size_t pad) {
    const auto lo_num = static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(k);
    std::ptrdiff_t lo = lo_num <= 0 ? 0 : (lo_num + static_cast<std::ptrdiff_t>(stride) - 1) / stride;
    const auto hi_num = static_cast<std::ptrdiff_t>(in_len) - 1 + static_cast<std::ptrdiff_t>(pad) -
                        static_cast<std::ptrdiff_t>(k);
    std::ptrdiff_t hi = hi_num < 0 ? -1 : hi_num / static_cast<std::ptrdiff_t>(stride);
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_len) - 1);
    if (hi < lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi) + 1};
}

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, oh, ow, k, stride, pad;
};

ConvGeometry conv_geometry(const LayerSpec& s, const Shape& in_batch) {
    return {in_batch[0], s.in_channels, in_batch[2], in_batch[3], s.out_channels,
            (in_batch[2] + 2 * s.padding - s.kernel) / s.stride + 1,
            (in_batch[3] + 2 * s.padding - s.kernel) / s.stride + 1, s.kernel, s.stride, s.padding};
}

void conv_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias, double* out,
                  unsigned threads) {
    parallel_for(g.n, threads, [&](std::size_t n) {
        for (std::size_t o = 0; o < g.cout; ++o) {
            double* dst = out + (n * g.cout + o) * g.oh * g.ow;
            std::fill(dst, dst + g.oh * g.ow, bias[o]);
            for (std::size_t c = 0; c < g.cin; ++c) {
                const double* src = in + (n * g.cin + c) * g.h * g.w;
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                    const auto ys = valid_range(g.oh, g.h, ky, g.stride, g.pad);
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const double wv = weight[((o * g.cin + c) * g.k + ky) * g.k + kx];
                        const auto xs = valid_range(g.ow, g.w, kx, g.stride, g.pad);
                        for (std::size_t y = ys.begin; y < ys.end; ++y) {
                            const double* row = src + (y * g.stride + ky - g.pad) * g.w;
                            double* drow = dst + y * g.ow;
                            if (g.stride == 1) {
                                const double* r = row + (xs.begin + kx - g.pad);
                                double* d = drow + xs.begin;
                                const std::size_t len = xs.end - xs.begin;
                                for (std::size_t x = 0; x < len; ++x) d[x] += wv * r[x];
                            } else {
                                for (std::size_t x = xs.begin; x < xs.end; ++x)
                                    drow[x] += wv * row[x * g.stride + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    });
}

void conv_backward(const ConvGeometry& g, const double* in, const double* weight, const double* grad_out,
                   double* grad_in, double* grad_w, double* grad_b, unsigned threads) {
    // Input gradient: independent per item.
    parallel_for(g.n, threads, [&](std::size_t n) {
        for (std::size_t c = 0; c < g.cin; ++c) {
            double* gin = grad_in + (n * g.cin + c) * g.h * g.w;
            for (std::size_t o = 0; o < g.cout; ++o) {
                const double* gout = grad_out + (n * g.cout + o) * g.oh * g.ow;
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                    const auto ys = valid_range(g.oh, g.h, ky, g.stride, g.pad);
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const double wv = weight[((o * g.cin + c) * g.k + ky) * g.k + kx];
                        const auto xs = valid_range(g.ow, g.w, kx, g.stride, g.pad);
                        for (std::size_t y = ys.begin; y < ys.end; ++y) {
                            double* row = gin + (y * g.stride + ky - g.pad) * g.w;
                            const double* grow = gout + y * g.ow;
                            for (std::size_t x = xs.begin; x < xs.end; ++x)
                                row[x * g.stride + kx - g.pad] += wv * grow[x];
                        }
                    }
                }
            }
        }
    });
    // Parameter gradients: one output channel per task, items reduced in index order.
    parallel_for(g.cout, threads, [&](std::size_t o) {
        double bsum = 0.0;
        for (std::size_t n = 0; n < g.n; ++n) {
            const double* gout = grad_out + (n * g.cout + o) * g.oh * g.ow;
            for (std::size_t i = 0; i < g.oh * g.ow; ++i) bsum += gout[i];
            for (std::size_t c = 0; c < g.cin; ++c) {
                const double* src = in + (n * g.cin + c) * g.h * g.w;
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                    const auto ys = valid_range(g.oh, g.h, ky, g.stride, g.pad);
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const auto xs = valid_range(g.ow, g.w, kx, g.stride, g.pad);
                        double acc = 0.0;
                        for (std::size_t y = ys.begin; y < ys.end; ++y) {
                            const double* row = src + (y * g.stride + ky - g.pad) * g.w;
                            const double* grow = gout + y * g.ow;
                            for (std::size_t x = xs.begin; x < xs.end; ++x)
                                acc += grow[x] * row[x * g.stride + kx - g.pad];
                        }
                        grad_w[((o * g.cin + c) * g.k + ky) * g.k + kx] += acc;
                    }
                }
            }
        }
        grad_b[o] = bsum;
    });
}

// Channel layout for batch_norm: [N, C] or [N, C, H, W] -> (N, C, spatial).
struct ChannelLayout {
    std::size_t n, c, spatial;
};

ChannelLayout channel_layout(const Tensor& t) {
    std::size_t spatial = 1;
    for (std::size_t i = 2; i < t.rank(); ++i) spatial *= t.dim(i);
    return {t.dim(0), t.dim(1), spatial};
}

}  // namespace

Tensor layer_forward(const LayerSpec& s, const LayerParams& p, const Tensor& input, Mode mode, LayerCache* cache,
                     std::mt19937_64* rng, unsigned threads) {
    const Shape item = item_shape_of(input);
    const Shape out_item = output_shape(s, item);
    const std::size_t n = input.dim(0);
    Tensor out(with_batch(n, out_item));
    Tensor aux;
    Tensor batch_mean, batch_var;

    switch (s.kind) {
        case LayerKind::Conv2d: {
            if (p.weight.shape() != Shape{s.out_channels, s.in_channels, s.kernel, s.kernel} ||
                p.bias.size() != s.out_channels)
                throw Error(ErrorKind::ShapeMismatch, "conv2d parameters do not match the layer spec");
            conv_forward(conv_geometry(s, input.shape()), input.data(), p.weight.data(), p.bias.data(), out.data(),
                         threads);
            break;
        }
        case LayerKind::Dense: {
            if (p.weight.shape() != Shape{s.out_features, s.in_features} || p.bias.size() != s.out_features)
                throw Error(ErrorKind::ShapeMismatch, "dense parameters do not match the layer spec");
            const auto fi = s.in_features, fo = s.out_features;
            parallel_for(n, threads, [&](std::size_t b) {
                const double* x = input.data() + b * fi;
                double* y = out.data() + b * fo;
                for (std::size_t j = 0; j < fo; ++j) {
                    const double* w = p.weight.data() + j * fi;
                    double acc = p.bias[j];
                    for (std::size_t i = 0; i < fi; ++i) acc += w[i] * x[i];
                    y[j] = acc;
                }
            });
            break;
        }
        case LayerKind::Relu:
            for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
            break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: {
            const auto c = item[0], h = item[1], w = item[2], oh = out_item[1], ow = out_item[2], k = s.window;
            const bool is_max = s.kind == LayerKind::MaxPool;
            if (is_max) aux = Tensor(out.shape());
            const double inv_area = 1.0 / static_cast<double>(k * k);
            for (std::size_t bc = 0; bc < n * c; ++bc) {
                const double* src = input.data() + bc * h * w;
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t x = 0; x < ow; ++x) {
                        const std::size_t o = bc * oh * ow + y * ow + x;
                        if (is_max) {
                            double best = -std::numeric_limits<double>::infinity();
                            std::size_t arg = 0;
                            for (std::size_t dy = 0; dy < k; ++dy)
                                for (std::size_t dx = 0; dx < k; ++dx) {
                                    const std::size_t idx = (y * k + dy) * w + x * k + dx;
                                    if (src[idx] > best) {
                                        best = src[idx];
                                        arg = idx;
                                    }
                                }
                            out[o] = best;
                            aux[o] = static_cast<double>(arg);
                        } else {
                            double sum = 0.0;
                            for (std::size_t dy = 0; dy < k; ++dy)
                                for (std::size_t dx = 0; dx < k; ++dx) sum += src[(y * k + dy) * w + x * k + dx];
                            out[o] = sum * inv_area;
                        }
                    }
            }
            break;
        }
        case LayerKind::BatchNorm: {
            if (p.weight.size() != s.channels || p.bias.size() != s.channels ||
                p.running_mean.size() != s.channels || p.running_var.size() != s.channels)
                throw Error(ErrorKind::ShapeMismatch, "batch_norm parameters do not match the layer spec");
            const auto L = channel_layout(input);
            const double count = static_cast<double>(L.n * L.spatial);
            aux = Tensor(input.shape());
            batch_mean = Tensor({L.c});
            batch_var = Tensor({L.c});
            for (std::size_t ch = 0; ch < L.c; ++ch) {
                double mean = p.running_mean[ch], var = p.running_var[ch];
                if (mode == Mode::Train) {
                    double sum = 0.0;
                    for (std::size_t b = 0; b < L.n; ++b)
                        for (std::size_t i = 0; i < L.spatial; ++i) sum += input[(b * L.c + ch) * L.spatial + i];
                    mean = sum / count;
                    double sq = 0.0;
                    for (std::size_t b = 0; b < L.n; ++b)
                        for (std::size_t i = 0; i < L.spatial; ++i) {
                            const double d = input[(b * L.c + ch) * L.spatial + i] - mean;
                            sq += d * d;
                        }
                    var = sq / count;
                }
                batch_mean[ch] = mean;
                batch_var[ch] = var;
                const double inv_std = 1.0 / std::sqrt(var + s.epsilon);
                for (std::size_t b = 0; b < L.n; ++b)
                    for (std::size_t i = 0; i < L.spatial; ++i) {
                        const std::size_t at = (b * L.c + ch) * L.spatial + i;
                        const double xhat = (input[at] - mean) * inv_std;
                        aux[at] = xhat;
                        out[at] = p.weight[ch] * xhat + p.bias[ch];
                    }
            }
            break;
        }
        case LayerKind::Dropout: {
            if (mode == Mode::Infer || s.dropout_rate == 0.0) {
                out = Tensor(out.shape(), input.storage());
                if (mode == Mode::Train) aux = Tensor(out.shape(), 1.0);
                break;
            }
            if (rng == nullptr) throw Error(ErrorKind::InvalidArgument, "dropout in train mode needs a generator");
            aux = Tensor(out.shape());
            const double keep_scale = 1.0 / (1.0 - s.dropout_rate);
            for (std::size_t i = 0; i < input.size(); ++i) {
                aux[i] = uniform01(*rng) >= s.dropout_rate ? keep_scale : 0.0;
                out[i] = input[i] * aux[i];
            }
            break;
        }
        case LayerKind::Softmax: {
            const auto f = item[0];
            for (std::size_t b = 0; b < n; ++b) {
                const double* x = input.data() + b * f;
                double* y = out.data() + b * f;
                const double peak = *std::max_element(x, x + f);
                double total = 0.0;
                for (std::size_t i = 0; i < f; ++i) total += (y[i] = std::exp(x[i] - peak));
                for (std::size_t i = 0; i < f; ++i) y[i] /= total;
            }
            break;
        }
        case LayerKind::Flatten: out = Tensor(out.shape(), input.storage()); break;
    }

    if (cache != nullptr) {
        cache->valid = true;
        cache->mode = mode;
        cache->input = input;
        cache->output = out;
        cache->aux = std::move(aux);
        cache->batch_mean = std::move(batch_mean);
        cache->batch_var = std::move(batch_var);
    }
    return out;
}

LayerGradients layer_backward(const LayerSpec& s, const LayerParams& p, const LayerCache& cache,
                              const Tensor& grad_out, unsigned threads) {
    if (!cache.valid) throw Error(ErrorKind::MissingCache, std::string(to_string(s.kind)) + " has no forward cache");
    if (grad_out.shape() != cache.output.shape())
        throw Error(ErrorKind::ShapeMismatch, "gradient shape " + shape_string(grad_out.shape()) +
                                                  " differs from output " + shape_string(cache.output.shape()));
    const Tensor& in = cache.input;
    LayerGradients g;
    g.input = Tensor(in.shape());
    const std::size_t n = in.dim(0);

    switch (s.kind) {
        case LayerKind::Conv2d: {
            g.weight = Tensor(p.weight.shape());
            g.bias = Tensor(p.bias.shape());
            conv_backward(conv_geometry(s, in.shape()), in.data(), p.weight.data(), grad_out.data(), g.input.data(),
                          g.weight.data(), g.bias.data(), threads);
            break;
        }
        case LayerKind::Dense: {
            const auto fi = s.in_features, fo = s.out_features;
            g.weight = Tensor(p.weight.shape());
            g.bias = Tensor(p.bias.shape());
            parallel_for(n, threads, [&](std::size_t b) {
                const double* gy = grad_out.data() + b * fo;
                double* gx = g.input.data() + b * fi;
                for (std::size_t j = 0; j < fo; ++j) {
                    const double* w = p.weight.data() + j * fi;
                    const double gj = gy[j];
                    for (std::size_t i = 0; i < fi; ++i) gx[i] += w[i] * gj;
                }
            });
            parallel_for(fo, threads, [&](std::size_t j) {
                double* gw = g.weight.data() + j * fi;
                double gb = 0.0;
                for (std::size_t b = 0; b < n; ++b) {
                    const double gj = grad_out[b * fo + j];
                    gb += gj;
                    const double* x = in.data() + b * fi;
                    for (std::size_t i = 0; i < fi; ++i) gw[i] += gj * x[i];
                }
                g.bias[j] = gb;
            });
            break;
        }
        case LayerKind::Relu:
            for (std::size_t i = 0; i < in.size(); ++i) g.input[i] = in[i] > 0.0 ? grad_out[i] : 0.0;
            break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: {
            const auto c = in.dim(1), h = in.dim(2), w = in.dim(3);
            const auto oh = grad_out.dim(2), ow = grad_out.dim(3), k = s.window;
            const double inv_area = 1.0 / static_cast<double>(k * k);
            for (std::size_t bc = 0; bc < n * c; ++bc) {
                double* dst = g.input.data() + bc * h * w;
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t x = 0; x < ow; ++x) {
                        const std::size_t o = bc * oh * ow + y * ow + x;
                        if (s.kind == LayerKind::MaxPool) {
                            dst[static_cast<std::size_t>(cache.aux[o])] += grad_out[o];
                        } else {
                            for (std::size_t dy = 0; dy < k; ++dy)
                                for (std::size_t dx = 0; dx < k; ++dx)
                                    dst[(y * k + dy) * w + x * k + dx] += grad_out[o] * inv_area;
                        }
                    }
            }
            break;
        }
        case LayerKind::BatchNorm: {
            const auto L = channel_layout(in);
            const double count = static_cast<double>(L.n * L.spatial);
            g.weight = Tensor(p.weight.shape());
            g.bias = Tensor(p.bias.shape());
            for (std::size_t ch = 0; ch < L.c; ++ch) {
                const double inv_std = 1.0 / std::sqrt(cache.batch_var[ch] + s.epsilon);
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t b = 0; b < L.n; ++b)
                    for (std::size_t i = 0; i < L.spatial; ++i) {
                        const std::size_t at = (b * L.c + ch) * L.spatial + i;
                        sum_g += grad_out[at];
                        sum_gx += grad_out[at] * cache.aux[at];
                    }
                g.bias[ch] = sum_g;
                g.weight[ch] = sum_gx;
                const double scale = p.weight[ch] * inv_std;
                for (std::size_t b = 0; b < L.n; ++b)
                    for (std::size_t i = 0; i < L.spatial; ++i) {
                        const std::size_t at = (b * L.c + ch) * L.spatial + i;
                        if (cache.mode == Mode::Train)
                            g.input[at] = scale * (grad_out[at] - sum_g / count - cache.aux[at] * sum_gx / count);
                        else
                            g.input[at] = scale * grad_out[at];
                    }
            }
            break;
        }
        case LayerKind::Dropout:
            if (cache.mode == Mode::Infer || cache.aux.empty()) {
                g.input = Tensor(in.shape(), grad_out.storage());
            } else {
                for (std::size_t i = 0; i < in.size(); ++i) g.input[i] = grad_out[i] * cache.aux[i];
            }
            break;
        case LayerKind::Softmax: {
            const auto f = in.dim(1);
            for (std::size_t b = 0; b < n; ++b) {
                const double* y = cache.output.data() + b * f;
                const double* gy = grad_out.data() + b * f;
                double dot = 0.0;
                for (std::size_t i = 0; i < f; ++i) dot += y[i] * gy[i];
                for (std::size_t i = 0; i < f; ++i) g.input[b * f + i] = y[i] * (gy[i] - dot);
            }
            break;
        }
        case LayerKind::Flatten: g.input = Tensor(in.shape(), grad_out.storage()); break;
    }
    return g;
}

}  // namespace snn
