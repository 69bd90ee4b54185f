#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "snnconv/layers.hpp"
#include "test_support.hpp"

namespace testing {

using namespace snn;

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

/// Compares analytic gradients of L = sum(out * g) with central differences.
inline double gradient_check(const LayerSpec& spec, LayerParams params, Tensor x, std::mt19937_64& rng, Mode mode) {
    const auto probe = layer_forward(spec, params, x, mode);
    const auto g = random_tensor(probe.shape(), rng);
    auto loss = [&](const LayerParams& p, const Tensor& in) {
        const auto out = layer_forward(spec, p, in, mode);
        double s = 0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * g[i];
        return s;
    };
    LayerCache cache;
    layer_forward(spec, params, x, mode, &cache);
    const auto grads = layer_backward(spec, params, cache, g);
    const double eps = 1e-5;
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double up = loss(params, x);
        x[i] = keep - eps;
        const double down = loss(params, x);
        x[i] = keep;
        worst = std::max(worst, rel_err((up - down) / (2 * eps), grads.input[i]));
    }
    auto check_param = [&](Tensor LayerParams::*member, const Tensor& analytic) {
        for (std::size_t i = 0; i < (params.*member).size(); ++i) {
            const double keep = (params.*member)[i];
            (params.*member)[i] = keep + eps;
            const double up = loss(params, x);
            (params.*member)[i] = keep - eps;
            const double down = loss(params, x);
            (params.*member)[i] = keep;
            worst = std::max(worst, rel_err((up - down) / (2 * eps), analytic[i]));
        }
    };
    if (spec.parametric()) {
        check_param(&LayerParams::weight, grads.weight);
        check_param(&LayerParams::bias, grads.bias);
    }
    return worst;
}

inline LayerParams random_params(const LayerSpec& spec, std::mt19937_64& rng) {
    auto p = zero_params(spec);
    p.weight = random_tensor(p.weight.shape(), rng);
    p.bias = random_tensor(p.bias.shape(), rng);
    if (spec.kind == LayerKind::BatchNorm) {
        p.running_mean = random_tensor(p.running_mean.shape(), rng);
        p.running_var = random_tensor(p.running_var.shape(), rng, 0.5, 2.0);
    }
    return p;
}

}  // namespace testing
