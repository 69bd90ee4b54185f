#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "snnconv/convert.hpp"
#include "snnconv/dataset.hpp"
#include "snnconv/network.hpp"

namespace testing {

inline std::filesystem::path mnist_dir() { return SNNCONV_MNIST_DIR; }

inline const snn::LabeledDataset& mnist_train() {
    static const auto data = snn::load_mnist(mnist_dir() / "train-images-idx3-ubyte.gz",
                                             mnist_dir() / "train-labels-idx1-ubyte.gz", "train");
    return data;
}

inline const snn::LabeledDataset& mnist_test() {
    static const auto data = snn::load_mnist(mnist_dir() / "t10k-images-idx3-ubyte.gz",
                                             mnist_dir() / "t10k-labels-idx1-ubyte.gz", "test");
    return data;
}

/// A compliant VGG-mini trained briefly on the first 6000 training images.
inline const snn::TrainedNetwork& small_trained() {
    static const auto net = [] {
        snn::ConversionConfig cc;
        const auto prepared = snn::prepare_for_conversion(snn::build_vgg_mini(), cc);
        snn::TrainConfig tc;
        tc.epochs = 1;
        tc.momentum = 0.9;
        tc.seed = 11;
        return snn::train(prepared.spec, mnist_train().slice(0, 6000), tc);
    }();
    return net;
}

inline const snn::ConversionResult& small_converted() {
    static const auto result = snn::convert(small_trained(), mnist_train(), snn::ConversionConfig{});
    return result;
}

inline snn::Tensor random_tensor(const snn::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    snn::Tensor t(shape);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n, mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace testing
