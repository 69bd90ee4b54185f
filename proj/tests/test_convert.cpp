#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "snnconv/convert.hpp"
#include "snnconv/error.hpp"
#include "snnconv/sim.hpp"
#include "test_support.hpp"

using namespace snn;

namespace {

using K = LayerKind;

NetworkSpec spec_of(Shape input, std::vector<LayerSpec> layers, std::size_t classes = 10) {
    NetworkSpec s;
    s.input_shape = std::move(input);
    s.layers = std::move(layers);
    s.class_count = classes;
    return s;
}

TrainedNetwork with_params(const NetworkSpec& spec) {
    TrainedNetwork net;
    net.spec = spec;
    for (const auto& l : spec.layers) net.params.push_back(zero_params(l));
    return net;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
}

/// Two-pixel images (rows 1, cols 2).
LabeledDataset pairs(std::vector<std::uint8_t> pixels) {
    std::vector<std::uint8_t> labels(pixels.size() / 2, 0);
    return LabeledDataset(1, 2, std::move(pixels), std::move(labels), "pairs");
}

}  // namespace

TEST_CASE("prepare_for_conversion: batch_norm becomes dropout, pools swap and reorder") {
    const auto spec = spec_of({1, 4, 4}, {LayerSpec::conv2d(1, 2, 3, 1), LayerSpec::batch_norm(2), LayerSpec::relu(),
                                          LayerSpec::max_pool(2), LayerSpec::flatten(), LayerSpec::dense(8, 10),
                                          LayerSpec::softmax()});
    const auto out = prepare_for_conversion(spec, ConversionConfig{});
    CHECK(topology(out.spec) ==
          std::vector<K>{K::Conv2d, K::Dropout, K::AvgPool, K::Relu, K::Flatten, K::Dense, K::Softmax});
    REQUIRE(out.substitutions.size() == 3);
    CHECK(out.substitutions[0].rule == ConversionRule::BatchNormToDropout);
    CHECK(out.substitutions[0].layer == 1);
    CHECK(out.substitutions[1].rule == ConversionRule::MaxPoolToAvgPool);
    CHECK(out.substitutions[1].layer == 3);
    CHECK(out.substitutions[2].rule == ConversionRule::ReorderPoolBeforeRelu);
    CHECK(out.substitutions[2].layer == 2);
    CHECK(out.spec.layers[1].dropout_rate == 0.1);
    CHECK(replay_substitutions(topology(spec), out.substitutions) == topology(out.spec));
}

TEST_CASE("prepare_for_conversion: batch_norm before pooling is deleted") {
    const auto spec = spec_of({1, 4, 4}, {LayerSpec::conv2d(1, 2, 3, 1), LayerSpec::batch_norm(2), LayerSpec::max_pool(2),
                                          LayerSpec::flatten(), LayerSpec::dense(8, 10), LayerSpec::softmax()});
    const auto out = prepare_for_conversion(spec, ConversionConfig{});
    CHECK(topology(out.spec) == std::vector<K>{K::Conv2d, K::AvgPool, K::Flatten, K::Dense, K::Softmax});
    REQUIRE(out.substitutions.size() == 2);
    CHECK(out.substitutions[0].rule == ConversionRule::DeleteBatchNormBeforePool);
    CHECK(out.substitutions[1].rule == ConversionRule::MaxPoolToAvgPool);
    const auto kinds = topology(out.spec);
    CHECK(std::count(kinds.begin(), kinds.end(), K::Dropout) == 0);
    CHECK(replay_substitutions(topology(spec), out.substitutions) == topology(out.spec));
}

TEST_CASE("prepare_for_conversion: compliant specs are a fixpoint") {
    VggMiniConfig cfg;
    cfg.batch_norm = false;
    cfg.max_pool = false;
    auto spec = build_vgg_mini(cfg);
    ConversionConfig cc;
    cc.pool_before_relu = false;
    const auto out = prepare_for_conversion(spec, cc);
    CHECK(out.spec == spec);
    CHECK(out.substitutions.empty());

    const auto once = prepare_for_conversion(build_vgg_mini(), ConversionConfig{});
    const auto twice = prepare_for_conversion(once.spec, ConversionConfig{});
    CHECK(twice.spec == once.spec);
    CHECK(twice.substitutions.empty());
}

TEST_CASE("fold_batch_norm: identity and scale-2 cases") {
    auto net = with_params(spec_of({3}, {LayerSpec::dense(3, 2), LayerSpec::batch_norm(2, 0.0), LayerSpec::softmax()}, 2));
    std::mt19937_64 rng(2);
    net.params[0].weight = testing::random_tensor({2, 3}, rng);
    net.params[0].bias = testing::random_tensor({2}, rng);
    const auto identity = fold_batch_norm(net);
    CHECK(topology(identity.spec) == std::vector<K>{K::Dense, K::Softmax});
    CHECK(identity.params[0] == net.params[0]);

    net.params[1].weight = Tensor({2}, 2.0);
    std::vector<Substitution> log;
    const auto doubled = fold_batch_norm(net, &log);
    for (std::size_t i = 0; i < 6; ++i) CHECK(doubled.params[0].weight[i] == 2.0 * net.params[0].weight[i]);
    for (std::size_t i = 0; i < 2; ++i) CHECK(doubled.params[0].bias[i] == 2.0 * net.params[0].bias[i]);
    REQUIRE(log.size() == 1);
    CHECK(log[0].rule == ConversionRule::FoldBatchNorm);
}

TEST_CASE("fold_batch_norm: random conv batch_norm stays within 1e-6") {
    std::mt19937_64 rng(7);
    auto net = with_params(spec_of({2, 6, 6}, {LayerSpec::conv2d(2, 3, 3, 1), LayerSpec::batch_norm(3), LayerSpec::relu(),
                                               LayerSpec::flatten(), LayerSpec::dense(108, 10), LayerSpec::softmax()}));
    net.params[0].weight = testing::random_tensor({3, 2, 3, 3}, rng);
    net.params[0].bias = testing::random_tensor({3}, rng);
    net.params[1].weight = testing::random_tensor({3}, rng, 0.5, 2.0);
    net.params[1].bias = testing::random_tensor({3}, rng);
    net.params[1].running_mean = testing::random_tensor({3}, rng);
    net.params[1].running_var = testing::random_tensor({3}, rng, 0.2, 3.0);
    net.params[4].weight = testing::random_tensor({10, 108}, rng);
    const auto folded = fold_batch_norm(net);
    const auto x = testing::random_tensor({100, 2, 6, 6}, rng, 0.0, 1.0);
    const auto a = forward(net, x, Mode::Infer);
    const auto b = forward(folded, x, Mode::Infer);
    // Compare the logits (inputs of the softmax).
    double worst = 0;
    forward_inspect(net, x, [&](std::size_t layer, const Tensor& in) {
        if (layer != 5) return;
        forward_inspect(folded, x, [&](std::size_t l2, const Tensor& in2) {
            if (l2 != 4) return;
            for (std::size_t i = 0; i < in.size(); ++i) worst = std::max(worst, std::abs(in[i] - in2[i]));
        });
    });
    CHECK(worst <= 1e-6);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6);
}

TEST_CASE("fold_batch_norm: orphan batch_norm") {
    auto net = with_params(spec_of({3}, {LayerSpec::batch_norm(3), LayerSpec::dense(3, 2), LayerSpec::softmax()}, 2));
    CHECK(kind_of([&] { fold_batch_norm(net); }) == ErrorKind::OrphanBatchNorm);
    auto net2 = with_params(spec_of({3}, {LayerSpec::dense(3, 3), LayerSpec::relu(), LayerSpec::batch_norm(3),
                                          LayerSpec::dense(3, 2), LayerSpec::softmax()}, 2));
    CHECK(kind_of([&] { fold_batch_norm(net2); }) == ErrorKind::OrphanBatchNorm);
}

TEST_CASE("percentile interpolates linearly") {
    CHECK(percentile({1, 2, 3, 4, 5}, 100) == 5);
    CHECK(percentile({1, 2, 3, 4, 5}, 50) == 3);
    CHECK(percentile({5, 1, 4, 2, 3}, 25) == 2);
    CHECK(percentile({0, 10}, 99.9) == doctest::Approx(9.99));
    CHECK_THROWS_AS(percentile({}, 50), Error);
}

TEST_CASE("normalize_weights: unit activations leave weights unchanged") {
    auto net = with_params(spec_of({1, 1, 2}, {LayerSpec::flatten(), LayerSpec::dense(2, 2), LayerSpec::relu(),
                                               LayerSpec::dense(2, 2), LayerSpec::softmax()}, 2));
    net.params[1].weight = Tensor({2, 2}, {1, 0, 0, 1});
    net.params[3].weight = Tensor({2, 2}, {1, 0, 0, 1});
    ConversionConfig cfg;
    cfg.normalization_percentile = 100;
    const auto r = normalize_weights(net, pairs({255, 0, 30, 60}), cfg);
    CHECK(r.scales == std::vector<double>{1.0, 1.0});
    for (std::size_t i = 0; i < net.params.size(); ++i) CHECK(r.net.params[i] == net.params[i]);
}

TEST_CASE("normalize_weights: single dense layer divided by its max activation") {
    auto net = with_params(spec_of({1, 1, 2}, {LayerSpec::flatten(), LayerSpec::dense(2, 2), LayerSpec::softmax()}, 2));
    net.params[1].weight = Tensor({2, 2}, {4, 0, 0, 2});
    net.params[1].bias = Tensor({2}, {0.0, 0.5});
    ConversionConfig cfg;
    cfg.normalization_percentile = 100;
    const auto r = normalize_weights(net, pairs({255, 255, 0, 0}), cfg);
    REQUIRE(r.scales.size() == 1);
    CHECK(r.scales[0] == 4.0);
    CHECK(r.net.params[1].weight.storage() == std::vector<double>{1, 0, 0, 0.5});
    CHECK(r.net.params[1].bias.storage() == std::vector<double>{0.0, 0.125});
}

TEST_CASE("normalize_weights: dead layers raise DegenerateScale") {
    auto net = with_params(spec_of({1, 1, 2}, {LayerSpec::flatten(), LayerSpec::dense(2, 2), LayerSpec::relu(),
                                               LayerSpec::dense(2, 2), LayerSpec::softmax()}, 2));
    net.params[1].bias = Tensor({2}, -1.0);
    net.params[3].weight = Tensor({2, 2}, 1.0);
    CHECK(kind_of([&] { normalize_weights(net, pairs({10, 20}), ConversionConfig{}); }) == ErrorKind::DegenerateScale);
}

TEST_CASE("normalize_weights keeps every calibration argmax") {
    const auto& trained = testing::small_trained();
    const auto compliant = apply_structural_rules(fold_batch_norm(trained), ConversionConfig{});
    const auto calib = testing::mnist_train().slice(0, 100);
    const auto r = normalize_weights(compliant, calib, ConversionConfig{});
    CHECK(predict(compliant, calib) == predict(r.net, calib));
    for (double s : r.scales) CHECK(s > 0.0);

    // Small two-layer net with random weights.
    std::mt19937_64 rng(5);
    auto net = with_params(spec_of({1, 28, 28}, {LayerSpec::flatten(), LayerSpec::dense(784, 16), LayerSpec::relu(),
                                                 LayerSpec::dense(16, 10), LayerSpec::softmax()}));
    net.params[1].weight = testing::random_tensor({16, 784}, rng, -0.1, 0.1);
    net.params[1].bias = testing::random_tensor({16}, rng, 0.0, 0.2);
    net.params[3].weight = testing::random_tensor({10, 16}, rng);
    net.params[3].bias = testing::random_tensor({10}, rng);
    const auto r2 = normalize_weights(net, calib, ConversionConfig{});
    CHECK(predict(net, calib) == predict(r2.net, calib));
}

TEST_CASE("map_to_spiking: synapses equal the composed linear maps") {
    std::mt19937_64 rng(3);
    auto net = with_params(spec_of({1, 4, 4}, {LayerSpec::conv2d(1, 2, 3, 1), LayerSpec::avg_pool(2), LayerSpec::relu(),
                                               LayerSpec::flatten(), LayerSpec::dense(8, 3), LayerSpec::softmax()}, 3));
    net.params[0].weight = testing::random_tensor({2, 1, 3, 3}, rng);
    net.params[0].bias = testing::random_tensor({2}, rng);
    net.params[4].weight = testing::random_tensor({3, 8}, rng);
    net.params[4].bias = testing::random_tensor({3}, rng);
    const auto snn_net = map_to_spiking(net, ConversionConfig{});
    REQUIRE(snn_net.layers.size() == 2);
    CHECK(snn_net.topology == std::vector<K>{K::Conv2d, K::AvgPool, K::Relu, K::Flatten, K::Dense});
    const auto& l1 = snn_net.layers[0];
    CHECK(l1.size() == 8);
    const auto dense = l1.synapses.to_dense();
    // Column j of the map is the stage response to a unit input at j, minus the bias response.
    for (std::size_t j = 0; j < 16; ++j) {
        Tensor x({1, 1, 4, 4});
        x[j] = 1.0;
        auto y = layer_forward(net.spec.layers[1], net.params[1], layer_forward(net.spec.layers[0], net.params[0], x, Mode::Infer),
                               Mode::Infer);
        for (std::size_t t = 0; t < 8; ++t) CHECK(dense[t * 16 + j] + l1.bias[t] == doctest::Approx(y[t]).epsilon(1e-12));
    }
    CHECK_NOTHROW(check(snn_net));
}

TEST_CASE("map_to_spiking rejects non-compliant networks") {
    auto net = with_params(spec_of({1, 4, 4}, {LayerSpec::conv2d(1, 2, 3, 1), LayerSpec::relu(), LayerSpec::max_pool(2),
                                               LayerSpec::flatten(), LayerSpec::dense(8, 3), LayerSpec::softmax()}, 3));
    CHECK(kind_of([&] { map_to_spiking(net, ConversionConfig{}); }) == ErrorKind::NonCompliantTopology);
    net.spec.layers[2] = LayerSpec::dropout(0.2);
    CHECK(kind_of([&] { map_to_spiking(net, ConversionConfig{}); }) == ErrorKind::NonCompliantTopology);
}

TEST_CASE("single relu unit fires at the input rate") {
    auto net = with_params(spec_of({1}, {LayerSpec::dense(1, 1), LayerSpec::relu(), LayerSpec::dense(1, 1),
                                         LayerSpec::softmax()}, 1));
    net.params[0].weight[0] = 1.0;
    net.params[2].weight[0] = 1.0;
    for (std::size_t k : {1u, 4u}) {
        ConversionConfig cfg;
        cfg.replication_factor = k;
        const auto s = map_to_spiking(net, cfg);
        CHECK(s.layers[0].size() == k);
        for (double rate : {100.0, 300.0}) {
            auto sim = make_sim_config(rate, 10000, 77);
            sim.record_rasters = {1};
            const std::vector<double> one{1.0};
            const auto c = classify(s, one, sim);
            const double input = static_cast<double>(c.result.input_spikes);
            const double hidden = static_cast<double>(c.result.layer_spikes[0]) / static_cast<double>(k);
            CAPTURE(k);
            CAPTURE(rate);
            CHECK(std::abs(input - rate * 10.0) <= 4 * std::sqrt(rate * 10.0));
            CHECK(std::abs(hidden - input) <= 0.05 * input);
            CHECK(std::abs(static_cast<double>(c.result.layer_spikes[1]) - input) <= 0.05 * input);
        }
    }
}

TEST_CASE("replication leaves the downstream response unchanged") {
    const auto& trained = testing::small_trained();
    ConversionConfig one, four;
    four.replication_factor = 4;
    const auto calib = testing::mnist_train();
    const auto a = convert(trained, calib, one).network;
    const auto b = convert(trained, calib, four).network;
    CHECK(b.layers[0].size() == 4 * a.layers[0].size());
    CHECK(b.output_size() == 10);
    const auto image = normalize(testing::mnist_test().image(0));
    auto sim = make_sim_config(300, 100, 5);
    const auto ra = classify(a, image, sim).result;
    const auto rb = classify(b, image, sim).result;
    CHECK(ra.step_counts == rb.step_counts);
    CHECK(rb.layer_spikes[0] == 4 * ra.layer_spikes[0]);
}

TEST_CASE("zero weights give a silent network") {
    auto net = with_params(spec_of({1, 28, 28}, {LayerSpec::flatten(), LayerSpec::dense(784, 16), LayerSpec::relu(),
                                                 LayerSpec::dense(16, 10), LayerSpec::softmax()}));
    const auto s = map_to_spiking(net, ConversionConfig{});
    auto sim = make_sim_config(300, 100, 1);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto r = classify(s, normalize(testing::mnist_test().image(i)), sim).result;
        CHECK(r.layer_spikes[0] == 0);
        CHECK(r.layer_spikes[1] == 0);
        CHECK(r.predicted_label == 0);
    }
}

TEST_CASE("convert on the default VGG-mini build") {
    auto spec = build_vgg_mini();
    TrainConfig tc;
    tc.epochs = 1;
    tc.momentum = 0.9;
    const auto trained = train(spec, testing::mnist_train().slice(0, 2000), tc);
    const auto result = convert(trained, testing::mnist_train(), ConversionConfig{});
    const auto kinds = topology(spec);
    auto count_rule = [&](ConversionRule r) {
        return std::count_if(result.report.substitutions.begin(), result.report.substitutions.end(),
                             [&](const Substitution& s) { return s.rule == r; });
    };
    CHECK(count_rule(ConversionRule::FoldBatchNorm) == std::count(kinds.begin(), kinds.end(), K::BatchNorm));
    CHECK(count_rule(ConversionRule::MaxPoolToAvgPool) == std::count(kinds.begin(), kinds.end(), K::MaxPool));
    CHECK(count_rule(ConversionRule::DropSoftmax) == 1);
    CHECK(report_replays(result.report));
    for (auto k : result.network.topology) {
        CHECK(k != K::MaxPool);
        CHECK(k != K::BatchNorm);
        CHECK(k != K::Dropout);
        CHECK(k != K::Softmax);
    }
}

TEST_CASE("convert on a prepared, trained network") {
    const auto& result = testing::small_converted();
    CHECK(report_replays(result.report));
    CHECK(result.report.source_fingerprint.rfind("sha256:", 0) == 0);
    CHECK(result.report.source_fingerprint.size() == 7 + 64);
    CHECK(result.report.source_training.epochs == 1);
    CHECK(result.report.source_training.momentum == 0.9);
    CHECK(result.report.source_training.seed == 11);
    CHECK(result.report.scales.size() == result.network.layers.size());
    for (std::size_t i = 0; i < result.network.layers.size(); ++i)
        CHECK(result.network.layers[i].scale == result.report.scales[i]);

    // Re-converting the normalized analog network applies only the softmax drop.
    const auto again = convert(result.network.analog, testing::mnist_train(), ConversionConfig{});
    REQUIRE(again.report.substitutions.size() == 1);
    CHECK(again.report.substitutions[0].rule == ConversionRule::DropSoftmax);
    for (double s : again.report.scales) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    const auto third = convert(again.network.analog, testing::mnist_train(), ConversionConfig{});
    CHECK(third.report.scales.size() == again.report.scales.size());
    for (std::size_t i = 0; i < third.report.scales.size(); ++i)
        CHECK(third.report.scales[i] == doctest::Approx(again.report.scales[i]).epsilon(1e-9));
}

TEST_CASE("conversion report text round-trips") {
    auto report = testing::small_converted().report;
    report.config.neuron_template.v_min = -2.5;
    const auto text = report_to_text(report);
    CHECK(text.find("substitution.0.rule = ") != std::string::npos);
    CHECK(report_from_text(text) == report);
    CHECK(report_to_text(report_from_text(text)) == text);
    CHECK(kind_of([] { report_from_text("format = something\n"); }) == ErrorKind::CorruptFile);
    auto broken = report;
    broken.result_topology.push_back(K::Dense);
    CHECK_FALSE(report_replays(broken));
    for (auto r : {ConversionRule::BatchNormToDropout, ConversionRule::DeleteBatchNormBeforePool,
                   ConversionRule::MaxPoolToAvgPool, ConversionRule::ReorderPoolBeforeRelu, ConversionRule::FoldBatchNorm,
                   ConversionRule::RemoveDropout, ConversionRule::DropSoftmax})
        CHECK(conversion_rule_from_string(to_string(r)) == r);
}

TEST_CASE("spiking network files round-trip") {
    const auto& net = testing::small_converted().network;
    const auto bytes = serialize_spiking(net);
    const auto back = deserialize_spiking(bytes);
    REQUIRE(back.layers.size() == net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        CHECK(back.layers[i].synapses.weights == net.layers[i].synapses.weights);
        CHECK(back.layers[i].synapses.targets == net.layers[i].synapses.targets);
        CHECK(back.layers[i].bias == net.layers[i].bias);
        CHECK(back.layers[i].scale == net.layers[i].scale);
    }
    CHECK(back.config == net.config);
    CHECK(serialize_spiking(back) == bytes);
    auto cut = bytes;
    cut.resize(cut.size() / 2);
    CHECK(kind_of([&] { deserialize_spiking(cut); }) == ErrorKind::CorruptFile);
}
