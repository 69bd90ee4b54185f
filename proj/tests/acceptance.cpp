// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "snnconv/cli.hpp"
#include "snnconv/config.hpp"
#include "snnconv/convert.hpp"
#include "snnconv/encoding.hpp"
#include "snnconv/error.hpp"
#include "snnconv/neuron.hpp"
#include "snnconv/sim.hpp"
#include "test_support.hpp"

using namespace snn;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void report(int id, const Verdict& v) {
    std::printf("CRITERION %d: %s - %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
}

Verdict guarded(const std::function<Verdict()>& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        return {false, std::string("exception: ") + e.what()};
    }
}

// ---------------------------------------------------------------------------------------------
// Oracle suites

Verdict neuron_oracles() {
    Verdict v;
    NeuronParams lif;
    lif.model = NeuronModel::LIF;
    lif.capacitance = 1.0;
    lif.resistance = 1.0;
    lif.v_threshold = 10.0;
    auto charge_error = [&](double dt) {
        NeuronState s;
        double worst = 0;
        const int steps = static_cast<int>(std::lround(5.0 / dt));
        for (int k = 1; k <= steps; ++k) {
            s = step_lif(s, lif, 2.0, dt).state;
            worst = std::max(worst, std::abs(s.v - 2.0 * (1.0 - std::exp(-k * dt))));
        }
        return worst;
    };
    const double e1 = charge_error(1e-3), e2 = charge_error(5e-4), e3 = charge_error(2.5e-4);
    v.require(e2 <= e1 / 2 && e3 <= e2 / 2 && e2 >= e1 / 2.2, "LIF error halves with dt");
    v.note("LIF errors " + fmt("%.3g", e1) + " " + fmt("%.3g", e2) + " " + fmt("%.3g", e3));

    // IF at constant current 0.2 with dt 1: spikes at steps 5, 10, 15, ... exactly.
    NeuronParams ifp;
    NeuronState s;
    bool exact = true;
    for (int k = 1; k <= 100; ++k) {
        const auto r = step_if(s, ifp, 0.2, 1.0);
        s = r.state;
        exact = exact && r.spiked == (k % 5 == 0);
    }
    v.require(exact, "IF spike times");

    NeuronParams th;
    th.model = NeuronModel::LIF;
    th.capacitance = 0.8;
    th.resistance = 2.5;
    auto fires = [&](double current) {
        NeuronState st;
        for (int k = 0; k < 200000; ++k) {
            const auto r = step(st, th, current, 1e-3);
            if (r.spiked) return true;
            st = r.state;
        }
        return false;
    };
    const double ith = th.threshold_current();
    v.require(fires(1.001 * ith) && !fires(0.999 * ith), "threshold law at +-0.1%");
    return v;
}

Verdict gradient_oracles() {
    Verdict v;
    const std::vector<std::pair<LayerSpec, Shape>> cases{
        {LayerSpec::conv2d(2, 3, 3, 1), {2, 2, 6, 6}},
        {LayerSpec::conv2d(2, 2, 3, 0, 2), {2, 2, 7, 7}},
        {LayerSpec::dense(7, 4), {3, 7}},
        {LayerSpec::batch_norm(3), {4, 3, 2, 2}},
        {LayerSpec::batch_norm(5), {6, 5}},
    };
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        for (const auto& [spec, shape] : cases) {
            std::mt19937_64 rng(seed);
            const auto params = testing::random_params(spec, rng);
            const auto x = testing::random_tensor(shape, rng);
            worst = std::max(worst, testing::gradient_check(spec, params, x, rng, Mode::Train));
        }
    v.require(worst < 1e-4, "relative error below 1e-4");
    v.note("worst relative error " + fmt("%.2e", worst) + " over 10 seeds x conv/dense/batch_norm");
    return v;
}

Verdict poisson_oracles() {
    Verdict v;
    const int T = 10000;
    double worst_sigma = 0;
    for (double p : {0.1, 0.5, 0.9}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            EncoderConfig c;
            c.lambda_max = 1000;
            c.horizon_steps = T;
            c.seed = seed;
            const std::vector<double> values(8, p);
            const auto ev = poisson_encode(values, c);
            std::vector<double> counts(values.size(), 0.0);
            for (const auto& e : ev.events()) counts[e.neuron] += 1;
            const double sd = std::sqrt(T * p * (1 - p));
            for (double n : counts) worst_sigma = std::max(worst_sigma, std::abs(n - T * p) / sd);
        }
    }
    v.require(worst_sigma <= 4.0, "counts within 4 sigma");
    v.note("largest deviation " + fmt("%.2f", worst_sigma) + " sigma");
    return v;
}

Verdict structural_oracles(const TrainedNetwork& trained, const LabeledDataset& calibration) {
    Verdict v;
    using K = LayerKind;
    auto spec_of = [](Shape in, std::vector<LayerSpec> layers) {
        NetworkSpec s;
        s.input_shape = std::move(in);
        s.layers = std::move(layers);
        return s;
    };
    const ConversionConfig cc;
    const auto a = prepare_for_conversion(
        spec_of({1, 4, 4}, {LayerSpec::conv2d(1, 2, 3, 1), LayerSpec::batch_norm(2), LayerSpec::relu(),
                            LayerSpec::max_pool(2), LayerSpec::flatten(), LayerSpec::dense(8, 10), LayerSpec::softmax()}),
        cc);
    v.require(topology(a.spec) == std::vector<K>{K::Conv2d, K::Dropout, K::AvgPool, K::Relu, K::Flatten, K::Dense, K::Softmax},
              "batch_norm->dropout, max->avg, reorder");
    const auto b = prepare_for_conversion(
        spec_of({1, 4, 4}, {LayerSpec::conv2d(1, 2, 3, 1), LayerSpec::batch_norm(2), LayerSpec::max_pool(2),
                            LayerSpec::flatten(), LayerSpec::dense(8, 10), LayerSpec::softmax()}),
        cc);
    v.require(topology(b.spec) == std::vector<K>{K::Conv2d, K::AvgPool, K::Flatten, K::Dense, K::Softmax},
              "batch_norm deletion before pooling");
    const auto c = prepare_for_conversion(a.spec, cc);
    v.require(c.spec == a.spec && c.substitutions.empty(), "compliant spec unchanged");

    // Folding a random conv batch_norm.
    std::mt19937_64 rng(7);
    TrainedNetwork bn;
    bn.spec = spec_of({2, 6, 6}, {LayerSpec::conv2d(2, 3, 3, 1), LayerSpec::batch_norm(3), LayerSpec::relu(),
                                  LayerSpec::flatten(), LayerSpec::dense(108, 10), LayerSpec::softmax()});
    for (const auto& l : bn.spec.layers) bn.params.push_back(testing::random_params(l, rng));
    bn.params[1].running_var = testing::random_tensor({3}, rng, 0.2, 3.0);
    const auto folded = fold_batch_norm(bn);
    const auto x = testing::random_tensor({100, 2, 6, 6}, rng, 0.0, 1.0);
    Tensor before, after;
    forward_inspect(bn, x, [&](std::size_t l, const Tensor& in) { if (l == 5) before = in; });
    forward_inspect(folded, x, [&](std::size_t l, const Tensor& in) { if (l == 4) after = in; });
    double worst = 0;
    for (std::size_t i = 0; i < before.size(); ++i) worst = std::max(worst, std::abs(before[i] - after[i]));
    v.require(worst <= 1e-6, "fold_batch_norm deviation");
    v.note("fold deviation " + fmt("%.2e", worst));

    const auto compliant = apply_structural_rules(fold_batch_norm(trained), cc);
    const auto normalized = normalize_weights(compliant, calibration, cc);
    const auto p0 = predict(compliant, calibration), p1 = predict(normalized.net, calibration);
    std::size_t flips = 0;
    for (std::size_t i = 0; i < p0.size(); ++i) flips += p0[i] != p1[i];
    v.require(flips == 0, "argmax invariance");
    v.note(std::to_string(flips) + " argmax flips on " + std::to_string(calibration.size()) + " calibration images");
    return v;
}

Verdict dvs_oracles() {
    Verdict v;
    const auto digit = normalize(testing::mnist_test().image(0));
    EncoderConfig c;
    c.scheme = EncoderScheme::Dvs;
    SaccadeConfig sac;
    c.horizon_steps = sac.motion_steps() + 1;
    SaccadeConfig still = sac;
    still.path = {{0, 0}, {0, 0}};
    v.require(dvs_emulate(digit, 28, 28, still, c).empty(), "static scene");
    const std::vector<double> flat(784, 0.4);
    v.require(dvs_emulate(flat, 28, 28, sac, c).empty(), "uniform image");

    const auto base = dvs_emulate(digit, 28, 28, sac, c);
    bool invariant = !base.empty();
    for (double g : {1.5, 2.0, 8.0}) {
        std::vector<double> scaled(digit.size());
        for (std::size_t i = 0; i < digit.size(); ++i) scaled[i] = g * (digit[i] + sac.log_epsilon) - sac.log_epsilon;
        invariant = invariant && dvs_emulate(scaled, 28, 28, sac, c) == base;
    }
    v.require(invariant, "gain invariance");

    std::vector<double> strip(8, 0.0);
    strip[1] = 1.0;
    SaccadeConfig right;
    right.path = {{0, 0}, {4, 0}};
    right.steps_per_segment = 4;
    EncoderConfig sc;
    sc.scheme = EncoderScheme::Dvs;
    sc.horizon_steps = 6;
    const auto ev = dvs_emulate(strip, 1, 8, right, sc);
    const std::vector<SpikeEvent> expected{
        {1, 1, Polarity::Off}, {1, 2, Polarity::On}, {2, 2, Polarity::Off}, {2, 3, Polarity::On},
        {3, 3, Polarity::Off}, {3, 4, Polarity::On}, {4, 4, Polarity::Off}, {4, 5, Polarity::On},
    };
    v.require(std::vector<SpikeEvent>(ev.events().begin(), ev.events().end()) == expected, "single-pixel trajectory");
    v.note(std::to_string(base.size()) + " events for test image 0");
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main() {
    const RunConfig cfg;
    const auto& train_set = testing::mnist_train();
    const auto& test_set = testing::mnist_test();

    report(4, guarded(neuron_oracles));
    report(5, guarded(gradient_oracles));
    report(6, guarded(poisson_oracles));
    report(9, guarded(dvs_oracles));

    // 1. Train the default configuration on the full training set.
    TrainedNetwork trained;
    Verdict c1 = guarded([&] {
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        const auto spec = prepare_for_conversion(build_vgg_mini(cfg.model), cfg.conversion).spec;
        trained = train(spec, train_set, cfg.train);
        const double secs = seconds_since(t0);
        const double acc = evaluate(trained, test_set);
        v.require(acc >= 0.975, "accuracy >= 97.5%");
        v.require(cfg.train.epochs <= 5, "at most 5 epochs");
        v.require(secs <= 900, "training within 15 minutes");
        v.note("test accuracy " + fmt("%.4f", acc) + " after " + std::to_string(cfg.train.epochs) + " epochs in " +
               fmt("%.0f", secs) + " s");
        return v;
    });
    report(1, c1);
    if (trained.params.empty()) {
        for (int id : {7, 2, 3, 8, 10}) report(id, {false, "no trained network"});
        return 1;
    }

    report(7, guarded([&] { return structural_oracles(trained, train_set.slice(0, 100)); }));

    const auto subset = test_set.slice(0, 1000);
    ConversionResult converted;
    DatasetRun at300, at250;
    double ann_subset = 0;
    report(2, guarded([&] {
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        converted = convert(trained, train_set, cfg.conversion);
        at300 = simulate_dataset(converted.network, subset, make_sim_config(300, 200, cfg.sim.seed));
        const double secs = seconds_since(t0);
        ann_subset = evaluate(trained, subset);
        const double gap = 100 * (ann_subset - at300.accuracy);
        v.require(gap <= 2.5, "within 2.5 points of the ANN");
        v.require(secs <= 600, "within 10 minutes");
        v.note("ANN " + fmt("%.4f", ann_subset) + ", SNN " + fmt("%.4f", at300.accuracy) + " at 300 Hz, T=200 (gap " +
               fmt("%.2f", gap) + " points) in " + fmt("%.0f", secs) + " s");
        return v;
    }));

    report(3, guarded([&] {
        Verdict v;
        if (converted.network.layers.empty()) return Verdict{false, "no converted network"};
        at250 = simulate_dataset(converted.network, subset, make_sim_config(250, 200, cfg.sim.seed));
        const double gap = 100 * (at300.accuracy - at250.accuracy);
        v.require(at250.accuracy < at300.accuracy, "accuracy(250) < accuracy(300)");
        v.require(gap >= 1.0, "gap >= 1 point");
        v.note("250 Hz " + fmt("%.4f", at250.accuracy) + " vs 300 Hz " + fmt("%.4f", at300.accuracy) + " at T=200 (gap " +
               fmt("%.2f", gap) + " points)");
        const auto shorter = simulate_dataset(converted.network, subset, make_sim_config(250, 100, cfg.sim.seed));
        const auto shorter300 = simulate_dataset(converted.network, subset, make_sim_config(300, 100, cfg.sim.seed));
        v.note("at T=100: " + fmt("%.4f", shorter.accuracy) + " vs " + fmt("%.4f", shorter300.accuracy));
        return v;
    }));

    report(8, guarded([&] {
        Verdict v;
        const auto& curve = at300.accuracy_curve;
        if (curve.size() != 201) return Verdict{false, "no accuracy curve"};
        const double half = curve[100], early = curve[25], final_acc = curve[200];
        v.require(std::abs(final_acc - half) <= 0.01, "within 1 point by T/2");
        v.require(early > 0.20, "above 20% by step 25");
        v.note("accuracy " + fmt("%.4f", early) + " at step 25, " + fmt("%.4f", half) + " at T/2, " +
               fmt("%.4f", final_acc) + " at T");
        return v;
    }));

    report(10, guarded([&] {
        Verdict v;
        if (converted.network.layers.empty()) return Verdict{false, "no converted network"};
        const auto root = fs::temp_directory_path() / "snnconv_acceptance";
        fs::remove_all(root);
        fs::create_directories(root);
        const auto spiking = root / "spiking.snnspk";
        save_spiking(converted.network, spiking);
        std::vector<std::string> csvs;
        for (const char* threads : {"1", "2", "1"}) {
            const auto out = root / (std::string("sweep_") + threads + "_" + std::to_string(csvs.size()));
            std::ostringstream o, e;
            const int code = run_cli({"snnconv", "sweep", "--spiking", spiking.string(), "--out", out.string(),
                                      "--threads", threads, "--set", "data.dir=" + testing::mnist_dir().string()},
                                     o, e);
            if (code != kExitOk) return Verdict{false, "sweep exited with " + std::to_string(code) + ": " + e.str()};
            csvs.push_back(slurp(out / "sweep.csv") + slurp(out / "accuracy_curves.csv"));
        }
        v.require(csvs[0] == csvs[1] && csvs[1] == csvs[2], "byte-identical CSVs");
        v.note("3 sweeps (threads 1, 2, 1), " + std::to_string(csvs[0].size()) + " bytes each");
        fs::remove_all(root);
        return v;
    }));

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
