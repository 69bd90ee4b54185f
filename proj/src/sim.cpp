#include "snnconv/sim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "snnconv/container.hpp"
#include "snnconv/event_io.hpp"
#include "snnconv/parallel.hpp"
#include "snnconv/random.hpp"

namespace snn {

SimConfig make_sim_config(double lambda_max, int horizon_steps, std::uint64_t seed, double dt) {
    SimConfig cfg;
    cfg.dt = dt;
    cfg.horizon_steps = horizon_steps;
    cfg.seed = seed;
    cfg.encoder.lambda_max = lambda_max;
    cfg.encoder.dt = dt;
    cfg.encoder.horizon_steps = horizon_steps;
    cfg.encoder.seed = seed;
    return cfg;
}

void validate(const SimConfig& cfg) {
    if (cfg.horizon_steps < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be at least one step");
    if (!(cfg.dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
    if (cfg.encoder.dt != cfg.dt) throw Error(ErrorKind::InvalidArgument, "encoder dt differs from simulation dt");
    if (cfg.encoder.horizon_steps != cfg.horizon_steps)
        throw Error(ErrorKind::HorizonMismatch, "encoder horizon differs from simulation horizon");
    validate(cfg.encoder);
}

std::vector<std::uint64_t> SimResult::cumulative_counts(int up_to_step) const {
    std::vector<std::uint64_t> counts(class_count, 0);
    const int stop = std::clamp(up_to_step, 0, horizon_steps);
    for (int t = 0; t < stop; ++t)
        for (std::size_t c = 0; c < class_count; ++c) counts[c] += step_counts[static_cast<std::size_t>(t) * class_count + c];
    return counts;
}

int SimResult::label_at(int up_to_step) const { return argmax_label(cumulative_counts(up_to_step)); }

SimResult run(const SpikingNetwork& net, const SpikeEvents& input, const SimConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    validate(cfg);
    if (input.horizon_steps() != cfg.horizon_steps)
        throw Error(ErrorKind::HorizonMismatch, "input horizon " + std::to_string(input.horizon_steps()) +
                                                    " != simulation horizon " + std::to_string(cfg.horizon_steps));
    const std::size_t input_size = net.input_size();
    for (const auto& e : input.events())
        if (e.neuron >= input_size)
            throw Error(ErrorKind::ShapeMismatch, "input neuron " + std::to_string(e.neuron) + " outside input width " +
                                                      std::to_string(input_size));
    if (net.layers.empty()) throw Error(ErrorKind::ShapeMismatch, "spiking network has no layers");
    for (int layer : cfg.record_rasters)
        if (layer < 0 || layer > static_cast<int>(net.layers.size()))
            throw Error(ErrorKind::InvalidArgument, "cannot record layer " + std::to_string(layer));

    const std::size_t depth = net.layers.size();
    const std::size_t classes = net.class_count;
    const double bias_gain = cfg.encoder.lambda_max * cfg.dt;
    const double inv_dt = 1.0 / cfg.dt;

    SimResult result;
    result.class_count = classes;
    result.horizon_steps = cfg.horizon_steps;
    result.step_counts.assign(static_cast<std::size_t>(cfg.horizon_steps) * classes, 0);
    result.layer_spikes.assign(depth, 0);

    std::vector<std::vector<NeuronState>> states(depth);
    std::vector<std::vector<double>> charge(depth), currents(depth);
    std::vector<std::vector<std::uint32_t>> previous(depth), emitted(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        states[l].assign(net.layers[l].size(), NeuronState{});
        charge[l].resize(net.layers[l].size());
        currents[l].resize(net.layers[l].size());
    }
    std::map<int, std::vector<SpikeEvent>> recorded;
    for (int layer : cfg.record_rasters) recorded[layer];

    const auto events = input.events();
    std::size_t cursor = 0;
    for (int t = 0; t < cfg.horizon_steps; ++t) {
        for (std::size_t l = 0; l < depth; ++l) {
            const auto& layer = net.layers[l];
            const auto& syn = layer.synapses;
            auto& q = charge[l];
            for (std::size_t n = 0; n < q.size(); ++n) q[n] = layer.bias[n] * bias_gain;
            if (l == 0) {
                for (; cursor < events.size() && events[cursor].t == t; ++cursor) {
                    const auto& e = events[cursor];
                    if (e.polarity == Polarity::Off && cfg.on_only) continue;
                    const double sign = e.polarity == Polarity::Off ? -1.0 : 1.0;
                    ++result.input_spikes;
                    for (auto k = syn.offsets[e.neuron]; k < syn.offsets[e.neuron + 1]; ++k)
                        q[syn.targets[k]] += sign * syn.weights[k];
                    if (auto it = recorded.find(0); it != recorded.end()) it->second.push_back(e);
                }
            } else {
                for (auto j : previous[l - 1])
                    for (auto k = syn.offsets[j]; k < syn.offsets[j + 1]; ++k) q[syn.targets[k]] += syn.weights[k];
            }
            auto& current = currents[l];
            for (std::size_t n = 0; n < q.size(); ++n) current[n] = q[n] * inv_dt;
            emitted[l].clear();
            step_layer(states[l], layer.neuron, current, cfg.dt, emitted[l]);
        }
        for (std::size_t l = 0; l < depth; ++l) {
            result.layer_spikes[l] += emitted[l].size();
            if (auto it = recorded.find(static_cast<int>(l) + 1); it != recorded.end())
                for (auto n : emitted[l]) it->second.push_back({t, n, Polarity::None});
            std::swap(previous[l], emitted[l]);
        }
        for (auto n : previous[depth - 1]) ++result.step_counts[static_cast<std::size_t>(t) * classes + n];
        if (result.first_output_step < 0 && !previous[depth - 1].empty()) result.first_output_step = t;
    }

    result.total_spikes = result.input_spikes;
    for (auto s : result.layer_spikes) result.total_spikes += s;
    for (auto& [layer, list] : recorded)
        result.rasters.emplace(layer, SpikeEvents(std::move(list), cfg.horizon_steps, cfg.dt));
    result.predicted_label = result.label_at(cfg.horizon_steps);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

Classification classify(const SpikingNetwork& net, std::span<const double> image, const SimConfig& cfg) {
    if (image.size() != net.input_size())
        throw Error(ErrorKind::ShapeMismatch, "image has " + std::to_string(image.size()) + " pixels, network expects " +
                                                  std::to_string(net.input_size()));
    const auto rows = net.input_shape.size() == 3 ? net.input_shape[1] : 1;
    const auto cols = net.input_shape.size() == 3 ? net.input_shape[2] : image.size();
    const auto events = encode(image, rows, cols, cfg.encoder, cfg.saccade);
    Classification out;
    out.result = run(net, events, cfg);
    out.label = out.result.predicted_label;
    const auto counts = out.result.cumulative_counts(cfg.horizon_steps);
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    out.confidence.assign(counts.size(), 0.0);
    if (total > 0)
        for (std::size_t i = 0; i < counts.size(); ++i)
            out.confidence[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    return out;
}

DatasetRun simulate_dataset(const SpikingNetwork& net, const LabeledDataset& data, const SimConfig& cfg) {
    validate(cfg);
    if (data.empty()) throw Error(ErrorKind::EmptyDataset, "no images to simulate");
    const int horizon = cfg.horizon_steps;
    const std::size_t n = data.size();
    std::vector<std::vector<int>> labels(n);  // per image: label read at t = 0..T
    std::vector<std::uint64_t> spikes(n);
    std::vector<int> latency(n);

    parallel_for(n, cfg.threads, [&](std::size_t i) {
        SimConfig local = cfg;
        local.record_rasters.clear();
        local.encoder.seed = derive_seed(cfg.seed, i);
        const auto image = normalize(data.image(i));
        const auto c = classify(net, image, local);
        std::vector<std::uint64_t> counts(net.class_count, 0);
        labels[i].resize(static_cast<std::size_t>(horizon) + 1);
        labels[i][0] = argmax_label(counts);
        for (int t = 0; t < horizon; ++t) {
            for (std::size_t k = 0; k < counts.size(); ++k)
                counts[k] += c.result.step_counts[static_cast<std::size_t>(t) * net.class_count + k];
            labels[i][static_cast<std::size_t>(t) + 1] = argmax_label(counts);
        }
        spikes[i] = c.result.total_spikes;
        latency[i] = c.result.first_output_step < 0 ? horizon : c.result.first_output_step;
    });

    DatasetRun run_summary;
    run_summary.accuracy_curve.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
    double spike_sum = 0.0, latency_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t <= static_cast<std::size_t>(horizon); ++t)
            run_summary.accuracy_curve[t] += labels[i][t] == data.label(i);
        spike_sum += static_cast<double>(spikes[i]);
        latency_sum += latency[i];
        run_summary.labels.push_back(labels[i].back());
    }
    for (auto& a : run_summary.accuracy_curve) a /= static_cast<double>(n);
    run_summary.accuracy = run_summary.accuracy_curve.back();
    run_summary.mean_spikes = spike_sum / static_cast<double>(n);
    run_summary.mean_latency_steps = latency_sum / static_cast<double>(n);
    return run_summary;
}

std::vector<double> accuracy_curve(const SpikingNetwork& net, const LabeledDataset& data, const SimConfig& cfg) {
    return simulate_dataset(net, data, cfg).accuracy_curve;
}

RateSweepResult rate_sweep(const SpikingNetwork& net, const LabeledDataset& data, std::span<const double> rates,
                           const SimConfig& cfg) {
    if (rates.empty()) throw Error(ErrorKind::InvalidArgument, "rate sweep needs at least one rate");
    for (std::size_t i = 0; i < rates.size(); ++i) {
        if (!(rates[i] >= 0.0)) throw Error(ErrorKind::InvalidArgument, "rates must be non-negative");
        if (rates[i] * cfg.dt > 1.0 + 1e-12)
            throw Error(ErrorKind::RateOverflow, "rate " + std::to_string(rates[i]) + " Hz exceeds one spike per step");
        if (i > 0 && !(rates[i] > rates[i - 1])) throw Error(ErrorKind::InvalidArgument, "rates must strictly increase");
    }
    RateSweepResult sweep;
    for (double rate : rates) {
        SimConfig local = cfg;
        local.encoder.lambda_max = rate;
        const auto r = simulate_dataset(net, data, local);
        sweep.points.push_back({rate, r.accuracy, r.mean_spikes, r.mean_latency_steps, r.accuracy_curve});
    }
    return sweep;
}

namespace {

std::string g6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string sweep_to_csv(const RateSweepResult& sweep) {
    std::string out = "rate_hz,accuracy,mean_spikes,mean_latency_steps\n";
    for (const auto& p : sweep.points)
        out += g6(p.rate_hz) + "," + g6(p.accuracy) + "," + g6(p.mean_spikes) + "," + g6(p.mean_latency_steps) + "\n";
    return out;
}

std::string curves_to_csv(const RateSweepResult& sweep) {
    std::string out = "rate_hz,step,accuracy\n";
    for (const auto& p : sweep.points)
        for (std::size_t t = 0; t < p.accuracy_curve.size(); ++t)
            out += g6(p.rate_hz) + "," + std::to_string(t) + "," + g6(p.accuracy_curve[t]) + "\n";
    return out;
}

std::string raster_csv(const SimResult& result, int layer) {
    const auto it = result.rasters.find(layer);
    if (it == result.rasters.end())
        throw Error(ErrorKind::LayerNotRecorded, "layer " + std::to_string(layer) + " was not recorded");
    return events_to_csv(it->second);
}

void export_raster(const SimResult& result, int layer, const std::filesystem::path& path) {
    write_text(path, raster_csv(result, layer));
}

}  // namespace snn
