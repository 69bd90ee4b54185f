#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "snnconv/dataset.hpp"
#include "snnconv/encoding.hpp"
#include "snnconv/spiking_network.hpp"

namespace snn {

struct SimConfig {
    double dt = 1e-3;
    int horizon_steps = 100;
    EncoderConfig encoder;  // encoder.dt and encoder.horizon_steps must equal dt and horizon_steps
    SaccadeConfig saccade;
    std::uint64_t seed = 0;
    std::set<int> record_rasters;  // 0 is the input population, l >= 1 the l-th spiking layer
    bool on_only = false;          // drop OFF events instead of delivering them as negative input
    unsigned threads = 1;
};

/// Config with a Poisson encoder at `lambda_max` Hz over `horizon_steps` steps of `dt`.
SimConfig make_sim_config(double lambda_max, int horizon_steps, std::uint64_t seed, double dt = 1e-3);

void validate(const SimConfig& cfg);

struct SimResult {
    std::size_t class_count = 0;
    int horizon_steps = 0;
    std::vector<std::uint32_t> step_counts;  // [t * class_count + c]: output spikes of class c at step t
    int predicted_label = 0;
    std::map<int, SpikeEvents> rasters;
    std::vector<std::uint64_t> layer_spikes;  // per spiking layer
    std::uint64_t input_spikes = 0;
    std::uint64_t total_spikes = 0;  // input plus every spiking layer
    int first_output_step = -1;      // -1 when the output never fires
    double wall_seconds = 0.0;

    /// Output spikes per class over steps [0, up_to_step).
    std::vector<std::uint64_t> cumulative_counts(int up_to_step) const;
    /// Label read out at `up_to_step` (argmax, lowest index on ties).
    int label_at(int up_to_step) const;
};

/// Clock-driven simulation. Input events at step t drive layer 1 at step t; spikes of layer l
/// at step t drive layer l+1 at step t+1. Biases inject bias * lambda_max * dt per step.
/// Throws ShapeMismatch, HorizonMismatch.
SimResult run(const SpikingNetwork& net, const SpikeEvents& input, const SimConfig& cfg);

struct Classification {
    int label = 0;
    std::vector<double> confidence;
    SimResult result;
};

/// Encodes a normalized image with cfg.encoder (its seed as given), runs, and decodes at T.
Classification classify(const SpikingNetwork& net, std::span<const double> image, const SimConfig& cfg);

/// Per-dataset simulation summary. Image i is encoded with seed derive_seed(cfg.seed, i).
struct DatasetRun {
    std::vector<double> accuracy_curve;  // entry t: accuracy reading counts of steps < t, t = 0..T
    double accuracy = 0.0;               // accuracy_curve[T]
    double mean_spikes = 0.0;            // input plus network spikes per image
    double mean_latency_steps = 0.0;     // first output spike step, T when silent
    std::vector<int> labels;             // final predictions
};

DatasetRun simulate_dataset(const SpikingNetwork& net, const LabeledDataset& data, const SimConfig& cfg);

/// Accuracy at every readout step 0..T from a single simulation pass per image.
std::vector<double> accuracy_curve(const SpikingNetwork& net, const LabeledDataset& data, const SimConfig& cfg);

struct RatePoint {
    double rate_hz = 0.0;
    double accuracy = 0.0;
    double mean_spikes = 0.0;
    double mean_latency_steps = 0.0;
    std::vector<double> accuracy_curve;
};

struct RateSweepResult {
    std::vector<RatePoint> points;
};

/// Classifies every image at each rate (strictly increasing). Throws RateOverflow.
RateSweepResult rate_sweep(const SpikingNetwork& net, const LabeledDataset& data, std::span<const double> rates,
                           const SimConfig& cfg);

/// `rate_hz,accuracy,mean_spikes,mean_latency_steps`, 6 significant digits.
std::string sweep_to_csv(const RateSweepResult& sweep);
/// `rate_hz,step,accuracy` for every rate and readout step.
std::string curves_to_csv(const RateSweepResult& sweep);

/// Event CSV of a recorded population. Throws LayerNotRecorded.
std::string raster_csv(const SimResult& result, int layer);
void export_raster(const SimResult& result, int layer, const std::filesystem::path& path);

}  // namespace snn
