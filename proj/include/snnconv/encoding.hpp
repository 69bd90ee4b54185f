#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace snn {

enum class Polarity : std::int8_t { Off = -1, None = 0, On = 1 };

struct SpikeEvent {
    std::int32_t t = 0;
    std::uint32_t neuron = 0;
    Polarity polarity = Polarity::None;

    friend bool operator==(const SpikeEvent&, const SpikeEvent&) = default;
    friend auto operator<=>(const SpikeEvent&, const SpikeEvent&) = default;
};

/// Time-ordered event list over a horizon of `horizon_steps` steps of `dt` seconds.
/// The constructor enforces: t in [0, horizon), sorted by (t, neuron, polarity), no duplicates.
class SpikeEvents {
public:
    SpikeEvents() = default;
    SpikeEvents(std::vector<SpikeEvent> events, int horizon_steps, double dt);

    /// Sorts before checking; duplicates are still rejected.
    static SpikeEvents from_unsorted(std::vector<SpikeEvent> events, int horizon_steps, double dt);

    std::span<const SpikeEvent> events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }
    bool empty() const noexcept { return events_.empty(); }
    int horizon_steps() const noexcept { return horizon_steps_; }
    double dt() const noexcept { return dt_; }

    friend bool operator==(const SpikeEvents&, const SpikeEvents&) = default;

private:
    std::vector<SpikeEvent> events_;
    int horizon_steps_ = 1;
    double dt_ = 1e-3;
};

enum class EncoderScheme { Poisson, Ttfs, Dvs };

std::string_view to_string(EncoderScheme scheme) noexcept;
EncoderScheme encoder_scheme_from_string(std::string_view name);

struct EncoderConfig {
    double lambda_max = 300.0;  // Hz
    double dt = 1e-3;           // seconds per step
    int horizon_steps = 100;
    std::uint64_t seed = 0;
    EncoderScheme scheme = EncoderScheme::Poisson;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

void validate(const EncoderConfig& cfg);

struct Displacement {
    double dx = 0.0;
    double dy = 0.0;

    friend bool operator==(const Displacement&, const Displacement&) = default;
};

/// Emulated sensor motion over a static image.
struct SaccadeConfig {
    std::vector<Displacement> path{{0, 0}, {2, 2}, {0, 4}, {0, 0}};
    int steps_per_segment = 10;
    double contrast_threshold = 0.2;
    double log_epsilon = 1e-3;
    int canvas_padding = 4;  // largest |dx| or |dy| the canvas admits

    /// Motion steps from the first to the last waypoint.
    int motion_steps() const noexcept;

    friend bool operator==(const SaccadeConfig&, const SaccadeConfig&) = default;
};

void validate(const SaccadeConfig& cfg);

/// Bernoulli-per-step rate code: each step, element i spikes with probability
/// values[i] * lambda_max * dt. Throws RateOverflow when that exceeds 1.
SpikeEvents poisson_encode(std::span<const double> values, const EncoderConfig& cfg);

/// One spike per nonzero element at step round((1 - v)(T - 1)); zero elements stay silent.
SpikeEvents ttfs_encode(std::span<const double> values, const EncoderConfig& cfg);

/// Translates a rows x cols intensity image along the saccade path (bilinear sampling,
/// edge-replicated canvas) and emits ON/OFF temporal-contrast events on log(v + eps).
/// The reference level of a pixel jumps to the current level when it fires.
SpikeEvents dvs_emulate(std::span<const double> image, std::size_t rows, std::size_t cols, const SaccadeConfig& sac,
                        const EncoderConfig& cfg);

/// Dispatch on cfg.scheme.
SpikeEvents encode(std::span<const double> values, std::size_t rows, std::size_t cols, const EncoderConfig& cfg,
                   const SaccadeConfig& sac = {});

struct DecodedOutput {
    std::vector<std::uint64_t> counts;
    std::vector<double> confidence;  // counts / total, all zero when silent
    int label = 0;                   // argmax, lowest index on ties
};

/// Counts spikes per output neuron with t < up_to_step.
DecodedOutput decode_counts(const SpikeEvents& output, std::size_t class_count, int up_to_step);

/// Label rule shared by every readout: argmax with the lowest index winning ties.
int argmax_label(std::span<const std::uint64_t> counts);

}  // namespace snn
