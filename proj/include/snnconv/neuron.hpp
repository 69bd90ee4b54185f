#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace snn {

enum class NeuronModel { IF, LIF };
enum class ResetMode { ToResetValue, SubtractThreshold };

std::string_view to_string(NeuronModel model) noexcept;
std::string_view to_string(ResetMode mode) noexcept;
NeuronModel neuron_model_from_string(std::string_view name);
ResetMode reset_mode_from_string(std::string_view name);

/// Membrane constants. An infinite resistance makes the neuron non-leaky.
struct NeuronParams {
    double capacitance = 1.0;
    double resistance = std::numeric_limits<double>::infinity();
    double v_threshold = 1.0;
    double v_reset = 0.0;
    int refractory_steps = 0;
    ResetMode reset_mode = ResetMode::ToResetValue;
    NeuronModel model = NeuronModel::IF;
    std::optional<double> v_min;  // optional floor on the membrane potential

    /// I_threshold = V_threshold / R_m; zero for a non-leaky neuron.
    double threshold_current() const noexcept;

    friend bool operator==(const NeuronParams&, const NeuronParams&) = default;
};

/// Throws InvalidArgument when the constants violate their invariants.
void validate(const NeuronParams& params);

struct NeuronState {
    double v = 0.0;
    int refractory_remaining = 0;

    friend bool operator==(const NeuronState&, const NeuronState&) = default;
};

struct StepResult {
    NeuronState state;
    bool spiked = false;
};

/// Non-leaky integration: V += I dt / C_m.
StepResult step_if(NeuronState state, const NeuronParams& params, double current, double dt);

/// Forward-Euler leaky integration: V += dt/(C_m R_m) (R_m I - V). Throws UnstableTimestep
/// unless dt < C_m R_m.
StepResult step_lif(NeuronState state, const NeuronParams& params, double current, double dt);

/// Dispatches on params.model.
StepResult step(NeuronState state, const NeuronParams& params, double current, double dt);

/// Steps every neuron in place. Appends indices of spiking neurons, ascending, to `spikes`.
/// Throws LengthMismatch.
void step_layer(std::span<NeuronState> states, const NeuronParams& params, std::span<const double> currents,
                double dt, std::vector<std::uint32_t>& spikes);

std::vector<std::uint32_t> step_layer(std::span<NeuronState> states, const NeuronParams& params,
                                      std::span<const double> currents, double dt);

}  // namespace snn
