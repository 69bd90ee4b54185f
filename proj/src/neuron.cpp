#include "snnconv/neuron.hpp"

#include <cmath>
#include <string>

#include "snnconv/error.hpp"

namespace snn {

std::string_view to_string(NeuronModel model) noexcept { return model == NeuronModel::IF ? "if" : "lif"; }

std::string_view to_string(ResetMode mode) noexcept {
    return mode == ResetMode::ToResetValue ? "to_reset_value" : "subtract_threshold";
}

NeuronModel neuron_model_from_string(std::string_view name) {
    if (name == "if") return NeuronModel::IF;
    if (name == "lif") return NeuronModel::LIF;
    throw Error(ErrorKind::InvalidArgument, "unknown neuron model '" + std::string(name) + "'");
}

ResetMode reset_mode_from_string(std::string_view name) {
    if (name == "to_reset_value") return ResetMode::ToResetValue;
    if (name == "subtract_threshold") return ResetMode::SubtractThreshold;
    throw Error(ErrorKind::InvalidArgument, "unknown reset mode '" + std::string(name) + "'");
}

double NeuronParams::threshold_current() const noexcept {
    return std::isinf(resistance) ? 0.0 : v_threshold / resistance;
}

void validate(const NeuronParams& p) {
    auto fail = [](const char* what) { throw Error(ErrorKind::InvalidArgument, what); };
    if (!(p.capacitance > 0.0) || !std::isfinite(p.capacitance)) fail("C_m must be positive and finite");
    if (!(p.resistance > 0.0)) fail("R_m must be positive (or infinite)");
    if (!std::isfinite(p.v_threshold) || !std::isfinite(p.v_reset) || !(p.v_threshold > p.v_reset))
        fail("V_threshold must exceed V_reset");
    if (p.refractory_steps < 0) fail("refractory_steps must be non-negative");
    if (p.model == NeuronModel::LIF && std::isinf(p.resistance)) fail("a leaky neuron needs a finite R_m");
    if (p.v_min && !(*p.v_min <= p.v_reset)) fail("V_min must not exceed V_reset");
}

namespace {

inline StepResult fire_or_hold(NeuronState s, const NeuronParams& p) {
    if (p.v_min && s.v < *p.v_min) s.v = *p.v_min;
    if (s.v >= p.v_threshold) {
        s.v = p.reset_mode == ResetMode::ToResetValue ? p.v_reset : s.v - p.v_threshold;
        s.refractory_remaining = p.refractory_steps;
        return {s, true};
    }
    return {s, false};
}

}  // namespace

StepResult step_if(NeuronState s, const NeuronParams& p, double current, double dt) {
    if (s.refractory_remaining > 0) {
        --s.refractory_remaining;
        return {s, false};
    }
    s.v += current * dt / p.capacitance;
    return fire_or_hold(s, p);
}

StepResult step_lif(NeuronState s, const NeuronParams& p, double current, double dt) {
    const double tau = p.capacitance * p.resistance;
    if (!(dt < tau))
        throw Error(ErrorKind::UnstableTimestep,
                    "dt = " + std::to_string(dt) + " is not below C_m R_m = " + std::to_string(tau));
    if (s.refractory_remaining > 0) {
        --s.refractory_remaining;
        return {s, false};
    }
    s.v += (dt / tau) * (p.resistance * current - s.v);
    return fire_or_hold(s, p);
}

StepResult step(NeuronState s, const NeuronParams& p, double current, double dt) {
    return p.model == NeuronModel::IF ? step_if(s, p, current, dt) : step_lif(s, p, current, dt);
}

void step_layer(std::span<NeuronState> states, const NeuronParams& p, std::span<const double> currents, double dt,
                std::vector<std::uint32_t>& spikes) {
    if (states.size() != currents.size())
        throw Error(ErrorKind::LengthMismatch, std::to_string(states.size()) + " neurons but " +
                                                   std::to_string(currents.size()) + " currents");
    if (p.model == NeuronModel::LIF) {
        const double tau = p.capacitance * p.resistance;
        if (!(dt < tau)) throw Error(ErrorKind::UnstableTimestep, "dt is not below C_m R_m");
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto r = p.model == NeuronModel::IF ? step_if(states[i], p, currents[i], dt)
                                                  : step_lif(states[i], p, currents[i], dt);
        states[i] = r.state;
        if (r.spiked) spikes.push_back(static_cast<std::uint32_t>(i));
    }
}

std::vector<std::uint32_t> step_layer(std::span<NeuronState> states, const NeuronParams& p,
                                      std::span<const double> currents, double dt) {
    std::vector<std::uint32_t> spikes;
    step_layer(states, p, currents, dt, spikes);
    return spikes;
}

}  // namespace snn
