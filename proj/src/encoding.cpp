#include "snnconv/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "snnconv/error.hpp"
#include "snnconv/random.hpp"

namespace snn {

SpikeEvents::SpikeEvents(std::vector<SpikeEvent> events, int horizon_steps, double dt)
    : events_(std::move(events)), horizon_steps_(horizon_steps), dt_(dt) {
    if (horizon_steps_ <= 0) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
    if (!(dt_ > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
    for (std::size_t i = 0; i < events_.size(); ++i) {
        const auto& e = events_[i];
        if (e.t < 0 || e.t >= horizon_steps_)
            throw Error(ErrorKind::InvalidArgument,
                        "event timestep " + std::to_string(e.t) + " outside [0," + std::to_string(horizon_steps_) + ")");
        if (i > 0) {
            if (events_[i - 1] == e) throw Error(ErrorKind::InvalidArgument, "duplicate event");
            if (e < events_[i - 1]) throw Error(ErrorKind::InvalidArgument, "events not sorted by (t, neuron)");
        }
    }
}

SpikeEvents SpikeEvents::from_unsorted(std::vector<SpikeEvent> events, int horizon_steps, double dt) {
    std::sort(events.begin(), events.end());
    return SpikeEvents(std::move(events), horizon_steps, dt);
}

std::string_view to_string(EncoderScheme scheme) noexcept {
    switch (scheme) {
        case EncoderScheme::Poisson: return "poisson";
        case EncoderScheme::Ttfs: return "ttfs";
        case EncoderScheme::Dvs: return "dvs";
    }
    return "unknown";
}

EncoderScheme encoder_scheme_from_string(std::string_view name) {
    for (auto s : {EncoderScheme::Poisson, EncoderScheme::Ttfs, EncoderScheme::Dvs})
        if (to_string(s) == name) return s;
    throw Error(ErrorKind::InvalidArgument, "unknown encoder scheme '" + std::string(name) + "'");
}

void validate(const EncoderConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "encoder dt must be positive");
    if (cfg.horizon_steps <= 0) throw Error(ErrorKind::InvalidArgument, "encoder horizon must be positive");
    if (!(cfg.lambda_max >= 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda_max must be non-negative");
    if (cfg.lambda_max * cfg.dt > 1.0 + 1e-12)
        throw Error(ErrorKind::RateOverflow, "lambda_max * dt = " + std::to_string(cfg.lambda_max * cfg.dt) +
                                                 " exceeds one spike per step");
}

int SaccadeConfig::motion_steps() const noexcept {
    return path.size() < 2 ? 0 : static_cast<int>(path.size() - 1) * steps_per_segment;
}

void validate(const SaccadeConfig& sac) {
    if (sac.path.size() < 2) throw Error(ErrorKind::InvalidArgument, "saccade path needs at least two waypoints");
    if (sac.steps_per_segment < 1) throw Error(ErrorKind::InvalidArgument, "steps_per_segment must be >= 1");
    if (!(sac.contrast_threshold > 0.0)) throw Error(ErrorKind::InvalidArgument, "contrast threshold must be > 0");
    if (!(sac.log_epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "log epsilon must be > 0");
    if (sac.canvas_padding < 0) throw Error(ErrorKind::InvalidArgument, "canvas padding must be >= 0");
    for (const auto& w : sac.path)
        if (!(std::abs(w.dx) <= sac.canvas_padding && std::abs(w.dy) <= sac.canvas_padding))
            throw Error(ErrorKind::PathOutOfBounds, "waypoint (" + std::to_string(w.dx) + "," + std::to_string(w.dy) +
                                                        ") leaves the padded canvas");
}

namespace {

void check_unit_interval(std::span<const double> values) {
    for (double v : values)
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidArgument, "encoder input outside [0,1]");
}

}  // namespace

SpikeEvents poisson_encode(std::span<const double> values, const EncoderConfig& cfg) {
    if (cfg.scheme != EncoderScheme::Poisson) throw Error(ErrorKind::InvalidArgument, "config is not a Poisson encoder");
    if (!(cfg.dt > 0.0) || cfg.horizon_steps <= 0)
        throw Error(ErrorKind::InvalidArgument, "encoder needs dt > 0 and a positive horizon");
    check_unit_interval(values);
    std::vector<double> prob(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        prob[i] = values[i] * cfg.lambda_max * cfg.dt;
        if (prob[i] > 1.0 + 1e-12)
            throw Error(ErrorKind::RateOverflow, "spike probability " + std::to_string(prob[i]) + " exceeds 1");
    }
    // One uniform per (step, element) in a fixed order, so for a fixed seed every
    // element's spike count is monotone in its value.
    std::mt19937_64 rng(cfg.seed);
    std::vector<SpikeEvent> events;
    for (int t = 0; t < cfg.horizon_steps; ++t)
        for (std::size_t i = 0; i < prob.size(); ++i)
            if (uniform01(rng) < prob[i]) events.push_back({t, static_cast<std::uint32_t>(i), Polarity::None});
    return SpikeEvents(std::move(events), cfg.horizon_steps, cfg.dt);
}

SpikeEvents ttfs_encode(std::span<const double> values, const EncoderConfig& cfg) {
    if (cfg.scheme != EncoderScheme::Ttfs) throw Error(ErrorKind::InvalidArgument, "config is not a TTFS encoder");
    if (!(cfg.dt > 0.0) || cfg.horizon_steps <= 0)
        throw Error(ErrorKind::InvalidArgument, "encoder needs dt > 0 and a positive horizon");
    check_unit_interval(values);
    std::vector<SpikeEvent> events;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] == 0.0) continue;
        const auto t = static_cast<std::int32_t>(std::lround((1.0 - values[i]) * (cfg.horizon_steps - 1)));
        events.push_back({t, static_cast<std::uint32_t>(i), Polarity::None});
    }
    return SpikeEvents::from_unsorted(std::move(events), cfg.horizon_steps, cfg.dt);
}

namespace {

Displacement position_at(const SaccadeConfig& sac, int step) {
    const int last = sac.motion_steps();
    if (step >= last) return sac.path.back();
    const int segment = step / sac.steps_per_segment;
    const double frac = static_cast<double>(step % sac.steps_per_segment) / sac.steps_per_segment;
    const auto& a = sac.path[segment];
    const auto& b = sac.path[segment + 1];
    return {a.dx + (b.dx - a.dx) * frac, a.dy + (b.dy - a.dy) * frac};
}

// Log intensity seen by every sensor pixel when the image is displaced by d.
void sample_log_frame(std::span<const double> image, std::size_t rows, std::size_t cols, Displacement d,
                      double eps, std::vector<double>& out) {
    auto at = [&](long y, long x) {
        y = std::clamp<long>(y, 0, static_cast<long>(rows) - 1);
        x = std::clamp<long>(x, 0, static_cast<long>(cols) - 1);
        return image[static_cast<std::size_t>(y) * cols + static_cast<std::size_t>(x)];
    };
    for (std::size_t y = 0; y < rows; ++y)
        for (std::size_t x = 0; x < cols; ++x) {
            const double sy = static_cast<double>(y) - d.dy, sx = static_cast<double>(x) - d.dx;
            const double fy = std::floor(sy), fx = std::floor(sx);
            const double wy = sy - fy, wx = sx - fx;
            const long iy = static_cast<long>(fy), ix = static_cast<long>(fx);
            double v = at(iy, ix);
            if (wx != 0.0 || wy != 0.0)
                v = (1 - wy) * ((1 - wx) * at(iy, ix) + wx * at(iy, ix + 1)) +
                    wy * ((1 - wx) * at(iy + 1, ix) + wx * at(iy + 1, ix + 1));
            out[y * cols + x] = std::log(v + eps);
        }
}

}  // namespace

SpikeEvents dvs_emulate(std::span<const double> image, std::size_t rows, std::size_t cols, const SaccadeConfig& sac,
                        const EncoderConfig& cfg) {
    validate(sac);
    if (!(cfg.dt > 0.0) || cfg.horizon_steps <= 0)
        throw Error(ErrorKind::InvalidArgument, "encoder needs dt > 0 and a positive horizon");
    if (rows == 0 || cols == 0 || image.size() != rows * cols)
        throw Error(ErrorKind::ShapeMismatch, "image buffer does not match rows x cols");
    for (double v : image)
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "intensities must be >= 0");

    std::vector<double> reference(rows * cols), level(rows * cols);
    sample_log_frame(image, rows, cols, position_at(sac, 0), sac.log_epsilon, reference);
    std::vector<SpikeEvent> events;
    for (int t = 1; t < cfg.horizon_steps; ++t) {
        sample_log_frame(image, rows, cols, position_at(sac, t), sac.log_epsilon, level);
        for (std::size_t i = 0; i < level.size(); ++i) {
            const double delta = level[i] - reference[i];
            if (delta >= sac.contrast_threshold) {
                events.push_back({t, static_cast<std::uint32_t>(i), Polarity::On});
                reference[i] = level[i];
            } else if (-delta >= sac.contrast_threshold) {
                events.push_back({t, static_cast<std::uint32_t>(i), Polarity::Off});
                reference[i] = level[i];
            }
        }
    }
    return SpikeEvents(std::move(events), cfg.horizon_steps, cfg.dt);
}

SpikeEvents encode(std::span<const double> values, std::size_t rows, std::size_t cols, const EncoderConfig& cfg,
                   const SaccadeConfig& sac) {
    switch (cfg.scheme) {
        case EncoderScheme::Poisson: return poisson_encode(values, cfg);
        case EncoderScheme::Ttfs: return ttfs_encode(values, cfg);
        case EncoderScheme::Dvs: return dvs_emulate(values, rows, cols, sac, cfg);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown encoder scheme");
}

int argmax_label(std::span<const std::uint64_t> counts) {
    int best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

DecodedOutput decode_counts(const SpikeEvents& output, std::size_t class_count, int up_to_step) {
    if (class_count == 0) throw Error(ErrorKind::InvalidArgument, "class count must be positive");
    if (up_to_step < 0 || up_to_step > output.horizon_steps())
        throw Error(ErrorKind::InvalidArgument, "readout step outside [0, horizon]");
    DecodedOutput out;
    out.counts.assign(class_count, 0);
    for (const auto& e : output.events()) {
        if (e.t >= up_to_step) break;
        if (e.neuron >= class_count)
            throw Error(ErrorKind::InvalidArgument, "output neuron " + std::to_string(e.neuron) + " is not a class");
        ++out.counts[e.neuron];
    }
    std::uint64_t total = 0;
    for (auto c : out.counts) total += c;
    out.confidence.assign(class_count, 0.0);
    if (total > 0)
        for (std::size_t i = 0; i < class_count; ++i)
            out.confidence[i] = static_cast<double>(out.counts[i]) / static_cast<double>(total);
    out.label = argmax_label(out.counts);
    return out;
}

}  // namespace snn
