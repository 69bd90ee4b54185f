#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snnconv/encoding.hpp"

namespace snn {

/// `t,neuron,polarity` header, one event per row, polarity in {1,-1,0}, '\n' endings.
std::string events_to_csv(const SpikeEvents& events);

/// Parses the CSV form; the horizon and dt are not stored in CSV and must be supplied.
SpikeEvents events_from_csv(std::string_view text, int horizon_steps, double dt);

/// Binary event file: magic "SNNEVT01", u32 version, u32 horizon, f64 dt, u64 count,
/// then 12-byte records {u32 t, u32 neuron, i8 polarity, 3 zero bytes}, little-endian.
std::vector<std::uint8_t> events_to_binary(const SpikeEvents& events);
SpikeEvents events_from_binary(std::span<const std::uint8_t> bytes);

}  // namespace snn
