#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace snn {

/// Versioned binary container: 8-byte magic, u32 version, u32 zero, u64 header length,
/// a UTF-8 JSON header, then `payload_count` little-endian f64 values. The header must
/// record how the payload is sliced.
struct Container {
    std::uint32_t version = 1;
    nlohmann::json header;
    std::vector<double> payload;
};

std::vector<std::uint8_t> encode_container(std::string_view magic, const Container& container);
Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic,
                           std::uint32_t max_version = 1);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace snn
