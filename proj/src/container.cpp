#include "snnconv/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "snnconv/error.hpp"

namespace snn {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes.data() + at, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
}

}  // namespace

std::vector<std::uint8_t> encode_container(std::string_view magic, const Container& c) {
    if (magic.size() != 8) throw Error(ErrorKind::InvalidArgument, "container magic must be 8 bytes");
    auto header = c.header;
    header["payload_count"] = c.payload.size();
    const std::string text = header.dump();
    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    put_le<std::uint32_t>(out, c.version);
    put_le<std::uint32_t>(out, 0);
    put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.reserve(out.size() + 8 * c.payload.size());
    for (double v : c.payload) put_le<double>(out, v);
    return out;
}

Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic,
                           std::uint32_t max_version) {
    auto corrupt = [](const std::string& what) { throw Error(ErrorKind::CorruptFile, what); };
    if (bytes.size() < 24 || std::memcmp(bytes.data(), magic.data(), 8) != 0)
        corrupt("bad magic, expected '" + std::string(magic.substr(0, 7)) + "...'");
    Container c;
    c.version = get_le<std::uint32_t>(bytes, 8);
    if (c.version == 0 || c.version > max_version) corrupt("unsupported version " + std::to_string(c.version));
    const auto header_len = get_le<std::uint64_t>(bytes, 16);
    if (header_len > bytes.size() - 24) corrupt("header length exceeds file size");
    const char* text = reinterpret_cast<const char*>(bytes.data() + 24);
    try {
        c.header = nlohmann::json::parse(text, text + header_len);
    } catch (const nlohmann::json::exception& e) {
        corrupt(std::string("header is not valid JSON: ") + e.what());
    }
    if (!c.header.is_object() || !c.header.contains("payload_count")) corrupt("header lacks payload_count");
    const auto count = c.header["payload_count"].get<std::uint64_t>();
    const std::size_t start = 24 + header_len;
    if (bytes.size() - start != count * 8) corrupt("payload length does not match payload_count");
    c.payload.resize(count);
    for (std::size_t i = 0; i < count; ++i) c.payload[i] = get_le<double>(bytes, start + 8 * i);
    return c;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace snn
