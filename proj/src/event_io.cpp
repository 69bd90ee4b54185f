#include "snnconv/event_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>

#include "snnconv/error.hpp"

namespace snn {

namespace {

constexpr std::string_view kEventMagic = "SNNEVT01";
constexpr std::size_t kHeaderBytes = 32;
constexpr std::size_t kRecordBytes = 12;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    auto raw = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    out.insert(out.end(), raw.begin(), raw.end());
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
    std::array<std::uint8_t, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes.data() + at, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    return std::bit_cast<T>(raw);
}

template <typename T>
T parse_field(std::string_view field, std::size_t line) {
    T value{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw Error(ErrorKind::CorruptFile, "bad integer '" + std::string(field) + "' on line " + std::to_string(line));
    return value;
}

}  // namespace

std::string events_to_csv(const SpikeEvents& events) {
    std::string out = "t,neuron,polarity\n";
    out.reserve(out.size() + events.size() * 12);
    for (const auto& e : events.events()) {
        out += std::to_string(e.t);
        out += ',';
        out += std::to_string(e.neuron);
        out += ',';
        out += std::to_string(static_cast<int>(e.polarity));
        out += '\n';
    }
    return out;
}

SpikeEvents events_from_csv(std::string_view text, int horizon_steps, double dt) {
    std::vector<SpikeEvent> events;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != "t,neuron,polarity") throw Error(ErrorKind::CorruptFile, "missing event CSV header");
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        if (c1 == std::string_view::npos || c2 == std::string_view::npos)
            throw Error(ErrorKind::CorruptFile, "expected three fields on line " + std::to_string(line_no));
        SpikeEvent e;
        e.t = parse_field<std::int32_t>(line.substr(0, c1), line_no);
        e.neuron = parse_field<std::uint32_t>(line.substr(c1 + 1, c2 - c1 - 1), line_no);
        const int pol = parse_field<int>(line.substr(c2 + 1), line_no);
        if (pol < -1 || pol > 1) throw Error(ErrorKind::CorruptFile, "polarity must be 1, -1 or 0");
        e.polarity = static_cast<Polarity>(pol);
        events.push_back(e);
    }
    if (!header_seen) throw Error(ErrorKind::CorruptFile, "empty event CSV");
    return SpikeEvents(std::move(events), horizon_steps, dt);
}

std::vector<std::uint8_t> events_to_binary(const SpikeEvents& events) {
    std::vector<std::uint8_t> out(kEventMagic.begin(), kEventMagic.end());
    out.reserve(kHeaderBytes + kRecordBytes * events.size());
    put_le<std::uint32_t>(out, 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(events.horizon_steps()));
    put_le<double>(out, events.dt());
    put_le<std::uint64_t>(out, events.size());
    for (const auto& e : events.events()) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.t));
        put_le<std::uint32_t>(out, e.neuron);
        out.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(e.polarity)));
        out.insert(out.end(), 3, 0);
    }
    return out;
}

SpikeEvents events_from_binary(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kEventMagic.data(), 8) != 0)
        throw Error(ErrorKind::CorruptFile, "not an event file");
    if (get_le<std::uint32_t>(bytes, 8) != 1) throw Error(ErrorKind::CorruptFile, "unsupported event file version");
    const auto horizon = get_le<std::uint32_t>(bytes, 12);
    const auto dt = get_le<double>(bytes, 16);
    const auto count = get_le<std::uint64_t>(bytes, 24);
    if (bytes.size() != kHeaderBytes + count * kRecordBytes)
        throw Error(ErrorKind::CorruptFile, "event file length does not match its record count");
    std::vector<SpikeEvent> events(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = kHeaderBytes + i * kRecordBytes;
        events[i].t = static_cast<std::int32_t>(get_le<std::uint32_t>(bytes, at));
        events[i].neuron = get_le<std::uint32_t>(bytes, at + 4);
        const auto pol = static_cast<std::int8_t>(bytes[at + 8]);
        if (pol < -1 || pol > 1) throw Error(ErrorKind::CorruptFile, "bad polarity byte");
        events[i].polarity = static_cast<Polarity>(pol);
    }
    return SpikeEvents(std::move(events), static_cast<int>(horizon), dt);
}

}  // namespace snn
