#include "snnconv/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "snnconv/error.hpp"

namespace snn {

std::size_t element_size(IdxElementKind kind) {
    switch (kind) {
        case IdxElementKind::UnsignedByte:
        case IdxElementKind::SignedByte: return 1;
        case IdxElementKind::Short: return 2;
        case IdxElementKind::Int:
        case IdxElementKind::Float: return 4;
        case IdxElementKind::Double: return 8;
    }
    throw Error(ErrorKind::MagicMismatch, "unknown IDX element kind");
}

std::size_t IdxArray::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

namespace {

bool known_kind(std::uint8_t byte) {
    switch (byte) {
        case 0x08: case 0x09: case 0x0B: case 0x0C: case 0x0D: case 0x0E: return true;
        default: return false;
    }
}

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
           (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

bool has_gzip_suffix(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".gz";
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw Error(ErrorKind::Truncated, "IDX header shorter than 4 bytes");
    if (bytes[0] != 0 || bytes[1] != 0)
        throw Error(ErrorKind::MagicMismatch, "IDX magic must start with two zero bytes");
    if (!known_kind(bytes[2])) throw Error(ErrorKind::MagicMismatch, "unknown IDX element kind byte");

    IdxArray out;
    out.element_kind = static_cast<IdxElementKind>(bytes[2]);
    const std::size_t dims = bytes[3];
    if (dims == 0) throw Error(ErrorKind::MagicMismatch, "IDX dimension count is zero");
    const std::size_t header = 4 + 4 * dims;
    if (bytes.size() < header) throw Error(ErrorKind::Truncated, "IDX dimension table cut short");

    out.shape.reserve(dims);
    std::size_t count = 1;
    for (std::size_t d = 0; d < dims; ++d) {
        const auto size = read_be32(bytes, 4 + 4 * d);
        if (size == 0) throw Error(ErrorKind::ShapeMismatch, "IDX dimension of size zero");
        out.shape.push_back(size);
        count *= size;
    }
    const std::size_t payload = count * element_size(out.element_kind);
    const std::size_t available = bytes.size() - header;
    if (available < payload)
        throw Error(ErrorKind::Truncated, "IDX data has " + std::to_string(available) + " bytes, expected " +
                                              std::to_string(payload));
    if (available > payload)
        throw Error(ErrorKind::TrailingBytes,
                    std::to_string(available - payload) + " bytes after the IDX payload");
    out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
}

std::vector<std::uint8_t> serialize_idx(const IdxArray& array) {
    if (array.shape.empty() || array.shape.size() > 255)
        throw Error(ErrorKind::ShapeMismatch, "IDX arrays need 1..255 dimensions");
    if (array.data.size() != array.element_count() * element_size(array.element_kind))
        throw Error(ErrorKind::ShapeMismatch, "IDX data length does not match its shape");
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * array.shape.size() + array.data.size());
    out.push_back(0);
    out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(array.element_kind));
    out.push_back(static_cast<std::uint8_t>(array.shape.size()));
    for (auto d : array.shape) write_be32(out, d);
    out.insert(out.end(), array.data.begin(), array.data.end());
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::Io, "no such file: " + path.string());
    if (!has_gzip_suffix(path)) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }
    gzFile file = gzopen(path.c_str(), "rb");
    if (file == nullptr) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::uint8_t buffer[1 << 16];
    for (;;) {
        const int n = gzread(file, buffer, sizeof(buffer));
        if (n < 0) {
            gzclose(file);
            throw Error(ErrorKind::Io, "gzip stream error in " + path.string());
        }
        if (n == 0) break;
        out.insert(out.end(), buffer, buffer + n);
    }
    gzclose(file);
    return out;
}

LabeledDataset::LabeledDataset(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> pixels,
                               std::vector<std::uint8_t> labels, std::string split_name)
    : rows_(rows), cols_(cols), pixels_(std::move(pixels)), labels_(std::move(labels)),
      split_name_(std::move(split_name)) {
    if (pixels_.size() != labels_.size() * rows_ * cols_)
        throw Error(ErrorKind::CountMismatch, "pixel buffer does not hold one image per label");
    for (auto l : labels_)
        if (l > 9) throw Error(ErrorKind::InvalidArgument, "label outside 0..9: " + std::to_string(l));
}

std::span<const std::uint8_t> LabeledDataset::image(std::size_t index) const {
    if (index >= size()) throw Error(ErrorKind::InvalidArgument, "image index out of range");
    return std::span<const std::uint8_t>(pixels_).subspan(index * pixels_per_image(), pixels_per_image());
}

LabeledDataset LabeledDataset::slice(std::size_t first, std::size_t count) const {
    first = std::min(first, size());
    count = std::min(count, size() - first);
    const auto px = pixels_per_image();
    std::vector<std::uint8_t> pixels(pixels_.begin() + static_cast<std::ptrdiff_t>(first * px),
                                     pixels_.begin() + static_cast<std::ptrdiff_t>((first + count) * px));
    std::vector<std::uint8_t> labels(labels_.begin() + static_cast<std::ptrdiff_t>(first),
                                     labels_.begin() + static_cast<std::ptrdiff_t>(first + count));
    return LabeledDataset(rows_, cols_, std::move(pixels), std::move(labels), split_name_);
}

LabeledDataset load_mnist(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                          std::string split_name) {
    auto images = parse_idx(read_file_bytes(image_path));
    auto labels = parse_idx(read_file_bytes(label_path));
    if (images.element_kind != IdxElementKind::UnsignedByte || labels.element_kind != IdxElementKind::UnsignedByte)
        throw Error(ErrorKind::MagicMismatch, "MNIST files must hold unsigned bytes");
    if (images.shape.size() != 3 || labels.shape.size() != 1)
        throw Error(ErrorKind::ShapeMismatch, "expected a 3-d image file and a 1-d label file");
    if (images.shape[1] != 28 || images.shape[2] != 28)
        throw Error(ErrorKind::ShapeMismatch, "MNIST images must be 28x28");
    if (images.shape[0] != labels.shape[0])
        throw Error(ErrorKind::CountMismatch, std::to_string(images.shape[0]) + " images but " +
                                                  std::to_string(labels.shape[0]) + " labels");
    return LabeledDataset(28, 28, std::move(images.data), std::move(labels.data), std::move(split_name));
}

std::vector<double> normalize(std::span<const std::uint8_t> image) {
    std::vector<double> out(image.size());
    std::transform(image.begin(), image.end(), out.begin(), [](std::uint8_t v) { return v / 255.0; });
    return out;
}

double label_frequency(const LabeledDataset& data, int label) {
    if (data.empty()) return 0.0;
    const auto labels = data.labels();
    return static_cast<double>(std::count(labels.begin(), labels.end(), label)) / static_cast<double>(data.size());
}

}  // namespace snn
