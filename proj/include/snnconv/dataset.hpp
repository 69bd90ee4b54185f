#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace snn {

/// Scalar kinds of the IDX container (third magic byte).
enum class IdxElementKind : std::uint8_t {
    UnsignedByte = 0x08,
    SignedByte = 0x09,
    Short = 0x0B,
    Int = 0x0C,
    Float = 0x0D,
    Double = 0x0E,
};

std::size_t element_size(IdxElementKind kind);

/// A decoded IDX file. Multi-byte element data stays in its big-endian file order.
struct IdxArray {
    IdxElementKind element_kind = IdxElementKind::UnsignedByte;
    std::vector<std::uint32_t> shape;
    std::vector<std::uint8_t> data;

    std::size_t element_count() const;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxArray& array);

/// Reads a whole file; paths ending in ".gz" are gunzipped first.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// MNIST-style labeled images, stored as raw bytes. Immutable once loaded.
class LabeledDataset {
public:
    LabeledDataset() = default;
    LabeledDataset(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> pixels,
                   std::vector<std::uint8_t> labels, std::string split_name);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t pixels_per_image() const noexcept { return rows_ * cols_; }
    const std::string& split_name() const noexcept { return split_name_; }

    std::span<const std::uint8_t> image(std::size_t index) const;
    int label(std::size_t index) const { return labels_.at(index); }
    std::span<const std::uint8_t> labels() const noexcept { return labels_; }

    /// Items [first, first + count), clamped to the dataset end.
    LabeledDataset slice(std::size_t first, std::size_t count) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> pixels_;
    std::vector<std::uint8_t> labels_;
    std::string split_name_;
};

LabeledDataset load_mnist(const std::filesystem::path& image_path,
                          const std::filesystem::path& label_path,
                          std::string split_name = "mnist");

/// v -> v / 255.
std::vector<double> normalize(std::span<const std::uint8_t> image);

/// Fraction of items carrying `label`; 0 for an empty dataset.
double label_frequency(const LabeledDataset& data, int label);

}  // namespace snn
