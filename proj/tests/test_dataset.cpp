#include <fstream>

#include "doctest.h"
#include "snnconv/container.hpp"
#include "snnconv/dataset.hpp"
#include "snnconv/error.hpp"
#include "test_support.hpp"

using namespace snn;

namespace {

std::vector<std::uint8_t> idx_bytes(std::uint8_t kind, std::vector<std::uint32_t> dims, std::size_t payload) {
    std::vector<std::uint8_t> b{0, 0, kind, static_cast<std::uint8_t>(dims.size())};
    for (auto d : dims) {
        b.push_back(static_cast<std::uint8_t>(d >> 24));
        b.push_back(static_cast<std::uint8_t>(d >> 16));
        b.push_back(static_cast<std::uint8_t>(d >> 8));
        b.push_back(static_cast<std::uint8_t>(d));
    }
    for (std::size_t i = 0; i < payload; ++i) b.push_back(static_cast<std::uint8_t>(i * 7));
    return b;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "snnconv_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("parse_idx decodes a minimal label file") {
    const auto bytes = idx_bytes(0x08, {10}, 10);
    const auto a = parse_idx(bytes);
    CHECK(a.element_kind == IdxElementKind::UnsignedByte);
    CHECK(a.shape == std::vector<std::uint32_t>{10});
    CHECK(a.data.size() == 10);
    CHECK(a.data[3] == 21);
}

TEST_CASE("parse_idx rejects malformed input") {
    CHECK(kind_of([] { parse_idx(idx_bytes(0x08, {60000, 28, 28}, 0)); }) == ErrorKind::Truncated);
    CHECK(kind_of([] { parse_idx(idx_bytes(0x08, {10}, 11)); }) == ErrorKind::TrailingBytes);
    auto bad_magic = idx_bytes(0x08, {4}, 4);
    bad_magic[1] = 1;
    CHECK(kind_of([&] { parse_idx(bad_magic); }) == ErrorKind::MagicMismatch);
    CHECK(kind_of([] { parse_idx(idx_bytes(0x07, {4}, 4)); }) == ErrorKind::MagicMismatch);
    const std::vector<std::uint8_t> short_header{0, 0, 8, 3, 0, 0};
    CHECK(kind_of([&] { parse_idx(short_header); }) == ErrorKind::Truncated);
    CHECK(kind_of([] { parse_idx(idx_bytes(0x08, {0}, 0)); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("serialize_idx round-trips byte for byte") {
    for (auto kind : {0x08, 0x0B, 0x0D}) {
        const auto size = element_size(static_cast<IdxElementKind>(kind));
        const auto bytes = idx_bytes(static_cast<std::uint8_t>(kind), {3, 2}, 6 * size);
        CHECK(serialize_idx(parse_idx(bytes)) == bytes);
    }
}

TEST_CASE("official MNIST files") {
    const auto raw = read_file_bytes(testing::mnist_dir() / "train-images-idx3-ubyte.gz");
    CHECK(std::vector<std::uint8_t>(raw.begin(), raw.begin() + 4) == std::vector<std::uint8_t>{0, 0, 8, 3});
    const auto images = parse_idx(raw);
    CHECK(images.shape == std::vector<std::uint32_t>{60000, 28, 28});
    CHECK(images.data.size() == 47'040'000u);
    CHECK(serialize_idx(images) == raw);

    const auto& train = testing::mnist_train();
    const auto& test = testing::mnist_test();
    CHECK(train.size() == 60000);
    CHECK(test.size() == 10000);
    CHECK(train.rows() == 28);
    CHECK(train.cols() == 28);
    for (const auto* data : {&train, &test}) {
        std::vector<int> seen(10, 0);
        for (auto l : data->labels()) seen.at(l)++;
        for (int c = 0; c < 10; ++c) CHECK(seen[c] > 0);
    }
    CHECK(label_frequency(test, 0) == doctest::Approx(0.098));
}

TEST_CASE("load_mnist checks counts and shapes") {
    const auto img = scratch("five-images.idx");
    const auto lbl = scratch("four-labels.idx");
    write_bytes(img, idx_bytes(0x08, {5, 28, 28}, 5 * 28 * 28));
    auto labels = idx_bytes(0x08, {4}, 0);
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<std::uint8_t>(i));
    write_bytes(lbl, labels);
    CHECK(kind_of([&] { load_mnist(img, lbl); }) == ErrorKind::CountMismatch);

    write_bytes(img, idx_bytes(0x08, {4, 27, 28}, 4 * 27 * 28));
    CHECK(kind_of([&] { load_mnist(img, lbl); }) == ErrorKind::ShapeMismatch);

    CHECK(kind_of([&] { load_mnist(scratch("missing.idx"), lbl); }) == ErrorKind::Io);
}

TEST_CASE("LabeledDataset rejects labels outside 0..9") {
    CHECK(kind_of([] { LabeledDataset(1, 1, {0}, {10}, "x"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { LabeledDataset(1, 1, {0, 0}, {1}, "x"); }) == ErrorKind::CountMismatch);
    const LabeledDataset d(1, 2, {1, 2, 3, 4, 5, 6}, {0, 1, 2}, "x");
    const auto s = d.slice(1, 5);
    CHECK(s.size() == 2);
    CHECK(s.label(0) == 1);
    CHECK(s.image(1)[1] == 6);
}

TEST_CASE("normalize maps bytes into the unit interval") {
    const std::vector<std::uint8_t> px{0, 255, 51};
    const auto v = normalize(px);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 1.0);
    CHECK(v[2] == doctest::Approx(0.2).epsilon(1e-15));
    std::vector<std::uint8_t> all(256);
    for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
    const auto n = normalize(all);
    for (int i = 0; i < 256; ++i) {
        CHECK(n[i] >= 0.0);
        CHECK(n[i] <= 1.0);
        if (i) CHECK(n[i] > n[i - 1]);
    }
}
