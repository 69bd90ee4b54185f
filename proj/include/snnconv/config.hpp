#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "snnconv/network.hpp"
#include "snnconv/sim.hpp"
#include "snnconv/spiking_network.hpp"

namespace snn {

/// Everything one CLI invocation needs. Relative paths resolve against `base_dir`.
struct RunConfig {
    std::filesystem::path base_dir = ".";
    std::filesystem::path data_dir = "data/mnist";
    std::string train_images = "train-images-idx3-ubyte.gz";
    std::string train_labels = "train-labels-idx1-ubyte.gz";
    std::string test_images = "t10k-images-idx3-ubyte.gz";
    std::string test_labels = "t10k-labels-idx1-ubyte.gz";

    VggMiniConfig model;
    TrainConfig train;
    ConversionConfig conversion;
    SimConfig sim;
    std::vector<double> rates{250.0, 300.0};
    std::string event_format = "csv";  // csv, binary or both

    std::filesystem::path out_dir = "out";
    std::size_t eval_subset = 1000;   // first N test images simulated by sweep
    std::size_t train_subset = 0;     // 0 trains on the full split
    unsigned threads = 1;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    std::filesystem::path data_path(const std::string& file) const;
};

/// Parses `key = value` lines with `#` comments. Throws InvalidArgument on malformed lines
/// and duplicate keys.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

/// Applies one key (e.g. `train.lr`, `sim.horizon_steps`). Throws InvalidArgument.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Reads a config file; relative paths in it resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_text(std::string_view text, const std::filesystem::path& base_dir = ".");

/// Every setting as key/value pairs in a fixed order; feeding them back reproduces the config.
std::vector<std::pair<std::string, std::string>> config_snapshot(const RunConfig& cfg);
std::string config_to_text(const RunConfig& cfg);

/// Cross-field checks (rates, subset sizes, encoder and neuron constants). Throws InvalidArgument.
void validate(const RunConfig& cfg);

std::vector<double> parse_rate_list(std::string_view text);

}  // namespace snn
