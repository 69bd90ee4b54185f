#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace snn {

enum class ErrorKind {
    InvalidArgument,
    Io,
    // dataset-io
    MagicMismatch,
    Truncated,
    TrailingBytes,
    CountMismatch,
    // ann-engine
    ShapeMismatch,
    MissingCache,
    Divergence,
    EmptyDataset,
    CorruptFile,
    // spike-encoding
    RateOverflow,
    PathOutOfBounds,
    // neuron-dynamics
    UnstableTimestep,
    LengthMismatch,
    // snn-convert
    OrphanBatchNorm,
    DegenerateScale,
    NonCompliantTopology,
    // snn-sim
    HorizonMismatch,
    LayerNotRecorded,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace snn
