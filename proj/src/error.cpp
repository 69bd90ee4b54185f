#include "snnconv/error.hpp"

namespace snn {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Io: return "Io";
        case ErrorKind::MagicMismatch: return "MagicMismatch";
        case ErrorKind::Truncated: return "Truncated";
        case ErrorKind::TrailingBytes: return "TrailingBytes";
        case ErrorKind::CountMismatch: return "CountMismatch";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::MissingCache: return "MissingCache";
        case ErrorKind::Divergence: return "Divergence";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::CorruptFile: return "CorruptFile";
        case ErrorKind::RateOverflow: return "RateOverflow";
        case ErrorKind::PathOutOfBounds: return "PathOutOfBounds";
        case ErrorKind::UnstableTimestep: return "UnstableTimestep";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::OrphanBatchNorm: return "OrphanBatchNorm";
        case ErrorKind::DegenerateScale: return "DegenerateScale";
        case ErrorKind::NonCompliantTopology: return "NonCompliantTopology";
        case ErrorKind::HorizonMismatch: return "HorizonMismatch";
        case ErrorKind::LayerNotRecorded: return "LayerNotRecorded";
    }
    return "Unknown";
}

}  // namespace snn
