#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace snn {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitRuntime = 1,
    kExitUsage = 2,
    kExitConversion = 3,
    kExitSimulation = 4,
};

/// `args[0]` is the program name. Commands: train, convert, sweep, encode-dvs.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace snn
