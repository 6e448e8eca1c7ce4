#pragma once

#include <string>

#include "foil/trainer.hpp"

namespace foil::cli {

/// Entry point for the `foil` binary; returns the process exit code.
/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numeric failure, 1 anything else.
int run(int argc, const char* const* argv);

/// Full key=value echo of a resolved config; parses back to the same config.
std::string to_config_text(const trainer::FoilConfig& config);

/// FNV-1a 64-bit hash of a byte string, hex-encoded.
std::string fnv1a64_hex(const std::string& bytes);

}  // namespace foil::cli
