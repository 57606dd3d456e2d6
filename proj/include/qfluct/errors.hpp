#pragma once

#include <stdexcept>
#include <string>

namespace qfluct {

// Error taxonomy maps onto CLI exit codes: config 2, data 3, numeric 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Bit flags attached to per-point results across the pipeline.
enum PointFlag : unsigned {
  kFlagEdgeWindow = 1u << 0,      // averaging window truncated at a stream boundary
  kFlagLowSensitivity = 1u << 1,  // coherence decayed; detuning weakly identified
  kFlagNonConverged = 1u << 2,    // optimizer hit its generation cap
  kFlagDegenerate = 1u << 3,      // degenerate input (e.g. all values identical)
  kFlagClipped = 1u << 4,         // value clipped into its valid domain
  kFlagLowStatistics = 1u << 5,   // too few events for a reliable estimate
  kFlagUncorrectable = 1u << 6,   // censoring correction has no valid branch
  kFlagSingleState = 1u << 7,     // segment never switches state
  kFlagMasked = 1u << 8,          // excluded from rate averages (amplitude ~ 0)
};

}  // namespace qfluct
