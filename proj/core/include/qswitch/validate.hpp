#pragma once

// Invariant suite behind the `validate` verb: propagator unitarity, agreement
// of the switching-time propagator with step-wise simulation, and lossless
// round-trips of every output file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace qswitch {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // worst observed error
  double tolerance = 0.0;
  std::string detail;
};

struct ValidationOptions {
  std::uint64_t seed = 1;
  int grids_per_family = 8;
  /// Scratch directory for the file round-trips; a fresh temporary
  /// directory (removed afterwards) when empty.
  std::filesystem::path scratch_dir;
};

inline constexpr double kValidationTol = 1e-9;

std::vector<CheckResult> run_validation(const ValidationOptions& opts = {});

}  // namespace qswitch
