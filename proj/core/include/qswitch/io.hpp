#pragma once

// File formats: target unitaries, binary controls, controller sequences,
// optimized schedules and plot-ready step tables. Every writer goes through
// write_file_atomic.

#include <filesystem>
#include <string>
#include <vector>

#include "qswitch/linalg.hpp"
#include "qswitch/relaxation.hpp"
#include "qswitch/rounding.hpp"
#include "qswitch/sto.hpp"

namespace qswitch {

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// %.17g, which round-trips every finite double.
std::string format_double(double v);

/// {"dim": m, "re": [[...]], "im": [[...]]}, row-major.
std::string target_to_json(const CMatrix& m);
/// Throws Io on malformed input, TargetNotUnitary if ||U^dagger U - I||_max > 1e-8.
CMatrix target_from_json(const std::string& text);
CMatrix load_target(const std::filesystem::path& path);
void save_target(const std::filesystem::path& path, const CMatrix& m);

struct BinaryControls {
  double dt = 0.0;
  std::vector<std::string> labels;
  RMatrix values;
};

/// {"dt": .., "labels": [...], "values": [[0/1, ...], ...]}
std::string binary_controls_to_json(const ControlGrid& grid, const std::vector<std::string>& labels);
BinaryControls binary_controls_from_json(const std::string& text);

struct SequenceFile {
  std::vector<double> durations;
  std::vector<RVector> control_vectors;
};

/// {"durations": [...], "control_vectors": [[...], ...]}
std::string sequence_to_json(const ControllerSequence& seq);
SequenceFile sequence_from_json(const std::string& text);

struct ScheduleFile {
  double t_f = 0.0;
  std::vector<double> durations;
  std::vector<RVector> control_vectors;
  double objective = 0.0;
  double kkt = 0.0;
  int iters = 0;
};

/// {"t_f", "durations", "control_vectors", "objective", "kkt", "iters"}
std::string schedule_to_json(const ScheduleFile& file);
ScheduleFile schedule_from_json(const std::string& text);

/// One (time, controller, value) point of a piecewise-constant control.
struct StepPoint {
  double time = 0.0;
  std::string controller;
  double value = 0.0;

  bool operator==(const StepPoint&) const = default;
};

/// Each interval contributes its start and end point for every controller.
std::vector<StepPoint> step_points(const std::vector<double>& durations,
                                   const std::vector<RVector>& control_vectors,
                                   const std::vector<std::string>& labels);
std::vector<StepPoint> step_points(const ControlGrid& grid, const std::vector<std::string>& labels);

/// CSV with header time,controller,value.
std::string step_points_to_csv(const std::vector<StepPoint>& points);
std::vector<StepPoint> step_points_from_csv(const std::string& text);

/// Minimal CSV for numeric tables: a header row and rows of cells. Cells may
/// not contain commas or newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_string() const;
  static CsvTable parse(const std::string& text);
};

}  // namespace qswitch
