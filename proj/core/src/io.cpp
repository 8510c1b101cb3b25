#include "qswitch/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "qswitch/error.hpp"

namespace qswitch {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create directory " + path.parent_path().string());
  }
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id();
  fs::path tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move temporary file onto " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string(what) + ": " + e.what());
  }
}

template <typename F>
auto with_schema(const char* what, F&& body) {
  try {
    return body();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string(what) + ": " + e.what());
  }
}

json vectors_to_json(const std::vector<RVector>& vs) {
  json out = json::array();
  for (const RVector& v : vs) out.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  return out;
}

std::vector<RVector> vectors_from_json(const json& j) {
  std::vector<RVector> out;
  for (const auto& row : j) {
    const auto values = row.get<std::vector<double>>();
    out.push_back(Eigen::Map<const RVector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return out;
}

}  // namespace

std::string target_to_json(const CMatrix& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array(), c = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      r.push_back(m(i, j).real());
      c.push_back(m(i, j).imag());
    }
    re.push_back(r);
    im.push_back(c);
  }
  return json{{"dim", m.rows()}, {"re", re}, {"im", im}}.dump(1);
}

CMatrix target_from_json(const std::string& text) {
  const json j = parse_json(text, "target file");
  CMatrix m = with_schema("target file", [&] {
    const auto dim = j.at("dim").get<Eigen::Index>();
    if (dim < 1) throw Error(ErrorCode::Io, "target file: dim must be >= 1");
    const auto re = j.at("re").get<std::vector<std::vector<double>>>();
    const auto im = j.at("im").get<std::vector<std::vector<double>>>();
    if (static_cast<Eigen::Index>(re.size()) != dim || static_cast<Eigen::Index>(im.size()) != dim) {
      throw Error(ErrorCode::Io, "target file: re/im must have dim rows");
    }
    CMatrix out(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
      const auto& rr = re[static_cast<std::size_t>(r)];
      const auto& ii = im[static_cast<std::size_t>(r)];
      if (static_cast<Eigen::Index>(rr.size()) != dim || static_cast<Eigen::Index>(ii.size()) != dim) {
        throw Error(ErrorCode::Io, "target file: every row must have dim entries");
      }
      for (Eigen::Index c = 0; c < dim; ++c) {
        out(r, c) = Complex(rr[static_cast<std::size_t>(c)], ii[static_cast<std::size_t>(c)]);
      }
    }
    return out;
  });
  const double err = unitarity_error(m);
  if (!all_finite(m) || !(err <= 1e-8)) {
    std::ostringstream msg;
    msg << "target is not unitary (||U^dagger U - I||_max = " << err << ")";
    throw Error(ErrorCode::TargetNotUnitary, msg.str());
  }
  return m;
}

CMatrix load_target(const fs::path& path) { return target_from_json(read_file(path)); }

void save_target(const fs::path& path, const CMatrix& m) {
  write_file_atomic(path, target_to_json(m) + "\n");
}

std::string binary_controls_to_json(const ControlGrid& grid, const std::vector<std::string>& labels) {
  json values = json::array();
  for (int k = 0; k < grid.n_steps(); ++k) {
    json row = json::array();
    for (int j = 0; j < grid.n_ctrl(); ++j) row.push_back(static_cast<int>(grid.values(k, j)));
    values.push_back(row);
  }
  return json{{"dt", grid.dt}, {"labels", labels}, {"values", values}}.dump(1);
}

BinaryControls binary_controls_from_json(const std::string& text) {
  const json j = parse_json(text, "binary controls file");
  return with_schema("binary controls file", [&] {
    BinaryControls out;
    out.dt = j.at("dt").get<double>();
    out.labels = j.at("labels").get<std::vector<std::string>>();
    const auto rows = j.at("values").get<std::vector<std::vector<int>>>();
    out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.labels.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].size() != out.labels.size()) {
        throw Error(ErrorCode::Io, "binary controls file: row width differs from label count");
      }
      for (std::size_t c = 0; c < rows[k].size(); ++c) {
        out.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = rows[k][c];
      }
    }
    return out;
  });
}

std::string sequence_to_json(const ControllerSequence& seq) {
  return json{{"durations", seq.durations}, {"control_vectors", vectors_to_json(seq.control_vectors)}}
      .dump(1);
}

SequenceFile sequence_from_json(const std::string& text) {
  const json j = parse_json(text, "sequence file");
  return with_schema("sequence file", [&] {
    SequenceFile out;
    out.durations = j.at("durations").get<std::vector<double>>();
    out.control_vectors = vectors_from_json(j.at("control_vectors"));
    if (out.durations.size() != out.control_vectors.size()) {
      throw Error(ErrorCode::Io, "sequence file: durations and control_vectors differ in length");
    }
    return out;
  });
}

std::string schedule_to_json(const ScheduleFile& file) {
  return json{{"t_f", file.t_f},
              {"durations", file.durations},
              {"control_vectors", vectors_to_json(file.control_vectors)},
              {"objective", file.objective},
              {"kkt", file.kkt},
              {"iters", file.iters}}
      .dump(1);
}

ScheduleFile schedule_from_json(const std::string& text) {
  const json j = parse_json(text, "schedule file");
  return with_schema("schedule file", [&] {
    ScheduleFile out;
    out.t_f = j.at("t_f").get<double>();
    out.durations = j.at("durations").get<std::vector<double>>();
    out.control_vectors = vectors_from_json(j.at("control_vectors"));
    out.objective = j.at("objective").get<double>();
    out.kkt = j.at("kkt").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                    : j.at("kkt").get<double>();
    out.iters = j.at("iters").get<int>();
    return out;
  });
}

std::vector<StepPoint> step_points(const std::vector<double>& durations,
                                   const std::vector<RVector>& control_vectors,
                                   const std::vector<std::string>& labels) {
  if (durations.size() != control_vectors.size()) {
    throw Error(ErrorCode::DimensionMismatch, "durations and control vectors differ in length");
  }
  std::vector<StepPoint> out;
  double start = 0.0;
  for (std::size_t s = 0; s < durations.size(); ++s) {
    const double end = start + durations[s];
    const RVector& c = control_vectors[s];
    if (static_cast<std::size_t>(c.size()) != labels.size()) {
      throw Error(ErrorCode::DimensionMismatch, "control vector width differs from label count");
    }
    for (std::size_t j = 0; j < labels.size(); ++j) {
      out.push_back({start, labels[j], c(static_cast<Eigen::Index>(j))});
      out.push_back({end, labels[j], c(static_cast<Eigen::Index>(j))});
    }
    start = end;
  }
  return out;
}

std::vector<StepPoint> step_points(const ControlGrid& grid, const std::vector<std::string>& labels) {
  std::vector<double> durations(static_cast<std::size_t>(grid.n_steps()), grid.dt);
  std::vector<RVector> vectors;
  for (int k = 0; k < grid.n_steps(); ++k) vectors.push_back(grid.step(k));
  return step_points(durations, vectors, labels);
}

std::string step_points_to_csv(const std::vector<StepPoint>& points) {
  CsvTable t;
  t.header = {"time", "controller", "value"};
  for (const StepPoint& p : points) t.rows.push_back({format_double(p.time), p.controller, format_double(p.value)});
  return t.to_string();
}

std::vector<StepPoint> step_points_from_csv(const std::string& text) {
  const CsvTable t = CsvTable::parse(text);
  if (t.header != std::vector<std::string>{"time", "controller", "value"}) {
    throw Error(ErrorCode::Io, "step CSV: expected header time,controller,value");
  }
  std::vector<StepPoint> out;
  for (const auto& row : t.rows) {
    if (row.size() != 3) throw Error(ErrorCode::Io, "step CSV: every row needs three cells");
    try {
      out.push_back({std::stod(row[0]), row[1], std::stod(row[2])});
    } catch (const std::exception&) {
      throw Error(ErrorCode::Io, "step CSV: non-numeric time or value");
    }
  }
  return out;
}

std::string CsvTable::to_string() const {
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n") != std::string::npos) {
        throw Error(ErrorCode::Io, "CSV cell contains a comma or newline: " + cells[i]);
      }
      out << (i ? "," : "") << cells[i];
    }
    out << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return out.str();
}

CsvTable CsvTable::parse(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

}  // namespace qswitch
