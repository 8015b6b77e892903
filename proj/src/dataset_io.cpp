#include "skyfall/dataset_io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "skyfall/errors.hpp"

namespace skyfall {

namespace {

constexpr const char* kHeader = "traj_id,point_idx,x,y,z";

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what) {
  throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& field, const std::string& path, std::size_t line) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0') fail(path, line, "malformed number '" + field + "'");
  if (!std::isfinite(value)) fail(path, line, "non-finite value '" + field + "'");
  return value;
}

std::uint64_t parse_id(const std::string& field, const std::string& path, std::size_t line) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const unsigned long long value = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0') fail(path, line, "malformed id '" + field + "'");
  return value;
}

}  // namespace

void write_dataset(const Dataset& d, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw IoError("cannot open '" + path + "' for writing");

  std::fprintf(f, "%s\n", kHeader);
  for (std::size_t ti = 0; ti < d.trajectories.size(); ++ti) {
    const Trajectory& t = d.trajectories[ti];
    for (std::size_t pi = 0; pi < kTrajectoryLen; ++pi) {
      const Point3& p = t.points[pi];
      std::fprintf(f, "%" PRIu64 ",%zu,%.17g,%.17g,%.17g\n",
                   static_cast<std::uint64_t>(ti), pi, p.x, p.y, p.z);
    }
  }
  if (std::fclose(f) != 0) throw IoError("error writing '" + path + "'");
}

Dataset read_dataset(const std::string& path, DatasetKind kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError(path + ": empty file (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader)
    fail(path, line_no, "expected header '" + std::string(kHeader) + "', got '" + line + "'");

  Dataset d;
  d.kind = kind;

  bool have_current = false;
  std::uint64_t current_id = 0;
  std::size_t expected_idx = 0;
  Trajectory current;
  std::unordered_set<std::uint64_t> closed_ids;

  auto finish_trajectory = [&](std::size_t at_line) {
    if (!have_current) return;
    if (expected_idx != kTrajectoryLen)
      fail(path, at_line,
           "trajectory " + std::to_string(current_id) + " has " +
               std::to_string(expected_idx) + " points, expected " +
               std::to_string(kTrajectoryLen));
    d.trajectories.push_back(current);
    have_current = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::array<std::string, 5> fields;
    std::size_t n_fields = 0;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) {
      if (n_fields >= fields.size()) fail(path, line_no, "too many columns");
      fields[n_fields++] = field;
    }
    if (n_fields != fields.size()) fail(path, line_no, "expected 5 columns");

    const std::uint64_t id = parse_id(fields[0], path, line_no);
    const std::uint64_t point_idx = parse_id(fields[1], path, line_no);
    const Point3 p{parse_double(fields[2], path, line_no),
                   parse_double(fields[3], path, line_no),
                   parse_double(fields[4], path, line_no)};

    if (!have_current || id != current_id) {
      if (have_current) closed_ids.insert(current_id);
      finish_trajectory(line_no);
      if (closed_ids.contains(id))
        fail(path, line_no,
             "trajectory " + std::to_string(id) + " reappears; rows must be grouped");
      have_current = true;
      current_id = id;
      expected_idx = 0;
      current = Trajectory{};
    }
    if (point_idx != expected_idx)
      fail(path, line_no,
           "trajectory " + std::to_string(id) + ": point_idx " +
               std::to_string(point_idx) + " out of order (expected " +
               std::to_string(expected_idx) + ")");
    if (expected_idx >= kTrajectoryLen)
      fail(path, line_no, "trajectory " + std::to_string(id) + " has too many points");
    current.points[expected_idx++] = p;
  }
  finish_trajectory(line_no + 1);
  return d;
}

}  // namespace skyfall
