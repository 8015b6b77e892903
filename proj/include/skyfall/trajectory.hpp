#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace skyfall {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool finite() const;

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Point3& o) const = default;
};

double norm(const Point3& p);

inline constexpr std::size_t kTrajectoryLen = 20;
inline constexpr std::size_t kSplitIndex = 10;

// 20 ordered positions; points[0..10) is the observed segment,
// points[10..20) the future segment.
struct Trajectory {
  std::array<Point3, kTrajectoryLen> points{};

  bool finite() const;
  bool operator==(const Trajectory& o) const = default;
};

using Segment = std::array<Point3, kSplitIndex>;

std::pair<Segment, Segment> split_obs_future(const Trajectory& t);
Trajectory join_segments(const Segment& observed, const Segment& future);

enum class DatasetKind { vertical, linear, real };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

// Per-axis mean and scale over all points of a dataset. Applied
// pointwise; a zero-variance axis clamps its scale to 1.
struct NormStats {
  Point3 mean{};
  Point3 scale{1.0, 1.0, 1.0};

  static NormStats identity() { return {}; }
  bool operator==(const NormStats& o) const = default;
};

struct Dataset {
  DatasetKind kind = DatasetKind::real;
  std::vector<Trajectory> trajectories;
  std::optional<std::uint64_t> seed;   // absent for real data
  std::optional<NormStats> norm;       // cached, not persisted

  std::size_t size() const { return trajectories.size(); }
};

// Initial-position distribution and target of a simulated landing set.
struct GenSpec {
  std::array<Point3, 4> direction_means{};
  double xy_sigma = 0.0;
  double z_sigma = 0.0;
  Point3 destination{0.0, 0.0, 0.0};

  static GenSpec vertical_default();
  static GenSpec linear_default();

  // Throws DataError on non-positive sigmas or non-finite fields.
  void validate() const;
};

// Horizontal cruise to the point above the destination, then a vertical
// descent; the two legs are discretized into kTrajectoryLen points in
// proportion to their lengths (at least 2 points per leg).
Dataset generate_vertical(std::size_t n, std::uint64_t seed,
                          const GenSpec& spec = GenSpec::vertical_default());

// Straight chord from the initial position to the destination,
// kTrajectoryLen uniformly spaced points.
Dataset generate_linear(std::size_t n, std::uint64_t seed,
                        const GenSpec& spec = GenSpec::linear_default());

// Seeded shuffle, then the first size-holdout trajectories train and the
// last holdout trajectories evaluate.
std::pair<Dataset, Dataset> split_train_eval(const Dataset& all, std::size_t holdout,
                                             std::uint64_t seed);

NormStats compute_norm(const Dataset& d);  // throws DataError on empty set

Point3 normalize(const Point3& p, const NormStats& s);
Point3 denormalize(const Point3& p, const NormStats& s);
Trajectory normalize(const Trajectory& t, const NormStats& s);
Trajectory denormalize(const Trajectory& t, const NormStats& s);
Segment normalize(const Segment& seg, const NormStats& s);
Segment denormalize(const Segment& seg, const NormStats& s);

// Worker count from SKYFALL_THREADS (>=1; 1 means serial).
unsigned thread_count();

}  // namespace skyfall
