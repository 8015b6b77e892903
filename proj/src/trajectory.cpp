#include "skyfall/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "skyfall/errors.hpp"
#include "skyfall/rng.hpp"

namespace skyfall {

bool Point3::finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
}

double norm(const Point3& p) {
  return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
}

bool Trajectory::finite() const {
  return std::all_of(points.begin(), points.end(),
                     [](const Point3& p) { return p.finite(); });
}

std::pair<Segment, Segment> split_obs_future(const Trajectory& t) {
  Segment observed{};
  Segment future{};
  std::copy_n(t.points.begin(), kSplitIndex, observed.begin());
  std::copy_n(t.points.begin() + kSplitIndex, kSplitIndex, future.begin());
  return {observed, future};
}

Trajectory join_segments(const Segment& observed, const Segment& future) {
  Trajectory t;
  std::copy(observed.begin(), observed.end(), t.points.begin());
  std::copy(future.begin(), future.end(), t.points.begin() + kSplitIndex);
  return t;
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::vertical: return "vertical";
    case DatasetKind::linear: return "linear";
    case DatasetKind::real: return "real";
  }
  return "real";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "vertical") return DatasetKind::vertical;
  if (s == "linear") return DatasetKind::linear;
  if (s == "real") return DatasetKind::real;
  throw DataError("unknown dataset kind: '" + s + "'");
}

GenSpec GenSpec::vertical_default() {
  GenSpec spec;
  spec.direction_means = {Point3{-200.0, 200.0, 75.0}, Point3{200.0, -200.0, 75.0},
                          Point3{-200.0, -200.0, 75.0}, Point3{200.0, 200.0, 75.0}};
  spec.xy_sigma = 50.0;
  spec.z_sigma = 3.5;
  spec.destination = {0.0, 0.0, 0.0};
  return spec;
}

GenSpec GenSpec::linear_default() {
  GenSpec spec;
  spec.direction_means = {Point3{-400.0, 400.0, 140.0}, Point3{400.0, -400.0, 140.0},
                          Point3{-400.0, -400.0, 140.0}, Point3{400.0, 400.0, 140.0}};
  spec.xy_sigma = 100.0;
  spec.z_sigma = 7.5;
  spec.destination = {0.0, 0.0, 0.0};
  return spec;
}

void GenSpec::validate() const {
  if (!(xy_sigma > 0.0) || !(z_sigma > 0.0))
    throw DataError("generation spec requires positive sigmas");
  if (!destination.finite()) throw DataError("generation spec destination not finite");
  for (const Point3& m : direction_means)
    if (!m.finite()) throw DataError("generation spec direction mean not finite");
}

namespace {

Point3 lerp(const Point3& a, const Point3& b, double t) {
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)};
}

Point3 sample_initial(Rng& rng, const GenSpec& spec) {
  const auto direction = static_cast<std::size_t>(rng.below(4));
  const Point3& mean = spec.direction_means[direction];
  return {rng.normal(mean.x, spec.xy_sigma), rng.normal(mean.y, spec.xy_sigma),
          rng.normal(mean.z, spec.z_sigma)};
}

Trajectory vertical_trajectory(const Point3& start, const Point3& dest) {
  // Corner directly above the destination, at the cruise altitude.
  const Point3 corner{dest.x, dest.y, start.z};
  const double horiz = norm(corner - start);
  const double vert = std::fabs(start.z - dest.z);

  std::size_t n1 = kTrajectoryLen / 2;
  if (horiz + vert > 0.0) {
    const double want = std::round(kTrajectoryLen * horiz / (horiz + vert));
    n1 = static_cast<std::size_t>(std::clamp(want, 2.0, kTrajectoryLen - 2.0));
  }
  const std::size_t n2 = kTrajectoryLen - n1;

  Trajectory t;
  for (std::size_t i = 0; i < n1; ++i)
    t.points[i] = lerp(start, corner, static_cast<double>(i) / static_cast<double>(n1 - 1));
  for (std::size_t i = 1; i <= n2; ++i)
    t.points[n1 + i - 1] = lerp(corner, dest, static_cast<double>(i) / static_cast<double>(n2));
  t.points[kTrajectoryLen - 1] = dest;
  return t;
}

Trajectory linear_trajectory(const Point3& start, const Point3& dest) {
  Trajectory t;
  for (std::size_t i = 0; i < kTrajectoryLen; ++i)
    t.points[i] = lerp(start, dest, static_cast<double>(i) / (kTrajectoryLen - 1));
  t.points[kTrajectoryLen - 1] = dest;
  return t;
}

template <typename MakeTrajectory>
Dataset generate(DatasetKind kind, std::size_t n, std::uint64_t seed,
                 const GenSpec& spec, MakeTrajectory make) {
  spec.validate();
  Dataset d;
  d.kind = kind;
  d.seed = seed;
  d.trajectories.resize(n);

  // One RNG stream per trajectory, so the result is independent of how
  // the index range is carved up across workers.
  auto fill_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(sub_seed(seed, i));
      d.trajectories[i] = make(sample_initial(rng, spec), spec.destination);
    }
  };

  const unsigned workers = std::min<unsigned>(thread_count(), std::max<std::size_t>(n, 1));
  if (workers <= 1 || n < 2 * workers) {
    fill_range(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin < end) pool.emplace_back(fill_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return d;
}

}  // namespace

Dataset generate_vertical(std::size_t n, std::uint64_t seed, const GenSpec& spec) {
  return generate(DatasetKind::vertical, n, seed, spec, vertical_trajectory);
}

Dataset generate_linear(std::size_t n, std::uint64_t seed, const GenSpec& spec) {
  return generate(DatasetKind::linear, n, seed, spec, linear_trajectory);
}

std::pair<Dataset, Dataset> split_train_eval(const Dataset& all, std::size_t holdout,
                                             std::uint64_t seed) {
  if (holdout >= all.size())
    throw DataError("holdout must leave at least one training trajectory");
  Dataset train, eval;
  train.kind = eval.kind = all.kind;
  Rng rng(sub_seed(seed, 0x5EED));
  const std::vector<std::size_t> perm = rng.permutation(all.size());
  const std::size_t n_train = all.size() - holdout;
  train.trajectories.reserve(n_train);
  eval.trajectories.reserve(holdout);
  for (std::size_t i = 0; i < all.size(); ++i)
    (i < n_train ? train : eval).trajectories.push_back(all.trajectories[perm[i]]);
  return {std::move(train), std::move(eval)};
}

NormStats compute_norm(const Dataset& d) {
  if (d.trajectories.empty())
    throw DataError("cannot compute normalization of an empty dataset");

  const double count = static_cast<double>(d.size() * kTrajectoryLen);
  Point3 sum{};
  for (const Trajectory& t : d.trajectories)
    for (const Point3& p : t.points) sum = sum + p;
  const Point3 mean = sum * (1.0 / count);

  Point3 sq{};
  for (const Trajectory& t : d.trajectories)
    for (const Point3& p : t.points) {
      const Point3 c = p - mean;
      sq = sq + Point3{c.x * c.x, c.y * c.y, c.z * c.z};
    }

  auto axis_scale = [&](double s, const char* axis) {
    const double sd = std::sqrt(s / count);
    if (sd > 0.0) return sd;
    std::cerr << "skyfall: warning: zero variance on " << axis
              << " axis, clamping scale to 1\n";
    return 1.0;
  };

  NormStats stats;
  stats.mean = mean;
  stats.scale = {axis_scale(sq.x, "x"), axis_scale(sq.y, "y"), axis_scale(sq.z, "z")};
  return stats;
}

Point3 normalize(const Point3& p, const NormStats& s) {
  return {(p.x - s.mean.x) / s.scale.x, (p.y - s.mean.y) / s.scale.y,
          (p.z - s.mean.z) / s.scale.z};
}

Point3 denormalize(const Point3& p, const NormStats& s) {
  return {p.x * s.scale.x + s.mean.x, p.y * s.scale.y + s.mean.y,
          p.z * s.scale.z + s.mean.z};
}

Trajectory normalize(const Trajectory& t, const NormStats& s) {
  Trajectory out;
  for (std::size_t i = 0; i < kTrajectoryLen; ++i) out.points[i] = normalize(t.points[i], s);
  return out;
}

Trajectory denormalize(const Trajectory& t, const NormStats& s) {
  Trajectory out;
  for (std::size_t i = 0; i < kTrajectoryLen; ++i) out.points[i] = denormalize(t.points[i], s);
  return out;
}

Segment normalize(const Segment& seg, const NormStats& s) {
  Segment out;
  for (std::size_t i = 0; i < kSplitIndex; ++i) out[i] = normalize(seg[i], s);
  return out;
}

Segment denormalize(const Segment& seg, const NormStats& s) {
  Segment out;
  for (std::size_t i = 0; i < kSplitIndex; ++i) out[i] = denormalize(seg[i], s);
  return out;
}

unsigned thread_count() {
  const char* env = std::getenv("SKYFALL_THREADS");
  if (env == nullptr) return 1;
  const long value = std::strtol(env, nullptr, 10);
  if (value < 1) return 1;
  return static_cast<unsigned>(value);
}

}  // namespace skyfall
