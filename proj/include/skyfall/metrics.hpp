#pragma once

#include <array>
#include <string>
#include <vector>

#include "skyfall/gan.hpp"
#include "skyfall/trajectory.hpp"

namespace skyfall {

// Per-point mean and population standard deviation of the Euclidean
// displacement between prediction and truth over an evaluation set.
struct AdeReport {
  std::string dataset;
  std::string method;
  std::array<double, kSplitIndex> mean{};
  std::array<double, kSplitIndex> stddev{};
};

// Mean absolute per-axis displacement, per point index.
struct AxisReport {
  std::string dataset;
  std::string method;
  std::array<std::array<double, 3>, kSplitIndex> mean_abs{};  // [point][x,y,z]
};

// Discriminator score statistics over a true and a fake set.
struct ScoreReport {
  std::string dataset;
  double true_mean = 0.0, true_std = 0.0;
  double fake_mean = 0.0, fake_std = 0.0;
  std::size_t set_size = 0;
};

std::array<double, kSplitIndex> displacement_per_point(const Segment& pred,
                                                       const Segment& truth);

AdeReport ade_report(const std::vector<Segment>& preds, const std::vector<Segment>& truths,
                     const std::string& dataset = "", const std::string& method = "");

AxisReport axis_report(const std::vector<Segment>& preds, const std::vector<Segment>& truths,
                       const std::string& dataset = "", const std::string& method = "");

ScoreReport score_report(const DiscriminatorParams& d, const NormStats& norm,
                         const std::vector<Trajectory>& true_set,
                         const std::vector<Trajectory>& fake_set,
                         const std::string& dataset = "");

enum class ReportFormat { csv, json };

// CSV columns: `point,mean,std` (ADE), `point,axis,mean_abs` (axis),
// `set,mean,std` (score). CSV floats use 6 significant digits, JSON 17.
void render_report(const AdeReport& r, ReportFormat format, const std::string& path);
void render_report(const AxisReport& r, ReportFormat format, const std::string& path);
void render_report(const ScoreReport& r, ReportFormat format, const std::string& path);

}  // namespace skyfall
