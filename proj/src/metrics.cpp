#include "skyfall/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <stdexcept>

#include "skyfall/errors.hpp"
#include "skyfall/serialize.hpp"

namespace skyfall {

namespace {

void require_matched(std::size_t preds, std::size_t truths) {
  if (preds != truths)
    throw std::invalid_argument("report: prediction/truth set sizes differ");
  if (preds == 0) throw std::invalid_argument("report: empty evaluation set");
}

struct Moments {
  double mean = 0.0, stddev = 0.0;
};

// Population statistics: the evaluation set is the whole population of
// interest, so the divisor is N.
Moments population_moments(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

class CsvFile {
 public:
  explicit CsvFile(const std::string& path) : path_(path), f_(std::fopen(path.c_str(), "wb")) {
    if (f_ == nullptr) throw IoError("cannot open '" + path + "' for writing");
  }
  ~CsvFile() {
    if (f_ != nullptr) std::fclose(f_);
  }
  CsvFile(const CsvFile&) = delete;
  CsvFile& operator=(const CsvFile&) = delete;

  void line(const std::string& s) { std::fprintf(f_, "%s\n", s.c_str()); }

  void close() {
    if (std::fclose(f_) != 0) {
      f_ = nullptr;
      throw IoError("error writing '" + path_ + "'");
    }
    f_ = nullptr;
  }

 private:
  std::string path_;
  std::FILE* f_;
};

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::array<double, kSplitIndex> displacement_per_point(const Segment& pred,
                                                       const Segment& truth) {
  std::array<double, kSplitIndex> out{};
  for (std::size_t i = 0; i < kSplitIndex; ++i) out[i] = norm(pred[i] - truth[i]);
  return out;
}

AdeReport ade_report(const std::vector<Segment>& preds, const std::vector<Segment>& truths,
                     const std::string& dataset, const std::string& method) {
  require_matched(preds.size(), truths.size());
  AdeReport report;
  report.dataset = dataset;
  report.method = method;
  std::vector<double> displacements(preds.size());
  for (std::size_t point = 0; point < kSplitIndex; ++point) {
    for (std::size_t i = 0; i < preds.size(); ++i)
      displacements[i] = norm(preds[i][point] - truths[i][point]);
    const Moments m = population_moments(displacements);
    report.mean[point] = m.mean;
    report.stddev[point] = m.stddev;
  }
  return report;
}

AxisReport axis_report(const std::vector<Segment>& preds, const std::vector<Segment>& truths,
                       const std::string& dataset, const std::string& method) {
  require_matched(preds.size(), truths.size());
  AxisReport report;
  report.dataset = dataset;
  report.method = method;
  for (std::size_t point = 0; point < kSplitIndex; ++point) {
    double ax = 0.0, ay = 0.0, az = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const Point3 d = preds[i][point] - truths[i][point];
      ax += std::fabs(d.x);
      ay += std::fabs(d.y);
      az += std::fabs(d.z);
    }
    const double inv = 1.0 / static_cast<double>(preds.size());
    report.mean_abs[point] = {ax * inv, ay * inv, az * inv};
  }
  return report;
}

ScoreReport score_report(const DiscriminatorParams& d, const NormStats& norm,
                         const std::vector<Trajectory>& true_set,
                         const std::vector<Trajectory>& fake_set,
                         const std::string& dataset) {
  if (true_set.size() != fake_set.size() || true_set.empty())
    throw std::invalid_argument("score report needs equal-size non-empty sets");
  std::vector<double> scores(true_set.size());
  ScoreReport report;
  report.dataset = dataset;
  report.set_size = true_set.size();
  for (std::size_t i = 0; i < true_set.size(); ++i)
    scores[i] = discriminate(d, norm, true_set[i]);
  Moments m = population_moments(scores);
  report.true_mean = m.mean;
  report.true_std = m.stddev;
  for (std::size_t i = 0; i < fake_set.size(); ++i)
    scores[i] = discriminate(d, norm, fake_set[i]);
  m = population_moments(scores);
  report.fake_mean = m.mean;
  report.fake_std = m.stddev;
  return report;
}

void render_report(const AdeReport& r, ReportFormat format, const std::string& path) {
  if (format == ReportFormat::csv) {
    CsvFile f(path);
    f.line("point,mean,std");
    for (std::size_t i = 0; i < kSplitIndex; ++i)
      f.line(std::to_string(i + 1) + "," + fmt6(r.mean[i]) + "," + fmt6(r.stddev[i]));
    f.close();
    return;
  }
  nlohmann::json doc;
  doc["dataset"] = r.dataset;
  doc["method"] = r.method;
  doc["std_kind"] = "population";
  doc["mean"] = r.mean;
  doc["std"] = r.stddev;
  write_json(doc, path);
}

void render_report(const AxisReport& r, ReportFormat format, const std::string& path) {
  static constexpr const char* kAxes[] = {"x", "y", "z"};
  if (format == ReportFormat::csv) {
    CsvFile f(path);
    f.line("point,axis,mean_abs");
    for (std::size_t i = 0; i < kSplitIndex; ++i)
      for (std::size_t a = 0; a < 3; ++a)
        f.line(std::to_string(i + 1) + "," + kAxes[a] + "," + fmt6(r.mean_abs[i][a]));
    f.close();
    return;
  }
  nlohmann::json doc;
  doc["dataset"] = r.dataset;
  doc["method"] = r.method;
  for (std::size_t a = 0; a < 3; ++a) {
    std::array<double, kSplitIndex> column{};
    for (std::size_t i = 0; i < kSplitIndex; ++i) column[i] = r.mean_abs[i][a];
    doc["mean_abs"][kAxes[a]] = column;
  }
  write_json(doc, path);
}

void render_report(const ScoreReport& r, ReportFormat format, const std::string& path) {
  if (format == ReportFormat::csv) {
    CsvFile f(path);
    f.line("set,mean,std");
    f.line("true," + fmt6(r.true_mean) + "," + fmt6(r.true_std));
    f.line("fake," + fmt6(r.fake_mean) + "," + fmt6(r.fake_std));
    f.close();
    return;
  }
  nlohmann::json doc;
  doc["dataset"] = r.dataset;
  doc["set_size"] = r.set_size;
  doc["true"] = {{"mean", r.true_mean}, {"std", r.true_std}};
  doc["fake"] = {{"mean", r.fake_mean}, {"std", r.fake_std}};
  write_json(doc, path);
}

}  // namespace skyfall
