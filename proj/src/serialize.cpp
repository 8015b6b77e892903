#include "skyfall/serialize.hpp"

#include <cmath>
#include <fstream>

#include "skyfall/errors.hpp"

namespace skyfall {

nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

nlohmann::json to_json(const NormStats& s) {
  return {{"mean", {s.mean.x, s.mean.y, s.mean.z}},
          {"scale", {s.scale.x, s.scale.y, s.scale.z}}};
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("expected a JSON array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw DataError("matrix data length disagrees with its shape");
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  return m;
}

NormStats norm_from_json(const nlohmann::json& j) {
  const auto& mean = j.at("mean");
  const auto& scale = j.at("scale");
  if (mean.size() != 3 || scale.size() != 3)
    throw DataError("norm_stats must have 3 mean and 3 scale entries");
  NormStats s;
  s.mean = {mean[0].get<double>(), mean[1].get<double>(), mean[2].get<double>()};
  s.scale = {scale[0].get<double>(), scale[1].get<double>(), scale[2].get<double>()};
  if (!(s.scale.x > 0.0 && s.scale.y > 0.0 && s.scale.z > 0.0))
    throw DataError("norm_stats scales must be positive");
  return s;
}

void write_json(const nlohmann::json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("error writing '" + path + "'");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
  return doc;
}

void expect_format(const nlohmann::json& doc, const std::string& kind, int version,
                   const std::string& path) {
  if (!doc.contains("kind") || doc.at("kind").get<std::string>() != kind)
    throw DataError(path + ": not a " + kind + " model file");
  if (!doc.contains("format_version") || doc.at("format_version").get<int>() != version)
    throw DataError(path + ": unsupported format_version");
}

}  // namespace skyfall
