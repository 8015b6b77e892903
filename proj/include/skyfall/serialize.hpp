#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <string>

#include "skyfall/trajectory.hpp"

namespace skyfall {

// Matrices are stored as {rows, cols, data} with row-major data; JSON
// doubles round-trip bit-exactly.

nlohmann::json to_json(const Eigen::VectorXd& v);
nlohmann::json to_json(const Eigen::MatrixXd& m);
nlohmann::json to_json(const NormStats& s);

Eigen::VectorXd vector_from_json(const nlohmann::json& j);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
NormStats norm_from_json(const nlohmann::json& j);

void write_json(const nlohmann::json& doc, const std::string& path);
nlohmann::json read_json(const std::string& path);

// Checks format_version and the "kind" tag of a model document.
void expect_format(const nlohmann::json& doc, const std::string& kind, int version,
                   const std::string& path);

}  // namespace skyfall
