#pragma once

#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rework/error.hpp"

namespace rework::jsonio {

inline nlohmann::json from_vector(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd to_vector(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// Row-major nested arrays.
inline nlohmann::json from_matrix(const Eigen::MatrixXd& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(from_vector(m.row(r).transpose()));
  return out;
}

inline Eigen::MatrixXd to_matrix(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto v = to_vector(j.at(static_cast<std::size_t>(r)));
    if (v.size() != cols) throw Error(ErrorCode::parse, "ragged matrix in JSON");
    m.row(r) = v.transpose();
  }
  return m;
}

}  // namespace rework::jsonio
