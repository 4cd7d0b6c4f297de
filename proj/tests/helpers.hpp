#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rework/data_model.hpp"
#include "rework/learners.hpp"

namespace testing {

// Dataset from explicit columns; source rows are 0..n-1.
inline rework::Dataset make_dataset(std::vector<std::string> names, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& a, const Eigen::VectorXd& y) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rework::Dataset(std::move(names), x, a, y, rows);
}

inline Eigen::VectorXd normals(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = z(rng);
  return v;
}

inline Eigen::VectorXd uniforms(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = u(rng);
  return v;
}

inline Eigen::VectorXd coin(std::size_t n, std::uint64_t seed, double p = 0.5) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = b(rng) ? 1.0 : 0.0;
  return v;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto p = std::filesystem::temp_directory_path() /
                 ("rework_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
