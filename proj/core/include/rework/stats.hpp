#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rework::stats {

double mean(std::span<const double> x);
double mean(const Eigen::VectorXd& x);

/// Sample variance with the n-1 divisor; 0 for fewer than two values.
double variance(std::span<const double> x);
double variance(const Eigen::VectorXd& x);
double sd(const Eigen::VectorXd& x);

/// Quantile by linear interpolation between order statistics (the "type 7"
/// definition): h = (n-1)p, Q = x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
double quantile(std::vector<double> values, double p);
double quantile_sorted(std::span<const double> sorted, double p);

/// Standard normal quantile and cdf.
double normal_quantile(double p);
double normal_cdf(double x);

/// Pearson correlation; 0 when either side has zero variance.
double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

Eigen::VectorXd subset(const Eigen::VectorXd& x, std::span<const std::size_t> rows);
Eigen::MatrixXd subset_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows);

}  // namespace rework::stats
