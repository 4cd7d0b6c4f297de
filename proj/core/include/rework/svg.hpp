#pragma once

// Self-contained SVG charts for the report bundle.

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rework::svg {

struct Labels {
  std::string title;
  std::string x;
  std::string y;
};

/// Estimate line with a shaded lower/upper band. Empty series give a placeholder.
std::string line_band(const Labels& labels, const std::vector<double>& x, const Eigen::VectorXd& estimate,
                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// values(i, j) at (xs[i], ys[j]); cells coloured on a monotone two-colour ramp.
std::string heatmap(const Labels& labels, const std::vector<double>& xs, const std::vector<double>& ys,
                    const Eigen::MatrixXd& values);

/// Side-by-side bar histograms for the two treatment groups, with optional
/// vertical markers (e.g. subsampling cut-offs).
std::string histograms(const Labels& labels, const std::vector<double>& edges, const std::vector<std::size_t>& treated,
                       const std::vector<std::size_t>& control, const std::vector<double>& markers = {});

/// Heatmap plus iso-lines (marching squares) at the given levels.
std::string contour(const Labels& labels, const std::vector<double>& xs, const std::vector<double>& ys,
                    const Eigen::MatrixXd& values, const std::vector<double>& levels);

/// Hex colour for t in [0,1] on the ramp used by heatmap.
std::string ramp_color(double t);

}  // namespace rework::svg
