#pragma once

// Conditional effects: orthogonal scores projected onto B-spline (or
// indicator) bases, with HC0 covariance and multiplier-bootstrap bands.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace rework {

struct SplineAxis {
  int degree = 3;
  int df = 5;
  std::vector<double> interior;  // interior knots
  double lo = 0.0;
  double hi = 1.0;

  /// Full clamped knot vector (degree+1 copies of each boundary).
  std::vector<double> knot_vector() const;
  /// Nonzero basis values at x (clamped into [lo, hi]) written into row.
  void evaluate(double x, Eigen::Ref<Eigen::RowVectorXd> row) const;
};

struct SplineBasis {
  enum class Kind { bspline, indicator };
  Kind kind = Kind::bspline;
  std::vector<SplineAxis> axes;  // one per dimension
  std::vector<double> levels;    // indicator basis only

  std::size_t dims() const { return kind == Kind::indicator ? 1 : axes.size(); }
  std::size_t columns() const;
  /// One row per point; z has dims() columns. Points outside the boundary are
  /// clamped and, when `clamped` is given, flagged.
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& z, std::vector<bool>* clamped = nullptr) const;
};

/// Interior knots at equally spaced quantiles of z; df includes the constant.
/// Throws ErrorCode::parameter when df <= degree, ErrorCode::degenerate for constant z.
SplineBasis build_basis(const Eigen::VectorXd& z, int degree = 3, int df = 5);
/// Tensor product of per-axis bases (column index = i0 * df1 + i1).
SplineBasis build_basis_2d(const Eigen::VectorXd& z0, const Eigen::VectorXd& z1, int degree = 2, int df = 5);
/// One indicator column per level.
SplineBasis indicator_basis(std::vector<double> levels);

void to_json(nlohmann::json& j, const SplineBasis& b);
void from_json(const nlohmann::json& j, SplineBasis& b);

struct CateFit {
  SplineBasis basis;
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
  std::vector<std::string> z_columns;
  // training-side quantities; not persisted
  Eigen::VectorXd residuals;
  Eigen::MatrixXd design;
  Eigen::MatrixXd gram_inverse;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const CateFit& f);
void from_json(const nlohmann::json& j, CateFit& f);

/// β̂ = (BᵀB)⁻¹Bᵀψ_b with the HC0 sandwich. Falls back to a 1e-8 ridge with a
/// warning when B is rank deficient.
CateFit project_scores(const Eigen::VectorXd& psi_b, const SplineBasis& basis, const Eigen::MatrixXd& z,
                       std::vector<std::string> z_columns = {});

struct CatePrediction {
  Eigen::VectorXd theta;
  Eigen::VectorXd se;
  std::vector<bool> clamped;
};

CatePrediction cate_predict(const CateFit& fit, const Eigen::MatrixXd& z);

struct ConfidenceBand {
  /// Grid axes; axis1 empty for 1D. Points are ordered i0 * |axis1| + i1.
  std::vector<double> axis0;
  std::vector<double> axis1;
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double alpha = 0.05;
  std::size_t n_boot = 1000;
  bool few_replicates = false;

  std::size_t dims() const { return axis1.empty() ? 1 : 2; }
  std::size_t size() const { return axis0.size() * (axis1.empty() ? 1 : axis1.size()); }
  Eigen::MatrixXd points() const;
};

void to_json(nlohmann::json& j, const ConfidenceBand& b);
void from_json(const nlohmann::json& j, ConfidenceBand& b);

/// count equally spaced values on [lo, hi].
std::vector<double> linear_grid(double lo, double hi, std::size_t count);

/// Pointwise α and 1-α quantiles of bᵀβ* with
/// β* = β̂ + (BᵀB)⁻¹Bᵀ(ξ ⊙ ε̂), ξ standard normal; the band has level 2α.
ConfidenceBand multiplier_bootstrap_band(const CateFit& fit, std::vector<double> axis0, std::vector<double> axis1 = {},
                                         double alpha = 0.05, std::size_t n_boot = 1000, std::uint64_t seed = 0);

/// Linear (1D) or bilinear (2D) interpolation of the lower curve.
/// Throws ErrorCode::extrapolation outside the grid.
double cate_lower_bound(const ConfidenceBand& band, double z);
double cate_lower_bound(const ConfidenceBand& band, double z0, double z1);

/// CSV layout: z (or z0, z1), estimate, lower, upper.
std::string band_csv(const ConfidenceBand& band, const std::vector<std::string>& z_names);

}  // namespace rework
