#include "rework/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "rework/error.hpp"

namespace rework {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema: return "schema";
    case ErrorCode::parse: return "parse";
    case ErrorCode::validation: return "validation";
    case ErrorCode::parameter: return "parameter";
    case ErrorCode::config: return "config";
    case ErrorCode::dependency: return "dependency";
    case ErrorCode::shape: return "shape";
    case ErrorCode::feature: return "feature";
    case ErrorCode::io: return "io";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::singular: return "singular";
    case ErrorCode::overlap: return "overlap";
    case ErrorCode::fold_degeneracy: return "fold-degeneracy";
    case ErrorCode::estimand_undefined: return "estimand-undefined";
    case ErrorCode::extrapolation: return "extrapolation";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::tuning: return "tuning";
    case ErrorCode::oracle_unavailable: return "oracle-unavailable";
  }
  return "unknown";
}

namespace stats {

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double mean(const Eigen::VectorXd& x) {
  return mean(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double variance(const Eigen::VectorXd& x) {
  return variance(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

double sd(const Eigen::VectorXd& x) { return std::sqrt(variance(x)); }

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::parameter, "quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::parameter, "quantile level outside [0,1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

double normal_cdf(double x) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::cdf(standard, x);
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Eigen::VectorXd subset(const Eigen::VectorXd& x, std::span<const std::size_t> rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = x[static_cast<Eigen::Index>(rows[i])];
  return out;
}

Eigen::MatrixXd subset_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace stats
}  // namespace rework
