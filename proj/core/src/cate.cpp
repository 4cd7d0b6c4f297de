#include "rework/cate.hpp"

#include <algorithm>
#include <cmath>

#include "rework/csv.hpp"
#include "rework/error.hpp"
#include "rework/json_util.hpp"
#include "rework/parallel.hpp"
#include "rework/random.hpp"
#include "rework/stats.hpp"

namespace rework {

namespace {

constexpr double kRidgeFallback = 1e-8;

SplineAxis make_axis(const Eigen::VectorXd& z, int degree, int df) {
  if (degree < 0) throw Error(ErrorCode::parameter, "spline degree must be nonnegative");
  if (df <= degree) throw Error(ErrorCode::parameter, "spline df must exceed the degree");
  if (z.size() < 2) throw Error(ErrorCode::degenerate, "spline basis needs at least two points");
  if (!z.allFinite()) throw Error(ErrorCode::validation, "spline input contains NaN");
  SplineAxis axis;
  axis.degree = degree;
  axis.df = df;
  axis.lo = z.minCoeff();
  axis.hi = z.maxCoeff();
  if (!(axis.hi > axis.lo)) throw Error(ErrorCode::degenerate, "conditioning variable is constant");
  const int count = df - degree - 1;
  std::vector<double> sorted(z.data(), z.data() + z.size());
  std::sort(sorted.begin(), sorted.end());
  for (int k = 1; k <= count; ++k)
    axis.interior.push_back(stats::quantile_sorted(sorted, static_cast<double>(k) / (count + 1)));
  return axis;
}

}  // namespace

std::vector<double> SplineAxis::knot_vector() const {
  std::vector<double> t(static_cast<std::size_t>(degree + 1), lo);
  t.insert(t.end(), interior.begin(), interior.end());
  t.insert(t.end(), static_cast<std::size_t>(degree + 1), hi);
  return t;
}

void SplineAxis::evaluate(double x, Eigen::Ref<Eigen::RowVectorXd> row) const {
  row.setZero();
  x = std::clamp(x, lo, hi);
  const std::vector<double> t = knot_vector();
  const int p = degree;
  const int nb = static_cast<int>(t.size()) - p - 1;
  int span = p;
  if (x >= hi) {
    span = nb - 1;
    while (span > p && !(t[static_cast<std::size_t>(span)] < t[static_cast<std::size_t>(span) + 1])) --span;
  } else {
    while (span + 1 < nb && t[static_cast<std::size_t>(span) + 1] <= x) ++span;
  }
  std::vector<double> n(static_cast<std::size_t>(p + 1)), left(static_cast<std::size_t>(p + 1)),
      right(static_cast<std::size_t>(p + 1));
  n[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[static_cast<std::size_t>(j)] = x - t[static_cast<std::size_t>(span + 1 - j)];
    right[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
      const double temp = denom > 0.0 ? n[static_cast<std::size_t>(r)] / denom : 0.0;
      n[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
      saved = left[static_cast<std::size_t>(j - r)] * temp;
    }
    n[static_cast<std::size_t>(j)] = saved;
  }
  for (int r = 0; r <= p; ++r) row[span - p + r] = n[static_cast<std::size_t>(r)];
}

std::size_t SplineBasis::columns() const {
  if (kind == Kind::indicator) return levels.size();
  std::size_t c = 1;
  for (const auto& a : axes) c *= static_cast<std::size_t>(a.df);
  return c;
}

Eigen::MatrixXd SplineBasis::evaluate(const Eigen::MatrixXd& z, std::vector<bool>* clamped) const {
  if (static_cast<std::size_t>(z.cols()) != dims())
    throw Error(ErrorCode::shape, "basis expects " + std::to_string(dims()) + " conditioning columns");
  const Eigen::Index n = z.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(columns()));
  if (clamped) clamped->assign(static_cast<std::size_t>(n), false);
  if (kind == Kind::indicator) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (std::size_t l = 0; l < levels.size(); ++l)
        if (z(i, 0) == levels[l]) out(i, static_cast<Eigen::Index>(l)) = 1.0;
    return out;
  }
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& a : axes) rows.emplace_back(a.df);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < axes.size(); ++d) {
      const double v = z(i, static_cast<Eigen::Index>(d));
      if (clamped && (v < axes[d].lo || v > axes[d].hi)) (*clamped)[static_cast<std::size_t>(i)] = true;
      axes[d].evaluate(v, rows[d]);
    }
    if (axes.size() == 1) {
      out.row(i) = rows[0];
    } else {
      const Eigen::Index d1 = rows[1].size();
      for (Eigen::Index a = 0; a < rows[0].size(); ++a) out.row(i).segment(a * d1, d1) = rows[0][a] * rows[1];
    }
  }
  return out;
}

SplineBasis build_basis(const Eigen::VectorXd& z, int degree, int df) {
  SplineBasis b;
  b.axes.push_back(make_axis(z, degree, df));
  return b;
}

SplineBasis build_basis_2d(const Eigen::VectorXd& z0, const Eigen::VectorXd& z1, int degree, int df) {
  if (z0.size() != z1.size()) throw Error(ErrorCode::shape, "2D basis inputs differ in length");
  SplineBasis b;
  b.axes.push_back(make_axis(z0, degree, df));
  b.axes.push_back(make_axis(z1, degree, df));
  return b;
}

SplineBasis indicator_basis(std::vector<double> levels) {
  if (levels.empty()) throw Error(ErrorCode::parameter, "indicator basis needs levels");
  SplineBasis b;
  b.kind = SplineBasis::Kind::indicator;
  b.levels = std::move(levels);
  return b;
}

void to_json(nlohmann::json& j, const SplineBasis& b) {
  if (b.kind == SplineBasis::Kind::indicator) {
    j = {{"kind", "indicator"}, {"levels", b.levels}};
    return;
  }
  auto axes = nlohmann::json::array();
  for (const auto& a : b.axes)
    axes.push_back({{"degree", a.degree}, {"df", a.df}, {"interior", a.interior}, {"lo", a.lo}, {"hi", a.hi}});
  j = {{"kind", "bspline"}, {"axes", axes}};
}

void from_json(const nlohmann::json& j, SplineBasis& b) {
  b = SplineBasis{};
  if (j.at("kind") == "indicator") {
    b.kind = SplineBasis::Kind::indicator;
    b.levels = j.at("levels").get<std::vector<double>>();
    return;
  }
  for (const auto& a : j.at("axes")) {
    SplineAxis axis;
    axis.degree = a.at("degree");
    axis.df = a.at("df");
    axis.interior = a.at("interior").get<std::vector<double>>();
    axis.lo = a.at("lo");
    axis.hi = a.at("hi");
    if (static_cast<int>(axis.interior.size()) != axis.df - axis.degree - 1)
      throw Error(ErrorCode::parse, "spline axis knot count does not match df");
    b.axes.push_back(std::move(axis));
  }
}

void to_json(nlohmann::json& j, const CateFit& f) {
  j = {{"basis", f.basis},
       {"beta", jsonio::from_vector(f.beta)},
       {"vcov", jsonio::from_matrix(f.vcov)},
       {"z_columns", f.z_columns},
       {"warnings", f.warnings}};
}

void from_json(const nlohmann::json& j, CateFit& f) {
  f = CateFit{};
  f.basis = j.at("basis").get<SplineBasis>();
  f.beta = jsonio::to_vector(j.at("beta"));
  f.vcov = jsonio::to_matrix(j.at("vcov"));
  f.z_columns = j.at("z_columns").get<std::vector<std::string>>();
  f.warnings = j.value("warnings", std::vector<std::string>{});
  const auto p = static_cast<Eigen::Index>(f.basis.columns());
  if (f.beta.size() != p || f.vcov.rows() != p || f.vcov.cols() != p)
    throw Error(ErrorCode::parse, "CATE fit dimensions do not match its basis");
}

CateFit project_scores(const Eigen::VectorXd& psi_b, const SplineBasis& basis, const Eigen::MatrixXd& z,
                       std::vector<std::string> z_columns) {
  if (z.rows() != psi_b.size()) throw Error(ErrorCode::shape, "scores and conditioning rows differ");
  CateFit fit;
  fit.basis = basis;
  fit.z_columns = std::move(z_columns);
  fit.design = basis.evaluate(z);
  const Eigen::MatrixXd& b = fit.design;
  const Eigen::Index p = b.cols();

  Eigen::MatrixXd gram = b.transpose() * b;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b);
  if (qr.rank() < p) {
    fit.warnings.emplace_back("rank-deficient basis design; fell back to ridge 1e-8");
    gram.diagonal().array() += kRidgeFallback;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::singular, "basis Gram matrix is singular");
  fit.beta = ldlt.solve(b.transpose() * psi_b);
  fit.gram_inverse = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  if (!fit.beta.allFinite() || !fit.gram_inverse.allFinite())
    throw Error(ErrorCode::singular, "basis Gram matrix is singular");
  fit.residuals = psi_b - b * fit.beta;
  const Eigen::MatrixXd weighted = b.array().colwise() * fit.residuals.array();
  const Eigen::MatrixXd meat = weighted.transpose() * weighted;
  fit.vcov = fit.gram_inverse * meat * fit.gram_inverse;
  fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose()).eval();
  return fit;
}

CatePrediction cate_predict(const CateFit& fit, const Eigen::MatrixXd& z) {
  CatePrediction out;
  const Eigen::MatrixXd b = fit.basis.evaluate(z, &out.clamped);
  out.theta = b * fit.beta;
  out.se.resize(b.rows());
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const double q = b.row(i) * fit.vcov * b.row(i).transpose();
    out.se[i] = std::sqrt(std::max(0.0, q));
  }
  return out;
}

Eigen::MatrixXd ConfidenceBand::points() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(dims()));
  Eigen::Index r = 0;
  for (double a : axis0) {
    if (axis1.empty()) {
      out(r++, 0) = a;
      continue;
    }
    for (double c : axis1) {
      out(r, 0) = a;
      out(r++, 1) = c;
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const ConfidenceBand& b) {
  j = {{"axis0", b.axis0},
       {"axis1", b.axis1},
       {"estimate", jsonio::from_vector(b.estimate)},
       {"lower", jsonio::from_vector(b.lower)},
       {"upper", jsonio::from_vector(b.upper)},
       {"alpha", b.alpha},
       {"n_boot", b.n_boot},
       {"few_replicates", b.few_replicates}};
}

void from_json(const nlohmann::json& j, ConfidenceBand& b) {
  b.axis0 = j.at("axis0").get<std::vector<double>>();
  b.axis1 = j.at("axis1").get<std::vector<double>>();
  b.estimate = jsonio::to_vector(j.at("estimate"));
  b.lower = jsonio::to_vector(j.at("lower"));
  b.upper = jsonio::to_vector(j.at("upper"));
  b.alpha = j.at("alpha");
  b.n_boot = j.at("n_boot");
  b.few_replicates = j.value("few_replicates", false);
  const auto g = static_cast<Eigen::Index>(b.size());
  if (b.estimate.size() != g || b.lower.size() != g || b.upper.size() != g)
    throw Error(ErrorCode::parse, "band arrays do not match its grid");
}

std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
  if (count < 2) throw Error(ErrorCode::parameter, "grid needs at least two points");
  if (!(hi >= lo)) throw Error(ErrorCode::parameter, "grid bounds are reversed");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = i + 1 == count ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

ConfidenceBand multiplier_bootstrap_band(const CateFit& fit, std::vector<double> axis0, std::vector<double> axis1,
                                         double alpha, std::size_t n_boot, std::uint64_t seed) {
  if (fit.design.rows() == 0 || fit.residuals.size() != fit.design.rows())
    throw Error(ErrorCode::parameter, "bootstrap needs a fit with stored residuals");
  if (!(alpha > 0.0 && alpha <= 0.5)) throw Error(ErrorCode::parameter, "alpha must lie in (0, 0.5]");
  if (n_boot < 1) throw Error(ErrorCode::parameter, "n_boot must be positive");
  if (!std::is_sorted(axis0.begin(), axis0.end()) || !std::is_sorted(axis1.begin(), axis1.end()))
    throw Error(ErrorCode::parameter, "grid axes must be ascending");
  if ((fit.basis.dims() == 2) != !axis1.empty()) throw Error(ErrorCode::shape, "grid dimension does not match basis");

  ConfidenceBand band;
  band.axis0 = std::move(axis0);
  band.axis1 = std::move(axis1);
  band.alpha = alpha;
  band.n_boot = n_boot;
  band.few_replicates = n_boot < 100;

  const Eigen::MatrixXd grid_basis = fit.basis.evaluate(band.points());
  band.estimate = grid_basis * fit.beta;
  const auto g = grid_basis.rows();
  const auto n = fit.design.rows();
  // grid_basis (BᵀB)⁻¹ Bᵀ diag(ε̂) ξ, multiplied right to left so nothing g × n is formed
  const Eigen::MatrixXd scaled_t = (fit.design.array().colwise() * fit.residuals.array()).matrix().transpose();
  const Eigen::MatrixXd projector = grid_basis * fit.gram_inverse;  // g × p

  Eigen::MatrixXd draws(g, static_cast<Eigen::Index>(n_boot));
  constexpr std::size_t kBlock = 32;
  const std::size_t blocks = (n_boot + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t first = blk * kBlock;
    const std::size_t count = std::min(kBlock, n_boot - first);
    Eigen::MatrixXd xi(n, static_cast<Eigen::Index>(count));
    for (std::size_t r = 0; r < count; ++r) {
      auto rng = make_rng(derive_seed(seed, "multiplier", first + r));
      std::normal_distribution<double> z(0.0, 1.0);
      for (Eigen::Index i = 0; i < n; ++i) xi(i, static_cast<Eigen::Index>(r)) = z(rng);
    }
    draws.middleCols(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) = projector * (scaled_t * xi);
  });

  band.lower.resize(g);
  band.upper.resize(g);
  std::vector<double> row(n_boot);
  for (Eigen::Index i = 0; i < g; ++i) {
    for (std::size_t r = 0; r < n_boot; ++r) row[r] = band.estimate[i] + draws(i, static_cast<Eigen::Index>(r));
    std::sort(row.begin(), row.end());
    const double lo = stats::quantile_sorted(row, alpha);
    const double hi = stats::quantile_sorted(row, 1.0 - alpha);
    band.lower[i] = std::min(lo, band.estimate[i]);
    band.upper[i] = std::max(hi, band.estimate[i]);
  }
  return band;
}

namespace {

// Index i with axis[i] <= z <= axis[i+1] and the interpolation weight.
std::pair<std::size_t, double> locate(const std::vector<double>& axis, double z) {
  if (axis.empty() || !(z >= axis.front() && z <= axis.back()))
    throw Error(ErrorCode::extrapolation, "query lies outside the band grid");
  if (axis.size() == 1) return {0, 0.0};
  auto it = std::upper_bound(axis.begin(), axis.end(), z);
  std::size_t i = it == axis.begin() ? 0 : static_cast<std::size_t>(it - axis.begin()) - 1;
  if (i + 1 >= axis.size()) i = axis.size() - 2;
  const double width = axis[i + 1] - axis[i];
  const double w = width > 0.0 ? (z - axis[i]) / width : 0.0;
  return {i, w};
}

}  // namespace

double cate_lower_bound(const ConfidenceBand& band, double z) {
  if (band.dims() != 1) throw Error(ErrorCode::shape, "1D query on a 2D band");
  const auto [i, w] = locate(band.axis0, z);
  if (band.axis0.size() == 1) return band.lower[0];
  const auto k = static_cast<Eigen::Index>(i);
  return (1.0 - w) * band.lower[k] + w * band.lower[k + 1];
}

double cate_lower_bound(const ConfidenceBand& band, double z0, double z1) {
  if (band.dims() != 2) throw Error(ErrorCode::shape, "2D query on a 1D band");
  const auto [i, u] = locate(band.axis0, z0);
  const auto [j, v] = locate(band.axis1, z1);
  const std::size_t m = band.axis1.size();
  auto at = [&](std::size_t a, std::size_t b) {
    a = std::min(a, band.axis0.size() - 1);
    b = std::min(b, m - 1);
    return band.lower[static_cast<Eigen::Index>(a * m + b)];
  };
  return (1 - u) * (1 - v) * at(i, j) + u * (1 - v) * at(i + 1, j) + (1 - u) * v * at(i, j + 1) +
         u * v * at(i + 1, j + 1);
}

std::string band_csv(const ConfidenceBand& band, const std::vector<std::string>& z_names) {
  if (z_names.size() != band.dims()) throw Error(ErrorCode::shape, "band column names");
  std::vector<std::string> header = z_names;
  header.insert(header.end(), {"estimate", "lower", "upper"});
  csv::Writer w(header);
  const Eigen::MatrixXd pts = band.points();
  for (Eigen::Index r = 0; r < pts.rows(); ++r) {
    std::vector<std::string> cells;
    for (Eigen::Index c = 0; c < pts.cols(); ++c) cells.push_back(csv::format(pts(r, c)));
    cells.push_back(csv::format(band.estimate[r]));
    cells.push_back(csv::format(band.lower[r]));
    cells.push_back(csv::format(band.upper[r]));
    w.row(cells);
  }
  return w.str();
}

}  // namespace rework
