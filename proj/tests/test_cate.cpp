#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "rework/cate.hpp"
#include "rework/error.hpp"
#include "rework/stats.hpp"

using namespace rework;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

// Gaussian elimination with partial pivoting, kept independent of Eigen's solvers.
Eigen::VectorXd gauss_solve(Eigen::MatrixXd a, Eigen::VectorXd b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    a.row(c).swap(a.row(piv));
    std::swap(b[c], b[piv]);
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (Eigen::Index k = c; k < n; ++k) a(r, k) -= f * a(c, k);
      b[r] -= f * b[c];
    }
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (Eigen::Index k = r + 1; k < n; ++k) s -= a(r, k) * x[k];
    x[r] = s / a(r, r);
  }
  return x;
}

}  // namespace

TEST_CASE("basis construction") {
  const auto z = testing::uniforms(5000, 1);
  const SplineBasis b = build_basis(z, 3, 5);
  REQUIRE(b.axes[0].interior.size() == 1);
  CHECK(std::abs(b.axes[0].interior[0] - 0.5) <= 0.02);
  CHECK(b.axes[0].interior[0] == doctest::Approx(stats::quantile(std::vector<double>(z.data(), z.data() + z.size()), 0.5)));
  CHECK(b.columns() == 5);
  CHECK(build_basis_2d(z, testing::uniforms(5000, 2), 2, 5).columns() == 25);
  CHECK(code_of([&] { build_basis(z, 3, 3); }) == ErrorCode::parameter);
  CHECK(code_of([&] { build_basis(Eigen::VectorXd::Constant(10, 2.0), 3, 5); }) == ErrorCode::degenerate);
}

TEST_CASE("partition of unity and nonnegativity at random points") {
  const auto z = testing::normals(500, 3);
  const SplineBasis b = build_basis(z, 3, 5);
  const auto q = testing::uniforms(10000, 4, z.minCoeff(), z.maxCoeff());
  const Eigen::MatrixXd rows = b.evaluate(q);
  CHECK((rows.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
  CHECK(rows.minCoeff() >= 0.0);
  // boundary points too
  Eigen::Vector2d ends(z.minCoeff(), z.maxCoeff());
  CHECK((b.evaluate(ends).rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);

  const auto z2 = testing::normals(500, 5);
  const SplineBasis b2 = build_basis_2d(z, z2, 2, 5);
  Eigen::MatrixXd pts(1000, 2);
  pts.col(0) = testing::uniforms(1000, 6, z.minCoeff(), z.maxCoeff());
  pts.col(1) = testing::uniforms(1000, 7, z2.minCoeff(), z2.maxCoeff());
  CHECK((b2.evaluate(pts).rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
}

TEST_CASE("saturated indicator basis reproduces group means") {
  const std::size_t n = 300;
  Eigen::VectorXd z(n);
  const auto u = testing::uniforms(n, 8);
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = 1 + std::floor(u[i] * 3);
  const Eigen::VectorXd psi = testing::normals(n, 9) + z;
  const CateFit fit = project_scores(psi, indicator_basis({1, 2, 3}), z);
  double s[3] = {0, 0, 0}, c[3] = {0, 0, 0};
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    s[static_cast<int>(z[i]) - 1] += psi[i];
    c[static_cast<int>(z[i]) - 1] += 1;
  }
  for (int g = 0; g < 3; ++g) CHECK(std::abs(fit.beta[g] - s[g] / c[g]) < 1e-10);
  const auto pred = cate_predict(fit, Eigen::Vector3d(1, 2, 3));
  for (int g = 0; g < 3; ++g) CHECK(std::abs(pred.theta[g] - s[g] / c[g]) < 1e-10);
}

TEST_CASE("constant scores give a constant CATE") {
  const auto z = testing::normals(200, 10);
  const CateFit fit = project_scores(Eigen::VectorXd::Constant(200, 5.0), build_basis(z, 3, 5), z);
  const auto pred = cate_predict(fit, testing::uniforms(50, 11, z.minCoeff(), z.maxCoeff()));
  CHECK((pred.theta.array() - 5.0).abs().maxCoeff() < 1e-10);
}

TEST_CASE("coefficients match an explicit Gaussian elimination oracle") {
  const auto z = testing::uniforms(50, 12);
  const Eigen::VectorXd psi = testing::normals(50, 13);
  const SplineBasis b = build_basis(z, 3, 5);
  const CateFit fit = project_scores(psi, b, z);
  const Eigen::MatrixXd design = b.evaluate(z);
  const Eigen::VectorXd beta = gauss_solve(design.transpose() * design, design.transpose() * psi);
  CHECK((fit.beta - beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("projection properties") {
  const auto z = testing::normals(400, 14);
  const Eigen::VectorXd psi = z.array().sin().matrix() + testing::normals(400, 15);
  const CateFit fit = project_scores(psi, build_basis(z, 3, 5), z);
  // residuals orthogonal to every basis column
  CHECK((fit.design.transpose() * fit.residuals).cwiseAbs().maxCoeff() / 400.0 < 1e-8);
  // basis spans the constants: mean fitted value equals the mean score
  CHECK(std::abs((fit.design * fit.beta).mean() - psi.mean()) < 1e-8);
  // vcov symmetric PSD
  CHECK((fit.vcov - fit.vcov.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.vcov);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  // HC0 sandwich written out
  const Eigen::MatrixXd& b = fit.design;
  const Eigen::MatrixXd ginv = (b.transpose() * b).inverse();
  const Eigen::MatrixXd meat = b.transpose() * fit.residuals.array().square().matrix().asDiagonal() * b;
  CHECK((fit.vcov - ginv * meat * ginv).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("cate_predict standard errors") {
  const auto z = testing::uniforms(80, 16);
  CateFit fit = project_scores(testing::normals(80, 17), build_basis(z, 3, 5), z);
  const auto q = testing::uniforms(10, 18);
  const auto pred = cate_predict(fit, q);
  const Eigen::MatrixXd bq = fit.basis.evaluate(q);
  for (Eigen::Index i = 0; i < 10; ++i) {
    double quad = 0;
    for (Eigen::Index a = 0; a < bq.cols(); ++a)
      for (Eigen::Index c = 0; c < bq.cols(); ++c) quad += bq(i, a) * fit.vcov(a, c) * bq(i, c);
    CHECK(pred.se[i] == doctest::Approx(std::sqrt(quad)).epsilon(1e-10));
  }
  fit.vcov.setZero();
  CHECK(cate_predict(fit, q).se.cwiseAbs().maxCoeff() == 0.0);
  // outside the boundary: clamped with a flag
  const auto out = cate_predict(fit, Eigen::Vector2d(z.maxCoeff() + 1.0, 0.5 * (z.minCoeff() + z.maxCoeff())));
  CHECK(out.clamped[0]);
  CHECK_FALSE(out.clamped[1]);
  CHECK(out.theta[0] == doctest::Approx(cate_predict(fit, Eigen::VectorXd::Constant(1, z.maxCoeff())).theta[0]));
}

TEST_CASE("rank deficient design falls back with a warning") {
  Eigen::VectorXd z(40);
  for (Eigen::Index i = 0; i < 40; ++i) z[i] = i % 2;  // two distinct values, five columns
  const CateFit fit = project_scores(testing::normals(40, 19), build_basis(z, 3, 5), z);
  CHECK_FALSE(fit.warnings.empty());
  CHECK(fit.beta.allFinite());
}

TEST_CASE("bootstrap band with zero residuals collapses to the estimate") {
  const auto z = testing::uniforms(300, 20);
  const Eigen::VectorXd psi = 1.0 + 2.0 * z.array();  // linear, inside the cubic span
  const CateFit fit = project_scores(psi, build_basis(z, 3, 5), z);
  const auto band = multiplier_bootstrap_band(fit, linear_grid(0.05, 0.95, 11), {}, 0.05, 200, 1);
  CHECK((band.upper - band.lower).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((band.estimate - band.lower).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("bootstrap band at alpha one half is degenerate") {
  const auto z = testing::uniforms(500, 21);
  const CateFit fit = project_scores(testing::normals(500, 22), build_basis(z, 3, 5), z);
  const auto band = multiplier_bootstrap_band(fit, linear_grid(0.1, 0.9, 9), {}, 0.5, 2000, 3);
  const auto se = cate_predict(fit, band.points()).se;
  for (Eigen::Index i = 0; i < band.estimate.size(); ++i) {
    CHECK(band.upper[i] - band.lower[i] < 0.1 * se[i]);
    CHECK(band.lower[i] <= band.estimate[i]);
    CHECK(band.upper[i] >= band.estimate[i]);
  }
}

TEST_CASE("bootstrap band width for normal scores with a constant basis") {
  const std::size_t n = 5000;
  const Eigen::VectorXd psi = testing::normals(n, 23, 2.0);
  const Eigen::VectorXd z = testing::uniforms(n, 24);
  const CateFit fit = project_scores(psi, build_basis(z, 0, 1), z);
  const auto band = multiplier_bootstrap_band(fit, {0.5}, {}, 0.05, 1000, 5);
  const double se = std::sqrt(fit.residuals.squaredNorm()) / static_cast<double>(n);
  const double analytic = 2 * stats::normal_quantile(0.95) * se;
  const double width = band.upper[0] - band.lower[0];
  CHECK(std::abs(width / analytic - 1.0) <= 0.15);
}

TEST_CASE("bootstrap determinism, ordering and warning flag") {
  const auto z = testing::uniforms(300, 25);
  const CateFit fit = project_scores(testing::normals(300, 26), build_basis(z, 3, 5), z);
  const auto grid = linear_grid(0.0, 1.0, 21);
  const auto a = multiplier_bootstrap_band(fit, grid, {}, 0.05, 300, 9);
  const auto b = multiplier_bootstrap_band(fit, grid, {}, 0.05, 300, 9);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  CHECK((a.lower.array() <= a.estimate.array()).all());
  CHECK((a.estimate.array() <= a.upper.array()).all());
  CHECK_FALSE(a.few_replicates);
  CHECK(multiplier_bootstrap_band(fit, grid, {}, 0.05, 50, 9).few_replicates);
}

TEST_CASE("2D bands") {
  const auto z0 = testing::uniforms(400, 27), z1 = testing::uniforms(400, 28);
  Eigen::MatrixXd z(400, 2);
  z << z0, z1;
  const CateFit fit = project_scores(testing::normals(400, 29), build_basis_2d(z0, z1, 2, 5), z);
  const auto band = multiplier_bootstrap_band(fit, linear_grid(0, 1, 5), linear_grid(0, 1, 4), 0.05, 200, 1);
  CHECK(band.size() == 20);
  CHECK(band.estimate.isApprox(cate_predict(fit, band.points()).theta));
  // bilinear interpolation is exact on grid nodes
  CHECK(cate_lower_bound(band, 0.25, 1.0 / 3.0) == doctest::Approx(band.lower[1 * 4 + 1]));
  CHECK(code_of([&] { cate_lower_bound(band, 1.5, 0.5); }) == ErrorCode::extrapolation);
}

TEST_CASE("cate_lower_bound interpolation") {
  ConfidenceBand band;
  band.axis0 = {0.0, 1.0, 2.0, 4.0};
  band.estimate = Eigen::Vector4d(1, 2, 3, 4);
  band.lower = Eigen::Vector4d(0.5, 1.0, 2.0, 1.5);
  band.upper = Eigen::Vector4d(1.5, 3.0, 4.0, 6.5);
  CHECK(cate_lower_bound(band, 1.0) == 1.0);
  CHECK(cate_lower_bound(band, 0.5) == doctest::Approx(0.75));
  CHECK(code_of([&] { cate_lower_bound(band, 4.5); }) == ErrorCode::extrapolation);
  CHECK(code_of([&] { cate_lower_bound(band, -0.1); }) == ErrorCode::extrapolation);
  const auto q = testing::uniforms(100, 30, 0.0, 4.0);
  for (double x : q) {
    std::size_t i = 0;
    while (i + 2 < band.axis0.size() && x > band.axis0[i + 1]) ++i;
    const double w = (x - band.axis0[i]) / (band.axis0[i + 1] - band.axis0[i]);
    const double expected = band.lower[static_cast<Eigen::Index>(i)] * (1 - w) + band.lower[static_cast<Eigen::Index>(i + 1)] * w;
    CHECK(cate_lower_bound(band, x) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("CATE JSON round trip and band CSV") {
  const auto z = testing::uniforms(100, 31);
  const CateFit fit = project_scores(testing::normals(100, 32), build_basis(z, 3, 5), z, {"cm_mean"});
  const nlohmann::json j = fit;
  const CateFit back = j.get<CateFit>();
  CHECK(back.beta == fit.beta);
  CHECK(back.z_columns == fit.z_columns);
  const auto q = linear_grid(0, 1, 7);
  Eigen::VectorXd qv = Eigen::Map<const Eigen::VectorXd>(q.data(), 7);
  CHECK(cate_predict(back, qv).theta == cate_predict(fit, qv).theta);
  const auto band = multiplier_bootstrap_band(fit, q, {}, 0.05, 100, 1);
  const nlohmann::json bj = band;
  CHECK(bj.get<ConfidenceBand>().lower == band.lower);
  const std::string text = band_csv(band, {"cm_mean"});
  CHECK(text.rfind("cm_mean,estimate,lower,upper\n", 0) == 0);
}
