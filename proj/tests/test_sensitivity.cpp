#include <doctest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "rework/error.hpp"
#include "rework/sensitivity.hpp"
#include "rework/simulator.hpp"
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

struct Fixture {
  Dataset d;
  NuisanceEstimates nu;
  ScoreSet scores;
};

// Confounded toy data with a pure-noise column.
Fixture confounded(std::size_t n, std::uint64_t seed) {
  const Eigen::VectorXd x = testing::normals(n, seed);
  const Eigen::VectorXd noise = testing::normals(n, seed + 1);
  const Eigen::VectorXd u = testing::uniforms(n, seed + 2);
  const Eigen::VectorXd e = testing::normals(n, seed + 3, 0.5);
  Eigen::VectorXd a(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a[i] = u[i] < 1.0 / (1.0 + std::exp(-x[i])) ? 1.0 : 0.0;
    y[i] = 0.5 * a[i] + x[i] + e[i];
  }
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(n), 2);
  feats << x, noise;
  Fixture f;
  f.d = testing::make_dataset({"x", "noise"}, feats, a, y);
  CrossfitOptions opts;
  opts.seed = seed;
  f.nu = crossfit_nuisances(f.d, LearnerSpec{LearnerKind::ols}, LearnerSpec{LearnerKind::logistic}, opts);
  f.scores = aipw_scores(f.d, f.nu);
  return f;
}

}  // namespace

TEST_CASE("bias bound closed form and zero cases") {
  const BoundScale s{0.5, 2.0};
  CHECK(bias_bound(s, {0.09, 0.09, 1.0}) == doctest::Approx(0.5 * 2.0 * std::sqrt(0.0081 / 0.91)).epsilon(1e-12));
  CHECK(bias_bound(s, {0.09, 0.09, 1.0}) == doctest::Approx(0.0943).epsilon(1e-3));
  CHECK(bias_bound(s, {0.09, 0.09, 0.0}) == 0.0);
  CHECK(bias_bound(s, {0.0, 0.09, 1.0}) == 0.0);
  CHECK(bias_bound(s, {0.09, 0.0, 1.0}) == 0.0);
  CHECK(bias_bound(s, {0.09, 0.09, -0.5}) == bias_bound(s, {0.09, 0.09, 0.5}));
  CHECK(code_of([&] { bias_bound(s, {0.1, 1.0, 1.0}); }) == ErrorCode::parameter);
  CHECK(code_of([&] { bias_bound(s, {1.0, 0.1, 1.0}); }) == ErrorCode::parameter);
  CHECK(code_of([&] { bias_bound(s, {0.1, 0.1, 1.5}); }) == ErrorCode::parameter);
}

TEST_CASE("bias bound is monotone in each argument") {
  const BoundScale s{0.3, 1.7};
  const auto grid = testing::uniforms(200, 1, 0.0, 0.99);
  for (Eigen::Index i = 0; i + 1 < grid.size(); i += 2) {
    const double lo = std::min(grid[i], grid[i + 1]), hi = std::max(grid[i], grid[i + 1]);
    CHECK(bias_bound(s, {lo, 0.3, 1.0}) <= bias_bound(s, {hi, 0.3, 1.0}));
    CHECK(bias_bound(s, {0.3, lo, 1.0}) <= bias_bound(s, {0.3, hi, 1.0}));
    CHECK(bias_bound(s, {0.3, 0.3, lo}) <= bias_bound(s, {0.3, 0.3, hi}));
  }
}

TEST_CASE("robustness value against the quadratic root") {
  const BoundScale unit{1.0, 1.0};
  const auto rv = robustness_value(0.1, 0.0, unit);
  // r / sqrt(1 - r) = 0.1  <=>  r^2 + 0.01 r - 0.01 = 0
  const double root = (-0.01 + std::sqrt(0.0001 + 0.04)) / 2.0;
  CHECK(std::abs(rv.rv - root) < 1e-9);
  CHECK(std::abs(0.1 - bias_bound(unit, {rv.rv, rv.rv, 1.0})) < 1e-8);

  const auto zero = robustness_value(0.0, 0.01, unit);
  CHECK(zero.rv == 0.0);
  CHECK(zero.zero_effect);

  // negative effects are handled by the sign flip
  CHECK(robustness_value(-0.1, 0.0, unit).rv == doctest::Approx(rv.rv));

  // rva is zero exactly when the one-sided bound crosses zero
  const double z = stats::normal_quantile(0.95);
  CHECK(robustness_value(0.1, 0.1 / z + 1e-6, unit).rva == 0.0);
  const auto inside = robustness_value(0.1, 0.02, unit);
  CHECK(inside.rva > 0.0);
  CHECK(std::abs((0.1 - z * 0.02) - bias_bound(unit, {inside.rva, inside.rva, 1.0})) < 1e-8);
}

TEST_CASE("robustness value self-consistency on many scales") {
  for (std::uint64_t k = 0; k < 50; ++k) {
    const auto u = testing::uniforms(3, 100 + k);
    const BoundScale s{0.05 + u[0], 0.5 + 3 * u[1]};
    const double theta = 0.01 + 0.2 * u[2];
    const auto rv = robustness_value(theta, 0.0, s);
    if (rv.rv < 1.0 - 1e-6) CHECK(std::abs(theta - bias_bound(s, {rv.rv, rv.rv, 1.0})) < 1e-8);
  }
}

TEST_CASE("ovb_bound uses residual and representer scales") {
  const Fixture f = confounded(2000, 10);
  const auto& a = f.d.treatment();
  double s2 = 0, n2 = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double g = a[i] == 1.0 ? f.nu.g1_hat[i] : f.nu.g0_hat[i];
    s2 += std::pow(f.d.yield()[i] - g, 2);
    const double al = a[i] / f.nu.m_hat[i] - (1 - a[i]) / (1 - f.nu.m_hat[i]);
    n2 += al * al;
  }
  const double n = 2000;
  const double expected = std::sqrt(s2 / n) * std::sqrt(n2 / n) * std::sqrt(0.04 * 0.05 / 0.95);
  CHECK(ovb_bound(f.scores, f.nu, f.d, {0.04, 0.05, 1.0}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(code_of([&] { ovb_bound(att_scores(f.d, f.nu), f.nu, f.d, {0.04, 0.05, 1.0}); }) == ErrorCode::parameter);
}

TEST_CASE("contour grid") {
  const BoundScale s{0.4, 2.5};
  const std::vector<double> zy{0.0, 0.05, 0.1, 0.15, 0.2}, zd{0.0, 0.05, 0.1, 0.15, 0.2};
  const auto g = contour_grid(0.08, s, zy, zd);
  CHECK(g.lower(0, 0) == 0.08);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index k = 0; k < 5; ++k) {
      CHECK(g.lower(i, k) == 0.08 - bias_bound(s, {zy[static_cast<std::size_t>(i)], zd[static_cast<std::size_t>(k)], 1.0}));
      if (k > 0) CHECK(g.lower(i, k) <= g.lower(i, k - 1));
      if (i > 0) CHECK(g.lower(i, k) <= g.lower(i - 1, k));
    }
  const std::string csv = contour_csv(g);
  CHECK(csv.rfind("zeta_y,zeta_d,lower_bound\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);
}

TEST_CASE("sensitivity report intervals") {
  const auto r = sensitivity_report("x", 0.2, 0.01, {0.5, 2.0}, {0.09, 0.09, 1.0});
  CHECK(r.bound_low == doctest::Approx(0.2 - r.bias_bound));
  CHECK(r.bound_high == doctest::Approx(0.2 + r.bias_bound));
  const double z = stats::normal_quantile(0.95);
  CHECK(r.ci_bound_low == doctest::Approx(r.bound_low - z * 0.01));
  CHECK(r.ci_bound_high == doctest::Approx(r.bound_high + z * 0.01));
  const nlohmann::json j = r;
  CHECK(j.at("rv").get<double>() == r.robustness.rv);
}

TEST_CASE("value sensitivity reductions") {
  const Fixture f = confounded(1500, 20);
  const ConfoundingScenario sc{0.03, 0.03, 1.0};
  const auto ate = effect_sensitivity(f.scores, f.nu, f.d, sc);
  const auto all = value_sensitivity(Eigen::VectorXd::Ones(1500), f.scores, f.nu, f.d, sc);
  CHECK(all.theta_hat == doctest::Approx(ate.theta_hat).epsilon(1e-12));
  CHECK(all.bias_bound == doctest::Approx(ate.bias_bound).epsilon(1e-12));
  CHECK(all.robustness.rv == doctest::Approx(ate.robustness.rv).epsilon(1e-9));
  const auto none = value_sensitivity(Eigen::VectorXd::Zero(1500), f.scores, f.nu, f.d, sc);
  CHECK(none.theta_hat == 0.0);
  CHECK(none.robustness.rv == 0.0);
  CHECK(none.robustness.zero_effect);
}

TEST_CASE("benchmarking a pure-noise column") {
  const Fixture f = confounded(10000, 30);
  BenchmarkSetup setup;
  setup.g_spec = LearnerSpec{LearnerKind::ols};
  setup.m_spec = LearnerSpec{LearnerKind::logistic};
  setup.crossfit.seed = 30;
  const auto row = benchmark_confounder(f.d, {"noise"}, setup, &f.nu);
  CHECK(row.zeta_y < 0.02);
  CHECK(row.zeta_d < 0.02);
  CHECK(row.rho >= -1.0);
  CHECK(row.rho <= 1.0);
  CHECK(row.delta_theta == doctest::Approx(row.theta_long - row.theta_short));
  CHECK(row.theta_long == doctest::Approx(estimate_ate(f.scores).theta_hat).epsilon(1e-12));

  CHECK(code_of([&] { benchmark_confounder(f.d, {}, setup); }) == ErrorCode::parameter);
  CHECK(code_of([&] { benchmark_confounder(f.d, {"x", "noise"}, setup); }) == ErrorCode::parameter);
  CHECK(code_of([&] { benchmark_confounder(f.d, {"missing"}, setup); }) == ErrorCode::feature);

  // dropping the real confounder moves the estimate a long way
  const auto conf = benchmark_confounder(f.d, {"x"}, setup, &f.nu);
  CHECK(conf.zeta_y > 0.5);
  CHECK(std::abs(conf.delta_theta) > 0.3);
}

TEST_CASE("omitting the main component moves the estimate toward the naive contrast") {
  SimConfig cfg;
  cfg.n_lots = 5000;
  cfg.seed = 3;
  const Simulation sim = simulate(cfg);
  BenchmarkSetup setup;
  setup.adjustment = {columns::kMainMean, columns::kSecondaryMean, columns::kInvalidCount, columns::kWorkload,
                      columns::kMainVariance};
  setup.g_spec = LearnerSpec{LearnerKind::boosted_stumps, {{"n_trees", 60}}};
  setup.m_spec = LearnerSpec{LearnerKind::logistic};
  setup.crossfit.seed = 3;
  const auto row = benchmark_confounder(sim.data, {columns::kMainMean, columns::kMainVariance}, setup);
  const double naive = naive_ate(sim.data).theta_hat;
  // the short model sits on the naive side of the long estimate
  CHECK(std::signbit(row.theta_short - row.theta_long) == std::signbit(naive - row.theta_long));
  CHECK(-row.delta_theta * (naive - row.theta_long) > 0.0);
}
