#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rework/diagnostics.hpp"
#include "rework/simulator.hpp"

using namespace rework;

namespace {

// PSB written out with explicit loops.
double psb_loop(const Eigen::VectorXd& x, const Eigen::VectorXd& a, const Eigen::VectorXd& m, int group,
                bool complement) {
  const double n = static_cast<double>(x.size());
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n - 1;
  double num = 0, den = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (a[i] != group) continue;
    const double w = (group == 0 && complement) ? 1.0 / (1.0 - m[i]) : 1.0 / m[i];
    num += w * x[i];
    den += w;
  }
  return std::abs(num / den - mean) / var;
}

}  // namespace

TEST_CASE("balance under randomization is small") {
  const std::size_t n = 10000;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 3);
  x << testing::normals(n, 1), testing::uniforms(n, 2), testing::normals(n, 3, 2.0);
  const auto d = testing::make_dataset({"a", "b", "c"}, x, testing::coin(n, 4), testing::uniforms(n, 5));
  const auto r = psb(d, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 0.5), d.columns());
  REQUIRE(r.rows.size() == 3);
  for (const auto& row : r.rows) {
    CHECK(*row.psb_treated < 0.05);
    CHECK(*row.psb_control < 0.05);
  }
  CHECK(r.all_pass());
}

TEST_CASE("psb matches the loop formula for both weightings") {
  const std::size_t n = 400;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
  x << testing::normals(n, 6), testing::uniforms(n, 7);
  const Eigen::VectorXd a = testing::coin(n, 8, 0.3);
  const Eigen::VectorXd m = testing::uniforms(n, 9, 0.1, 0.9);
  const auto d = testing::make_dataset({"u", "v"}, x, a, testing::uniforms(n, 10));
  for (bool comp : {false, true}) {
    BalanceOptions opt;
    opt.control_weighting = comp ? ControlWeighting::complement_propensity : ControlWeighting::propensity;
    const auto r = psb(d, m, d.columns(), opt);
    for (Eigen::Index c = 0; c < 2; ++c) {
      const auto& row = r.rows[static_cast<std::size_t>(c)];
      CHECK(*row.psb_treated == doctest::Approx(psb_loop(x.col(c), a, m, 1, comp)).epsilon(1e-10));
      CHECK(*row.psb_control == doctest::Approx(psb_loop(x.col(c), a, m, 0, comp)).epsilon(1e-10));
      CHECK(row.pass_treated == (*row.psb_treated < 0.2));
    }
  }
}

TEST_CASE("psb shift and scale behaviour") {
  const std::size_t n = 500;
  const Eigen::VectorXd x = testing::normals(n, 11);
  const Eigen::VectorXd a = testing::coin(n, 12, 0.4);
  const Eigen::VectorXd m = testing::uniforms(n, 13, 0.2, 0.8);
  const auto base = psb(testing::make_dataset({"x"}, x, a, testing::uniforms(n, 14)), m, {"x"}).rows[0];
  const auto shifted =
      psb(testing::make_dataset({"x"}, (x.array() + 7.0).matrix(), a, testing::uniforms(n, 14)), m, {"x"}).rows[0];
  const auto scaled = psb(testing::make_dataset({"x"}, 3.0 * x, a, testing::uniforms(n, 14)), m, {"x"}).rows[0];
  CHECK(*shifted.psb_treated == doctest::Approx(*base.psb_treated).epsilon(1e-9));
  CHECK(*shifted.psb_control == doctest::Approx(*base.psb_control).epsilon(1e-9));
  CHECK(*scaled.psb_treated == doctest::Approx(*base.psb_treated / 3.0).epsilon(1e-9));
}

TEST_CASE("constant covariates are not applicable") {
  Eigen::MatrixXd x(50, 2);
  x << Eigen::VectorXd::Constant(50, 4.0), testing::normals(50, 15);
  const auto d = testing::make_dataset({"k", "z"}, x, testing::coin(50, 16), testing::uniforms(50, 17));
  const auto r = psb(d, Eigen::VectorXd::Constant(50, 0.5), d.columns());
  CHECK_FALSE(r.row("k").applicable);
  CHECK_FALSE(r.row("k").psb_treated.has_value());
  CHECK(r.row("z").applicable);
  const std::string csv = balance_csv(r);
  CHECK(csv.rfind("covariate,A=1,A=0\n", 0) == 0);
}

TEST_CASE("confounded simulator data is imbalanced on the main component") {
  SimConfig cfg;
  cfg.n_lots = 5000;
  const Simulation sim = simulate(cfg);
  const Eigen::VectorXd m = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(sim.data.n()), sim.data.treatment().mean());
  const auto r = psb(sim.data, m, {columns::kMainMean});
  CHECK(std::max(*r.rows[0].psb_treated, *r.rows[0].psb_control) > 0.2);
  CHECK_FALSE(r.all_pass());
}

TEST_CASE("overlap histograms") {
  Eigen::VectorXd x(4), a(4);
  x << 0, 1, 0, 1;
  a << 0, 0, 1, 1;
  const auto h = overlap_histograms(testing::make_dataset({"x"}, x, a, Eigen::VectorXd::Zero(4)), "x", 2);
  CHECK(h.treated == std::vector<std::size_t>{1, 1});
  CHECK(h.control == std::vector<std::size_t>{1, 1});
  CHECK(h.edges.size() == 3);

  const auto flat = overlap_histograms(
      testing::make_dataset({"x"}, Eigen::VectorXd::Constant(10, 2.0), testing::coin(10, 18), Eigen::VectorXd::Zero(10)),
      "x", 5);
  std::size_t occupied = 0;
  for (std::size_t b = 0; b < 5; ++b) occupied += (flat.treated[b] + flat.control[b]) > 0;
  CHECK(occupied == 1);

  SimConfig cfg;
  cfg.n_lots = 3000;
  const Simulation sim = simulate(cfg);
  const auto hs = overlap_histograms(sim.data, columns::kMainMean, 30);
  const Eigen::VectorXd z = sim.data.column(columns::kMainMean);
  const double lo = z.minCoeff(), hi = z.maxCoeff();
  std::vector<std::size_t> t(30, 0), c(30, 0);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    std::size_t b = 0;
    while (b + 1 < 30 && z[i] >= hs.edges[b + 1]) ++b;  // explicit bucketing against the shared edges
    (sim.data.treatment()[i] == 1.0 ? t : c)[b]++;
  }
  CHECK(hs.edges.front() == lo);
  CHECK(hs.edges.back() == hi);
  CHECK(hs.treated == t);
  CHECK(hs.control == c);
  std::size_t nt = 0, nc = 0;
  for (std::size_t b = 0; b < 30; ++b) {
    nt += hs.treated[b];
    nc += hs.control[b];
  }
  CHECK(nt == sim.data.treated_count());
  CHECK(nc == sim.data.n() - sim.data.treated_count());
  CHECK(histogram_csv(hs).rfind("bin_low,bin_high,treated,control\n", 0) == 0);
}
