#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "rework/error.hpp"
#include "rework/policy.hpp"
#include "rework/simulator.hpp"

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

ScoreSet ate_scores(Eigen::VectorXd psi_b) {
  ScoreSet s;
  s.psi_a = Eigen::VectorXd::Constant(psi_b.size(), -1.0);
  s.psi_b = std::move(psi_b);
  return s;
}

CateFit linear_fit(std::size_t n, std::uint64_t seed, double noise = 1.0) {
  const auto z = testing::uniforms(n, seed, -1.0, 1.0);
  const Eigen::VectorXd psi = z + noise * testing::normals(n, seed + 1);
  return project_scores(psi, build_basis(z, 3, 5), z, {"z"});
}

void collect_thresholds(const PolicyTree& t, int id, int level, std::vector<int>& leaf_levels) {
  const auto& node = t.nodes[static_cast<std::size_t>(id)];
  if (node.feature < 0) {
    leaf_levels.push_back(level);
    return;
  }
  collect_thresholds(t, node.left, level + 1, leaf_levels);
  collect_thresholds(t, node.right, level + 1, leaf_levels);
}

}  // namespace

TEST_CASE("weighted classification targets") {
  const auto t = weighted_classification_targets(Eigen::Vector4d(0.5, 0.1, -0.2, 0.3), 0.1);
  CHECK(t.weights.isApprox(Eigen::Vector4d(0.4, 0.0, 0.3, 0.2)));
  CHECK(t.labels == Eigen::Vector4d(1, -1, -1, 1));  // sign(0) = -1
}

TEST_CASE("candidate thresholds") {
  Eigen::VectorXd z(6);
  z << 3, 1, 2, 2, 5, 1;
  CHECK(candidate_thresholds(z) == std::vector<double>{1.5, 2.5, 4.0});
  bool down = true;
  candidate_thresholds(testing::uniforms(200, 1), 256, &down);
  CHECK_FALSE(down);
  const auto many = candidate_thresholds(testing::uniforms(2000, 2), 256, &down);
  CHECK(down);
  CHECK(many.size() <= 256);
  CHECK(std::is_sorted(many.begin(), many.end()));
  const auto all = testing::midpoints(testing::uniforms(2000, 2));
  const std::set<double> pool(all.begin(), all.end());
  for (double t : many) CHECK(pool.count(t) == 1);
}

TEST_CASE("uniformly positive scores give the treat-everyone tree") {
  const Eigen::MatrixXd z = testing::normals(50, 3);
  const Eigen::VectorXd psi = testing::uniforms(50, 4, 0.1, 1.0);
  for (auto mode : {TreeSearch::greedy, TreeSearch::exact}) {
    const auto tree = fit_policy_tree(z, psi, 0.05, 2, mode);
    CHECK(tree.decide(z).minCoeff() == 1.0);
    CHECK(tree.decide(Eigen::MatrixXd::Constant(1, 1, 100.0))[0] == 1.0);
  }
}

TEST_CASE("separable one-dimensional scores split at the straddling midpoint") {
  Eigen::VectorXd z(6);
  z << -3, -2, -0.5, 0.5, 2, 3;
  Eigen::VectorXd psi(6);
  for (int i = 0; i < 6; ++i) psi[i] = z[i] > 0 ? 1.0 : -1.0;
  const auto tree = fit_policy_tree(z, psi, 0.0, 1, TreeSearch::greedy, {"z"});
  CHECK(tree.nodes[0].feature == 0);
  CHECK(tree.nodes[0].threshold == 0.0);
  CHECK(policy_objective(tree.decide(z), psi, 0.0) == 1.0);
}

TEST_CASE("exact depth-two search matches full enumeration") {
  const Eigen::Index n = 150;
  Eigen::MatrixXd z(n, 3);
  z << testing::normals(150, 5), testing::uniforms(150, 6), testing::normals(150, 7, 2.0);
  const Eigen::VectorXd psi = (z.col(0).array() * z.col(1).array() - 0.2).matrix() + testing::normals(150, 8);
  const auto exact = fit_policy_tree(z, psi, 0.0, 2, TreeSearch::exact);
  const auto greedy = fit_policy_tree(z, psi, 0.0, 2, TreeSearch::greedy);
  const double oracle = testing::enumerate_depth_two(z, psi).objective;
  const double got = policy_objective(exact.decide(z), psi, 0.0);
  CHECK(std::abs(got - oracle) <= 1e-12);
  CHECK(policy_objective(greedy.decide(z), psi, 0.0) <= got + 1e-12);
  CHECK(code_of([&] { fit_policy_tree(z, psi, 0.0, 3, TreeSearch::exact); }) == ErrorCode::unsupported);
}

TEST_CASE("trees are complete with thresholds at observed midpoints") {
  Eigen::MatrixXd z(120, 2);
  z << testing::normals(120, 9), testing::normals(120, 10);
  const Eigen::VectorXd psi = testing::normals(120, 11);
  std::set<double> pool;
  for (Eigen::Index f = 0; f < 2; ++f)
    for (double t : testing::midpoints(z.col(f))) pool.insert(t);
  for (int depth : {1, 2, 3}) {
    const auto tree = fit_policy_tree(z, psi, 0.0, depth, TreeSearch::greedy);
    std::vector<int> levels;
    collect_thresholds(tree, 0, 0, levels);
    CHECK(levels.size() == (std::size_t{1} << depth));
    for (int l : levels) CHECK(l == depth);
    for (const auto& node : tree.nodes)
      if (node.feature >= 0) CHECK(pool.count(node.threshold) == 1);
  }
}

TEST_CASE("greedy objective never beats exact at depth two") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Eigen::MatrixXd z(80, 2);
    z << testing::normals(80, 100 + seed), testing::normals(80, 200 + seed);
    const Eigen::VectorXd psi = testing::normals(80, 300 + seed);
    const double e = policy_objective(fit_policy_tree(z, psi, 0.1, 2, TreeSearch::exact).decide(z), psi, 0.1);
    const double g = policy_objective(fit_policy_tree(z, psi, 0.1, 2, TreeSearch::greedy).decide(z), psi, 0.1);
    CHECK(g <= e + 1e-12);
  }
}

TEST_CASE("tree JSON round trip") {
  Eigen::MatrixXd z(60, 2);
  z << testing::normals(60, 12), testing::normals(60, 13);
  const auto tree = fit_policy_tree(z, testing::normals(60, 14), 0.0, 2, TreeSearch::exact, {"a", "b"});
  const nlohmann::json j = tree;
  const auto back = j.get<PolicyTree>();
  CHECK(back.decide(z) == tree.decide(z));
  CHECK(back.features == tree.features);
  CHECK(back.mode == TreeSearch::exact);
  const Policy p = tree_policy(tree, 0.0);
  const nlohmann::json pj = p;
  CHECK(pj.get<Policy>().decide(z) == p.decide(z));
}

TEST_CASE("observed policy replays the treatment") {
  const Eigen::VectorXd a = testing::coin(30, 15);
  const auto d = testing::make_dataset({"x"}, testing::normals(30, 16), a, testing::uniforms(30, 17));
  CHECK(observed_policy().decide(d) == a);
}

TEST_CASE("threshold policies") {
  const CateFit fit = linear_fit(400, 18);
  const Eigen::VectorXd q = testing::uniforms(200, 19, -1.0, 1.0);
  const auto theta = cate_predict(fit, q).theta;
  double last_share = 2.0;
  for (double g : {0.0, 0.1, 0.2, 0.4, 0.8}) {
    const auto d = threshold_policy(fit, g).decide(q);
    for (Eigen::Index i = 0; i < q.size(); ++i) CHECK(d[i] == (theta[i] >= g ? 1.0 : 0.0));
    CHECK(d.mean() <= last_share);
    last_share = d.mean();
  }
  CHECK(code_of([&] { threshold_policy(fit, -0.1); }) == ErrorCode::parameter);
}

TEST_CASE("conservative policies") {
  const CateFit fit = linear_fit(500, 20);
  const auto band = multiplier_bootstrap_band(fit, linear_grid(-1, 1, 41), {}, 0.05, 500, 2);
  const Eigen::VectorXd q = testing::uniforms(300, 21, -1.0, 1.0);
  for (double g : {0.01, 0.03, 0.05, 0.3}) {
    const auto cons = conservative_policy(fit, band, g).decide(q);
    const auto thr = threshold_policy(fit, g).decide(q);
    for (Eigen::Index i = 0; i < q.size(); ++i) CHECK(cons[i] <= thr[i]);
  }
  const double above = band.lower.maxCoeff() + 0.01;
  CHECK(conservative_policy(fit, band, above).decide(q).maxCoeff() == 0.0);
  CHECK(code_of([&] { conservative_policy(fit, band, 0.0).decide(Eigen::VectorXd::Constant(1, 1.5)); }) ==
        ErrorCode::extrapolation);

  // zero residuals collapse the band: identical to the threshold rule
  const auto z = testing::uniforms(300, 22, -1.0, 1.0);
  const CateFit exact = project_scores(0.5 * z, build_basis(z, 3, 5), z, {"z"});
  const auto flat = multiplier_bootstrap_band(exact, linear_grid(-1, 1, 201), {}, 0.05, 200, 3);
  const Eigen::VectorXd q2 = testing::uniforms(300, 23, -0.99, 0.99);
  for (double g : {0.0, 0.1, 0.25}) {
    const auto c = conservative_policy(exact, flat, g).decide(q2);
    const auto t = threshold_policy(exact, g).decide(q2);
    const auto th = cate_predict(exact, q2).theta;
    for (Eigen::Index i = 0; i < q2.size(); ++i)
      if (std::abs(th[i] - g) > 1e-6) CHECK(c[i] == t[i]);
  }
}

TEST_CASE("policy evaluation") {
  const Eigen::VectorXd psi = testing::normals(500, 24, 0.5).array() + 0.1;
  const ScoreSet s = ate_scores(psi);
  const auto none = evaluate_policy(Eigen::VectorXd::Zero(500), s);
  for (const auto& v : none.values) CHECK(v.value.theta_hat == 0.0);
  CHECK_FALSE(none.gate.has_value());
  CHECK(none.share_treated == 0.0);

  const auto all = evaluate_policy(Eigen::VectorXd::Ones(500), s);
  const auto ate = estimate_ate(s);
  CHECK(all.values[0].cost == 0.0);
  CHECK(all.values[0].value.theta_hat == ate.theta_hat);
  CHECK(all.values[0].value.std_err == doctest::Approx(ate.std_err).epsilon(1e-12));
  CHECK(all.share_treated == 1.0);

  const Eigen::VectorXd pi = testing::coin(500, 25, 0.4);
  const auto r = evaluate_policy(pi, s, {0.0, 0.01, 0.03, 0.1});
  for (std::size_t k = 1; k < r.values.size(); ++k) CHECK(r.values[k].value.theta_hat <= r.values[k - 1].value.theta_hat);
  // explicit loop oracle
  double sum = 0, gate_sum = 0, treated = 0;
  for (Eigen::Index i = 0; i < 500; ++i) {
    sum += pi[i] * (psi[i] - 0.03);
    if (pi[i] == 1.0) {
      gate_sum += psi[i];
      treated += 1;
    }
  }
  CHECK(r.values[2].value.theta_hat == doctest::Approx(sum / 500).epsilon(1e-12));
  REQUIRE(r.gate.has_value());
  CHECK(r.gate->theta_hat == doctest::Approx(gate_sum / treated).epsilon(1e-12));
  CHECK(r.share_treated == doctest::Approx(treated / 500));

  const nlohmann::json j = r;
  CHECK(j.get<PolicyEvalReport>().values.size() == 4);
  const std::string csv = policy_values_csv({r});
  CHECK(csv.rfind("policy,share_treated,gate,0_2.5%,0_effect,0_97.5%,0.01_2.5%", 0) == 0);
}

TEST_CASE("regret against the oracle") {
  SimConfig cfg;
  cfg.n_lots = 1500;
  cfg.seed = 7;
  const Simulation sim = simulate(cfg);
  const std::vector<std::string> feats{columns::kMainMean, columns::kSecondaryMean};
  const Eigen::MatrixXd z = sim.data.select(feats);
  const Eigen::VectorXd tau = sim.oracle.effects();

  const auto best = fit_policy_tree(z, tau, 0.0, 2, TreeSearch::exact, feats);
  const double re = regret_vs_oracle(tree_policy(best, 0.0), sim.data, &sim.oracle);
  CHECK(re == 0.0);
  const auto greedy = fit_policy_tree(z, tau, 0.0, 2, TreeSearch::greedy, feats);
  const double rg = regret_vs_oracle(tree_policy(greedy, 0.0), sim.data, &sim.oracle);
  CHECK(rg >= 0.0);
  CHECK(re <= rg + 1e-12);

  CHECK(code_of([&] { regret_vs_oracle(tree_policy(best, 0.0), sim.data, nullptr); }) == ErrorCode::oracle_unavailable);
  CHECK(code_of([&] { regret_vs_oracle(observed_policy(), sim.data, &sim.oracle); }) == ErrorCode::unsupported);

  // never-treat when every effect is positive: regret is the mean effect
  OracleTable pos = sim.oracle;
  pos.y1 = pos.y0.array() + testing::uniforms(pos.n(), 26, 0.01, 0.2).array();
  const double r0 = regret_vs_oracle(tree_policy(constant_tree(0, feats), 0.0), sim.data, &pos);
  CHECK(r0 == doctest::Approx(pos.effects().mean()).epsilon(1e-12));
}
