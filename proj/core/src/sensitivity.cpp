#include "rework/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "rework/csv.hpp"
#include "rework/error.hpp"
#include "rework/parallel.hpp"
#include "rework/stats.hpp"

namespace rework {

namespace {

constexpr double kRvUpper = 1.0 - 1e-9;
constexpr double kRvTol = 1e-10;
constexpr int kRvMaxIter = 200;

Eigen::VectorXd representer(const Eigen::VectorXd& a, const Eigen::VectorXd& m) {
  Eigen::VectorXd alpha(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) alpha[i] = a[i] / m[i] - (1.0 - a[i]) / (1.0 - m[i]);
  return alpha;
}

double outcome_r2(const Eigen::VectorXd& y, const Eigen::VectorXd& g) {
  const double var = (y.array() - y.mean()).square().mean();
  if (!(var > 0.0)) return 0.0;
  return 1.0 - (y - g).squaredNorm() / static_cast<double>(y.size()) / var;
}

double solve_rv(double target, const BoundScale& scale) {
  if (!(target > 0.0)) return 0.0;
  auto excess = [&](double r) { return target - bias_bound(scale, ConfoundingScenario{r, r, 1.0}); };
  if (excess(kRvUpper) > 0.0) return kRvUpper;  // even the strongest confounder cannot explain it
  double lo = 0.0, hi = kRvUpper;
  for (int it = 0; it < kRvMaxIter; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = excess(mid);
    if (f > 0.0) lo = mid;
    else hi = mid;
    if (hi - lo < kRvTol && std::abs(f) < 1e-12) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void ConfoundingScenario::validate() const {
  if (!(zeta_y >= 0.0 && zeta_y < 1.0)) throw Error(ErrorCode::parameter, "zeta_y must lie in [0, 1)");
  if (!(zeta_d >= 0.0 && zeta_d < 1.0)) throw Error(ErrorCode::parameter, "zeta_d must lie in [0, 1)");
  if (!(rho >= -1.0 && rho <= 1.0)) throw Error(ErrorCode::parameter, "rho must lie in [-1, 1]");
}

BoundScale bound_scale(const Dataset& d, const NuisanceEstimates& nu, const Eigen::VectorXd* weights) {
  const auto& a = d.treatment();
  const auto& y = d.yield();
  if (static_cast<std::size_t>(a.size()) != nu.n()) throw Error(ErrorCode::shape, "nuisances do not cover the data");
  if (weights && weights->size() != a.size()) throw Error(ErrorCode::shape, "weights do not cover the data");
  const Eigen::VectorXd residual = y - nu.g_observed(a);
  Eigen::VectorXd alpha = representer(a, nu.m_hat);
  if (weights) alpha = alpha.cwiseProduct(*weights);
  BoundScale s;
  s.sigma = std::sqrt(residual.squaredNorm() / static_cast<double>(a.size()));
  s.nu = std::sqrt(alpha.squaredNorm() / static_cast<double>(a.size()));
  return s;
}

double bias_bound(const BoundScale& scale, const ConfoundingScenario& sc) {
  sc.validate();
  return std::abs(sc.rho) * scale.sigma * scale.nu * std::sqrt(sc.zeta_y * sc.zeta_d / (1.0 - sc.zeta_d));
}

double ovb_bound(const ScoreSet& scores, const NuisanceEstimates& nu, const Dataset& d, const ConfoundingScenario& sc) {
  if (scores.target != Target::ate) throw Error(ErrorCode::parameter, "bounds are defined for ATE scores");
  return bias_bound(bound_scale(d, nu), sc);
}

RobustnessValues robustness_value(double theta, double std_err, const BoundScale& scale, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::parameter, "alpha must lie in (0,1)");
  RobustnessValues out;
  if (theta == 0.0) {
    out.zero_effect = true;
    return out;
  }
  const double magnitude = std::abs(theta);
  out.rv = solve_rv(magnitude, scale);
  out.rva = solve_rv(magnitude - stats::normal_quantile(1.0 - alpha) * std_err, scale);
  return out;
}

RobustnessValues robustness_value(const ScoreSet& scores, const NuisanceEstimates& nu, const Dataset& d, double alpha) {
  const auto est = estimate_effect(scores, alpha);
  return robustness_value(est.theta_hat, est.std_err, bound_scale(d, nu), alpha);
}

void to_json(nlohmann::json& j, const BenchmarkRow& r) {
  j = {{"name", r.name},       {"omitted", r.omitted},         {"zeta_y", r.zeta_y},
       {"zeta_d", r.zeta_d},   {"rho", r.rho},                 {"delta_theta", r.delta_theta},
       {"theta_long", r.theta_long}, {"theta_short", r.theta_short}, {"rho_clamped", r.rho_clamped}};
}

BenchmarkRow benchmark_confounder(const Dataset& d, const std::vector<std::string>& omit, const BenchmarkSetup& setup,
                                  const NuisanceEstimates* long_nuisances, std::string name) {
  if (omit.empty()) throw Error(ErrorCode::parameter, "benchmark needs at least one omitted column");
  const std::vector<std::string> adjustment = setup.adjustment.empty() ? d.columns() : setup.adjustment;
  for (const auto& c : omit) {
    d.index_of(c);
    if (std::find(adjustment.begin(), adjustment.end(), c) == adjustment.end())
      throw Error(ErrorCode::feature, "omitted column '" + c + "' is not in the adjustment set");
  }
  std::vector<std::string> short_set;
  for (const auto& c : adjustment)
    if (std::find(omit.begin(), omit.end(), c) == omit.end()) short_set.push_back(c);
  if (short_set.empty()) throw Error(ErrorCode::parameter, "omitting every column leaves an empty adjustment set");

  CrossfitOptions long_opts = setup.crossfit;
  long_opts.features = adjustment;
  NuisanceEstimates long_nu =
      long_nuisances ? *long_nuisances : crossfit_nuisances(d, setup.g_spec, setup.m_spec, long_opts);
  CrossfitOptions short_opts = setup.crossfit;
  short_opts.features = short_set;
  const NuisanceEstimates short_nu = crossfit_nuisances(d, setup.g_spec, setup.m_spec, short_opts);

  const auto& a = d.treatment();
  const auto& y = d.yield();
  const Eigen::VectorXd g_long = long_nu.g_observed(a), g_short = short_nu.g_observed(a);
  const Eigen::VectorXd alpha_long = representer(a, long_nu.m_hat), alpha_short = representer(a, short_nu.m_hat);

  BenchmarkRow row;
  row.name = name.empty() ? omit.front() : std::move(name);
  row.omitted = omit;
  row.theta_long = estimate_ate(aipw_scores(d, long_nu)).theta_hat;
  row.theta_short = estimate_ate(aipw_scores(d, short_nu)).theta_hat;
  row.delta_theta = row.theta_long - row.theta_short;

  const double r2_long = outcome_r2(y, g_long), r2_short = outcome_r2(y, g_short);
  row.zeta_y = r2_long < 1.0 ? std::max(0.0, (r2_long - r2_short) / (1.0 - r2_long)) : 0.0;
  row.zeta_y = std::min(row.zeta_y, 1.0);
  const double nu2_long = alpha_long.squaredNorm(), nu2_short = alpha_short.squaredNorm();
  row.zeta_d = nu2_long > 0.0 ? std::clamp(1.0 - nu2_short / nu2_long, 0.0, 1.0) : 0.0;

  const double corr = stats::correlation(g_long - g_short, alpha_long - alpha_short);
  double rho = std::abs(corr) * (row.delta_theta < 0.0 ? -1.0 : 1.0);
  row.rho_clamped = rho < -1.0 || rho > 1.0;
  row.rho = std::clamp(rho, -1.0, 1.0);
  return row;
}

ContourGrid contour_grid(double theta, const BoundScale& scale, std::vector<double> zeta_y, std::vector<double> zeta_d) {
  ContourGrid g;
  g.zeta_y = std::move(zeta_y);
  g.zeta_d = std::move(zeta_d);
  g.lower.resize(static_cast<Eigen::Index>(g.zeta_y.size()), static_cast<Eigen::Index>(g.zeta_d.size()));
  for (std::size_t i = 0; i < g.zeta_y.size(); ++i)
    for (std::size_t k = 0; k < g.zeta_d.size(); ++k)
      g.lower(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          theta - bias_bound(scale, ConfoundingScenario{g.zeta_y[i], g.zeta_d[k], 1.0});
  return g;
}

std::string contour_csv(const ContourGrid& grid) {
  csv::Writer w({"zeta_y", "zeta_d", "lower_bound"});
  for (std::size_t i = 0; i < grid.zeta_y.size(); ++i)
    for (std::size_t k = 0; k < grid.zeta_d.size(); ++k)
      w.row({csv::format(grid.zeta_y[i]), csv::format(grid.zeta_d[k]),
             csv::format(grid.lower(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)))});
  return w.str();
}

void to_json(nlohmann::json& j, const SensitivityReport& r) {
  auto benchmarks = nlohmann::json::array();
  for (const auto& b : r.benchmarks) benchmarks.push_back(b);
  j = {{"label", r.label},
       {"theta_hat", r.theta_hat},
       {"std_err", r.std_err},
       {"alpha", r.alpha},
       {"sigma", r.scale.sigma},
       {"nu", r.scale.nu},
       {"scenario", {{"zeta_y", r.scenario.zeta_y}, {"zeta_d", r.scenario.zeta_d}, {"rho", r.scenario.rho}}},
       {"bias_bound", r.bias_bound},
       {"bounds", {r.bound_low, r.bound_high}},
       {"ci_bounds", {r.ci_bound_low, r.ci_bound_high}},
       {"rv", r.robustness.rv},
       {"rva", r.robustness.rva},
       {"zero_effect", r.robustness.zero_effect},
       {"benchmarks", benchmarks}};
}

SensitivityReport sensitivity_report(std::string label, double theta, double std_err, const BoundScale& scale,
                                     const ConfoundingScenario& scenario, double alpha) {
  SensitivityReport r;
  r.label = std::move(label);
  r.theta_hat = theta;
  r.std_err = std_err;
  r.alpha = alpha;
  r.scale = scale;
  r.scenario = scenario;
  r.bias_bound = bias_bound(scale, scenario);
  r.bound_low = theta - r.bias_bound;
  r.bound_high = theta + r.bias_bound;
  const double z = stats::normal_quantile(1.0 - alpha);
  r.ci_bound_low = r.bound_low - z * std_err;
  r.ci_bound_high = r.bound_high + z * std_err;
  r.robustness = robustness_value(theta, std_err, scale, alpha);
  return r;
}

SensitivityReport effect_sensitivity(const ScoreSet& scores, const NuisanceEstimates& nu, const Dataset& d,
                                     const ConfoundingScenario& scenario, double alpha) {
  if (scores.target != Target::ate) throw Error(ErrorCode::parameter, "bounds are defined for ATE scores");
  const auto est = estimate_ate(scores, alpha);
  return sensitivity_report("ATE", est.theta_hat, est.std_err, bound_scale(d, nu), scenario, alpha);
}

SensitivityReport value_sensitivity(const Eigen::VectorXd& decisions, const ScoreSet& holdout,
                                    const NuisanceEstimates& holdout_nu, const Dataset& holdout_data,
                                    const ConfoundingScenario& scenario, double cost, double alpha, std::string label) {
  const std::size_t n = holdout.n();
  if (static_cast<std::size_t>(decisions.size()) != n) throw Error(ErrorCode::shape, "decisions and scores differ in rows");
  if (n < 2) throw Error(ErrorCode::parameter, "need at least two rows");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = decisions[i] * (holdout.psi_b[i] - cost);
  const double theta = stats::mean(v);
  const double se = stats::sd(v) / std::sqrt(static_cast<double>(n));
  return sensitivity_report(label.empty() ? "value" : std::move(label), theta, se,
                            bound_scale(holdout_data, holdout_nu, &decisions), scenario, alpha);
}

}  // namespace rework
