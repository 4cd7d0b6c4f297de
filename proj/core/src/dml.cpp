#include "rework/dml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rework/error.hpp"
#include "rework/parallel.hpp"
#include "rework/random.hpp"
#include "rework/stats.hpp"

namespace rework {

Eigen::VectorXd NuisanceEstimates::g_observed(const Eigen::VectorXd& treatment) const {
  Eigen::VectorXd out(treatment.size());
  for (Eigen::Index i = 0; i < treatment.size(); ++i) out[i] = treatment[i] == 1.0 ? g1_hat[i] : g0_hat[i];
  return out;
}

ClipResult clip_propensity(const Eigen::VectorXd& m_raw, double lo, double hi) {
  if (!(lo > 0.0 && hi < 1.0 && lo < hi)) throw Error(ErrorCode::parameter, "clip bounds must satisfy 0 < lo < hi < 1");
  ClipResult out;
  out.m = m_raw;
  for (Eigen::Index i = 0; i < out.m.size(); ++i) {
    const double v = std::clamp(m_raw[i], lo, hi);
    if (v != m_raw[i]) ++out.clipped_count;
    out.m[i] = v;
  }
  return out;
}

NuisanceEstimates make_nuisances(Eigen::VectorXd g0, Eigen::VectorXd g1, Eigen::VectorXd m_raw, ClipBounds clip) {
  if (g0.size() != g1.size() || g0.size() != m_raw.size())
    throw Error(ErrorCode::shape, "nuisance vectors differ in length");
  NuisanceEstimates nu;
  auto clipped = clip_propensity(m_raw, clip.lo, clip.hi);
  nu.g0_hat = std::move(g0);
  nu.g1_hat = std::move(g1);
  nu.m_hat_raw = std::move(m_raw);
  nu.m_hat = std::move(clipped.m);
  nu.clipped_count = clipped.clipped_count;
  nu.clip = clip;
  return nu;
}

NuisanceEstimates crossfit_nuisances(const Dataset& d, const LearnerSpec& g_spec, const LearnerSpec& m_spec,
                                     const CrossfitOptions& options) {
  const std::size_t n = d.n();
  const std::size_t k = options.k;
  const Eigen::MatrixXd x = options.features.empty() ? d.features() : d.select(options.features);
  const Eigen::VectorXd& a = d.treatment();
  const Eigen::VectorXd& y = d.yield();

  const std::size_t treated = d.treated_count();
  if (treated < k || n - treated < k)
    throw Error(ErrorCode::fold_degeneracy, "each treatment group needs at least k=" + std::to_string(k) + " rows");
  FoldAssignment folds = kfold_split(n, k, derive_seed(options.seed, "folds"));

  std::vector<std::vector<std::size_t>> train_rows(k), test_rows(k), train_treated(k), train_control(k);
  for (std::size_t f = 0; f < k; ++f) {
    test_rows[f] = folds.rows_in(f);
    train_rows[f] = folds.rows_outside(f);
    for (auto r : train_rows[f]) (a[static_cast<Eigen::Index>(r)] == 1.0 ? train_treated[f] : train_control[f]).push_back(r);
    if (train_treated[f].size() < 2 || train_control[f].size() < 2)
      throw Error(ErrorCode::fold_degeneracy,
                  "training complement of fold " + std::to_string(f) + " lacks one treatment class");
  }

  Eigen::VectorXd g0(n), g1(n), m(n);
  // Task t: fold t/3, model t%3 (0 = g0, 1 = g1, 2 = m). Each task writes only
  // into the rows of its own fold.
  parallel_for(3 * k, [&](std::size_t task) {
    const std::size_t f = task / 3;
    const std::size_t which = task % 3;
    const Eigen::MatrixXd x_test = stats::subset_rows(x, test_rows[f]);
    Eigen::VectorXd pred;
    if (which == 2) {
      LearnerSpec spec = m_spec;
      spec.seed = derive_seed(options.seed ^ m_spec.seed, "crossfit_m", f);
      auto model = fit_classifier(spec, stats::subset_rows(x, train_rows[f]), stats::subset(a, train_rows[f]));
      pred = model.predict(x_test);
    } else {
      const auto& rows = which == 0 ? train_control[f] : train_treated[f];
      LearnerSpec spec = g_spec;
      spec.seed = derive_seed(options.seed ^ g_spec.seed, which == 0 ? "crossfit_g0" : "crossfit_g1", f);
      auto model = fit_regressor(spec, stats::subset_rows(x, rows), stats::subset(y, rows));
      pred = model.predict(x_test);
    }
    Eigen::VectorXd& target = which == 0 ? g0 : which == 1 ? g1 : m;
    for (std::size_t i = 0; i < test_rows[f].size(); ++i)
      target[static_cast<Eigen::Index>(test_rows[f][i])] = pred[static_cast<Eigen::Index>(i)];
  });

  NuisanceEstimates nu = make_nuisances(std::move(g0), std::move(g1), std::move(m), options.clip);
  nu.folds = std::move(folds);
  return nu;
}

NuisanceEstimates subset(const NuisanceEstimates& nu, std::span<const std::size_t> rows) {
  NuisanceEstimates out;
  out.g0_hat = stats::subset(nu.g0_hat, rows);
  out.g1_hat = stats::subset(nu.g1_hat, rows);
  out.m_hat_raw = stats::subset(nu.m_hat_raw, rows);
  out.m_hat = stats::subset(nu.m_hat, rows);
  out.clip = nu.clip;
  out.folds.k = nu.folds.k;
  out.folds.seed = nu.folds.seed;
  if (!nu.folds.fold_of.empty())
    for (auto r : rows) out.folds.fold_of.push_back(nu.folds.fold_of.at(r));
  for (Eigen::Index i = 0; i < out.m_hat.size(); ++i)
    if (out.m_hat[i] != out.m_hat_raw[i]) ++out.clipped_count;
  return out;
}

ScoreSet subset(const ScoreSet& s, std::span<const std::size_t> rows) {
  return ScoreSet{stats::subset(s.psi_a, rows), stats::subset(s.psi_b, rows), s.target};
}

const char* to_string(Target t) { return t == Target::ate ? "ATE" : "ATT"; }

namespace {

void check_rows(const Eigen::VectorXd& a, const Eigen::VectorXd& y, const NuisanceEstimates& nu) {
  if (a.size() != y.size() || static_cast<std::size_t>(a.size()) != nu.n() || nu.g0_hat.size() != a.size() ||
      nu.g1_hat.size() != a.size())
    throw Error(ErrorCode::shape, "nuisances do not cover the data rows");
}

}  // namespace

ScoreSet aipw_scores(const Eigen::VectorXd& a, const Eigen::VectorXd& y, const NuisanceEstimates& nu) {
  check_rows(a, y, nu);
  ScoreSet s;
  s.target = Target::ate;
  s.psi_a = Eigen::VectorXd::Constant(a.size(), -1.0);
  s.psi_b.resize(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double m = nu.m_hat[i];
    s.psi_b[i] = nu.g1_hat[i] - nu.g0_hat[i] + a[i] * (y[i] - nu.g1_hat[i]) / m -
                 (1.0 - a[i]) * (y[i] - nu.g0_hat[i]) / (1.0 - m);
  }
  return s;
}

ScoreSet aipw_scores(const Dataset& d, const NuisanceEstimates& nu) { return aipw_scores(d.treatment(), d.yield(), nu); }

ScoreSet att_scores(const Eigen::VectorXd& a, const Eigen::VectorXd& y, const NuisanceEstimates& nu) {
  check_rows(a, y, nu);
  const double p = stats::mean(a);
  if (!(p > 0.0)) throw Error(ErrorCode::estimand_undefined, "ATT undefined without treated rows");
  ScoreSet s;
  s.target = Target::att;
  s.psi_a.resize(a.size());
  s.psi_b.resize(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double m = nu.m_hat[i];
    const double r0 = y[i] - nu.g0_hat[i];
    s.psi_b[i] = (a[i] * r0 - m * (1.0 - a[i]) * r0 / (1.0 - m)) / p;
    s.psi_a[i] = -a[i] / p;
  }
  return s;
}

ScoreSet att_scores(const Dataset& d, const NuisanceEstimates& nu) { return att_scores(d.treatment(), d.yield(), nu); }

void to_json(nlohmann::json& j, const EffectEstimate& e) {
  j = nlohmann::json{{"target", e.target},   {"coef", e.theta_hat}, {"std_err", e.std_err},
                     {"ci_low", e.ci_low},   {"ci_high", e.ci_high}, {"n", e.n},
                     {"alpha", e.alpha}};
}

void from_json(const nlohmann::json& j, EffectEstimate& e) {
  e.target = j.at("target").get<std::string>();
  e.theta_hat = j.at("coef").get<double>();
  e.std_err = j.at("std_err").get<double>();
  e.ci_low = j.at("ci_low").get<double>();
  e.ci_high = j.at("ci_high").get<double>();
  e.n = j.at("n").get<std::size_t>();
  e.alpha = j.value("alpha", 0.05);
}

EffectEstimate make_estimate(std::string target, double theta, double se, std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::parameter, "alpha must lie in (0,1)");
  const double z = stats::normal_quantile(1.0 - alpha / 2.0);
  EffectEstimate e;
  e.target = std::move(target);
  e.theta_hat = theta;
  e.std_err = se;
  e.ci_low = theta - z * se;
  e.ci_high = theta + z * se;
  e.n = n;
  e.alpha = alpha;
  return e;
}

EffectEstimate estimate_effect(const ScoreSet& s, double alpha) {
  const std::size_t n = s.n();
  if (n < 2) throw Error(ErrorCode::parameter, "need at least two scores");
  const double ja = stats::mean(s.psi_a);
  if (ja == 0.0) throw Error(ErrorCode::estimand_undefined, "mean of psi_a is zero");
  const double theta = -stats::mean(s.psi_b) / ja;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double psi = s.psi_a[r] * theta + s.psi_b[r];
    ss += psi * psi;
  }
  const double var = ss / static_cast<double>(n - 1);
  const double se = std::sqrt(var / static_cast<double>(n)) / std::abs(ja);
  return make_estimate(to_string(s.target), theta, se, n, alpha);
}

EffectEstimate estimate_ate(const ScoreSet& s, double alpha) {
  if (s.target != Target::ate) throw Error(ErrorCode::parameter, "estimate_ate needs ATE scores");
  // psi_a ≡ -1: θ̂ = mean(psi_b) and se = sd(psi_b)/√n.
  const std::size_t n = s.n();
  if (n < 2) throw Error(ErrorCode::parameter, "need at least two scores");
  return make_estimate("ATE", stats::mean(s.psi_b), stats::sd(s.psi_b) / std::sqrt(static_cast<double>(n)), n, alpha);
}

EffectEstimate estimate_att(const ScoreSet& s, double alpha) {
  if (s.target != Target::att) throw Error(ErrorCode::parameter, "estimate_att needs ATT scores");
  return estimate_effect(s, alpha);
}

EffectEstimate naive_ate(const Eigen::VectorXd& a, const Eigen::VectorXd& y, double alpha) {
  std::vector<double> y1, y0;
  for (Eigen::Index i = 0; i < a.size(); ++i) (a[i] == 1.0 ? y1 : y0).push_back(y[i]);
  if (y1.empty() || y0.empty()) throw Error(ErrorCode::estimand_undefined, "naive estimate needs both groups");
  const double diff = stats::mean(y1) - stats::mean(y0);
  const double se = std::sqrt(stats::variance(y1) / static_cast<double>(y1.size()) +
                              stats::variance(y0) / static_cast<double>(y0.size()));
  return make_estimate("naive", diff, se, static_cast<std::size_t>(a.size()), alpha);
}

EffectEstimate naive_ate(const Dataset& d, double alpha) { return naive_ate(d.treatment(), d.yield(), alpha); }

RmseReport rmse_report(const NuisanceEstimates& nu, const Dataset& d) {
  const auto& a = d.treatment();
  const auto& y = d.yield();
  check_rows(a, y, nu);
  double sm = 0.0, s0 = 0.0, s1 = 0.0;
  std::size_t n0 = 0, n1 = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    sm += (nu.m_hat_raw[i] - a[i]) * (nu.m_hat_raw[i] - a[i]);
    if (a[i] == 1.0) {
      s1 += (nu.g1_hat[i] - y[i]) * (nu.g1_hat[i] - y[i]);
      ++n1;
    } else {
      s0 += (nu.g0_hat[i] - y[i]) * (nu.g0_hat[i] - y[i]);
      ++n0;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  RmseReport r;
  r.rmse_m = a.size() ? std::sqrt(sm / static_cast<double>(a.size())) : nan;
  r.rmse_g0 = n0 ? std::sqrt(s0 / static_cast<double>(n0)) : nan;
  r.rmse_g1 = n1 ? std::sqrt(s1 / static_cast<double>(n1)) : nan;
  return r;
}

}  // namespace rework
