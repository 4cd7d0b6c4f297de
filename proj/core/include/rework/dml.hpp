#pragma once

// Cross-fitted nuisance estimation under the interactive regression model,
// orthogonal (AIPW) scores and the resulting effect estimates.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rework/data_model.hpp"
#include "rework/learners.hpp"

namespace rework {

struct ClipBounds {
  double lo = 0.025;
  double hi = 0.975;
};

struct NuisanceEstimates {
  Eigen::VectorXd g0_hat;
  Eigen::VectorXd g1_hat;
  Eigen::VectorXd m_hat_raw;
  Eigen::VectorXd m_hat;
  FoldAssignment folds;
  ClipBounds clip;
  std::size_t clipped_count = 0;

  std::size_t n() const { return static_cast<std::size_t>(m_hat.size()); }
  /// ĝ(A_i, X_i) for the observed treatment.
  Eigen::VectorXd g_observed(const Eigen::VectorXd& treatment) const;
};

struct ClipResult {
  Eigen::VectorXd m;
  std::size_t clipped_count = 0;
};

ClipResult clip_propensity(const Eigen::VectorXd& m_raw, double lo = 0.025, double hi = 0.975);

/// Wraps externally supplied nuisance values (clipping applied).
NuisanceEstimates make_nuisances(Eigen::VectorXd g0, Eigen::VectorXd g1, Eigen::VectorXd m_raw,
                                 ClipBounds clip = {});

struct CrossfitOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  ClipBounds clip;
  /// Adjustment columns; empty means every dataset column.
  std::vector<std::string> features;
};

/// ĝ(a,·) is fit on the A=a rows of each training complement, m̂ on all of it.
/// Throws ErrorCode::fold_degeneracy when a complement lacks one treatment class.
NuisanceEstimates crossfit_nuisances(const Dataset& d, const LearnerSpec& g_spec, const LearnerSpec& m_spec,
                                     const CrossfitOptions& options = {});

enum class Target { ate, att };
const char* to_string(Target t);

struct ScoreSet {
  Eigen::VectorXd psi_a;
  Eigen::VectorXd psi_b;
  Target target = Target::ate;

  std::size_t n() const { return static_cast<std::size_t>(psi_b.size()); }
};

/// Rows selected by position; fold labels follow the rows.
NuisanceEstimates subset(const NuisanceEstimates& nu, std::span<const std::size_t> rows);
ScoreSet subset(const ScoreSet& s, std::span<const std::size_t> rows);

ScoreSet aipw_scores(const Dataset& d, const NuisanceEstimates& nu);
ScoreSet aipw_scores(const Eigen::VectorXd& treatment, const Eigen::VectorXd& yield, const NuisanceEstimates& nu);
/// Throws ErrorCode::estimand_undefined without treated rows.
ScoreSet att_scores(const Dataset& d, const NuisanceEstimates& nu);
ScoreSet att_scores(const Eigen::VectorXd& treatment, const Eigen::VectorXd& yield, const NuisanceEstimates& nu);

struct EffectEstimate {
  std::string target = "ATE";
  double theta_hat = 0.0;
  double std_err = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
  double alpha = 0.05;
};

void to_json(nlohmann::json& j, const EffectEstimate& e);
void from_json(const nlohmann::json& j, EffectEstimate& e);

/// Normal-approximation interval theta ∓ z_{1-α/2}·se.
EffectEstimate make_estimate(std::string target, double theta, double se, std::size_t n, double alpha = 0.05);

/// Solves mean(psi_a)·θ + mean(psi_b) = 0; se from the sandwich with the n-1 divisor.
EffectEstimate estimate_effect(const ScoreSet& s, double alpha = 0.05);
EffectEstimate estimate_ate(const ScoreSet& s, double alpha = 0.05);
EffectEstimate estimate_att(const ScoreSet& s, double alpha = 0.05);

/// Difference of group means with the unpooled standard error.
EffectEstimate naive_ate(const Dataset& d, double alpha = 0.05);
EffectEstimate naive_ate(const Eigen::VectorXd& treatment, const Eigen::VectorXd& yield, double alpha = 0.05);

struct RmseReport {
  double rmse_m = 0.0;
  double rmse_g0 = 0.0;
  double rmse_g1 = 0.0;
};

/// rmse_m uses the unclipped propensity against A.
RmseReport rmse_report(const NuisanceEstimates& nu, const Dataset& d);

}  // namespace rework
