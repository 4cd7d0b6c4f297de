#pragma once

// Omitted-variable-bias bounds for effect and policy-value estimates:
// B = |ρ| σ ν √(ζ_y ζ_d / (1 - ζ_d)), robustness values, observed-confounder
// benchmarking and lower-bound contours.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rework/data_model.hpp"
#include "rework/dml.hpp"
#include "rework/learners.hpp"

namespace rework {

struct ConfoundingScenario {
  double zeta_y = 0.0;
  double zeta_d = 0.0;
  double rho = 1.0;

  /// Throws ErrorCode::parameter outside [0,1) x [0,1) x [-1,1].
  void validate() const;
};

/// Scale terms of the bound: σ̂² = mean (Y - ĝ(A,X))², ν̂² = mean α̂² with
/// α̂ = w (A/m̂ - (1-A)/(1-m̂)); w = 1 for the ATE, w = π for a policy value.
struct BoundScale {
  double sigma = 0.0;
  double nu = 0.0;
};

BoundScale bound_scale(const Dataset& d, const NuisanceEstimates& nu, const Eigen::VectorXd* weights = nullptr);

double bias_bound(const BoundScale& scale, const ConfoundingScenario& sc);
/// ATE-score bound; the scores fix nothing beyond the target check.
double ovb_bound(const ScoreSet& scores, const NuisanceEstimates& nu, const Dataset& d, const ConfoundingScenario& sc);

struct RobustnessValues {
  double rv = 0.0;
  double rva = 0.0;
  bool zero_effect = false;  // θ̂ = 0, rv reported as 0
};

/// Bisection on [0, 1 - 1e-9] of |θ̂| - B(r, r, 1) = 0 (tolerance 1e-10, at
/// most 200 steps); rva replaces |θ̂| by |θ̂| - z_{1-α} se and is 0 when that
/// is not positive.
RobustnessValues robustness_value(double theta, double std_err, const BoundScale& scale, double alpha = 0.05);
RobustnessValues robustness_value(const ScoreSet& scores, const NuisanceEstimates& nu, const Dataset& d,
                                  double alpha = 0.05);

struct BenchmarkRow {
  std::string name;
  std::vector<std::string> omitted;
  double zeta_y = 0.0;
  double zeta_d = 0.0;
  double rho = 0.0;
  double delta_theta = 0.0;
  double theta_long = 0.0;
  double theta_short = 0.0;
  bool rho_clamped = false;
};

void to_json(nlohmann::json& j, const BenchmarkRow& r);

struct BenchmarkSetup {
  std::vector<std::string> adjustment;  // long-model columns
  LearnerSpec g_spec;
  LearnerSpec m_spec;
  CrossfitOptions crossfit;
};

/// Refits the short model without `omit` and compares it to the long model.
/// ζ_y = max(0, (R²_long - R²_short)/(1 - R²_long)); ζ_d = clamp(1 - ν²_short/ν²_long);
/// ρ = |corr(Δĝ, Δα̂)| sign(Δθ), clamped to [-1, 1].
BenchmarkRow benchmark_confounder(const Dataset& d, const std::vector<std::string>& omit, const BenchmarkSetup& setup,
                                  const NuisanceEstimates* long_nuisances = nullptr, std::string name = {});

struct ContourGrid {
  std::vector<double> zeta_y;
  std::vector<double> zeta_d;
  Eigen::MatrixXd lower;  // rows follow zeta_y, columns zeta_d
};

/// θ̂ - B(ζ_y, ζ_d, ρ = 1) on the grid.
ContourGrid contour_grid(double theta, const BoundScale& scale, std::vector<double> zeta_y, std::vector<double> zeta_d);
std::string contour_csv(const ContourGrid& grid);

struct SensitivityReport {
  std::string label;
  double theta_hat = 0.0;
  double std_err = 0.0;
  double alpha = 0.05;
  BoundScale scale;
  ConfoundingScenario scenario;
  double bias_bound = 0.0;
  double bound_low = 0.0;
  double bound_high = 0.0;
  double ci_bound_low = 0.0;
  double ci_bound_high = 0.0;
  RobustnessValues robustness;
  std::vector<BenchmarkRow> benchmarks;
};

void to_json(nlohmann::json& j, const SensitivityReport& r);

SensitivityReport sensitivity_report(std::string label, double theta, double std_err, const BoundScale& scale,
                                     const ConfoundingScenario& scenario, double alpha = 0.05);
SensitivityReport effect_sensitivity(const ScoreSet& scores, const NuisanceEstimates& nu, const Dataset& d,
                                     const ConfoundingScenario& scenario, double alpha = 0.05);
/// Policy value V(π; c) with the representer weighted by π. π ≡ 0 gives θ̂ = 0 and the zero-effect flag.
SensitivityReport value_sensitivity(const Eigen::VectorXd& decisions, const ScoreSet& holdout,
                                    const NuisanceEstimates& holdout_nu, const Dataset& holdout_data,
                                    const ConfoundingScenario& scenario, double cost = 0.0, double alpha = 0.05,
                                    std::string label = {});

}  // namespace rework
