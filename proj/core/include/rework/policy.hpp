#pragma once

// Rework policies: CATE thresholds, conservative (band-based) thresholds,
// greedy and exact policy trees, the observed policy; and their evaluation
// on held-out scores.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rework/cate.hpp"
#include "rework/data_model.hpp"
#include "rework/dml.hpp"
#include "rework/simulator.hpp"

namespace rework {

enum class TreeSearch { greedy, exact };
const char* to_string(TreeSearch s);

struct PolicyTree {
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int action = 0;
  };
  std::vector<Node> nodes;  // nodes[0] is the root
  int depth = 0;
  TreeSearch mode = TreeSearch::greedy;
  std::vector<std::string> features;
  std::size_t max_candidates = 256;
  bool downsampled = false;

  /// Rows of z follow `features`; z <= threshold goes left.
  int decide_row(const Eigen::Ref<const Eigen::RowVectorXd>& z) const;
  Eigen::VectorXd decide(const Eigen::MatrixXd& z) const;
  /// Feature index of the root split, or -1 for a single leaf.
  int root_feature() const { return nodes.empty() ? -1 : nodes[0].feature; }
};

void to_json(nlohmann::json& j, const PolicyTree& t);
void from_json(const nlohmann::json& j, PolicyTree& t);

struct ClassificationTargets {
  Eigen::VectorXd weights;  // λ = |ψ_b - γ|
  Eigen::VectorXd labels;   // H = sign(ψ_b - γ), sign(0) = -1
};

ClassificationTargets weighted_classification_targets(const Eigen::VectorXd& psi_b, double gamma);

struct TreeOptions {
  std::size_t max_candidates = 256;
};

/// Midpoints of adjacent sorted unique values, thinned to at most
/// max_candidates quantile-spaced entries.
std::vector<double> candidate_thresholds(const Eigen::VectorXd& z, std::size_t max_candidates = 256,
                                         bool* downsampled = nullptr);

/// Maximizes (1/n) Σ (2π(Z_i) - 1)(ψ_b,i - γ). Exact search supports depth <= 2
/// (ErrorCode::unsupported otherwise). Ties go to the lexicographically first
/// (feature, threshold).
PolicyTree fit_policy_tree(const Eigen::MatrixXd& z, const Eigen::VectorXd& psi_b, double gamma, int depth,
                           TreeSearch mode, std::vector<std::string> features = {}, TreeOptions options = {});

/// Training objective (1/n) Σ (2π_i - 1) s_i in row order.
double policy_objective(const Eigen::VectorXd& decisions, const Eigen::VectorXd& psi_b, double gamma);

/// A single-leaf tree with a fixed action.
PolicyTree constant_tree(int action, std::vector<std::string> features = {});

enum class PolicyForm { cate_threshold_1d, cate_threshold_2d, conservative_threshold, tree, observed };
const char* to_string(PolicyForm f);

struct Policy {
  PolicyForm form = PolicyForm::observed;
  std::string name;
  std::vector<std::string> z_columns;
  double gamma = 0.0;
  std::optional<CateFit> fit;
  std::optional<ConfidenceBand> band;
  std::optional<PolicyTree> tree;

  /// Rows of z follow z_columns. Throws ErrorCode::extrapolation when a
  /// conservative policy is queried outside its band grid.
  Eigen::VectorXd decide(const Eigen::MatrixXd& z) const;
  int decide_row(const Eigen::Ref<const Eigen::RowVectorXd>& z) const;
  /// Selects z_columns from the dataset (ErrorCode::feature when missing).
  Eigen::VectorXd decide(const Dataset& d) const;
};

void to_json(nlohmann::json& j, const Policy& p);
void from_json(const nlohmann::json& j, Policy& p);

/// π(z) = 1{θ̂(z) >= γ}.
Policy threshold_policy(const CateFit& fit, double gamma, std::string name = {});
/// π(z) = 1{min(lower(z), θ̂(z)) >= γ}; the minimum keeps the treated set
/// inside the threshold policy's between grid points.
Policy conservative_policy(const CateFit& fit, const ConfidenceBand& band, double gamma, std::string name = {});
Policy tree_policy(PolicyTree tree, double gamma, std::string name = {});
/// Replays the observed treatment.
Policy observed_policy();

struct PolicyValue {
  double cost = 0.0;
  EffectEstimate value;
};

struct PolicyEvalReport {
  std::string name;
  std::vector<PolicyValue> values;
  std::optional<EffectEstimate> gate;
  double share_treated = 0.0;
};

void to_json(nlohmann::json& j, const PolicyEvalReport& r);
void from_json(const nlohmann::json& j, PolicyEvalReport& r);

/// V(π; c) = mean(π (ψ_b - c)) with se = sd/√n; GATE = mean ψ_b over π = 1.
PolicyEvalReport evaluate_policy(const Eigen::VectorXd& decisions, const ScoreSet& holdout,
                                 const std::vector<double>& costs = {0.0, 0.01, 0.03}, double alpha = 0.05,
                                 std::string name = {});
PolicyEvalReport evaluate_policy(const Policy& p, const ScoreSet& holdout, const Dataset& holdout_data,
                                 const std::vector<double>& costs = {0.0, 0.01, 0.03}, double alpha = 0.05);

/// Best oracle value among trees of the policy's depth (exact search, depth
/// capped at 2) minus the policy's oracle value; never negative.
/// ErrorCode::oracle_unavailable without an oracle, ErrorCode::unsupported for non-tree policies.
double regret_vs_oracle(const Policy& p, const Dataset& d, const OracleTable* oracle);

/// Wide layout: policy, share_treated, then "<c>_2.5%", "<c>_effect", "<c>_97.5%" per cost.
std::string policy_values_csv(const std::vector<PolicyEvalReport>& reports);

}  // namespace rework
