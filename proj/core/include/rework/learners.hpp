#pragma once

// Regression / classification learners for the nuisance functions, plus fold
// assignment and grid tuning.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace rework {

enum class LearnerKind { ols, ridge, logistic, cart, random_forest, boosted_stumps };

const char* to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::ols;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;

  /// Hyperparameter with a kind-specific default.
  double param(const std::string& name) const;
  /// Throws ErrorCode::parameter on out-of-range or unknown hyperparameters.
  void validate() const;
  /// Compact human-readable label, e.g. "cart(max_depth=4)".
  std::string label() const;

  friend bool operator==(const LearnerSpec&, const LearnerSpec&) = default;
};

void to_json(nlohmann::json& j, const LearnerSpec& spec);
void from_json(const nlohmann::json& j, LearnerSpec& spec);

struct FoldAssignment {
  std::size_t k = 5;
  std::vector<std::size_t> fold_of;
  std::uint64_t seed = 0;

  std::vector<std::size_t> rows_in(std::size_t fold) const;
  std::vector<std::size_t> rows_outside(std::size_t fold) const;
};

/// Balanced random assignment: fold sizes differ by at most one.
FoldAssignment kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

namespace detail {

struct LinearParams {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  bool logistic = false;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct TreeParams {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestParams {
  std::vector<TreeParams> trees;
};

struct Stump {
  int feature = 0;
  double threshold = 0.0;
  double left = 0.0;
  double right = 0.0;
};

struct BoostParams {
  double base = 0.0;
  std::vector<Stump> stumps;
};

}  // namespace detail

class FittedModel {
 public:
  using Params = std::variant<detail::LinearParams, detail::TreeParams, detail::ForestParams,
                              detail::BoostParams>;

  FittedModel(LearnerKind kind, bool classifier, std::size_t n_train, std::size_t n_features,
              Params params, std::vector<std::string> warnings = {});

  LearnerKind kind() const { return kind_; }
  bool classifier() const { return classifier_; }
  std::size_t n_train() const { return n_train_; }
  std::size_t n_features() const { return n_features_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const Params& params() const { return params_; }

  /// One value per row; classifiers emit probabilities in [0,1].
  /// Throws ErrorCode::shape on a column-count mismatch.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  /// Per-tree predictions for forests (empty otherwise).
  std::vector<Eigen::VectorXd> member_predictions(const Eigen::MatrixXd& x) const;

 private:
  LearnerKind kind_;
  bool classifier_;
  std::size_t n_train_;
  std::size_t n_features_;
  Params params_;
  std::vector<std::string> warnings_;
};

FittedModel fit_regressor(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
FittedModel fit_classifier(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& a);

enum class TuningLoss { rmse, log_loss };

struct TuningEntry {
  LearnerSpec spec;
  double loss = 0.0;
  bool failed = false;
  std::string error;
};

struct TuningResult {
  LearnerSpec best;
  /// Successful specs sorted by loss (stable with respect to input order),
  /// followed by failed specs.
  std::vector<TuningEntry> report;
};

/// Cross-validated loss per spec; best = argmin with ties to the earlier spec.
TuningResult grid_tune(const std::vector<LearnerSpec>& specs, const Eigen::MatrixXd& x,
                       const Eigen::VectorXd& y, const FoldAssignment& folds, TuningLoss loss);

/// Cross-validated loss of a single spec (the per-spec body of grid_tune).
double cv_loss(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               const FoldAssignment& folds, TuningLoss loss);

}  // namespace rework
