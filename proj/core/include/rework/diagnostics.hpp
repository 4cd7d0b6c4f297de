#pragma once

// Overlap and balance diagnostics.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rework/data_model.hpp"

namespace rework {

enum class ControlWeighting {
  propensity,             // 1/m̂ for both groups, as in the balance formula's literal display
  complement_propensity,  // 1/(1 - m̂) for controls
};

struct BalanceOptions {
  double threshold = 0.2;
  ControlWeighting control_weighting = ControlWeighting::propensity;
};

struct BalanceRow {
  std::string covariate;
  bool applicable = true;  // false for zero-variance covariates
  std::optional<double> psb_treated;
  std::optional<double> psb_control;
  bool pass_treated = true;
  bool pass_control = true;
};

struct BalanceReport {
  double threshold = 0.2;
  std::vector<BalanceRow> rows;

  bool all_pass() const;
  /// Largest applicable score over both groups (0 when none).
  double max_score() const;
  const BalanceRow& row(const std::string& covariate) const;
};

/// PSB_a = |X̄_a - X̄| / σ², with X̄_a the weighted mean of group a under
/// weights 1/m̂ (see ControlWeighting) and σ² the sample variance.
BalanceReport psb(const Dataset& d, const Eigen::VectorXd& m_hat, const std::vector<std::string>& covariates = {},
                  BalanceOptions options = {});
/// Layout: covariate, A=1, A=0.
std::string balance_csv(const BalanceReport& report);

struct Histogram {
  std::string covariate;
  std::vector<double> edges;  // bins + 1 shared edges
  std::vector<std::size_t> treated;
  std::vector<std::size_t> control;
};

/// Shared edges over the pooled range; the last bin is closed.
Histogram overlap_histograms(const Dataset& d, const std::string& covariate, std::size_t bins = 30);
std::string histogram_csv(const Histogram& h);

}  // namespace rework
