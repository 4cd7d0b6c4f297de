#pragma once

// Synthetic lot-based phosphor-conversion process with a confounded rework
// operator and a counterfactual oracle. Internal units: the main component is
// measured in window half-widths' scale, positive = under-converted.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rework/data_model.hpp"

namespace rework {

struct SimConfig {
  std::size_t n_lots = 20000;
  std::size_t chips_per_panel = kChipsPerPanel;
  // chips conform when |c - window_center| <= window_half_width and the
  // secondary component stays within secondary_half_width
  double window_center = -0.75;
  double window_half_width = 1.0;
  double secondary_half_width = 1.8;
  double drift_ar = 0.3;
  double drift_sd = 0.6;
  double lot_sd = 0.4;
  double chip_noise_sd = 0.35;
  double secondary_lot_sd = 0.35;
  double secondary_chip_sd = 0.25;
  double rework_shift = 0.9;
  double rework_shift_sd = 0.3;       // per lot
  double rework_chip_sd = 0.6;        // per chip
  double downstream_noise_sd = 0.25;
  double invalid_rate = 0.05;
  double workload_mean = 20.0;
  // logit = intercept + main * (mean C_m - window_center) + workload * standardized V + noise
  double operator_intercept = -3.0;
  double operator_main = 2.5;
  double operator_workload = -0.5;
  double operator_noise_sd = 0.8;
  double overlap_floor = 0.03;
  // emitted chromaticity: base + scale * R(angle) (c, v)
  double color_base_x = 0.35;
  double color_base_y = 0.35;
  double color_scale = 0.25;
  double color_angle = 0.5235987755982988;
  std::uint64_t seed = 1;

  /// Throws ErrorCode::config.
  void validate() const;
  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

/// Second product type: shifted window and different operator behaviour.
SimConfig second_product_config();

struct OracleTable {
  std::vector<std::size_t> lot_id;
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  Eigen::VectorXd propensity;
  Eigen::VectorXd drift;

  std::size_t n() const { return lot_id.size(); }
  Eigen::VectorXd effects() const { return y1 - y0; }
  /// Rows selected by position (e.g. a dataset's source_rows).
  OracleTable subset(std::span<const std::size_t> rows) const;
};

struct Simulation {
  Dataset data;
  OracleTable oracle;
};

/// Deterministic given config.seed. Throws ErrorCode::config when the config
/// is invalid or generated propensities leave [0.02, 0.98].
Simulation simulate(const SimConfig& config);
/// Raw records and oracle without building the feature table.
std::pair<std::vector<LotRecord>, OracleTable> simulate_records(const SimConfig& config);

double oracle_ate(const OracleTable& oracle);
/// Throws ErrorCode::estimand_undefined without treated rows.
double oracle_att(const OracleTable& oracle, const Eigen::VectorXd& treatment);
/// Mean effect per bin [edges[b], edges[b+1]) (last bin closed); empty bins are absent.
std::vector<std::optional<double>> oracle_cate(const OracleTable& oracle, const Eigen::VectorXd& z,
                                               std::span<const double> edges);
/// mean(π·(Y(1) - Y(0) - c)).
double oracle_policy_value(const OracleTable& oracle, const Eigen::VectorXd& decisions, double cost);

void write_oracle_csv(const std::filesystem::path& path, const OracleTable& oracle);
OracleTable read_oracle_csv(const std::filesystem::path& path);

}  // namespace rework
