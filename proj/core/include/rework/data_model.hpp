#pragma once

// Observational lot data: per-chip color readings, validity flags, workload,
// rework decision and final yield; the PCA color transform; overlap
// subsampling and train/evaluation splitting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rework {

inline constexpr std::size_t kChipsPerPanel = 36;

struct LotRecord {
  std::vector<double> cx;
  std::vector<double> cy;
  std::vector<std::uint8_t> invalid;  // 1 = invalid measurement
  double workload = 0.0;
  int invalid_count = 0;
  int treatment = 0;
  double yield_frac = 0.0;

  std::size_t chips() const { return cx.size(); }

  /// Checks the record invariants; throws ErrorCode::validation.
  void validate() const;
};

struct ColorPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Mean (cx, cy) over valid chips. Throws ErrorCode::degenerate when every chip is invalid.
ColorPoint mean_color_points(const LotRecord& record);

struct PcaTransform {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  /// Columns are the unit principal directions, first = largest variance.
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  Eigen::Vector2d variances = Eigen::Vector2d::Zero();
  /// True when the first direction was negated to satisfy the sign convention.
  bool sign_flipped = false;

  /// (C_m, C_s) = rotation^T (p - mean).
  ColorPoint apply(ColorPoint p) const;
  ColorPoint invert(ColorPoint scores) const;
};

/// Fits a 2D PCA on the points. With treatment labels, PC1 is oriented so its
/// scores correlate nonnegatively with treatment; otherwise its first loading
/// is nonnegative. The second direction completes a proper rotation.
PcaTransform fit_pca(std::span<const ColorPoint> points, std::span<const int> treatment = {});

namespace columns {
inline constexpr const char* kWorkload = "workload";
inline constexpr const char* kInvalidCount = "invalid_count";
inline constexpr const char* kMainMean = "cm_mean";
inline constexpr const char* kSecondaryMean = "cs_mean";
inline constexpr const char* kMainVariance = "cm_var";
/// Pseudo-column resolving to the observed treatment; used by the observed policy.
inline constexpr const char* kTreatment = "treatment";

std::string main_chip(std::size_t j);       // "cm_05"
std::string secondary_chip(std::size_t j);  // "cs_05"

/// All derived feature columns, in feature-matrix order.
std::vector<std::string> all(std::size_t chips = kChipsPerPanel);
/// Per-chip covariates plus invalid count and workload (the balance-table set).
std::vector<std::string> balance_set(std::size_t chips = kChipsPerPanel);
}  // namespace columns

/// Immutable analysis table: named numeric feature columns plus treatment and
/// yield. Built from lot records (keeping them and the PCA) or from a
/// persisted feature table.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> columns, Eigen::MatrixXd features, Eigen::VectorXd treatment,
          Eigen::VectorXd yield, std::vector<std::size_t> source_rows,
          std::vector<LotRecord> records = {}, std::optional<PcaTransform> pca = std::nullopt);

  std::size_t n() const { return static_cast<std::size_t>(features_.rows()); }
  const std::vector<std::string>& columns() const { return columns_; }
  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::VectorXd& treatment() const { return treatment_; }
  const Eigen::VectorXd& yield() const { return yield_; }
  /// Row index in the originally loaded/simulated data for every row.
  const std::vector<std::size_t>& source_rows() const { return source_rows_; }
  const std::vector<LotRecord>& records() const { return records_; }
  const std::optional<PcaTransform>& pca() const { return pca_; }

  bool has_column(const std::string& name) const;
  /// Throws ErrorCode::feature for unknown names.
  std::size_t index_of(const std::string& name) const;
  /// Column by name; kTreatment resolves to the treatment vector.
  Eigen::VectorXd column(const std::string& name) const;
  Eigen::MatrixXd select(const std::vector<std::string>& names) const;

  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset with_column(const std::string& name, const Eigen::VectorXd& values) const;

  std::size_t treated_count() const;

 private:
  std::vector<std::string> columns_;
  Eigen::MatrixXd features_;
  Eigen::VectorXd treatment_;
  Eigen::VectorXd yield_;
  std::vector<std::size_t> source_rows_;
  std::vector<LotRecord> records_;
  std::optional<PcaTransform> pca_;
};

/// Fits the PCA on the panel means (oriented by treatment) and derives the
/// feature matrix. Invalid chips are imputed with the panel mean.
Dataset build_dataset(std::vector<LotRecord> records);
Dataset build_dataset(std::vector<LotRecord> records, const PcaTransform& pca);

struct CsvSchema {
  std::size_t chips = kChipsPerPanel;
  std::string cx_prefix = "cx_";
  std::string cy_prefix = "cy_";
  std::string valid_prefix = "valid_";
  std::string workload = "workload";
  std::string treatment = "treatment";
  std::string yield = "yield";

  std::string chip_column(const std::string& prefix, std::size_t j) const;
};

/// Reads lot records. Validity columns are optional per chip; NaN / empty
/// measurements mark the chip invalid.
std::vector<LotRecord> read_lot_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_lot_csv(const std::filesystem::path& path, std::span<const LotRecord> records,
                   const CsvSchema& schema = {});
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

struct OverlapResult {
  Dataset data;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t dropped = 0;
};

/// Keeps rows whose mean main component lies in
/// [Q_low(cm_mean | A=1), Q_high(cm_mean | A=0)].
OverlapResult subsample_overlap(const Dataset& data, double q_treated_low = 0.01,
                                double q_control_high = 0.995);

struct SplitPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

/// Random partition; |train| = round(frac * n). Index sets are returned sorted.
SplitPlan train_eval_split(std::size_t n, double frac, std::uint64_t seed);

}  // namespace rework
