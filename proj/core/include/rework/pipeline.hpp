#pragma once

// End-to-end batch pipeline: configuration, the persisted stage functions
// behind the reworkd subcommands, and plot emission.
//
// Every stage reads its inputs from files in the run directory and writes its
// outputs there, so running the subcommands one by one gives the same files
// as run_pipeline.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rework/diagnostics.hpp"
#include "rework/dml.hpp"
#include "rework/learners.hpp"
#include "rework/simulator.hpp"

namespace rework {

std::vector<LearnerSpec> default_outcome_learners();
std::vector<LearnerSpec> default_propensity_learners();

struct LearnerGrid {
  std::vector<LearnerSpec> outcome = default_outcome_learners();
  std::vector<LearnerSpec> propensity = default_propensity_learners();
};

struct CateConfig {
  std::vector<std::string> columns{columns::kMainMean, columns::kSecondaryMean, columns::kInvalidCount,
                                   columns::kWorkload};  // one 1D CATE per column
  int degree = 3;
  int df = 5;
  std::vector<std::string> surface{columns::kMainMean, columns::kSecondaryMean};  // two columns, or empty
  int surface_degree = 2;
  int surface_df = 5;
  std::size_t grid_points = 101;
  std::size_t surface_grid_points = 41;
  std::size_t n_boot = 1000;
};

struct PolicyConfig {
  std::vector<double> gammas{0.0, 0.01, 0.03, 0.05};
  std::vector<double> conservative_gammas{0.01, 0.03, 0.05};
  bool surface_thresholds = true;  // threshold policies on the 2D CATE too
  std::vector<std::string> tree_features{columns::kMainMean, columns::kSecondaryMean, columns::kInvalidCount,
                                         columns::kMainVariance};
  std::vector<int> greedy_depths{1, 2, 3, 4};
  int exact_depth = 2;
  double tree_gamma = 0.0;
  std::size_t max_candidates = 256;
  std::vector<double> costs{0.0, 0.01, 0.03};
};

struct BenchmarkGroup {
  std::string name;
  std::vector<std::string> omit;
};

std::vector<double> default_zeta_grid();
std::vector<BenchmarkGroup> default_benchmarks();

struct SensitivityConfig {
  std::vector<double> zeta_y = default_zeta_grid();
  std::vector<double> zeta_d = default_zeta_grid();
  double scenario_zeta_y = 0.03;
  double scenario_zeta_d = 0.03;
  double scenario_rho = 1.0;
  std::vector<BenchmarkGroup> benchmarks = default_benchmarks();
};

struct DiagnosticsConfig {
  double psb_threshold = 0.2;
  ControlWeighting control_weighting = ControlWeighting::propensity;
  std::vector<std::string> histogram_columns{columns::kMainMean, columns::kSecondaryMean, columns::kInvalidCount,
                                             columns::kWorkload};
  std::size_t bins = 30;
};

struct PipelineConfig {
  std::string input;  // lot CSV; empty means simulate
  SimConfig simulator;
  std::uint64_t seed = 1;
  LearnerGrid learners;
  std::vector<std::string> nuisance_features;  // empty = every derived column
  std::size_t k_folds = 5;
  ClipBounds clip;
  double q_treated_low = 0.01;
  double q_control_high = 0.995;
  double train_fraction = 0.7;
  double alpha = 0.05;
  CateConfig cate;
  PolicyConfig policy;
  SensitivityConfig sensitivity;
  DiagnosticsConfig diagnostics;
  std::string output_dir = "out";

  /// Throws ErrorCode::config.
  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected (ErrorCode::config).
void from_json(const nlohmann::json& j, PipelineConfig& c);

PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage { simulate, estimate, cate, policy, evaluate, sensitivity, diagnose, report };

const char* to_string(Stage s);
/// Throws ErrorCode::parameter for unknown names.
Stage stage_from_string(const std::string& name);
const std::vector<Stage>& all_stages();

/// Where a stage reads from and writes to. Inputs are looked up in `out`
/// first, then in `in`.
struct RunDirs {
  std::filesystem::path in;
  std::filesystem::path out;
};

/// Exclusive ownership of an output directory through a lockfile.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
};

inline constexpr const char* kLockName = ".reworkd.lock";

/// The simulate stage takes its config from the caller and writes the
/// resolved config.json; later stages read config.json from the run directory.
void run_simulate(const PipelineConfig& cfg, const RunDirs& dirs);
/// Runs one stage other than simulate. Errors carry a "[stage]" prefix.
void run_stage(Stage stage, const RunDirs& dirs);

/// Every stage in order up to and including `last`, under one lock.
void run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out, Stage last = Stage::report);

// Persisted intermediate helpers, shared with tests.
Dataset read_processed(const std::filesystem::path& path);
void write_processed(const std::filesystem::path& path, const Dataset& d);
NuisanceEstimates read_nuisances(const std::filesystem::path& csv_path, const std::filesystem::path& json_path);

}  // namespace rework
