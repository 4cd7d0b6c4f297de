#include "rework/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "rework/cate.hpp"
#include "rework/csv.hpp"
#include "rework/error.hpp"
#include "rework/json_util.hpp"
#include "rework/policy.hpp"
#include "rework/random.hpp"
#include "rework/sensitivity.hpp"
#include "rework/stats.hpp"
#include "rework/svg.hpp"

namespace rework {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- defaults

std::vector<LearnerSpec> default_outcome_learners() {
  return {
      LearnerSpec{LearnerKind::ols, {}, 0},
      LearnerSpec{LearnerKind::ridge, {{"lambda", 10.0}}, 0},
      LearnerSpec{LearnerKind::cart, {{"max_depth", 4}, {"min_leaf", 20}}, 0},
      LearnerSpec{LearnerKind::boosted_stumps, {{"n_trees", 100}, {"learning_rate", 0.1}}, 0},
  };
}

std::vector<LearnerSpec> default_propensity_learners() {
  return {
      LearnerSpec{LearnerKind::logistic, {}, 0},
      LearnerSpec{LearnerKind::cart, {{"max_depth", 4}, {"min_leaf", 20}}, 0},
      LearnerSpec{LearnerKind::boosted_stumps, {{"n_trees", 100}, {"learning_rate", 0.1}}, 0},
  };
}

std::vector<double> default_zeta_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(0.01 * i);
  return g;
}

std::vector<BenchmarkGroup> default_benchmarks() {
  BenchmarkGroup main{"main_component", {}};
  BenchmarkGroup secondary{"secondary_component", {}};
  for (std::size_t j = 0; j < kChipsPerPanel; ++j) {
    main.omit.push_back(columns::main_chip(j));
    secondary.omit.push_back(columns::secondary_chip(j));
  }
  main.omit.push_back(columns::kMainMean);
  main.omit.push_back(columns::kMainVariance);
  secondary.omit.push_back(columns::kSecondaryMean);
  return {main, secondary, {"invalid_count", {columns::kInvalidCount}}, {"workload", {columns::kWorkload}}};
}

// ---------------------------------------------------------------- config JSON

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::config, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw Error(ErrorCode::config, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const char* to_string(ControlWeighting w) {
  return w == ControlWeighting::propensity ? "propensity" : "complement_propensity";
}

ControlWeighting weighting_from_string(const std::string& s) {
  if (s == "propensity") return ControlWeighting::propensity;
  if (s == "complement_propensity") return ControlWeighting::complement_propensity;
  throw Error(ErrorCode::config, "unknown control_weighting '" + s + "'");
}

}  // namespace

void to_json(json& j, const PipelineConfig& c) {
  json benchmarks = json::array();
  for (const auto& b : c.sensitivity.benchmarks) benchmarks.push_back({{"name", b.name}, {"omit", b.omit}});
  j = json{
      {"input", c.input},
      {"simulator", c.simulator},
      {"seed", c.seed},
      {"learners", {{"outcome", c.learners.outcome}, {"propensity", c.learners.propensity}}},
      {"nuisance_features", c.nuisance_features},
      {"k_folds", c.k_folds},
      {"clip", {c.clip.lo, c.clip.hi}},
      {"subsample_quantiles", {c.q_treated_low, c.q_control_high}},
      {"train_fraction", c.train_fraction},
      {"alpha", c.alpha},
      {"cate",
       {{"columns", c.cate.columns},
        {"degree", c.cate.degree},
        {"df", c.cate.df},
        {"surface", c.cate.surface},
        {"surface_degree", c.cate.surface_degree},
        {"surface_df", c.cate.surface_df},
        {"grid_points", c.cate.grid_points},
        {"surface_grid_points", c.cate.surface_grid_points},
        {"n_boot", c.cate.n_boot}}},
      {"policy",
       {{"gammas", c.policy.gammas},
        {"conservative_gammas", c.policy.conservative_gammas},
        {"surface_thresholds", c.policy.surface_thresholds},
        {"tree_features", c.policy.tree_features},
        {"greedy_depths", c.policy.greedy_depths},
        {"exact_depth", c.policy.exact_depth},
        {"tree_gamma", c.policy.tree_gamma},
        {"max_candidates", c.policy.max_candidates},
        {"costs", c.policy.costs}}},
      {"sensitivity",
       {{"zeta_y", c.sensitivity.zeta_y},
        {"zeta_d", c.sensitivity.zeta_d},
        {"scenario",
         {{"zeta_y", c.sensitivity.scenario_zeta_y},
          {"zeta_d", c.sensitivity.scenario_zeta_d},
          {"rho", c.sensitivity.scenario_rho}}},
        {"benchmarks", benchmarks}}},
      {"diagnostics",
       {{"psb_threshold", c.diagnostics.psb_threshold},
        {"control_weighting", to_string(c.diagnostics.control_weighting)},
        {"histogram_columns", c.diagnostics.histogram_columns},
        {"bins", c.diagnostics.bins}}},
      {"output_dir", c.output_dir},
  };
}

void from_json(const json& j, PipelineConfig& c) {
  try {
    c = PipelineConfig{};
    check_keys(j,
               {"input", "simulator", "seed", "learners", "nuisance_features", "k_folds", "clip",
                "subsample_quantiles", "train_fraction", "alpha", "cate", "policy", "sensitivity", "diagnostics",
                "output_dir"},
               "config");
    read_opt(j, "input", c.input);
    read_opt(j, "simulator", c.simulator);
    read_opt(j, "seed", c.seed);
    if (j.contains("learners")) {
      const auto& l = j.at("learners");
      check_keys(l, {"outcome", "propensity"}, "learners");
      read_opt(l, "outcome", c.learners.outcome);
      read_opt(l, "propensity", c.learners.propensity);
    }
    read_opt(j, "nuisance_features", c.nuisance_features);
    read_opt(j, "k_folds", c.k_folds);
    if (j.contains("clip")) {
      const auto v = j.at("clip").get<std::vector<double>>();
      if (v.size() != 2) throw Error(ErrorCode::config, "clip must be [lo, hi]");
      c.clip = {v[0], v[1]};
    }
    if (j.contains("subsample_quantiles")) {
      const auto v = j.at("subsample_quantiles").get<std::vector<double>>();
      if (v.size() != 2) throw Error(ErrorCode::config, "subsample_quantiles must be [low, high]");
      c.q_treated_low = v[0];
      c.q_control_high = v[1];
    }
    read_opt(j, "train_fraction", c.train_fraction);
    read_opt(j, "alpha", c.alpha);
    if (j.contains("cate")) {
      const auto& s = j.at("cate");
      check_keys(s,
                 {"columns", "degree", "df", "surface", "surface_degree", "surface_df", "grid_points",
                  "surface_grid_points", "n_boot"},
                 "cate");
      read_opt(s, "columns", c.cate.columns);
      read_opt(s, "degree", c.cate.degree);
      read_opt(s, "df", c.cate.df);
      read_opt(s, "surface", c.cate.surface);
      read_opt(s, "surface_degree", c.cate.surface_degree);
      read_opt(s, "surface_df", c.cate.surface_df);
      read_opt(s, "grid_points", c.cate.grid_points);
      read_opt(s, "surface_grid_points", c.cate.surface_grid_points);
      read_opt(s, "n_boot", c.cate.n_boot);
    }
    if (j.contains("policy")) {
      const auto& s = j.at("policy");
      check_keys(s,
                 {"gammas", "conservative_gammas", "surface_thresholds", "tree_features", "greedy_depths",
                  "exact_depth", "tree_gamma", "max_candidates", "costs"},
                 "policy");
      read_opt(s, "gammas", c.policy.gammas);
      read_opt(s, "conservative_gammas", c.policy.conservative_gammas);
      read_opt(s, "surface_thresholds", c.policy.surface_thresholds);
      read_opt(s, "tree_features", c.policy.tree_features);
      read_opt(s, "greedy_depths", c.policy.greedy_depths);
      read_opt(s, "exact_depth", c.policy.exact_depth);
      read_opt(s, "tree_gamma", c.policy.tree_gamma);
      read_opt(s, "max_candidates", c.policy.max_candidates);
      read_opt(s, "costs", c.policy.costs);
    }
    if (j.contains("sensitivity")) {
      const auto& s = j.at("sensitivity");
      check_keys(s, {"zeta_y", "zeta_d", "scenario", "benchmarks"}, "sensitivity");
      read_opt(s, "zeta_y", c.sensitivity.zeta_y);
      read_opt(s, "zeta_d", c.sensitivity.zeta_d);
      if (s.contains("scenario")) {
        const auto& sc = s.at("scenario");
        check_keys(sc, {"zeta_y", "zeta_d", "rho"}, "sensitivity.scenario");
        read_opt(sc, "zeta_y", c.sensitivity.scenario_zeta_y);
        read_opt(sc, "zeta_d", c.sensitivity.scenario_zeta_d);
        read_opt(sc, "rho", c.sensitivity.scenario_rho);
      }
      if (s.contains("benchmarks")) {
        c.sensitivity.benchmarks.clear();
        for (const auto& b : s.at("benchmarks")) {
          check_keys(b, {"name", "omit"}, "sensitivity.benchmarks");
          c.sensitivity.benchmarks.push_back({b.at("name").get<std::string>(), b.at("omit").get<std::vector<std::string>>()});
        }
      }
    }
    if (j.contains("diagnostics")) {
      const auto& s = j.at("diagnostics");
      check_keys(s, {"psb_threshold", "control_weighting", "histogram_columns", "bins"}, "diagnostics");
      read_opt(s, "psb_threshold", c.diagnostics.psb_threshold);
      if (s.contains("control_weighting"))
        c.diagnostics.control_weighting = weighting_from_string(s.at("control_weighting").get<std::string>());
      read_opt(s, "histogram_columns", c.diagnostics.histogram_columns);
      read_opt(s, "bins", c.diagnostics.bins);
    }
    read_opt(j, "output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("config: ") + e.what());
  }
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::config, msg); };
  if (input.empty()) {
    try {
      simulator.validate();
    } catch (const Error& e) {
      fail(std::string("simulator: ") + e.what());
    }
  }
  if (learners.outcome.empty() || learners.propensity.empty()) fail("learner grids must not be empty");
  for (const auto* grid : {&learners.outcome, &learners.propensity})
    for (const auto& spec : *grid) {
      try {
        spec.validate();
      } catch (const Error& e) {
        fail(std::string("learner ") + spec.label() + ": " + e.what());
      }
    }
  for (const auto& spec : learners.outcome)
    if (spec.kind == LearnerKind::logistic) fail("logistic is not an outcome learner");
  for (const auto& spec : learners.propensity)
    if (spec.kind == LearnerKind::ols || spec.kind == LearnerKind::ridge)
      fail(std::string(rework::to_string(spec.kind)) + " is not a propensity learner");
  if (k_folds < 2) fail("k_folds must be at least 2");
  if (!(clip.lo > 0.0 && clip.lo < clip.hi && clip.hi < 1.0)) fail("clip bounds must satisfy 0 < lo < hi < 1");
  if (!(q_treated_low >= 0.0 && q_treated_low <= 1.0 && q_control_high >= 0.0 && q_control_high <= 1.0))
    fail("subsample quantiles must lie in [0, 1]");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (cate.df <= cate.degree || cate.surface_df <= cate.surface_degree) fail("cate df must exceed the degree");
  if (cate.degree < 1 || cate.surface_degree < 1) fail("cate degree must be at least 1");
  if (!cate.surface.empty() && cate.surface.size() != 2) fail("cate.surface needs exactly two columns");
  if (cate.grid_points < 2 || cate.surface_grid_points < 2) fail("grid sizes must be at least 2");
  if (cate.n_boot < 1) fail("n_boot must be positive");
  if (cate.columns.empty()) fail("cate.columns must name at least one column");
  if (policy.tree_features.empty()) fail("policy.tree_features must not be empty");
  for (int d : policy.greedy_depths)
    if (d < 1) fail("greedy depths must be at least 1");
  if (policy.exact_depth < 0 || policy.exact_depth > 2) fail("exact_depth must be 0 (off), 1 or 2");
  if (policy.max_candidates < 1) fail("max_candidates must be positive");
  if (policy.costs.empty()) fail("policy.costs must not be empty");
  for (double cst : policy.costs)
    if (!std::isfinite(cst)) fail("costs must be finite");
  for (const auto* grid : {&sensitivity.zeta_y, &sensitivity.zeta_d}) {
    if (grid->empty()) fail("sensitivity grids must not be empty");
    for (double z : *grid)
      if (!(z >= 0.0 && z < 1.0)) fail("sensitivity grid values must lie in [0, 1)");
  }
  try {
    ConfoundingScenario{sensitivity.scenario_zeta_y, sensitivity.scenario_zeta_d, sensitivity.scenario_rho}.validate();
  } catch (const Error& e) {
    fail(std::string("sensitivity.scenario: ") + e.what());
  }
  for (const auto& b : sensitivity.benchmarks)
    if (b.name.empty() || b.omit.empty()) fail("benchmarks need a name and at least one omitted column");
  if (!(diagnostics.psb_threshold > 0.0)) fail("psb_threshold must be positive");
  if (diagnostics.bins < 1) fail("bins must be positive");
}

PipelineConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(csv::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
  PipelineConfig cfg = j.get<PipelineConfig>();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- stages

const char* to_string(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::estimate: return "estimate";
    case Stage::cate: return "cate";
    case Stage::policy: return "policy";
    case Stage::evaluate: return "evaluate";
    case Stage::sensitivity: return "sensitivity";
    case Stage::diagnose: return "diagnose";
    case Stage::report: return "report";
  }
  return "?";
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::simulate, Stage::estimate,    Stage::cate,     Stage::policy,
                                         Stage::evaluate, Stage::sensitivity, Stage::diagnose, Stage::report};
  return stages;
}

Stage stage_from_string(const std::string& name) {
  for (Stage s : all_stages())
    if (name == to_string(s)) return s;
  throw Error(ErrorCode::parameter, "unknown stage '" + name + "'");
}

DirLock::DirLock(const fs::path& dir) : path_(dir / kLockName) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    throw Error(ErrorCode::io, "output directory " + dir.string() + " is locked by another run (remove " +
                                   path_.string() + " if no run is active)");
  }
  std::fclose(f);
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

// Artifact names
constexpr const char* kConfig = "config.json";
constexpr const char* kData = "data.csv";
constexpr const char* kOracle = "oracle.csv";
constexpr const char* kProcessed = "processed.csv";
constexpr const char* kPreprocess = "preprocess.json";
constexpr const char* kSplit = "split.json";
constexpr const char* kNuisances = "nuisances.csv";
constexpr const char* kNuisanceMeta = "nuisances.json";
constexpr const char* kScores = "scores.csv";
constexpr const char* kEffects = "effects.json";
constexpr const char* kCate = "cate.json";
constexpr const char* kPolicies = "policies.json";
constexpr const char* kEvaluation = "evaluation.json";
constexpr const char* kSensitivity = "sensitivity.json";
constexpr const char* kBalance = "balance.csv";
constexpr const char* kSubsampling = "subsampling.csv";

std::string dump(const json& j) { return j.dump(2) + "\n"; }

class Workspace {
 public:
  explicit Workspace(RunDirs dirs) : dirs_(std::move(dirs)) {}

  /// Path of an existing upstream artifact, or a dependency error naming the producing stage.
  fs::path need(const std::string& name, Stage producer) const {
    for (const auto& dir : {dirs_.out, dirs_.in}) {
      if (dir.empty()) continue;
      const fs::path p = dir / name;
      if (fs::exists(p)) return p;
    }
    throw Error(ErrorCode::dependency, "missing " + name + "; run `" + std::string(to_string(producer)) + "` first");
  }

  std::optional<fs::path> maybe(const std::string& name) const {
    for (const auto& dir : {dirs_.out, dirs_.in}) {
      if (dir.empty()) continue;
      const fs::path p = dir / name;
      if (fs::exists(p)) return p;
    }
    return std::nullopt;
  }

  fs::path out(const std::string& name) const { return dirs_.out / name; }

  void write(const std::string& name, const std::string& text) const { csv::write_text(out(name), text); }
  void write(const std::string& name, const json& j) const { write(name, dump(j)); }

  json read_json(const std::string& name, Stage producer) const {
    const fs::path p = need(name, producer);
    try {
      return json::parse(csv::read_text(p));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse, p.string() + ": " + e.what());
    }
  }

  PipelineConfig config() const {
    json j = read_json(kConfig, Stage::simulate);
    PipelineConfig cfg = j.get<PipelineConfig>();
    cfg.validate();
    return cfg;
  }

  const RunDirs& dirs() const { return dirs_; }

 private:
  RunDirs dirs_;
};

// -- persisted pieces

json pca_json(const PcaTransform& p) {
  return {{"mean", {p.mean[0], p.mean[1]}},
          {"rotation", {{p.rotation(0, 0), p.rotation(0, 1)}, {p.rotation(1, 0), p.rotation(1, 1)}}},
          {"variances", {p.variances[0], p.variances[1]}},
          {"sign_flipped", p.sign_flipped}};
}

json split_json(const SplitPlan& s) {
  return {{"train_fraction", s.train_fraction}, {"seed", s.seed}, {"train", s.train}, {"eval", s.eval}};
}

SplitPlan split_from_json(const json& j) {
  SplitPlan s;
  s.train_fraction = j.at("train_fraction");
  s.seed = j.at("seed");
  s.train = j.at("train").get<std::vector<std::size_t>>();
  s.eval = j.at("eval").get<std::vector<std::size_t>>();
  return s;
}

struct Scores {
  ScoreSet ate;
  ScoreSet att;
};

void write_scores(const fs::path& path, const Scores& s) {
  csv::Writer w({"row", "psi_a_ate", "psi_b_ate", "psi_a_att", "psi_b_att"});
  for (Eigen::Index i = 0; i < s.ate.psi_b.size(); ++i)
    w.row({std::to_string(i), csv::format(s.ate.psi_a[i]), csv::format(s.ate.psi_b[i]), csv::format(s.att.psi_a[i]),
           csv::format(s.att.psi_b[i])});
  w.save(path);
}

Scores read_scores(const fs::path& path) {
  const auto t = csv::read(path);
  const int cols[4] = {t.find("psi_a_ate"), t.find("psi_b_ate"), t.find("psi_a_att"), t.find("psi_b_att")};
  for (int c : cols)
    if (c < 0) throw Error(ErrorCode::schema, path.string() + ": missing score columns");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Scores s;
  s.ate.target = Target::ate;
  s.att.target = Target::att;
  for (auto* v : {&s.ate.psi_a, &s.ate.psi_b, &s.att.psi_a, &s.att.psi_b}) v->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    const auto row = static_cast<std::size_t>(i) + 1;
    s.ate.psi_a[i] = csv::parse_number(r[static_cast<std::size_t>(cols[0])], row, "psi_a_ate");
    s.ate.psi_b[i] = csv::parse_number(r[static_cast<std::size_t>(cols[1])], row, "psi_b_ate");
    s.att.psi_a[i] = csv::parse_number(r[static_cast<std::size_t>(cols[2])], row, "psi_a_att");
    s.att.psi_b[i] = csv::parse_number(r[static_cast<std::size_t>(cols[3])], row, "psi_b_att");
  }
  return s;
}

void write_nuisances(const Workspace& ws, const NuisanceEstimates& nu, const LearnerSpec& g, const LearnerSpec& m,
                     const std::vector<std::string>& features) {
  csv::Writer w({"row", "fold", "g0_hat", "g1_hat", "m_hat_raw", "m_hat"});
  for (std::size_t i = 0; i < nu.n(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    w.row({std::to_string(i), std::to_string(nu.folds.fold_of[i]), csv::format(nu.g0_hat[k]),
           csv::format(nu.g1_hat[k]), csv::format(nu.m_hat_raw[k]), csv::format(nu.m_hat[k])});
  }
  w.save(ws.out(kNuisances));
  ws.write(kNuisanceMeta, json{{"k", nu.folds.k},
                               {"fold_seed", nu.folds.seed},
                               {"clip", {nu.clip.lo, nu.clip.hi}},
                               {"clipped_count", nu.clipped_count},
                               {"g_spec", g},
                               {"m_spec", m},
                               {"features", features}});
}

double tuned_outcome_loss(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& y, std::size_t k, std::uint64_t seed) {
  // pooled out-of-fold RMSE of the per-arm regressions
  double sse = 0.0;
  for (int arm = 0; arm <= 1; ++arm) {
    std::vector<std::size_t> rows;
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (a[i] == arm) rows.push_back(static_cast<std::size_t>(i));
    const auto folds = kfold_split(rows.size(), k, derive_seed(seed, "tuning_g", static_cast<std::uint64_t>(arm)));
    const double rmse = cv_loss(spec, stats::subset_rows(x, rows), stats::subset(y, rows), folds, TuningLoss::rmse);
    sse += rmse * rmse * static_cast<double>(rows.size());
  }
  return std::sqrt(sse / static_cast<double>(a.size()));
}

json tuning_entry(const LearnerSpec& spec, double loss, const std::string& error) {
  json e{{"learner", spec}, {"label", spec.label()}, {"failed", !error.empty()}};
  e["loss"] = error.empty() ? json(loss) : json(nullptr);
  if (!error.empty()) e["error"] = error;
  return e;
}

struct Tuned {
  LearnerSpec best;
  json report = json::array();
};

Tuned tune_outcome(const std::vector<LearnerSpec>& grid, const Eigen::MatrixXd& x, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& y, std::size_t k, std::uint64_t seed) {
  Tuned t;
  if (grid.size() == 1) {
    t.best = grid[0];
    t.report.push_back(tuning_entry(grid[0], NAN, ""));
    t.report.back()["loss"] = nullptr;
    return t;
  }
  double best = INFINITY;
  for (const auto& spec : grid) {
    try {
      const double loss = tuned_outcome_loss(spec, x, a, y, k, seed);
      t.report.push_back(tuning_entry(spec, loss, ""));
      if (loss < best) {
        best = loss;
        t.best = spec;
      }
    } catch (const Error& e) {
      t.report.push_back(tuning_entry(spec, 0.0, e.what()));
    }
  }
  if (!std::isfinite(best)) throw Error(ErrorCode::tuning, "every outcome learner failed");
  return t;
}

Tuned tune_propensity(const std::vector<LearnerSpec>& grid, const Eigen::MatrixXd& x, const Eigen::VectorXd& a,
                      std::size_t k, std::uint64_t seed) {
  Tuned t;
  if (grid.size() == 1) {
    t.best = grid[0];
    t.report.push_back(tuning_entry(grid[0], NAN, ""));
    t.report.back()["loss"] = nullptr;
    return t;
  }
  const auto folds = kfold_split(static_cast<std::size_t>(a.size()), k, derive_seed(seed, "tuning_m"));
  double best = INFINITY;
  for (const auto& spec : grid) {
    try {
      const double loss = cv_loss(spec, x, a, folds, TuningLoss::log_loss);
      t.report.push_back(tuning_entry(spec, loss, ""));
      if (loss < best) {
        best = loss;
        t.best = spec;
      }
    } catch (const Error& e) {
      t.report.push_back(tuning_entry(spec, 0.0, e.what()));
    }
  }
  if (!std::isfinite(best)) throw Error(ErrorCode::tuning, "every propensity learner failed");
  return t;
}

std::string effects_csv(const std::vector<EffectEstimate>& rows) {
  csv::Writer w({"target", "coef", "std_err", "ci_low", "ci_high", "n"});
  for (const auto& e : rows)
    w.row({e.target, csv::format(e.theta_hat), csv::format(e.std_err), csv::format(e.ci_low), csv::format(e.ci_high),
           std::to_string(e.n)});
  return w.str();
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') ? c : '_';
  return out;
}

// -- individual stages

void stage_simulate(const PipelineConfig& cfg_in, const Workspace& ws) {
  PipelineConfig cfg = cfg_in;
  cfg.validate();
  if (cfg.input.empty()) {
    cfg.simulator.seed = derive_seed(cfg.seed, "simulate");
    auto [records, oracle] = simulate_records(cfg.simulator);
    write_lot_csv(ws.out(kData), records);
    write_oracle_csv(ws.out(kOracle), oracle);
  } else {
    const auto records = read_lot_csv(cfg.input);
    write_lot_csv(ws.out(kData), records);
    std::error_code ec;
    fs::remove(ws.out(kOracle), ec);
  }
  ws.write(kConfig, json(cfg));
}

void stage_estimate(const Workspace& ws) {
  const PipelineConfig cfg = ws.config();
  const Dataset raw = build_dataset(read_lot_csv(ws.need(kData, Stage::simulate)));

  ws.write(kSubsampling, histogram_csv(overlap_histograms(raw, columns::kMainMean, 40)));
  const OverlapResult ov = subsample_overlap(raw, cfg.q_treated_low, cfg.q_control_high);
  const Dataset& d = ov.data;
  write_processed(ws.out(kProcessed), d);
  ws.write(kPreprocess, json{{"n_raw", raw.n()},
                             {"n_kept", d.n()},
                             {"dropped", ov.dropped},
                             {"lower", ov.lower},
                             {"upper", ov.upper},
                             {"quantiles", {cfg.q_treated_low, cfg.q_control_high}},
                             {"pca", pca_json(*raw.pca())}});

  const SplitPlan split = train_eval_split(d.n(), cfg.train_fraction, derive_seed(cfg.seed, "split"));
  ws.write(kSplit, split_json(split));

  const std::vector<std::string> features = cfg.nuisance_features.empty() ? d.columns() : cfg.nuisance_features;
  const Eigen::MatrixXd x = d.select(features);
  const std::uint64_t tune_seed = derive_seed(cfg.seed, "tuning");
  const Tuned g = tune_outcome(cfg.learners.outcome, x, d.treatment(), d.yield(), cfg.k_folds, tune_seed);
  const Tuned m = tune_propensity(cfg.learners.propensity, x, d.treatment(), cfg.k_folds, tune_seed);
  ws.write("tuning.json", json{{"outcome", g.report},
                               {"propensity", m.report},
                               {"best_outcome", g.best},
                               {"best_propensity", m.best}});
  {
    csv::Writer w({"nuisance", "learner", "cv_loss", "failed"});
    for (const auto* rep : {&g.report, &m.report})
      for (const auto& e : *rep)
        w.row({rep == &g.report ? "outcome_rmse" : "propensity_log_loss", e.at("label").get<std::string>(),
               e.at("loss").is_null() ? "nan" : csv::format(e.at("loss").get<double>()),
               e.at("failed").get<bool>() ? "1" : "0"});
    w.save(ws.out("tuning.csv"));
  }

  CrossfitOptions opt;
  opt.k = cfg.k_folds;
  opt.seed = derive_seed(cfg.seed, "crossfit");
  opt.clip = cfg.clip;
  opt.features = features;
  const NuisanceEstimates nu = crossfit_nuisances(d, g.best, m.best, opt);
  write_nuisances(ws, nu, g.best, m.best, features);

  const Scores s{aipw_scores(d, nu), att_scores(d, nu)};
  write_scores(ws.out(kScores), s);

  const EffectEstimate ate = estimate_ate(s.ate, cfg.alpha);
  const EffectEstimate att = estimate_att(s.att, cfg.alpha);
  const EffectEstimate naive = naive_ate(d, cfg.alpha);
  ws.write(kEffects, json{{"ate", ate}, {"att", att}, {"naive", naive}});
  ws.write("effects.csv", effects_csv({naive, ate, att}));

  const RmseReport r = rmse_report(nu, d);
  csv::Writer w({"nuisance", "learner", "rmse"});
  w.row({"m", m.best.label(), csv::format(r.rmse_m)});
  w.row({"g0", g.best.label(), csv::format(r.rmse_g0)});
  w.row({"g1", g.best.label(), csv::format(r.rmse_g1)});
  w.save(ws.out("rmse.csv"));
}

struct Upstream {
  PipelineConfig cfg;
  Dataset data;
  SplitPlan split;
  Scores scores;
};

Upstream load_estimates(const Workspace& ws) {
  Upstream u;
  u.cfg = ws.config();
  u.data = read_processed(ws.need(kProcessed, Stage::estimate));
  u.split = split_from_json(ws.read_json(kSplit, Stage::estimate));
  u.scores = read_scores(ws.need(kScores, Stage::estimate));
  if (u.scores.ate.n() != u.data.n()) throw Error(ErrorCode::shape, "scores do not match the processed data");
  return u;
}

void stage_cate(const Workspace& ws) {
  const Upstream u = load_estimates(ws);
  const Dataset train = u.data.subset(u.split.train);
  const ScoreSet s = subset(u.scores.ate, u.split.train);
  json curves = json::array();
  for (std::size_t i = 0; i < u.cfg.cate.columns.size(); ++i) {
    const std::string& col = u.cfg.cate.columns[i];
    const Eigen::VectorXd z = train.column(col);
    const SplineBasis basis = build_basis(z, u.cfg.cate.degree, u.cfg.cate.df);
    const CateFit fit = project_scores(s.psi_b, basis, z, {col});
    // the grid spans every processed row so holdout queries stay inside the band
    const Eigen::VectorXd all = u.data.column(col);
    const auto grid = linear_grid(all.minCoeff(), all.maxCoeff(), u.cfg.cate.grid_points);
    const ConfidenceBand band = multiplier_bootstrap_band(fit, grid, {}, u.cfg.alpha, u.cfg.cate.n_boot,
                                                          derive_seed(u.cfg.seed, "bootstrap", i));
    ws.write("cate_" + safe_name(col) + ".csv", band_csv(band, {col}));
    curves.push_back({{"column", col}, {"fit", fit}, {"band", band}});
  }
  json surface = nullptr;
  if (!u.cfg.cate.surface.empty()) {
    const auto& cols = u.cfg.cate.surface;
    const Eigen::MatrixXd z = train.select(cols);
    const SplineBasis basis = build_basis_2d(z.col(0), z.col(1), u.cfg.cate.surface_degree, u.cfg.cate.surface_df);
    const CateFit fit = project_scores(s.psi_b, basis, z, cols);
    const std::size_t gp = u.cfg.cate.surface_grid_points;
    const Eigen::MatrixXd all = u.data.select(cols);
    const ConfidenceBand band = multiplier_bootstrap_band(
        fit, linear_grid(all.col(0).minCoeff(), all.col(0).maxCoeff(), gp),
        linear_grid(all.col(1).minCoeff(), all.col(1).maxCoeff(), gp), u.cfg.alpha, u.cfg.cate.n_boot,
        derive_seed(u.cfg.seed, "bootstrap_surface"));
    ws.write("cate_surface.csv", band_csv(band, cols));
    surface = {{"columns", cols}, {"fit", fit}, {"band", band}};
  }
  ws.write(kCate, json{{"fit_rows", "train"}, {"curves", curves}, {"surface", surface}});
}

void stage_policy(const Workspace& ws) {
  const Upstream u = load_estimates(ws);
  const json cate = ws.read_json(kCate, Stage::cate);
  const Dataset train = u.data.subset(u.split.train);
  const ScoreSet s = subset(u.scores.ate, u.split.train);
  const auto& pc = u.cfg.policy;

  std::vector<Policy> policies;
  policies.push_back(observed_policy());

  // threshold policies on the first 1D CATE (the main component by default)
  const json& curve = cate.at("curves").at(0);
  const CateFit fit = curve.at("fit").get<CateFit>();
  const ConfidenceBand band = curve.at("band").get<ConfidenceBand>();
  for (double gamma : pc.gammas) policies.push_back(threshold_policy(fit, gamma));
  for (double gamma : pc.conservative_gammas) policies.push_back(conservative_policy(fit, band, gamma));
  if (pc.surface_thresholds && !cate.at("surface").is_null()) {
    const CateFit sfit = cate.at("surface").at("fit").get<CateFit>();
    for (double gamma : pc.gammas)
      policies.push_back(threshold_policy(sfit, gamma, "threshold2d_" + csv::format(gamma)));
  }

  const Eigen::MatrixXd z = train.select(pc.tree_features);
  TreeOptions topt;
  topt.max_candidates = pc.max_candidates;
  for (int depth : pc.greedy_depths)
    policies.push_back(tree_policy(
        fit_policy_tree(z, s.psi_b, pc.tree_gamma, depth, TreeSearch::greedy, pc.tree_features, topt), pc.tree_gamma));
  if (pc.exact_depth > 0)
    policies.push_back(tree_policy(
        fit_policy_tree(z, s.psi_b, pc.tree_gamma, pc.exact_depth, TreeSearch::exact, pc.tree_features, topt),
        pc.tree_gamma));

  ws.write(kPolicies, json{{"fit_rows", "train"}, {"policies", policies}});
}

std::vector<Policy> load_policies(const Workspace& ws) {
  return ws.read_json(kPolicies, Stage::policy).at("policies").get<std::vector<Policy>>();
}

void stage_evaluate(const Workspace& ws) {
  const Upstream u = load_estimates(ws);
  const auto policies = load_policies(ws);
  const Dataset holdout = u.data.subset(u.split.eval);
  const ScoreSet s = subset(u.scores.ate, u.split.eval);
  std::vector<PolicyEvalReport> reports;
  for (const auto& p : policies) reports.push_back(evaluate_policy(p, s, holdout, u.cfg.policy.costs, u.cfg.alpha));
  // never-treat and always-treat anchors
  reports.push_back(evaluate_policy(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(holdout.n())), s,
                                    u.cfg.policy.costs, u.cfg.alpha, "treat_all"));
  ws.write(kEvaluation, json{{"evaluated_rows", "eval"}, {"reports", reports}});
  ws.write("policy_values.csv", policy_values_csv(reports));
}

void stage_sensitivity(const Workspace& ws) {
  const Upstream u = load_estimates(ws);
  const NuisanceEstimates nu = read_nuisances(ws.need(kNuisances, Stage::estimate), ws.need(kNuisanceMeta, Stage::estimate));
  const json meta = ws.read_json(kNuisanceMeta, Stage::estimate);
  const auto policies = load_policies(ws);
  const auto& sc = u.cfg.sensitivity;
  const ConfoundingScenario scenario{sc.scenario_zeta_y, sc.scenario_zeta_d, sc.scenario_rho};
  const double alpha = u.cfg.alpha;

  SensitivityReport ate = effect_sensitivity(u.scores.ate, nu, u.data, scenario, alpha);
  ate.label = "ATE";

  BenchmarkSetup setup;
  setup.adjustment = meta.at("features").get<std::vector<std::string>>();
  setup.g_spec = meta.at("g_spec").get<LearnerSpec>();
  setup.m_spec = meta.at("m_spec").get<LearnerSpec>();
  setup.crossfit.k = u.cfg.k_folds;
  setup.crossfit.seed = derive_seed(u.cfg.seed, "crossfit");
  setup.crossfit.clip = u.cfg.clip;
  for (const auto& b : sc.benchmarks) {
    std::vector<std::string> omit;
    for (const auto& col : b.omit)
      if (std::find(setup.adjustment.begin(), setup.adjustment.end(), col) != setup.adjustment.end()) omit.push_back(col);
    if (omit.empty()) throw Error(ErrorCode::feature, "benchmark '" + b.name + "' omits no adjustment column");
    ate.benchmarks.push_back(benchmark_confounder(u.data, omit, setup, &nu, b.name));
  }

  const ContourGrid grid = contour_grid(ate.theta_hat, ate.scale, sc.zeta_y, sc.zeta_d);
  ws.write("contour.csv", contour_csv(grid));

  const Dataset holdout = u.data.subset(u.split.eval);
  const ScoreSet hs = subset(u.scores.ate, u.split.eval);
  const NuisanceEstimates hnu = subset(nu, u.split.eval);
  json values = json::array();
  csv::Writer rv({"label", "cost", "estimate", "std_err", "rv", "rva", "bias_bound", "bound_low", "bound_high"});
  auto add_rv = [&](const SensitivityReport& r, const std::string& cost) {
    rv.row({r.label, cost, csv::format(r.theta_hat), csv::format(r.std_err), csv::format(r.robustness.rv),
            csv::format(r.robustness.rva), csv::format(r.bias_bound), csv::format(r.bound_low),
            csv::format(r.bound_high)});
  };
  add_rv(ate, "nan");
  for (const auto& p : policies) {
    if (p.form == PolicyForm::observed) continue;
    const Eigen::VectorXd dec = p.decide(holdout);
    for (double cost : u.cfg.policy.costs) {
      const SensitivityReport r = value_sensitivity(dec, hs, hnu, holdout, scenario, cost, alpha, p.name);
      values.push_back({{"policy", p.name}, {"cost", cost}, {"report", r}});
      add_rv(r, csv::format(cost));
    }
  }
  rv.save(ws.out("robustness.csv"));

  csv::Writer bw({"name", "zeta_y", "zeta_d", "rho", "delta_theta", "theta_long", "theta_short", "rho_clamped"});
  for (const auto& b : ate.benchmarks)
    bw.row({b.name, csv::format(b.zeta_y), csv::format(b.zeta_d), csv::format(b.rho), csv::format(b.delta_theta),
            csv::format(b.theta_long), csv::format(b.theta_short), b.rho_clamped ? "1" : "0"});
  bw.save(ws.out("benchmarks.csv"));

  ws.write(kSensitivity, json{{"ate", ate}, {"policy_values", values}});
}

void stage_diagnose(const Workspace& ws) {
  const PipelineConfig cfg = ws.config();
  const Dataset d = read_processed(ws.need(kProcessed, Stage::estimate));
  const NuisanceEstimates nu = read_nuisances(ws.need(kNuisances, Stage::estimate), ws.need(kNuisanceMeta, Stage::estimate));
  BalanceOptions opt;
  opt.threshold = cfg.diagnostics.psb_threshold;
  opt.control_weighting = cfg.diagnostics.control_weighting;
  std::vector<std::string> covariates;
  for (const auto& c : columns::balance_set())
    if (d.has_column(c)) covariates.push_back(c);
  for (const auto& c : {columns::kMainMean, columns::kSecondaryMean, columns::kMainVariance})
    if (d.has_column(c)) covariates.emplace_back(c);
  const BalanceReport report = psb(d, nu.m_hat, covariates, opt);
  ws.write(kBalance, balance_csv(report));
  json hist = json::array();
  for (const auto& col : cfg.diagnostics.histogram_columns) {
    const Histogram h = overlap_histograms(d, col, cfg.diagnostics.bins);
    ws.write("overlap_" + safe_name(col) + ".csv", histogram_csv(h));
    hist.push_back(col);
  }
  ws.write("diagnostics.json", json{{"psb_threshold", report.threshold},
                                    {"all_pass", report.all_pass()},
                                    {"max_score", report.max_score()},
                                    {"clipped_count", nu.clipped_count},
                                    {"histograms", hist}});
}

Histogram read_histogram(const fs::path& path) {
  const auto t = csv::read(path);
  Histogram h;
  const int lo = t.find("bin_low"), hi = t.find("bin_high"), tr = t.find("treated"), co = t.find("control");
  if (lo < 0 || hi < 0 || tr < 0 || co < 0) throw Error(ErrorCode::schema, path.string() + ": not a histogram table");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (r == 0) h.edges.push_back(csv::parse_number(row[static_cast<std::size_t>(lo)], r + 1, "bin_low"));
    h.edges.push_back(csv::parse_number(row[static_cast<std::size_t>(hi)], r + 1, "bin_high"));
    h.treated.push_back(static_cast<std::size_t>(csv::parse_number(row[static_cast<std::size_t>(tr)], r + 1, "treated")));
    h.control.push_back(static_cast<std::size_t>(csv::parse_number(row[static_cast<std::size_t>(co)], r + 1, "control")));
  }
  return h;
}

void stage_report(const Workspace& ws) {
  const Upstream u = load_estimates(ws);
  const json effects = ws.read_json(kEffects, Stage::estimate);
  const json cate = ws.read_json(kCate, Stage::cate);
  const auto policies = load_policies(ws);
  const json evaluation = ws.read_json(kEvaluation, Stage::evaluate);
  const json sens = ws.read_json(kSensitivity, Stage::sensitivity);
  ws.need(kBalance, Stage::diagnose);
  const json diag = ws.read_json("diagnostics.json", Stage::diagnose);
  const json pre = ws.read_json(kPreprocess, Stage::estimate);

  const fs::path plots = ws.out("plots");
  fs::create_directories(plots);
  std::vector<std::string> files;
  auto emit = [&](const std::string& name, const std::string& text) {
    csv::write_text(plots / name, text);
    files.push_back("plots/" + name);
  };

  for (const auto& c : cate.at("curves")) {
    const auto band = c.at("band").get<ConfidenceBand>();
    const std::string col = c.at("column");
    emit("cate_" + safe_name(col) + ".svg",
         svg::line_band({"CATE over " + col, col, "effect on yield"}, band.axis0, band.estimate, band.lower, band.upper));
  }
  if (!cate.at("surface").is_null()) {
    const auto band = cate.at("surface").at("band").get<ConfidenceBand>();
    const auto cols = cate.at("surface").at("columns").get<std::vector<std::string>>();
    // estimate is ordered axis0-major
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::MatrixXd values = Eigen::Map<const RowMajor>(band.estimate.data(),
                                                              static_cast<Eigen::Index>(band.axis0.size()),
                                                              static_cast<Eigen::Index>(band.axis1.size()));
    emit("cate_surface.svg", svg::heatmap({"CATE surface", cols[0], cols[1]}, band.axis0, band.axis1, values));
  }
  for (const auto& col : diag.at("histograms")) {
    const std::string name = col.get<std::string>();
    const Histogram h = read_histogram(ws.need("overlap_" + safe_name(name) + ".csv", Stage::diagnose));
    emit("overlap_" + safe_name(name) + ".svg",
         svg::histograms({"Overlap of " + name, name, "lots"}, h.edges, h.treated, h.control));
  }
  {
    const Histogram h = read_histogram(ws.need(kSubsampling, Stage::estimate));
    emit("subsampling.svg", svg::histograms({"Subsampling on " + std::string(columns::kMainMean), columns::kMainMean, "lots"},
                                            h.edges, h.treated, h.control,
                                            {pre.at("lower").get<double>(), pre.at("upper").get<double>()}));
  }
  {
    const auto& sc = u.cfg.sensitivity;
    const double theta = sens.at("ate").at("theta_hat");
    BoundScale scale;
    scale.sigma = sens.at("ate").at("sigma");
    scale.nu = sens.at("ate").at("nu");
    const ContourGrid grid = contour_grid(theta, scale, sc.zeta_y, sc.zeta_d);
    std::vector<double> levels;
    const double lo = grid.lower.minCoeff(), hi = grid.lower.maxCoeff();
    if (lo < 0.0 && hi > 0.0) levels.push_back(0.0);
    for (int k = 1; k <= 4; ++k) levels.push_back(lo + (hi - lo) * k / 5.0);
    std::sort(levels.begin(), levels.end());
    emit("sensitivity_contour.svg",
         svg::contour({"Lower bound of the ATE under confounding", "zeta_y", "zeta_d"}, grid.zeta_y, grid.zeta_d,
                      grid.lower, levels));
  }

  json summary{{"effects", effects},
               {"preprocess", {{"n_raw", pre.at("n_raw")}, {"n_kept", pre.at("n_kept")}, {"lower", pre.at("lower")},
                               {"upper", pre.at("upper")}}},
               {"psb_all_pass", diag.at("all_pass")},
               {"robustness",
                {{"ate", {{"rv", sens.at("ate").at("rv")}, {"rva", sens.at("ate").at("rva")}}}}},
               {"plots", files}};
  json values = json::array();
  for (const auto& r : evaluation.at("reports")) {
    json row{{"policy", r.at("name")}, {"share_treated", r.at("share_treated")}};
    for (const auto& v : r.at("values")) row["value_" + csv::format(v.at("cost").get<double>())] = v.at("value").at("coef");
    values.push_back(row);
  }
  summary["policy_values"] = values;

  if (const auto oracle_path = ws.maybe(kOracle)) {
    const OracleTable full = read_oracle_csv(*oracle_path);
    const OracleTable oracle = full.subset(u.data.source_rows());
    const OracleTable ev = oracle.subset(u.split.eval);
    const Dataset holdout = u.data.subset(u.split.eval);
    json o{{"ate", oracle_ate(oracle)}, {"att", oracle_att(oracle, u.data.treatment())}};
    json pv = json::array();
    for (const auto& p : policies) {
      const Eigen::VectorXd dec = p.decide(holdout);
      json row{{"policy", p.name}};
      for (double cost : u.cfg.policy.costs) row["value_" + csv::format(cost)] = oracle_policy_value(ev, dec, cost);
      if (p.form == PolicyForm::tree) row["regret"] = regret_vs_oracle(p, holdout, &ev);
      pv.push_back(row);
    }
    o["policy_values"] = pv;
    summary["oracle"] = o;
  }
  ws.write("report.json", summary);
}

void tagged(Stage stage, const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[") + to_string(stage) + "] " + e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("[") + to_string(stage) + "] malformed artifact: " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------- persistence

void write_processed(const fs::path& path, const Dataset& d) {
  std::vector<std::string> header{"source_row"};
  header.insert(header.end(), d.columns().begin(), d.columns().end());
  header.push_back("treatment");
  header.push_back("yield");
  csv::Writer w(header);
  std::vector<std::string> row(header.size());
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    row[0] = std::to_string(d.source_rows()[i]);
    for (std::size_t c = 0; c < d.columns().size(); ++c)
      row[c + 1] = csv::format(d.features()(r, static_cast<Eigen::Index>(c)));
    row[header.size() - 2] = csv::format(d.treatment()[r]);
    row[header.size() - 1] = csv::format(d.yield()[r]);
    w.row(row);
  }
  w.save(path);
}

Dataset read_processed(const fs::path& path) {
  const auto t = csv::read(path);
  const std::size_t w = t.header.size();
  if (w < 4 || t.header[0] != "source_row" || t.header[w - 2] != "treatment" || t.header[w - 1] != "yield")
    throw Error(ErrorCode::schema, path.string() + ": not a processed feature table");
  std::vector<std::string> cols(t.header.begin() + 1, t.header.end() - 2);
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(cols.size()));
  Eigen::VectorXd a(n), y(n);
  std::vector<std::size_t> src(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    const auto row = static_cast<std::size_t>(i) + 1;
    src[static_cast<std::size_t>(i)] = static_cast<std::size_t>(csv::parse_number(r[0], row, "source_row"));
    for (std::size_t c = 0; c < cols.size(); ++c) x(i, static_cast<Eigen::Index>(c)) = csv::parse_number(r[c + 1], row, cols[c]);
    a[i] = csv::parse_number(r[w - 2], row, "treatment");
    y[i] = csv::parse_number(r[w - 1], row, "yield");
  }
  return Dataset(std::move(cols), std::move(x), std::move(a), std::move(y), std::move(src));
}

NuisanceEstimates read_nuisances(const fs::path& csv_path, const fs::path& json_path) {
  const json meta = json::parse(csv::read_text(json_path));
  const auto t = csv::read(csv_path);
  const int fold = t.find("fold"), g0 = t.find("g0_hat"), g1 = t.find("g1_hat"), mr = t.find("m_hat_raw"),
            m = t.find("m_hat");
  if (fold < 0 || g0 < 0 || g1 < 0 || mr < 0 || m < 0) throw Error(ErrorCode::schema, csv_path.string() + ": missing columns");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  NuisanceEstimates nu;
  nu.g0_hat.resize(n);
  nu.g1_hat.resize(n);
  nu.m_hat_raw.resize(n);
  nu.m_hat.resize(n);
  nu.folds.k = meta.at("k");
  nu.folds.seed = meta.at("fold_seed");
  nu.folds.fold_of.resize(static_cast<std::size_t>(n));
  const auto clip = meta.at("clip").get<std::vector<double>>();
  nu.clip = {clip.at(0), clip.at(1)};
  nu.clipped_count = meta.at("clipped_count");
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    const auto row = static_cast<std::size_t>(i) + 1;
    nu.folds.fold_of[static_cast<std::size_t>(i)] =
        static_cast<std::size_t>(csv::parse_number(r[static_cast<std::size_t>(fold)], row, "fold"));
    nu.g0_hat[i] = csv::parse_number(r[static_cast<std::size_t>(g0)], row, "g0_hat");
    nu.g1_hat[i] = csv::parse_number(r[static_cast<std::size_t>(g1)], row, "g1_hat");
    nu.m_hat_raw[i] = csv::parse_number(r[static_cast<std::size_t>(mr)], row, "m_hat_raw");
    nu.m_hat[i] = csv::parse_number(r[static_cast<std::size_t>(m)], row, "m_hat");
  }
  return nu;
}

// ---------------------------------------------------------------- drivers

void run_simulate(const PipelineConfig& cfg, const RunDirs& dirs) {
  fs::create_directories(dirs.out);
  tagged(Stage::simulate, [&] { stage_simulate(cfg, Workspace(dirs)); });
}

void run_stage(Stage stage, const RunDirs& dirs) {
  if (stage == Stage::simulate) throw Error(ErrorCode::parameter, "simulate needs a config; use run_simulate");
  fs::create_directories(dirs.out);
  const Workspace ws(dirs);
  tagged(stage, [&] {
    switch (stage) {
      case Stage::estimate: stage_estimate(ws); break;
      case Stage::cate: stage_cate(ws); break;
      case Stage::policy: stage_policy(ws); break;
      case Stage::evaluate: stage_evaluate(ws); break;
      case Stage::sensitivity: stage_sensitivity(ws); break;
      case Stage::diagnose: stage_diagnose(ws); break;
      case Stage::report: stage_report(ws); break;
      case Stage::simulate: break;
    }
  });
}

void run_pipeline(const PipelineConfig& cfg, const fs::path& out, Stage last) {
  cfg.validate();
  DirLock lock(out);
  const RunDirs dirs{out, out};
  for (Stage s : all_stages()) {
    if (s == Stage::simulate) run_simulate(cfg, dirs);
    else run_stage(s, dirs);
    if (s == last) break;
  }
}

}  // namespace rework
