#include "rework/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rework/csv.hpp"
#include "rework/error.hpp"
#include "rework/parallel.hpp"
#include "rework/random.hpp"

namespace rework {

namespace {

constexpr double kMinPropensity = 0.02;

#define REWORK_SIM_FIELDS(X)                                                                              \
  X(n_lots) X(chips_per_panel) X(window_center) X(window_half_width) X(secondary_half_width) X(drift_ar)  \
  X(drift_sd) X(lot_sd) X(chip_noise_sd) X(secondary_lot_sd) X(secondary_chip_sd) X(rework_shift)        \
  X(rework_shift_sd) X(rework_chip_sd) X(downstream_noise_sd) X(invalid_rate) X(workload_mean)           \
  X(operator_intercept) X(operator_main) X(operator_workload) X(operator_noise_sd) X(overlap_floor)      \
  X(color_base_x) X(color_base_y) X(color_scale) X(color_angle) X(seed)

double logistic(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::config, "simulator config: " + m); };
  if (n_lots < 1) fail("n_lots must be positive");
  if (chips_per_panel < 1) fail("chips_per_panel must be positive");
  if (!(std::abs(drift_ar) < 1.0)) fail("drift_ar must lie in (-1, 1)");
  for (double sd : {drift_sd, lot_sd, chip_noise_sd, secondary_lot_sd, secondary_chip_sd, rework_shift_sd,
                    rework_chip_sd, downstream_noise_sd, operator_noise_sd})
    if (!(sd >= 0.0) || std::isinf(sd)) fail("standard deviations must be finite and nonnegative");
  if (!(invalid_rate >= 0.0 && invalid_rate <= 0.5)) fail("invalid_rate must lie in [0, 0.5]");
  if (!(window_half_width > 0.0) || !(secondary_half_width > 0.0)) fail("window half-widths must be positive");
  if (!(workload_mean > 0.0) || std::isinf(workload_mean)) fail("workload_mean must be positive");
  if (!(overlap_floor >= 0.0 && overlap_floor < 0.5)) fail("overlap_floor must lie in [0, 0.5)");
  if (!(color_scale > 0.0)) fail("color_scale must be positive");
  for (double v : {window_center, rework_shift, operator_intercept, operator_main, operator_workload, color_base_x,
                   color_base_y, color_angle})
    if (!std::isfinite(v)) fail("parameters must be finite");
}

void to_json(nlohmann::json& j, const SimConfig& c) {
  j = nlohmann::json::object();
#define X(name) j[#name] = c.name;
  REWORK_SIM_FIELDS(X)
#undef X
  // JSON has no infinity; an unbounded window is written as null
  if (std::isinf(c.window_half_width)) j["window_half_width"] = nullptr;
  if (std::isinf(c.secondary_half_width)) j["secondary_half_width"] = nullptr;
}

void from_json(const nlohmann::json& j, SimConfig& c) {
  SimConfig d;
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
#define X(name) known = known || it.key() == #name;
    REWORK_SIM_FIELDS(X)
#undef X
    if (!known) throw Error(ErrorCode::config, "unknown simulator field '" + it.key() + "'");
  }
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null()) {
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(field)>>) {
        field = std::numeric_limits<double>::infinity();
        return;
      }
      throw Error(ErrorCode::config, std::string("null value for '") + key + "'");
    }
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::config, std::string("bad value for simulator field '") + key + "'");
    }
  };
#define X(name) read(#name, d.name);
  REWORK_SIM_FIELDS(X)
#undef X
  c = d;
}

SimConfig second_product_config() {
  SimConfig c;
  c.window_center = -0.85;
  c.operator_intercept = -3.2;
  c.operator_main = 2.6;
  c.operator_workload = -0.4;
  return c;
}

OracleTable OracleTable::subset(std::span<const std::size_t> rows) const {
  OracleTable out;
  const auto k = static_cast<Eigen::Index>(rows.size());
  out.y0.resize(k);
  out.y1.resize(k);
  out.propensity.resize(k);
  out.drift.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const std::size_t r = rows[static_cast<std::size_t>(i)];
    if (r >= n()) throw Error(ErrorCode::shape, "oracle subset row out of range");
    const auto ri = static_cast<Eigen::Index>(r);
    out.lot_id.push_back(lot_id[r]);
    out.y0[i] = y0[ri];
    out.y1[i] = y1[ri];
    out.propensity[i] = propensity[ri];
    out.drift[i] = drift[ri];
  }
  return out;
}

std::pair<std::vector<LotRecord>, OracleTable> simulate_records(const SimConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_lots;
  const std::size_t chips = cfg.chips_per_panel;

  // The AR(1) drift is inherently sequential; its innovations come from a
  // dedicated stream so the per-lot streams below stay independent of it.
  std::vector<double> drift(n);
  {
    auto rng = make_rng(derive_seed(cfg.seed, "drift"));
    std::normal_distribution<double> z(0.0, 1.0);
    double state = z(rng) * cfg.drift_sd / std::sqrt(1.0 - cfg.drift_ar * cfg.drift_ar);
    drift[0] = state;
    for (std::size_t t = 1; t < n; ++t) {
      state = cfg.drift_ar * state + cfg.drift_sd * z(rng);
      drift[t] = state;
    }
  }

  std::vector<LotRecord> records(n);
  OracleTable oracle;
  oracle.lot_id.resize(n);
  oracle.y0.resize(static_cast<Eigen::Index>(n));
  oracle.y1.resize(static_cast<Eigen::Index>(n));
  oracle.propensity.resize(static_cast<Eigen::Index>(n));
  oracle.drift.resize(static_cast<Eigen::Index>(n));

  const double ca = std::cos(cfg.color_angle), sa = std::sin(cfg.color_angle);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  parallel_for(n, [&](std::size_t i) {
    auto rng = make_rng(derive_seed(cfg.seed, "lot", i));
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::poisson_distribution<int> workload(cfg.workload_mean);

    const double lot_main = drift[i] + cfg.lot_sd * z(rng);
    const double lot_secondary = cfg.secondary_lot_sd * z(rng);
    const double lot_shift = cfg.rework_shift + cfg.rework_shift_sd * z(rng);

    LotRecord& rec = records[i];
    rec.cx.resize(chips);
    rec.cy.resize(chips);
    rec.invalid.assign(chips, 0);
    std::vector<double> main(chips), secondary(chips), down(chips), chip_shift(chips);
    for (std::size_t j = 0; j < chips; ++j) {
      main[j] = lot_main + cfg.chip_noise_sd * z(rng);
      secondary[j] = lot_secondary + cfg.secondary_chip_sd * z(rng);
      down[j] = cfg.downstream_noise_sd * z(rng);
      chip_shift[j] = lot_shift + cfg.rework_chip_sd * z(rng);
      rec.invalid[j] = u(rng) < cfg.invalid_rate ? 1 : 0;
    }
    // a lot always keeps at least one readable chip
    if (std::all_of(rec.invalid.begin(), rec.invalid.end(), [](auto f) { return f == 1; })) rec.invalid[0] = 0;

    double main_sum = 0.0;
    int valid = 0;
    for (std::size_t j = 0; j < chips; ++j) {
      if (rec.invalid[j]) {
        rec.cx[j] = nan;
        rec.cy[j] = nan;
        continue;
      }
      rec.cx[j] = cfg.color_base_x + cfg.color_scale * (ca * main[j] - sa * secondary[j]);
      rec.cy[j] = cfg.color_base_y + cfg.color_scale * (sa * main[j] + ca * secondary[j]);
      main_sum += main[j];
      ++valid;
    }
    rec.invalid_count = static_cast<int>(chips) - valid;
    rec.workload = workload(rng);

    const double workload_std = (rec.workload - cfg.workload_mean) / std::sqrt(cfg.workload_mean);
    const double eta = cfg.operator_intercept + cfg.operator_main * (main_sum / valid - cfg.window_center) +
                       cfg.operator_workload * workload_std + cfg.operator_noise_sd * z(rng);
    const double p = cfg.overlap_floor + (1.0 - 2.0 * cfg.overlap_floor) * logistic(eta);
    rec.treatment = u(rng) < p ? 1 : 0;

    int ok0 = 0, ok1 = 0;
    for (std::size_t j = 0; j < chips; ++j) {
      if (rec.invalid[j]) continue;
      if (!(std::abs(secondary[j]) <= cfg.secondary_half_width)) continue;
      const double final0 = main[j] + down[j] - cfg.window_center;
      const double final1 = final0 - chip_shift[j];
      if (std::abs(final0) <= cfg.window_half_width) ++ok0;
      if (std::abs(final1) <= cfg.window_half_width) ++ok1;
    }
    const double y0 = static_cast<double>(ok0) / valid;
    const double y1 = static_cast<double>(ok1) / valid;
    rec.yield_frac = rec.treatment ? y1 : y0;

    const auto r = static_cast<Eigen::Index>(i);
    oracle.lot_id[i] = i;
    oracle.y0[r] = y0;
    oracle.y1[r] = y1;
    oracle.propensity[r] = p;
    oracle.drift[r] = drift[i];
  });

  for (Eigen::Index i = 0; i < oracle.propensity.size(); ++i) {
    const double p = oracle.propensity[i];
    if (!(p >= kMinPropensity && p <= 1.0 - kMinPropensity))
      throw Error(ErrorCode::config, "generated propensity " + std::to_string(p) + " violates overlap [0.02, 0.98]");
  }
  return {std::move(records), std::move(oracle)};
}

Simulation simulate(const SimConfig& config) {
  auto [records, oracle] = simulate_records(config);
  return Simulation{build_dataset(std::move(records)), std::move(oracle)};
}

double oracle_ate(const OracleTable& oracle) {
  if (oracle.n() == 0) throw Error(ErrorCode::oracle_unavailable, "empty oracle table");
  return (oracle.y1 - oracle.y0).mean();
}

double oracle_att(const OracleTable& oracle, const Eigen::VectorXd& treatment) {
  if (static_cast<std::size_t>(treatment.size()) != oracle.n()) throw Error(ErrorCode::shape, "treatment length");
  double s = 0.0;
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < treatment.size(); ++i) {
    if (treatment[i] != 1.0) continue;
    s += oracle.y1[i] - oracle.y0[i];
    ++k;
  }
  if (k == 0) throw Error(ErrorCode::estimand_undefined, "no treated rows");
  return s / static_cast<double>(k);
}

std::vector<std::optional<double>> oracle_cate(const OracleTable& oracle, const Eigen::VectorXd& z,
                                               std::span<const double> edges) {
  if (static_cast<std::size_t>(z.size()) != oracle.n()) throw Error(ErrorCode::shape, "z length");
  if (edges.size() < 2) throw Error(ErrorCode::parameter, "need at least two bin edges");
  const std::size_t bins = edges.size() - 1;
  std::vector<double> sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z[i];
    if (v < edges.front() || v > edges.back()) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t b = static_cast<std::size_t>(it - edges.begin());
    b = b == 0 ? 0 : b - 1;
    if (b >= bins) b = bins - 1;
    sum[b] += oracle.y1[i] - oracle.y0[i];
    ++count[b];
  }
  std::vector<std::optional<double>> out(bins);
  for (std::size_t b = 0; b < bins; ++b)
    if (count[b]) out[b] = sum[b] / static_cast<double>(count[b]);
  return out;
}

double oracle_policy_value(const OracleTable& oracle, const Eigen::VectorXd& decisions, double cost) {
  if (static_cast<std::size_t>(decisions.size()) != oracle.n()) throw Error(ErrorCode::shape, "decision length");
  if (oracle.n() == 0) throw Error(ErrorCode::oracle_unavailable, "empty oracle table");
  double s = 0.0;
  for (Eigen::Index i = 0; i < decisions.size(); ++i) s += decisions[i] * (oracle.y1[i] - oracle.y0[i] - cost);
  return s / static_cast<double>(decisions.size());
}

void write_oracle_csv(const std::filesystem::path& path, const OracleTable& oracle) {
  csv::Writer w({"lot_id", "y0", "y1", "propensity", "drift"});
  for (std::size_t i = 0; i < oracle.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    w.row({std::to_string(oracle.lot_id[i]), csv::format(oracle.y0[r]), csv::format(oracle.y1[r]),
           csv::format(oracle.propensity[r]), csv::format(oracle.drift[r])});
  }
  w.save(path);
}

OracleTable read_oracle_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const char* names[] = {"lot_id", "y0", "y1", "propensity", "drift"};
  int idx[5];
  for (int c = 0; c < 5; ++c) {
    idx[c] = table.find(names[c]);
    if (idx[c] < 0) throw Error(ErrorCode::schema, std::string("oracle file lacks column '") + names[c] + "'");
  }
  OracleTable o;
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  o.y0.resize(n);
  o.y1.resize(n);
  o.propensity.resize(n);
  o.drift.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const auto r = static_cast<std::size_t>(i) + 1;
    o.lot_id.push_back(static_cast<std::size_t>(csv::parse_number(row[static_cast<std::size_t>(idx[0])], r, names[0])));
    o.y0[i] = csv::parse_number(row[static_cast<std::size_t>(idx[1])], r, names[1]);
    o.y1[i] = csv::parse_number(row[static_cast<std::size_t>(idx[2])], r, names[2]);
    o.propensity[i] = csv::parse_number(row[static_cast<std::size_t>(idx[3])], r, names[3]);
    o.drift[i] = csv::parse_number(row[static_cast<std::size_t>(idx[4])], r, names[4]);
  }
  return o;
}

}  // namespace rework
