#include "rework/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "rework/csv.hpp"
#include "rework/error.hpp"
#include "rework/random.hpp"
#include "rework/stats.hpp"

namespace rework {

void LotRecord::validate() const {
  const std::size_t k = cx.size();
  if (cy.size() != k || invalid.size() != k)
    throw Error(ErrorCode::validation, "cx, cy and invalid flags must have equal length");
  int count = 0;
  for (auto f : invalid) {
    if (f > 1) throw Error(ErrorCode::validation, "invalid flag must be 0 or 1");
    count += f;
  }
  if (count != invalid_count) throw Error(ErrorCode::validation, "invalid_count does not match flags");
  if (treatment != 0 && treatment != 1) throw Error(ErrorCode::validation, "treatment must be 0 or 1");
  if (!(yield_frac >= 0.0 && yield_frac <= 1.0)) throw Error(ErrorCode::validation, "yield outside [0,1]");
  if (!(workload >= 0.0)) throw Error(ErrorCode::validation, "workload must be nonnegative");
}

ColorPoint mean_color_points(const LotRecord& record) {
  double sx = 0.0, sy = 0.0;
  std::size_t valid = 0;
  for (std::size_t j = 0; j < record.chips(); ++j) {
    if (record.invalid[j]) continue;
    sx += record.cx[j];
    sy += record.cy[j];
    ++valid;
  }
  if (valid == 0) throw Error(ErrorCode::degenerate, "all chips of the lot are invalid");
  return {sx / static_cast<double>(valid), sy / static_cast<double>(valid)};
}

ColorPoint PcaTransform::apply(ColorPoint p) const {
  const Eigen::Vector2d out = rotation.transpose() * (Eigen::Vector2d(p.x, p.y) - mean);
  return {out[0], out[1]};
}

ColorPoint PcaTransform::invert(ColorPoint scores) const {
  const Eigen::Vector2d out = rotation * Eigen::Vector2d(scores.x, scores.y) + mean;
  return {out[0], out[1]};
}

PcaTransform fit_pca(std::span<const ColorPoint> points, std::span<const int> treatment) {
  if (points.size() < 2) throw Error(ErrorCode::degenerate, "PCA needs at least two points");
  if (!treatment.empty() && treatment.size() != points.size())
    throw Error(ErrorCode::shape, "treatment labels must align with points");

  PcaTransform t;
  for (const auto& p : points) t.mean += Eigen::Vector2d(p.x, p.y);
  t.mean /= static_cast<double>(points.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector2d d = Eigen::Vector2d(p.x, p.y) - t.mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size() - 1);
  if (!(cov.trace() > 0.0)) throw Error(ErrorCode::degenerate, "all points identical: degenerate covariance");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  // Eigen sorts ascending.
  t.variances = Eigen::Vector2d(eig.eigenvalues()[1], eig.eigenvalues()[0]);
  Eigen::Vector2d first = eig.eigenvectors().col(1).normalized();

  bool flip = false;
  if (!treatment.empty()) {
    Eigen::VectorXd scores(static_cast<Eigen::Index>(points.size()));
    Eigen::VectorXd a(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
      scores[static_cast<Eigen::Index>(i)] = first.dot(Eigen::Vector2d(points[i].x, points[i].y) - t.mean);
      a[static_cast<Eigen::Index>(i)] = treatment[i];
    }
    const double r = stats::correlation(scores, a);
    if (r < 0.0) flip = true;
    else if (r == 0.0) flip = first[0] < 0.0;
  } else {
    flip = first[0] < 0.0;
  }
  if (flip) first = -first;
  t.sign_flipped = flip;
  t.rotation.col(0) = first;
  t.rotation.col(1) = Eigen::Vector2d(-first[1], first[0]);
  return t;
}

namespace columns {

std::string main_chip(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cm_%02zu", j);
  return buf;
}

std::string secondary_chip(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cs_%02zu", j);
  return buf;
}

std::vector<std::string> all(std::size_t chips) {
  auto out = balance_set(chips);
  out.push_back(kMainMean);
  out.push_back(kSecondaryMean);
  out.push_back(kMainVariance);
  return out;
}

std::vector<std::string> balance_set(std::size_t chips) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < chips; ++j) out.push_back(main_chip(j));
  for (std::size_t j = 0; j < chips; ++j) out.push_back(secondary_chip(j));
  out.push_back(kInvalidCount);
  out.push_back(kWorkload);
  return out;
}

}  // namespace columns

Dataset::Dataset(std::vector<std::string> columns, Eigen::MatrixXd features,
                 Eigen::VectorXd treatment, Eigen::VectorXd yield,
                 std::vector<std::size_t> source_rows, std::vector<LotRecord> records,
                 std::optional<PcaTransform> pca)
    : columns_(std::move(columns)),
      features_(std::move(features)),
      treatment_(std::move(treatment)),
      yield_(std::move(yield)),
      source_rows_(std::move(source_rows)),
      records_(std::move(records)),
      pca_(std::move(pca)) {
  const auto n = features_.rows();
  if (static_cast<std::size_t>(features_.cols()) != columns_.size())
    throw Error(ErrorCode::shape, "feature matrix width does not match column names");
  if (treatment_.size() != n || yield_.size() != n || static_cast<Eigen::Index>(source_rows_.size()) != n)
    throw Error(ErrorCode::shape, "dataset vectors must align with feature rows");
  if (!records_.empty() && static_cast<Eigen::Index>(records_.size()) != n)
    throw Error(ErrorCode::shape, "records must align with feature rows");
  if (!features_.allFinite()) throw Error(ErrorCode::validation, "feature matrix contains missing values");
}

bool Dataset::has_column(const std::string& name) const {
  return name == columns::kTreatment ||
         std::find(columns_.begin(), columns_.end(), name) != columns_.end();
}

std::size_t Dataset::index_of(const std::string& name) const {
  const auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) throw Error(ErrorCode::feature, "unknown feature column '" + name + "'");
  return static_cast<std::size_t>(it - columns_.begin());
}

Eigen::VectorXd Dataset::column(const std::string& name) const {
  if (name == columns::kTreatment) return treatment_;
  return features_.col(static_cast<Eigen::Index>(index_of(name)));
}

Eigen::MatrixXd Dataset::select(const std::vector<std::string>& names) const {
  Eigen::MatrixXd out(features_.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = column(names[c]);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<std::size_t> src;
  std::vector<LotRecord> recs;
  src.reserve(rows.size());
  for (auto r : rows) {
    if (r >= n()) throw Error(ErrorCode::shape, "subset row out of range");
    src.push_back(source_rows_[r]);
    if (!records_.empty()) recs.push_back(records_[r]);
  }
  return Dataset(columns_, stats::subset_rows(features_, rows), stats::subset(treatment_, rows),
                 stats::subset(yield_, rows), std::move(src), std::move(recs), pca_);
}

Dataset Dataset::with_column(const std::string& name, const Eigen::VectorXd& values) const {
  if (has_column(name)) throw Error(ErrorCode::feature, "column '" + name + "' already exists");
  if (values.size() != features_.rows()) throw Error(ErrorCode::shape, "new column length mismatch");
  auto cols = columns_;
  cols.push_back(name);
  Eigen::MatrixXd x(features_.rows(), features_.cols() + 1);
  x << features_, values;
  return Dataset(std::move(cols), std::move(x), treatment_, yield_, source_rows_, records_, pca_);
}

std::size_t Dataset::treated_count() const {
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < treatment_.size(); ++i) c += treatment_[i] > 0.5 ? 1 : 0;
  return c;
}

Dataset build_dataset(std::vector<LotRecord> records, const PcaTransform& pca) {
  if (records.empty()) throw Error(ErrorCode::validation, "no records");
  const std::size_t k = records.front().chips();
  const auto names = columns::all(k);
  const auto n = static_cast<Eigen::Index>(records.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd a(n), y(n);
  std::vector<std::size_t> src(records.size());
  std::iota(src.begin(), src.end(), std::size_t{0});

  const auto kk = static_cast<Eigen::Index>(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    r.validate();
    if (r.chips() != k) throw Error(ErrorCode::validation, "records differ in chip count");
    const ColorPoint mean = pca.apply(mean_color_points(r));
    double sum = 0.0, sum_sq = 0.0;
    std::size_t valid = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (r.invalid[j]) {
        x(i, jj) = mean.x;
        x(i, kk + jj) = mean.y;
        continue;
      }
      const ColorPoint c = pca.apply({r.cx[j], r.cy[j]});
      x(i, jj) = c.x;
      x(i, kk + jj) = c.y;
      sum += c.x;
      sum_sq += c.x * c.x;
      ++valid;
    }
    const double m = sum / static_cast<double>(valid);
    x(i, 2 * kk) = r.invalid_count;
    x(i, 2 * kk + 1) = r.workload;
    x(i, 2 * kk + 2) = mean.x;
    x(i, 2 * kk + 3) = mean.y;
    x(i, 2 * kk + 4) = std::max(0.0, sum_sq / static_cast<double>(valid) - m * m);
    a[i] = r.treatment;
    y[i] = r.yield_frac;
  }
  return Dataset(names, std::move(x), std::move(a), std::move(y), std::move(src), std::move(records), pca);
}

Dataset build_dataset(std::vector<LotRecord> records) {
  std::vector<ColorPoint> means;
  std::vector<int> labels;
  means.reserve(records.size());
  for (const auto& r : records) {
    r.validate();
    means.push_back(mean_color_points(r));
    labels.push_back(r.treatment);
  }
  const PcaTransform pca = fit_pca(means, labels);
  return build_dataset(std::move(records), pca);
}

std::string CsvSchema::chip_column(const std::string& prefix, std::size_t j) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02zu", j);
  return prefix + buf;
}

std::vector<LotRecord> read_lot_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  const csv::Table table = csv::read(path);
  auto require = [&](const std::string& name) {
    const int idx = table.find(name);
    if (idx < 0) throw Error(ErrorCode::schema, "missing column '" + name + "'");
    return static_cast<std::size_t>(idx);
  };
  std::vector<std::size_t> cx_idx, cy_idx;
  std::vector<int> valid_idx;
  for (std::size_t j = 0; j < schema.chips; ++j) {
    cx_idx.push_back(require(schema.chip_column(schema.cx_prefix, j)));
    cy_idx.push_back(require(schema.chip_column(schema.cy_prefix, j)));
    valid_idx.push_back(table.find(schema.chip_column(schema.valid_prefix, j)));
  }
  const std::size_t w_idx = require(schema.workload);
  const std::size_t a_idx = require(schema.treatment);
  const std::size_t y_idx = require(schema.yield);

  std::vector<LotRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const std::size_t row = r + 1;
    LotRecord rec;
    rec.cx.resize(schema.chips);
    rec.cy.resize(schema.chips);
    rec.invalid.assign(schema.chips, 0);
    for (std::size_t j = 0; j < schema.chips; ++j) {
      rec.cx[j] = csv::parse_number(cells[cx_idx[j]], row, table.header[cx_idx[j]], true);
      rec.cy[j] = csv::parse_number(cells[cy_idx[j]], row, table.header[cy_idx[j]], true);
      bool invalid = std::isnan(rec.cx[j]) || std::isnan(rec.cy[j]);
      if (valid_idx[j] >= 0) {
        const auto vi = static_cast<std::size_t>(valid_idx[j]);
        const double v = csv::parse_number(cells[vi], row, table.header[vi]);
        if (v != 0.0 && v != 1.0)
          throw Error(ErrorCode::validation, "row " + std::to_string(row) + ", column '" +
                                                 table.header[vi] + "': validity must be 0 or 1");
        invalid = invalid || v == 0.0;
      }
      if (invalid) {
        rec.invalid[j] = 1;
        rec.cx[j] = 0.0;
        rec.cy[j] = 0.0;
        ++rec.invalid_count;
      }
    }
    rec.workload = csv::parse_number(cells[w_idx], row, schema.workload);
    const double a = csv::parse_number(cells[a_idx], row, schema.treatment);
    if (a != 0.0 && a != 1.0)
      throw Error(ErrorCode::validation, "row " + std::to_string(row) + ": treatment must be 0 or 1, found " +
                                             cells[a_idx]);
    rec.treatment = static_cast<int>(a);
    rec.yield_frac = csv::parse_number(cells[y_idx], row, schema.yield);
    if (!(rec.yield_frac >= 0.0 && rec.yield_frac <= 1.0))
      throw Error(ErrorCode::validation, "row " + std::to_string(row) + ": yield outside [0,1]: " + cells[y_idx]);
    if (rec.workload < 0.0)
      throw Error(ErrorCode::validation, "row " + std::to_string(row) + ": negative workload");
    if (rec.invalid_count >= static_cast<int>(schema.chips))
      throw Error(ErrorCode::degenerate, "row " + std::to_string(row) + ": all chips invalid");
    records.push_back(std::move(rec));
  }
  return records;
}

void write_lot_csv(const std::filesystem::path& path, std::span<const LotRecord> records,
                   const CsvSchema& schema) {
  std::vector<std::string> header;
  for (std::size_t j = 0; j < schema.chips; ++j) header.push_back(schema.chip_column(schema.cx_prefix, j));
  for (std::size_t j = 0; j < schema.chips; ++j) header.push_back(schema.chip_column(schema.cy_prefix, j));
  for (std::size_t j = 0; j < schema.chips; ++j) header.push_back(schema.chip_column(schema.valid_prefix, j));
  header.push_back(schema.workload);
  header.push_back(schema.treatment);
  header.push_back(schema.yield);
  csv::Writer out(header);
  std::vector<std::string> cells(header.size());
  for (const auto& r : records) {
    if (r.chips() != schema.chips) throw Error(ErrorCode::shape, "record chip count differs from schema");
    for (std::size_t j = 0; j < schema.chips; ++j) {
      cells[j] = r.invalid[j] ? "nan" : csv::format(r.cx[j]);
      cells[schema.chips + j] = r.invalid[j] ? "nan" : csv::format(r.cy[j]);
      cells[2 * schema.chips + j] = r.invalid[j] ? "0" : "1";
    }
    cells[3 * schema.chips] = csv::format(r.workload);
    cells[3 * schema.chips + 1] = std::to_string(r.treatment);
    cells[3 * schema.chips + 2] = csv::format(r.yield_frac);
    out.row(cells);
  }
  out.save(path);
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return build_dataset(read_lot_csv(path, schema));
}

OverlapResult subsample_overlap(const Dataset& data, double q_treated_low, double q_control_high) {
  if (!(q_treated_low >= 0.0 && q_treated_low <= 1.0 && q_control_high >= 0.0 && q_control_high <= 1.0))
    throw Error(ErrorCode::parameter, "subsampling quantiles must lie in [0,1]");
  const Eigen::VectorXd cm = data.column(columns::kMainMean);
  std::vector<double> treated, control;
  for (std::size_t i = 0; i < data.n(); ++i) {
    (data.treatment()[static_cast<Eigen::Index>(i)] > 0.5 ? treated : control).push_back(cm[static_cast<Eigen::Index>(i)]);
  }
  if (treated.empty() || control.empty())
    throw Error(ErrorCode::overlap, "both treatment groups must be nonempty");

  OverlapResult out;
  out.lower = stats::quantile(treated, q_treated_low);
  out.upper = stats::quantile(control, q_control_high);
  if (out.lower > out.upper)
    throw Error(ErrorCode::overlap, "empty overlap interval [" + csv::format(out.lower) + ", " +
                                        csv::format(out.upper) + "]");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double v = cm[static_cast<Eigen::Index>(i)];
    if (v >= out.lower && v <= out.upper) keep.push_back(i);
  }
  out.data = data.subset(keep);
  out.dropped = data.n() - keep.size();
  const std::size_t t = out.data.treated_count();
  if (t == 0 || t == out.data.n())
    throw Error(ErrorCode::overlap, "a treatment group is empty after subsampling");
  return out;
}

SplitPlan train_eval_split(std::size_t n, double frac, std::uint64_t seed) {
  if (!(frac > 0.0 && frac < 1.0)) throw Error(ErrorCode::parameter, "split fraction must lie in (0,1)");
  if (n < 10) throw Error(ErrorCode::parameter, "split needs at least 10 rows");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_rng(derive_seed(seed, "train_eval_split"));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
  SplitPlan plan;
  plan.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  plan.eval.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.eval.begin(), plan.eval.end());
  plan.train_fraction = frac;
  plan.seed = seed;
  return plan;
}

}  // namespace rework
