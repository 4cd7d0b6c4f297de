#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "rework/csv.hpp"
#include "rework/data_model.hpp"
#include "rework/error.hpp"
#include "rework/simulator.hpp"

using namespace rework;

namespace {

// Two-chip lot file with the given body rows (cx_00,cx_01,cy_00,cy_01,valid_00,valid_01,workload,treatment,yield).
std::filesystem::path two_chip_file(const std::string& header, const std::vector<std::string>& rows) {
  const auto dir = testing::temp_dir("csv");
  const auto path = dir / "lots.csv";
  std::ofstream out(path);
  out << header << "\n";
  for (const auto& r : rows) out << r << "\n";
  return path;
}

const std::string kHeader = "cx_00,cx_01,cy_00,cy_01,valid_00,valid_01,workload,treatment,yield";

CsvSchema two_chips() {
  CsvSchema s;
  s.chips = 2;
  return s;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("load_csv reads a well formed three row file") {
  const auto path = two_chip_file(kHeader, {"0.30,0.32,0.31,0.33,1,1,20,0,0.9", "0.35,0.36,0.34,0.37,1,0,18,1,0.8",
                                            "0.28,0.29,0.30,0.31,1,1,25,1,0.95"});
  const Dataset d = load_csv(path, two_chips());
  CHECK(d.n() == 3);
  CHECK(d.features().rows() == 3);
  CHECK(d.treated_count() == 2);
  CHECK(d.column(columns::kInvalidCount)[1] == 1.0);
  CHECK(d.yield()[2] == doctest::Approx(0.95));
}

TEST_CASE("load_csv names a missing yield column") {
  const auto path = two_chip_file("cx_00,cx_01,cy_00,cy_01,workload,treatment", {"0.3,0.3,0.3,0.3,1,0"});
  CHECK(code_of([&] { load_csv(path, two_chips()); }) == ErrorCode::schema);
  CHECK(message_of([&] { load_csv(path, two_chips()); }).find("yield") != std::string::npos);
}

TEST_CASE("load_csv cites the row holding an invalid treatment") {
  std::vector<std::string> rows(5, "0.30,0.32,0.31,0.33,1,1,20,0,0.9");
  rows[4] = "0.30,0.32,0.31,0.33,1,1,20,2,0.9";
  const auto path = two_chip_file(kHeader, rows);
  CHECK(code_of([&] { load_csv(path, two_chips()); }) == ErrorCode::validation);
  CHECK(message_of([&] { load_csv(path, two_chips()); }).find("row 5") != std::string::npos);
}

TEST_CASE("load_csv parse and range errors") {
  const auto bad_number = two_chip_file(kHeader, {"0.30,abc,0.31,0.33,1,1,20,0,0.9"});
  CHECK(code_of([&] { load_csv(bad_number, two_chips()); }) == ErrorCode::parse);
  CHECK(message_of([&] { load_csv(bad_number, two_chips()); }).find("cx_01") != std::string::npos);
  const auto bad_yield = two_chip_file(kHeader, {"0.30,0.3,0.31,0.33,1,1,20,0,1.5"});
  CHECK(code_of([&] { load_csv(bad_yield, two_chips()); }) == ErrorCode::validation);
}

TEST_CASE("NaN measurements mark chips invalid") {
  const auto path = two_chip_file("cx_00,cx_01,cy_00,cy_01,workload,treatment,yield",
                                  {"0.30,nan,0.31,0.33,20,0,0.9", "0.30,0.4,0.31,0.33,20,1,0.9"});
  const auto recs = read_lot_csv(path, two_chips());
  CHECK(recs[0].invalid[1] == 1);
  CHECK(recs[0].invalid_count == 1);
  CHECK(recs[1].invalid_count == 0);
}

TEST_CASE("lot csv round trip") {
  auto [records, oracle] = simulate_records([] {
    SimConfig c;
    c.n_lots = 50;
    return c;
  }());
  const auto path = testing::temp_dir("roundtrip") / "lots.csv";
  write_lot_csv(path, records);
  const auto back = read_lot_csv(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].invalid == records[i].invalid);
    CHECK(back[i].treatment == records[i].treatment);
    CHECK(back[i].yield_frac == records[i].yield_frac);
    for (std::size_t j = 0; j < back[i].chips(); ++j)
      if (!records[i].invalid[j]) CHECK(back[i].cx[j] == records[i].cx[j]);
  }
}

TEST_CASE("mean_color_points") {
  LotRecord r;
  r.cx = {0.3, 0.5};
  r.cy = {0.1, 0.2};
  r.invalid = {0, 0};
  CHECK(mean_color_points(r).x == doctest::Approx(0.4));
  r.invalid = {0, 1};
  r.invalid_count = 1;
  CHECK(mean_color_points(r).x == doctest::Approx(0.3));
  r.invalid = {1, 1};
  r.invalid_count = 2;
  CHECK(code_of([&] { mean_color_points(r); }) == ErrorCode::degenerate);
}

TEST_CASE("masked mean matches an explicit loop over 36 chips with 7 invalid") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.2, 0.5);
  LotRecord r;
  for (std::size_t j = 0; j < 36; ++j) {
    r.cx.push_back(u(rng));
    r.cy.push_back(u(rng));
    r.invalid.push_back(0);
  }
  for (std::size_t j : {1, 5, 9, 14, 20, 27, 33}) r.invalid[j] = 1;
  r.invalid_count = 7;
  double sx = 0, sy = 0;
  int count = 0;
  for (std::size_t j = 0; j < 36; ++j) {
    if (r.invalid[j]) continue;
    sx += r.cx[j];
    sy += r.cy[j];
    ++count;
  }
  const auto m = mean_color_points(r);
  CHECK(m.x == doctest::Approx(sx / count).epsilon(1e-14));
  CHECK(m.y == doctest::Approx(sy / count).epsilon(1e-14));

  // with no invalid chips the masked mean is the plain mean
  r.invalid.assign(36, 0);
  r.invalid_count = 0;
  CHECK(mean_color_points(r).x == doctest::Approx(std::accumulate(r.cx.begin(), r.cx.end(), 0.0) / 36).epsilon(1e-14));
}

TEST_CASE("PCA on the diagonal line") {
  std::vector<ColorPoint> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({0.1 * i, 0.1 * i});
  const PcaTransform p = fit_pca(pts);
  CHECK(std::abs(p.rotation(0, 0)) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(std::abs(p.rotation(1, 0)) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(p.rotation.col(0).dot(p.rotation.col(1)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("PCA on two axis points") {
  const std::vector<ColorPoint> pts{{0, 0}, {2, 0}};
  const PcaTransform p = fit_pca(pts);
  CHECK(p.mean[0] == doctest::Approx(1.0));
  CHECK(p.mean[1] == doctest::Approx(0.0));
  CHECK(std::abs(p.rotation(0, 0)) == doctest::Approx(1.0));
  CHECK(p.rotation(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("PCA rejects identical points") {
  const std::vector<ColorPoint> pts{{0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}};
  CHECK(code_of([&] { fit_pca(pts); }) == ErrorCode::degenerate);
}

TEST_CASE("PCA of an isotropic sample agrees with the closed form 2x2 eigenvalues") {
  const auto x = testing::normals(10000, 1), y = testing::normals(10000, 2);
  std::vector<ColorPoint> pts;
  for (Eigen::Index i = 0; i < x.size(); ++i) pts.push_back({x[i], y[i]});
  const PcaTransform p = fit_pca(pts);
  // closed form for [[a, b], [b, c]]
  const double mx = x.mean(), my = y.mean();
  double a = 0, b = 0, c = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    a += (x[i] - mx) * (x[i] - mx);
    b += (x[i] - mx) * (y[i] - my);
    c += (y[i] - my) * (y[i] - my);
  }
  const double n1 = static_cast<double>(x.size() - 1);
  a /= n1;
  b /= n1;
  c /= n1;
  const double disc = std::sqrt((a - c) * (a - c) / 4 + b * b);
  const double l1 = (a + c) / 2 + disc, l2 = (a + c) / 2 - disc;
  CHECK(p.variances[0] == doctest::Approx(l1).epsilon(1e-9));
  CHECK(p.variances[1] == doctest::Approx(l2).epsilon(1e-9));
  CHECK(p.variances[1] / p.variances[0] > 0.95);
  // total variance preserved, components ordered
  CHECK(std::abs(p.variances.sum() - (a + c)) < 1e-10);
  CHECK(p.variances[0] >= p.variances[1]);
}

TEST_CASE("apply_pca centering, identity and round trip") {
  std::vector<ColorPoint> pts;
  const auto x = testing::uniforms(100, 3), y = testing::uniforms(100, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) pts.push_back({x[i] + 0.3 * y[i], y[i]});
  const PcaTransform p = fit_pca(pts);
  const auto centre = p.apply({p.mean[0], p.mean[1]});
  CHECK(centre.x == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(centre.y == doctest::Approx(0.0).epsilon(1e-14));

  PcaTransform id;
  const auto same = id.apply({0.7, -0.2});
  CHECK(same.x == 0.7);
  CHECK(same.y == -0.2);

  double worst = 0.0;
  for (const auto& q : pts) {
    const auto back = p.invert(p.apply(q));
    worst = std::max({worst, std::abs(back.x - q.x), std::abs(back.y - q.y)});
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("PCA orientation follows treatment") {
  std::vector<ColorPoint> pts;
  std::vector<int> a;
  for (int i = 0; i < 40; ++i) {
    pts.push_back({0.01 * i, 0.02 * i + 0.001 * (i % 3)});
    a.push_back(i < 20 ? 1 : 0);  // treated rows sit at the low end
  }
  const PcaTransform p = fit_pca(pts, a);
  double sa = 0, s = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double cm = p.apply(pts[i]).x;
    s += cm;
    sa += cm * a[i];
  }
  // mean score of treated minus overall mean is nonnegative
  CHECK(sa / 20.0 - s / 40.0 >= 0.0);
  CHECK(p.rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("subsample_overlap") {
  SUBCASE("quantiles 0 and 1 on overlapping groups keep every row") {
    const auto z = testing::normals(200, 5);
    const auto a = testing::coin(200, 6);
    const Dataset d = testing::make_dataset({columns::kMainMean}, z, a, Eigen::VectorXd::Zero(200));
    // widen the bounds so min(treated) <= min(all) and max(control) >= max(all)
    const auto r = subsample_overlap(d, 0.0, 1.0);
    double tmin = INFINITY, cmax = -INFINITY;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (a[i] == 1) tmin = std::min(tmin, z[i]);
      else cmax = std::max(cmax, z[i]);
    }
    std::size_t inside = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) inside += z[i] >= tmin && z[i] <= cmax;
    CHECK(r.data.n() == inside);
    CHECK(r.dropped == 200 - inside);
  }
  SUBCASE("identical group supports are a no-op") {
    Eigen::VectorXd z(6), a(6);
    z << 0, 0, 1, 1, 2, 2;
    a << 1, 0, 1, 0, 1, 0;
    const Dataset d = testing::make_dataset({columns::kMainMean}, z, a, Eigen::VectorXd::Zero(6));
    CHECK(subsample_overlap(d, 0.0, 1.0).data.n() == 6);
  }
  SUBCASE("disjoint supports fail") {
    Eigen::VectorXd z(4), a(4);
    z << 0, 1, 5, 6;
    a << 0, 0, 1, 1;
    const Dataset d = testing::make_dataset({columns::kMainMean}, z, a, Eigen::VectorXd::Zero(4));
    CHECK(code_of([&] { subsample_overlap(d); }) == ErrorCode::overlap);
  }
}

TEST_CASE("subsample_overlap on the default simulator agrees with a sort based quantile oracle") {
  SimConfig c;
  c.n_lots = 20000;
  const Simulation sim = simulate(c);
  const Eigen::VectorXd z = sim.data.column(columns::kMainMean);
  const Eigen::VectorXd& a = sim.data.treatment();
  std::vector<double> t, u;
  for (Eigen::Index i = 0; i < z.size(); ++i) (a[i] == 1 ? t : u).push_back(z[i]);
  std::sort(t.begin(), t.end());
  std::sort(u.begin(), u.end());
  auto q = [](const std::vector<double>& s, double p) {
    const double h = (static_cast<double>(s.size()) - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (h - std::floor(h)) * (s[hi] - s[lo]);
  };
  const double lo = q(t, 0.01), hi = q(u, 0.995);
  std::size_t kept = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) kept += z[i] >= lo && z[i] <= hi;
  const auto r = subsample_overlap(sim.data);
  const double frac = static_cast<double>(r.data.n()) / static_cast<double>(z.size());
  CHECK(std::abs(frac - static_cast<double>(kept) / static_cast<double>(z.size())) <= 0.02);
  CHECK(r.lower == doctest::Approx(lo).epsilon(1e-12));
  CHECK(r.upper == doctest::Approx(hi).epsilon(1e-12));
  // output rows are a subset of the input, both groups survive
  std::set<std::size_t> src(sim.data.source_rows().begin(), sim.data.source_rows().end());
  for (auto s : r.data.source_rows()) CHECK(src.count(s) == 1);
  CHECK(r.data.treated_count() > 0);
  CHECK(r.data.treated_count() < r.data.n());
}

TEST_CASE("train_eval_split") {
  const SplitPlan p = train_eval_split(10, 0.7, 3);
  CHECK(p.train.size() == 7);
  CHECK(p.eval.size() == 3);
  std::set<std::size_t> all(p.train.begin(), p.train.end());
  for (auto e : p.eval) CHECK(all.insert(e).second);
  CHECK(all.size() == 10);
  const SplitPlan again = train_eval_split(10, 0.7, 3);
  CHECK(again.train == p.train);
  CHECK(again.eval == p.eval);
  CHECK(train_eval_split(1000, 0.7, 1).train != train_eval_split(1000, 0.7, 2).train);
  CHECK(code_of([] { train_eval_split(10, 1.0, 1); }) == ErrorCode::parameter);
  CHECK(code_of([] { train_eval_split(10, 0.0, 1); }) == ErrorCode::parameter);
}

TEST_CASE("dataset column access") {
  Eigen::MatrixXd x(2, 2);
  x << 1, 2, 3, 4;
  const Dataset d = testing::make_dataset({"p", "q"}, x, Eigen::Vector2d(0, 1), Eigen::Vector2d(0.5, 0.6));
  CHECK(d.column("q")[1] == 4);
  CHECK(d.column(columns::kTreatment)[1] == 1);
  CHECK(code_of([&] { d.column("missing"); }) == ErrorCode::feature);
  const std::vector<std::size_t> rows{1};
  CHECK(d.subset(rows).features()(0, 0) == 3);
}

TEST_CASE("feature columns from simulated lots") {
  SimConfig c;
  c.n_lots = 100;
  const Simulation sim = simulate(c);
  CHECK(sim.data.columns() == columns::all());
  // cm_mean is the mean of the valid per-chip main components
  const auto& rec = sim.data.records()[3];
  const auto& pca = *sim.data.pca();
  double s = 0;
  int count = 0;
  for (std::size_t j = 0; j < rec.chips(); ++j) {
    if (rec.invalid[j]) continue;
    s += pca.apply({rec.cx[j], rec.cy[j]}).x;
    ++count;
  }
  CHECK(sim.data.column(columns::kMainMean)[3] == doctest::Approx(s / count).epsilon(1e-10));
}
