#include "rework/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "rework/csv.hpp"
#include "rework/error.hpp"
#include "rework/stats.hpp"

namespace rework {

bool BalanceReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const BalanceRow& r) { return r.pass_treated && r.pass_control; });
}

double BalanceReport::max_score() const {
  double m = 0.0;
  for (const auto& r : rows) {
    if (r.psb_treated) m = std::max(m, *r.psb_treated);
    if (r.psb_control) m = std::max(m, *r.psb_control);
  }
  return m;
}

const BalanceRow& BalanceReport::row(const std::string& covariate) const {
  for (const auto& r : rows)
    if (r.covariate == covariate) return r;
  throw Error(ErrorCode::feature, "no balance row for '" + covariate + "'");
}

BalanceReport psb(const Dataset& d, const Eigen::VectorXd& m_hat, const std::vector<std::string>& covariates,
                  BalanceOptions options) {
  if (static_cast<std::size_t>(m_hat.size()) != d.n()) throw Error(ErrorCode::shape, "propensities do not cover the data");
  for (Eigen::Index i = 0; i < m_hat.size(); ++i)
    if (!(m_hat[i] > 0.0 && m_hat[i] < 1.0)) throw Error(ErrorCode::validation, "propensities must lie in (0,1)");
  const auto names = covariates.empty() ? columns::balance_set() : covariates;
  const auto& a = d.treatment();

  BalanceReport report;
  report.threshold = options.threshold;
  for (const auto& name : names) {
    const Eigen::VectorXd x = d.column(name);
    BalanceRow row;
    row.covariate = name;
    const double var = stats::variance(x);
    if (!(var > 0.0)) {
      row.applicable = false;
      report.rows.push_back(row);
      continue;
    }
    const double pooled = stats::mean(x);
    double num[2] = {0.0, 0.0}, den[2] = {0.0, 0.0};
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const int g = a[i] == 1.0 ? 1 : 0;
      const double w = g == 0 && options.control_weighting == ControlWeighting::complement_propensity
                           ? 1.0 / (1.0 - m_hat[i])
                           : 1.0 / m_hat[i];
      num[g] += w * x[i];
      den[g] += w;
    }
    if (den[1] > 0.0) {
      row.psb_treated = std::abs(num[1] / den[1] - pooled) / var;
      row.pass_treated = *row.psb_treated < options.threshold;
    }
    if (den[0] > 0.0) {
      row.psb_control = std::abs(num[0] / den[0] - pooled) / var;
      row.pass_control = *row.psb_control < options.threshold;
    }
    report.rows.push_back(row);
  }
  return report;
}

std::string balance_csv(const BalanceReport& report) {
  csv::Writer w({"covariate", "A=1", "A=0"});
  auto cell = [](const std::optional<double>& v) { return v ? csv::format(*v) : std::string("na"); };
  for (const auto& r : report.rows) w.row({r.covariate, cell(r.psb_treated), cell(r.psb_control)});
  return w.str();
}

Histogram overlap_histograms(const Dataset& d, const std::string& covariate, std::size_t bins) {
  if (bins < 2) throw Error(ErrorCode::parameter, "histograms need at least two bins");
  const Eigen::VectorXd x = d.column(covariate);
  Histogram h;
  h.covariate = covariate;
  h.treated.assign(bins, 0);
  h.control.assign(bins, 0);
  double lo = 0.0, hi = 1.0;
  if (x.size() > 0) {
    lo = x.minCoeff();
    hi = x.maxCoeff();
  }
  if (!(hi > lo)) hi = lo + 1.0;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    h.edges[b] = b == bins ? hi : lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  const auto& a = d.treatment();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    // bin = number of interior edges at or below x, so counts agree with the written edges
    const auto b = static_cast<std::size_t>(std::upper_bound(h.edges.begin() + 1, h.edges.end() - 1, x[i]) -
                                            (h.edges.begin() + 1));
    (a[i] == 1.0 ? h.treated : h.control)[b] += 1;
  }
  return h;
}

std::string histogram_csv(const Histogram& h) {
  csv::Writer w({"bin_low", "bin_high", "treated", "control"});
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
    w.row({csv::format(h.edges[b]), csv::format(h.edges[b + 1]), std::to_string(h.treated[b]),
           std::to_string(h.control[b])});
  return w.str();
}

}  // namespace rework
