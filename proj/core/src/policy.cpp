#include "rework/policy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "rework/csv.hpp"
#include "rework/error.hpp"
#include "rework/stats.hpp"

namespace rework {

const char* to_string(TreeSearch s) { return s == TreeSearch::greedy ? "greedy" : "exact"; }

const char* to_string(PolicyForm f) {
  switch (f) {
    case PolicyForm::cate_threshold_1d: return "cate_threshold_1d";
    case PolicyForm::cate_threshold_2d: return "cate_threshold_2d";
    case PolicyForm::conservative_threshold: return "conservative_threshold";
    case PolicyForm::tree: return "tree";
    case PolicyForm::observed: return "observed";
  }
  return "unknown";
}

namespace {

PolicyForm policy_form_from_string(const std::string& s) {
  for (auto f : {PolicyForm::cate_threshold_1d, PolicyForm::cate_threshold_2d, PolicyForm::conservative_threshold,
                 PolicyForm::tree, PolicyForm::observed})
    if (s == to_string(f)) return f;
  throw Error(ErrorCode::parse, "unknown policy form '" + s + "'");
}

int leaf_action(double sum) { return sum > 0.0 ? 1 : 0; }

// Per-feature candidate thresholds and each row's bin: the smallest k with
// z <= t_k (K when the row lies right of every threshold).
struct SplitTable {
  std::vector<std::vector<double>> thresholds;
  std::vector<std::vector<int>> bin;  // [feature][row]
  bool downsampled = false;

  SplitTable(const Eigen::MatrixXd& z, std::size_t max_candidates) {
    const auto p = static_cast<std::size_t>(z.cols());
    thresholds.resize(p);
    bin.resize(p);
    for (std::size_t f = 0; f < p; ++f) {
      bool thinned = false;
      thresholds[f] = candidate_thresholds(z.col(static_cast<Eigen::Index>(f)), max_candidates, &thinned);
      downsampled = downsampled || thinned;
      const auto& t = thresholds[f];
      bin[f].resize(static_cast<std::size_t>(z.rows()));
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        bin[f][static_cast<std::size_t>(i)] =
            static_cast<int>(std::lower_bound(t.begin(), t.end(), z(i, static_cast<Eigen::Index>(f))) - t.begin());
    }
  }
};

struct SplitChoice {
  int feature = -1;
  int index = -1;
  double objective = 0.0;
};

// Best one-level split of `rows` using |S_left| + |S_right|.
SplitChoice best_split(const SplitTable& table, const Eigen::VectorXd& s, const std::vector<std::size_t>& rows) {
  SplitChoice best;
  double total = 0.0;
  for (auto r : rows) total += s[static_cast<Eigen::Index>(r)];
  std::vector<double> hist;
  for (std::size_t f = 0; f < table.thresholds.size(); ++f) {
    const std::size_t k = table.thresholds[f].size();
    if (k == 0) continue;
    hist.assign(k + 1, 0.0);
    for (auto r : rows) hist[static_cast<std::size_t>(table.bin[f][r])] += s[static_cast<Eigen::Index>(r)];
    double left = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      left += hist[t];
      const double obj = std::abs(left) + std::abs(total - left);
      if (best.feature < 0 || obj > best.objective) best = {static_cast<int>(f), static_cast<int>(t), obj};
    }
  }
  return best;
}

struct TreeBuild {
  const Eigen::MatrixXd& z;
  const Eigen::VectorXd& s;
  const SplitTable& table;
  PolicyTree& tree;

  int leaf(const std::vector<std::size_t>& rows) {
    double sum = 0.0;
    for (auto r : rows) sum += s[static_cast<Eigen::Index>(r)];
    PolicyTree::Node node;
    node.action = leaf_action(sum);
    tree.nodes.push_back(node);
    return static_cast<int>(tree.nodes.size()) - 1;
  }

  int split_node(const std::vector<std::size_t>& rows, SplitChoice choice,
                 const std::function<int(const std::vector<std::size_t>&)>& child) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto f = static_cast<std::size_t>(choice.feature);
    std::vector<std::size_t> left, right;
    for (auto r : rows) (table.bin[f][r] <= choice.index ? left : right).push_back(r);
    const int l = child(left);
    const int r = child(right);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = choice.feature;
    node.threshold = table.thresholds[f][static_cast<std::size_t>(choice.index)];
    node.left = l;
    node.right = r;
    return id;
  }

  int greedy(const std::vector<std::size_t>& rows, int remaining) {
    if (remaining == 0) return leaf(rows);
    const SplitChoice choice = best_split(table, s, rows);
    if (choice.feature < 0) return leaf(rows);
    return split_node(rows, choice, [&](const std::vector<std::size_t>& sub) { return greedy(sub, remaining - 1); });
  }
};

// Exact depth-two search. For every root split the two children are solved
// independently from per-(root feature, child feature) bin histograms.
void exact_depth_two(const SplitTable& table, const Eigen::VectorXd& s, SplitChoice& root, SplitChoice& left_child,
                     SplitChoice& right_child) {
  const std::size_t p = table.thresholds.size();
  const std::size_t n = static_cast<std::size_t>(s.size());
  double best_total = 0.0;
  bool have = false;

  std::vector<std::vector<double>> totals(p);  // per child feature, sum per bin over all rows
  for (std::size_t g = 0; g < p; ++g) {
    totals[g].assign(table.thresholds[g].size() + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) totals[g][static_cast<std::size_t>(table.bin[g][i])] += s[static_cast<Eigen::Index>(i)];
  }
  auto best_in = [&](const std::vector<std::vector<double>>& hist) {
    SplitChoice best;
    for (std::size_t g = 0; g < p; ++g) {
      const std::size_t k = table.thresholds[g].size();
      if (k == 0) continue;
      double sum = 0.0;
      for (double h : hist[g]) sum += h;
      double left = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        left += hist[g][t];
        const double obj = std::abs(left) + std::abs(sum - left);
        if (best.feature < 0 || obj > best.objective) best = {static_cast<int>(g), static_cast<int>(t), obj};
      }
    }
    return best;
  };

  for (std::size_t f = 0; f < p; ++f) {
    const std::size_t kf = table.thresholds[f].size();
    if (kf == 0) continue;
    // joint[g][bf][bg]
    std::vector<std::vector<std::vector<double>>> joint(p);
    for (std::size_t g = 0; g < p; ++g) {
      joint[g].assign(kf + 1, std::vector<double>(table.thresholds[g].size() + 1, 0.0));
      for (std::size_t i = 0; i < n; ++i)
        joint[g][static_cast<std::size_t>(table.bin[f][i])][static_cast<std::size_t>(table.bin[g][i])] +=
            s[static_cast<Eigen::Index>(i)];
    }
    std::vector<std::vector<double>> left_hist(p), right_hist(p);
    for (std::size_t g = 0; g < p; ++g) left_hist[g].assign(table.thresholds[g].size() + 1, 0.0);
    for (std::size_t t = 0; t < kf; ++t) {
      for (std::size_t g = 0; g < p; ++g) {
        for (std::size_t b = 0; b < left_hist[g].size(); ++b) left_hist[g][b] += joint[g][t][b];
        right_hist[g].resize(left_hist[g].size());
        for (std::size_t b = 0; b < left_hist[g].size(); ++b) right_hist[g][b] = totals[g][b] - left_hist[g][b];
      }
      const SplitChoice l = best_in(left_hist);
      const SplitChoice r = best_in(right_hist);
      const double total = l.objective + r.objective;
      if (!have || total > best_total) {
        have = true;
        best_total = total;
        root = {static_cast<int>(f), static_cast<int>(t), total};
        left_child = l;
        right_child = r;
      }
    }
  }
}

}  // namespace

std::vector<double> candidate_thresholds(const Eigen::VectorXd& z, std::size_t max_candidates, bool* downsampled) {
  std::vector<double> v(z.data(), z.data() + z.size());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> mids;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) mids.push_back(0.5 * (v[i] + v[i + 1]));
  if (downsampled) *downsampled = false;
  if (max_candidates >= 1 && mids.size() > max_candidates) {
    std::vector<double> thin;
    const double m = static_cast<double>(mids.size() - 1);
    for (std::size_t k = 0; k < max_candidates; ++k) {
      const double pos = max_candidates == 1 ? 0.5 * m : m * static_cast<double>(k) / static_cast<double>(max_candidates - 1);
      thin.push_back(mids[static_cast<std::size_t>(std::llround(pos))]);
    }
    thin.erase(std::unique(thin.begin(), thin.end()), thin.end());
    mids = std::move(thin);
    if (downsampled) *downsampled = true;
  }
  return mids;
}

ClassificationTargets weighted_classification_targets(const Eigen::VectorXd& psi_b, double gamma) {
  ClassificationTargets t;
  t.weights.resize(psi_b.size());
  t.labels.resize(psi_b.size());
  for (Eigen::Index i = 0; i < psi_b.size(); ++i) {
    const double s = psi_b[i] - gamma;
    t.weights[i] = std::abs(s);
    t.labels[i] = s > 0.0 ? 1.0 : -1.0;
  }
  return t;
}

int PolicyTree::decide_row(const Eigen::Ref<const Eigen::RowVectorXd>& z) const {
  if (nodes.empty()) throw Error(ErrorCode::parameter, "empty policy tree");
  int id = 0;
  while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
    const auto& node = nodes[static_cast<std::size_t>(id)];
    if (node.feature >= z.size()) throw Error(ErrorCode::feature, "policy tree feature out of range");
    id = z[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(id)].action;
}

Eigen::VectorXd PolicyTree::decide(const Eigen::MatrixXd& z) const {
  Eigen::VectorXd out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) out[i] = decide_row(z.row(i));
  return out;
}

PolicyTree fit_policy_tree(const Eigen::MatrixXd& z, const Eigen::VectorXd& psi_b, double gamma, int depth,
                           TreeSearch mode, std::vector<std::string> features, TreeOptions options) {
  if (z.rows() != psi_b.size()) throw Error(ErrorCode::shape, "policy features and scores differ in rows");
  if (z.rows() == 0) throw Error(ErrorCode::parameter, "policy tree needs data");
  if (depth < 1) throw Error(ErrorCode::parameter, "policy tree depth must be >= 1");
  if (mode == TreeSearch::exact && depth > 2)
    throw Error(ErrorCode::unsupported, "exact tree search supports depth <= 2, got " + std::to_string(depth));
  if (!features.empty() && features.size() != static_cast<std::size_t>(z.cols()))
    throw Error(ErrorCode::shape, "feature names do not match columns");
  if (!z.allFinite() || !psi_b.allFinite()) throw Error(ErrorCode::validation, "policy tree input contains NaN");

  const Eigen::VectorXd s = psi_b.array() - gamma;
  const SplitTable table(z, options.max_candidates);
  PolicyTree tree;
  tree.depth = depth;
  tree.mode = mode;
  tree.features = std::move(features);
  tree.max_candidates = options.max_candidates;
  tree.downsampled = table.downsampled;

  std::vector<std::size_t> rows(static_cast<std::size_t>(z.rows()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  TreeBuild build{z, s, table, tree};

  if (mode == TreeSearch::greedy || depth == 1) {
    build.greedy(rows, depth);
    return tree;
  }
  SplitChoice root, left, right;
  exact_depth_two(table, s, root, left, right);
  if (root.feature < 0) {
    build.leaf(rows);
    return tree;
  }
  int side = 0;
  build.split_node(rows, root, [&](const std::vector<std::size_t>& sub) {
    const SplitChoice child = side++ == 0 ? left : right;
    if (child.feature < 0) return build.leaf(sub);
    return build.split_node(sub, child, [&](const std::vector<std::size_t>& leaf_rows) { return build.leaf(leaf_rows); });
  });
  return tree;
}

double policy_objective(const Eigen::VectorXd& decisions, const Eigen::VectorXd& psi_b, double gamma) {
  if (decisions.size() != psi_b.size() || psi_b.size() == 0) throw Error(ErrorCode::shape, "objective inputs");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < psi_b.size(); ++i) sum += (2.0 * decisions[i] - 1.0) * (psi_b[i] - gamma);
  return sum / static_cast<double>(psi_b.size());
}

PolicyTree constant_tree(int action, std::vector<std::string> features) {
  PolicyTree t;
  PolicyTree::Node leaf;
  leaf.action = action ? 1 : 0;
  t.nodes.push_back(leaf);
  t.depth = 0;
  t.features = std::move(features);
  return t;
}

namespace {

nlohmann::json node_to_json(const PolicyTree& t, int id) {
  const auto& node = t.nodes.at(static_cast<std::size_t>(id));
  if (node.feature < 0) return {{"action", node.action}};
  const std::string name = static_cast<std::size_t>(node.feature) < t.features.size()
                               ? t.features[static_cast<std::size_t>(node.feature)]
                               : "z" + std::to_string(node.feature);
  return {{"feature", name},
          {"feature_index", node.feature},
          {"threshold", node.threshold},
          {"left", node_to_json(t, node.left)},
          {"right", node_to_json(t, node.right)}};
}

int node_from_json(const nlohmann::json& j, PolicyTree& t) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("action")) {
    t.nodes[static_cast<std::size_t>(id)].action = j.at("action").get<int>();
    return id;
  }
  const int l = node_from_json(j.at("left"), t);
  const int r = node_from_json(j.at("right"), t);
  auto& node = t.nodes[static_cast<std::size_t>(id)];
  node.feature = j.at("feature_index").get<int>();
  node.threshold = j.at("threshold").get<double>();
  node.left = l;
  node.right = r;
  return id;
}

}  // namespace

void to_json(nlohmann::json& j, const PolicyTree& t) {
  j = {{"depth", t.depth},
       {"mode", to_string(t.mode)},
       {"features", t.features},
       {"max_candidates", t.max_candidates},
       {"downsampled", t.downsampled},
       {"root", node_to_json(t, 0)}};
}

void from_json(const nlohmann::json& j, PolicyTree& t) {
  t = PolicyTree{};
  t.depth = j.at("depth");
  const std::string mode = j.at("mode");
  if (mode != "greedy" && mode != "exact") throw Error(ErrorCode::parse, "unknown tree mode '" + mode + "'");
  t.mode = mode == "greedy" ? TreeSearch::greedy : TreeSearch::exact;
  t.features = j.at("features").get<std::vector<std::string>>();
  t.max_candidates = j.value("max_candidates", std::size_t{256});
  t.downsampled = j.value("downsampled", false);
  node_from_json(j.at("root"), t);
}

int Policy::decide_row(const Eigen::Ref<const Eigen::RowVectorXd>& z) const {
  if (static_cast<std::size_t>(z.size()) != z_columns.size())
    throw Error(ErrorCode::feature, "policy '" + name + "' expects " + std::to_string(z_columns.size()) + " features");
  switch (form) {
    case PolicyForm::observed:
      return z[0] == 1.0 ? 1 : 0;
    case PolicyForm::tree:
      return tree->decide_row(z);
    case PolicyForm::cate_threshold_1d:
    case PolicyForm::cate_threshold_2d: {
      const auto pred = cate_predict(*fit, z);
      return pred.theta[0] >= gamma ? 1 : 0;
    }
    case PolicyForm::conservative_threshold: {
      const double theta = cate_predict(*fit, z).theta[0];
      const double lower = band->dims() == 1 ? cate_lower_bound(*band, z[0]) : cate_lower_bound(*band, z[0], z[1]);
      return std::min(lower, theta) >= gamma ? 1 : 0;
    }
  }
  throw Error(ErrorCode::parameter, "unknown policy form");
}

Eigen::VectorXd Policy::decide(const Eigen::MatrixXd& z) const {
  if (static_cast<std::size_t>(z.cols()) != z_columns.size())
    throw Error(ErrorCode::feature, "policy '" + name + "' expects " + std::to_string(z_columns.size()) + " features");
  Eigen::VectorXd out(z.rows());
  if (form == PolicyForm::cate_threshold_1d || form == PolicyForm::cate_threshold_2d) {
    const auto pred = cate_predict(*fit, z);
    for (Eigen::Index i = 0; i < z.rows(); ++i) out[i] = pred.theta[i] >= gamma ? 1.0 : 0.0;
    return out;
  }
  if (form == PolicyForm::conservative_threshold) {
    const auto pred = cate_predict(*fit, z);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double lower = band->dims() == 1 ? cate_lower_bound(*band, z(i, 0)) : cate_lower_bound(*band, z(i, 0), z(i, 1));
      out[i] = std::min(lower, pred.theta[i]) >= gamma ? 1.0 : 0.0;
    }
    return out;
  }
  for (Eigen::Index i = 0; i < z.rows(); ++i) out[i] = decide_row(z.row(i));
  return out;
}

Eigen::VectorXd Policy::decide(const Dataset& d) const { return decide(d.select(z_columns)); }

void to_json(nlohmann::json& j, const Policy& p) {
  j = {{"form", to_string(p.form)}, {"name", p.name}, {"z_columns", p.z_columns}, {"gamma", p.gamma}};
  if (p.fit) j["fit"] = *p.fit;
  if (p.band) j["band"] = *p.band;
  if (p.tree) j["tree"] = *p.tree;
}

void from_json(const nlohmann::json& j, Policy& p) {
  p = Policy{};
  p.form = policy_form_from_string(j.at("form"));
  p.name = j.at("name");
  p.z_columns = j.at("z_columns").get<std::vector<std::string>>();
  p.gamma = j.at("gamma");
  if (j.contains("fit")) p.fit = j.at("fit").get<CateFit>();
  if (j.contains("band")) p.band = j.at("band").get<ConfidenceBand>();
  if (j.contains("tree")) p.tree = j.at("tree").get<PolicyTree>();
  const bool ok = (p.form == PolicyForm::tree && p.tree) || p.form == PolicyForm::observed ||
                  (p.form == PolicyForm::conservative_threshold && p.fit && p.band) ||
                  ((p.form == PolicyForm::cate_threshold_1d || p.form == PolicyForm::cate_threshold_2d) && p.fit);
  if (!ok) throw Error(ErrorCode::parse, "policy '" + p.name + "' lacks its payload");
}

Policy threshold_policy(const CateFit& fit, double gamma, std::string name) {
  if (!(gamma >= 0.0)) throw Error(ErrorCode::parameter, "gamma must be nonnegative");
  Policy p;
  p.form = fit.basis.dims() == 2 ? PolicyForm::cate_threshold_2d : PolicyForm::cate_threshold_1d;
  p.name = name.empty() ? std::string("threshold_") + csv::format(gamma) : std::move(name);
  p.z_columns = fit.z_columns;
  p.gamma = gamma;
  p.fit = fit;
  p.fit->design.resize(0, 0);
  p.fit->residuals.resize(0);
  return p;
}

Policy conservative_policy(const CateFit& fit, const ConfidenceBand& band, double gamma, std::string name) {
  if (band.dims() != fit.basis.dims()) throw Error(ErrorCode::shape, "band and fit dimensions differ");
  Policy p = threshold_policy(fit, gamma, name.empty() ? std::string("conservative_") + csv::format(gamma) : std::move(name));
  p.form = PolicyForm::conservative_threshold;
  p.band = band;
  return p;
}

Policy tree_policy(PolicyTree tree, double gamma, std::string name) {
  Policy p;
  p.form = PolicyForm::tree;
  p.name = name.empty() ? std::string("tree_") + to_string(tree.mode) + "_" + std::to_string(tree.depth) : std::move(name);
  p.z_columns = tree.features;
  p.gamma = gamma;
  p.tree = std::move(tree);
  return p;
}

Policy observed_policy() {
  Policy p;
  p.form = PolicyForm::observed;
  p.name = "observed";
  p.z_columns = {columns::kTreatment};
  return p;
}

void to_json(nlohmann::json& j, const PolicyEvalReport& r) {
  auto values = nlohmann::json::array();
  for (const auto& v : r.values) values.push_back({{"cost", v.cost}, {"value", v.value}});
  j = {{"name", r.name}, {"share_treated", r.share_treated}, {"values", values}};
  j["gate"] = r.gate ? nlohmann::json(*r.gate) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, PolicyEvalReport& r) {
  r = PolicyEvalReport{};
  r.name = j.at("name");
  r.share_treated = j.at("share_treated");
  for (const auto& v : j.at("values")) r.values.push_back({v.at("cost").get<double>(), v.at("value").get<EffectEstimate>()});
  if (!j.at("gate").is_null()) r.gate = j.at("gate").get<EffectEstimate>();
}

PolicyEvalReport evaluate_policy(const Eigen::VectorXd& decisions, const ScoreSet& holdout, const std::vector<double>& costs,
                                 double alpha, std::string name) {
  const std::size_t n = holdout.n();
  if (static_cast<std::size_t>(decisions.size()) != n) throw Error(ErrorCode::shape, "decisions and scores differ in rows");
  if (n < 2) throw Error(ErrorCode::parameter, "policy evaluation needs at least two rows");
  if (holdout.target != Target::ate) throw Error(ErrorCode::parameter, "policy evaluation needs ATE scores");
  PolicyEvalReport report;
  report.name = std::move(name);
  const double root_n = std::sqrt(static_cast<double>(n));
  for (double c : costs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = decisions[i] * (holdout.psi_b[i] - c);
    report.values.push_back({c, make_estimate("value", stats::mean(v), stats::sd(v) / root_n, n, alpha)});
  }
  std::vector<double> treated;
  for (Eigen::Index i = 0; i < decisions.size(); ++i)
    if (decisions[i] == 1.0) treated.push_back(holdout.psi_b[i]);
  report.share_treated = static_cast<double>(treated.size()) / static_cast<double>(n);
  if (!treated.empty()) {
    const double se = std::sqrt(stats::variance(treated) / static_cast<double>(treated.size()));
    report.gate = make_estimate("GATE", stats::mean(treated), se, treated.size(), alpha);
  }
  return report;
}

PolicyEvalReport evaluate_policy(const Policy& p, const ScoreSet& holdout, const Dataset& holdout_data,
                                 const std::vector<double>& costs, double alpha) {
  return evaluate_policy(p.decide(holdout_data), holdout, costs, alpha, p.name);
}

double regret_vs_oracle(const Policy& p, const Dataset& d, const OracleTable* oracle) {
  if (oracle == nullptr) throw Error(ErrorCode::oracle_unavailable, "regret needs simulator counterfactuals");
  if (oracle->n() != d.n()) throw Error(ErrorCode::shape, "oracle rows do not match the data");
  if (p.form != PolicyForm::tree) throw Error(ErrorCode::unsupported, "regret is defined for tree policies");
  const Eigen::VectorXd tau = oracle->effects();
  const Eigen::MatrixXd z = d.select(p.z_columns);
  const Eigen::VectorXd own = p.decide(z);
  const double own_value = (own.array() * tau.array()).mean();
  const int depth = std::clamp(p.tree->depth, 1, 2);
  const PolicyTree best = fit_policy_tree(z, tau, 0.0, depth, TreeSearch::exact, p.z_columns,
                                          TreeOptions{p.tree->max_candidates});
  const double best_value = (best.decide(z).array() * tau.array()).mean();
  return std::max(best_value, own_value) - own_value;
}

std::string policy_values_csv(const std::vector<PolicyEvalReport>& reports) {
  std::vector<std::string> header = {"policy", "share_treated", "gate"};
  if (!reports.empty())
    for (const auto& v : reports.front().values) {
      const std::string c = csv::format(v.cost);
      header.insert(header.end(), {c + "_2.5%", c + "_effect", c + "_97.5%"});
    }
  csv::Writer w(header);
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.name, csv::format(r.share_treated), r.gate ? csv::format(r.gate->theta_hat) : "nan"};
    for (const auto& v : r.values)
      row.insert(row.end(), {csv::format(v.value.ci_low), csv::format(v.value.theta_hat), csv::format(v.value.ci_high)});
    w.row(row);
  }
  return w.str();
}

}  // namespace rework
