#include "rework/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "rework/error.hpp"
#include "rework/random.hpp"
#include "rework/stats.hpp"

namespace rework {

namespace {

using detail::BoostParams;
using detail::ForestParams;
using detail::LinearParams;
using detail::Stump;
using detail::TreeNode;
using detail::TreeParams;

constexpr double kLogisticRidge = 1e-8;
constexpr int kLogisticMaxIter = 100;
constexpr double kLogisticTol = 1e-8;
constexpr double kOlsFallbackRidge = 1e-8;

struct ParamInfo {
  const char* name;
  double fallback;
};

std::vector<ParamInfo> known_params(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::ols: return {};
    case LearnerKind::ridge: return {{"lambda", 1.0}};
    case LearnerKind::logistic: return {};
    case LearnerKind::cart: return {{"max_depth", 4}, {"min_leaf", 5}};
    case LearnerKind::random_forest:
      return {{"n_trees", 100}, {"max_depth", 8}, {"min_leaf", 5}, {"max_features", 0}, {"bootstrap", 1}};
    case LearnerKind::boosted_stumps: return {{"n_trees", 100}, {"learning_rate", 0.1}, {"min_leaf", 5}};
  }
  return {};
}

bool is_integer(double v) { return std::floor(v) == v; }

// --- linear models ---------------------------------------------------------

LinearParams fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                        bool fallback_on_singular, std::vector<std::string>& warnings) {
  LinearParams out;
  const Eigen::Index p = x.cols();
  const double y_mean = stats::mean(y);
  out.coef = Eigen::VectorXd::Zero(p);
  if (p == 0) {
    out.intercept = y_mean;
    return out;
  }
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
    qr.setThreshold(1e-10);
    if (qr.rank() == p) {
      out.coef = qr.solve(yc);
    } else if (fallback_on_singular) {
      warnings.emplace_back("singular normal equations; fell back to ridge lambda=1e-8");
      lambda = kOlsFallbackRidge;
    } else {
      throw Error(ErrorCode::singular, "singular design matrix");
    }
  }
  if (lambda > 0.0) {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    out.coef = gram.ldlt().solve(xc.transpose() * yc);
  }
  out.intercept = y_mean - x_mean.dot(out.coef);
  return out;
}

double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow
double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

LinearParams fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& a) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols() + 1;
  Eigen::MatrixXd design(n, p);
  design.col(0).setOnes();
  design.rightCols(p - 1) = x;

  auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = design * beta;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) nll += softplus(eta[i]) - a[i] * eta[i];
    return nll + 0.5 * kLogisticRidge * beta.squaredNorm();
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double current = objective(beta);
  for (int iter = 0; iter < kLogisticMaxIter; ++iter) {
    const Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd prob(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(eta[i]);
      w[i] = prob[i] * (1.0 - prob[i]);
    }
    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(p, p);
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose() * w.cwiseSqrt().asDiagonal());
    hessian = hessian.selfadjointView<Eigen::Lower>();
    hessian.diagonal().array() += kLogisticRidge;
    const Eigen::VectorXd grad = design.transpose() * (a - prob) - kLogisticRidge * beta;
    Eigen::VectorXd step = hessian.ldlt().solve(grad);
    if (!step.allFinite()) break;

    // Step halving keeps the penalized likelihood monotone (relevant under separation).
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double value = objective(candidate);
    for (int h = 0; h < 40 && !(value <= current); ++h) {
      scale *= 0.5;
      candidate = beta + scale * step;
      value = objective(candidate);
    }
    if (!(value <= current)) break;
    const double change = (scale * step).cwiseAbs().maxCoeff();
    beta = candidate;
    current = value;
    if (change < kLogisticTol) break;
  }
  LinearParams out;
  out.logistic = true;
  out.intercept = beta[0];
  out.coef = beta.tail(p - 1);
  return out;
}

// --- CART ----------------------------------------------------------------

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  int max_depth;
  std::size_t min_leaf;
  std::size_t max_features;  // 0 = all features
  Rng* rng;
  std::vector<TreeNode> nodes;
  std::vector<std::pair<double, double>> buffer;

  int build(std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double sum = 0.0, sum_sq = 0.0;
    for (auto r : rows) {
      sum += y[static_cast<Eigen::Index>(r)];
      sum_sq += y[static_cast<Eigen::Index>(r)] * y[static_cast<Eigen::Index>(r)];
    }
    const double count = static_cast<double>(rows.size());
    nodes[static_cast<std::size_t>(id)].value = sum / count;
    const double sse = sum_sq - sum * sum / count;
    if (depth >= max_depth || rows.size() < 2 * min_leaf || !(sse > 0.0)) return id;

    const auto p = static_cast<std::size_t>(x.cols());
    std::vector<std::size_t> features(p);
    std::iota(features.begin(), features.end(), std::size_t{0});
    if (max_features > 0 && max_features < p) {
      for (std::size_t i = 0; i < max_features; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, p - 1);
        std::swap(features[i], features[pick(*rng)]);
      }
      features.resize(max_features);
      std::sort(features.begin(), features.end());
    }

    const double parent = sum * sum / count;
    double best_gain = parent;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (auto f : features) {
      buffer.clear();
      for (auto r : rows) buffer.emplace_back(x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)), y[static_cast<Eigen::Index>(r)]);
      std::sort(buffer.begin(), buffer.end(),
                [](const auto& l, const auto& r) { return l.first < r.first; });
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < buffer.size(); ++i) {
        left += buffer[i].second;
        if (buffer[i].first == buffer[i + 1].first) continue;
        const std::size_t nl = i + 1, nr = buffer.size() - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right = sum - left;
        const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (buffer[i].first + buffer[i + 1].first);
        }
      }
    }
    if (best_feature < 0 || !(best_gain - parent > 1e-12 * sse)) return id;

    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) {
      (x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left_rows, depth + 1);
    const int r = build(right_rows, depth + 1);
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

TreeParams fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::size_t> rows,
                    int max_depth, std::size_t min_leaf, std::size_t max_features, Rng* rng) {
  TreeBuilder builder{x, y, max_depth, min_leaf, max_features, rng, {}, {}};
  builder.build(rows, 0);
  return TreeParams{std::move(builder.nodes)};
}

double predict_tree(const TreeParams& tree, const Eigen::MatrixXd& x, Eigen::Index row) {
  int id = 0;
  while (tree.nodes[static_cast<std::size_t>(id)].feature >= 0) {
    const auto& node = tree.nodes[static_cast<std::size_t>(id)];
    id = x(row, node.feature) <= node.threshold ? node.left : node.right;
  }
  return tree.nodes[static_cast<std::size_t>(id)].value;
}

ForestParams fit_forest(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  const auto n_trees = static_cast<std::size_t>(spec.param("n_trees"));
  std::size_t max_features = static_cast<std::size_t>(spec.param("max_features"));
  if (max_features == 0) max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p)))));
  const bool bootstrap = spec.param("bootstrap") != 0.0;
  ForestParams forest;
  forest.trees.reserve(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    auto rng = make_rng(derive_seed(spec.seed, t));
    std::vector<std::size_t> rows(n);
    if (bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    forest.trees.push_back(fit_tree(x, y, std::move(rows), static_cast<int>(spec.param("max_depth")),
                                    static_cast<std::size_t>(spec.param("min_leaf")), max_features, &rng));
  }
  return forest;
}

// --- boosted stumps --------------------------------------------------------

BoostParams fit_boosted(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  const auto stages = static_cast<std::size_t>(spec.param("n_trees"));
  const double rate = spec.param("learning_rate");
  const auto min_leaf = std::max<std::size_t>(1, static_cast<std::size_t>(spec.param("min_leaf")));

  BoostParams out;
  out.base = stats::mean(y);
  std::vector<std::vector<std::uint32_t>> order(p);
  for (std::size_t f = 0; f < p; ++f) {
    auto& o = order[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
      return x(a, static_cast<Eigen::Index>(f)) < x(b, static_cast<Eigen::Index>(f));
    });
  }
  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = y[static_cast<Eigen::Index>(i)] - out.base;

  for (std::size_t stage = 0; stage < stages; ++stage) {
    double total = 0.0;
    for (double r : residual) total += r;
    const double parent = total * total / static_cast<double>(n);
    double best_gain = parent;
    Stump best;
    bool found = false;
    for (std::size_t f = 0; f < p; ++f) {
      const auto& o = order[f];
      const auto col = static_cast<Eigen::Index>(f);
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left += residual[o[i]];
        const double v = x(o[i], col), next = x(o[i + 1], col);
        if (v == next) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right = total - left;
        const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr);
        if (gain > best_gain) {
          best_gain = gain;
          best = Stump{static_cast<int>(f), 0.5 * (v + next), left / static_cast<double>(nl),
                       right / static_cast<double>(nr)};
          found = true;
        }
      }
    }
    if (!found) break;
    best.left *= rate;
    best.right *= rate;
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] -= x(static_cast<Eigen::Index>(i), best.feature) <= best.threshold ? best.left : best.right;
    }
    out.stumps.push_back(best);
  }
  return out;
}

void check_training_input(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw Error(ErrorCode::shape, "feature rows and target length differ");
  if (x.rows() < 2) throw Error(ErrorCode::parameter, "need at least two training rows");
  if (!x.allFinite() || !y.allFinite()) throw Error(ErrorCode::validation, "training data contains NaN");
}

FittedModel fit_any(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    bool classifier) {
  spec.validate();
  std::vector<std::string> warnings;
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  switch (spec.kind) {
    case LearnerKind::ols:
    case LearnerKind::ridge: {
      // fit first: the warnings must be filled before they are copied
      auto params = fit_linear(x, y, spec.kind == LearnerKind::ols ? 0.0 : spec.param("lambda"), true, warnings);
      return FittedModel(spec.kind, classifier, n, p, std::move(params), warnings);
    }
    case LearnerKind::logistic:
      if (!classifier) throw Error(ErrorCode::parameter, "logistic is a classifier");
      return FittedModel(spec.kind, classifier, n, p, fit_logistic(x, y));
    case LearnerKind::cart: {
      std::vector<std::size_t> rows(n);
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      return FittedModel(spec.kind, classifier, n, p,
                         fit_tree(x, y, std::move(rows), static_cast<int>(spec.param("max_depth")),
                                  static_cast<std::size_t>(spec.param("min_leaf")), 0, nullptr));
    }
    case LearnerKind::random_forest:
      return FittedModel(spec.kind, classifier, n, p, fit_forest(spec, x, y));
    case LearnerKind::boosted_stumps:
      return FittedModel(spec.kind, classifier, n, p, fit_boosted(spec, x, y));
  }
  throw Error(ErrorCode::parameter, "unknown learner kind");
}

}  // namespace

const char* to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::ols: return "ols";
    case LearnerKind::ridge: return "ridge";
    case LearnerKind::logistic: return "logistic";
    case LearnerKind::cart: return "cart";
    case LearnerKind::random_forest: return "random_forest";
    case LearnerKind::boosted_stumps: return "boosted_stumps";
  }
  return "unknown";
}

LearnerKind learner_kind_from_string(const std::string& name) {
  for (auto k : {LearnerKind::ols, LearnerKind::ridge, LearnerKind::logistic, LearnerKind::cart,
                 LearnerKind::random_forest, LearnerKind::boosted_stumps}) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorCode::parameter, "unknown learner kind '" + name + "'");
}

double LearnerSpec::param(const std::string& name) const {
  if (auto it = params.find(name); it != params.end()) return it->second;
  for (const auto& info : known_params(kind))
    if (name == info.name) return info.fallback;
  throw Error(ErrorCode::parameter, std::string("learner ") + to_string(kind) + " has no parameter '" + name + "'");
}

void LearnerSpec::validate() const {
  const auto known = known_params(kind);
  for (const auto& [name, value] : params) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const ParamInfo& p) { return name == p.name; });
    if (!ok) throw Error(ErrorCode::parameter, std::string("learner ") + to_string(kind) + " has no parameter '" + name + "'");
    if (!std::isfinite(value)) throw Error(ErrorCode::parameter, "non-finite hyperparameter '" + name + "'");
  }
  auto fail = [&](const std::string& what) { throw Error(ErrorCode::parameter, std::string(to_string(kind)) + ": " + what); };
  switch (kind) {
    case LearnerKind::ridge:
      if (param("lambda") < 0.0) fail("lambda must be >= 0");
      break;
    case LearnerKind::cart:
    case LearnerKind::random_forest:
      if (param("max_depth") < 0.0 || !is_integer(param("max_depth"))) fail("max_depth must be a nonnegative integer");
      if (param("min_leaf") < 1.0 || !is_integer(param("min_leaf"))) fail("min_leaf must be a positive integer");
      if (kind == LearnerKind::random_forest) {
        if (param("n_trees") < 1.0 || !is_integer(param("n_trees"))) fail("n_trees must be >= 1");
        if (param("max_features") < 0.0 || !is_integer(param("max_features"))) fail("max_features must be >= 0");
      }
      break;
    case LearnerKind::boosted_stumps: {
      if (param("n_trees") < 1.0 || !is_integer(param("n_trees"))) fail("n_trees must be >= 1");
      const double lr = param("learning_rate");
      if (!(lr > 0.0 && lr <= 1.0)) fail("learning_rate must lie in (0,1]");
      if (param("min_leaf") < 1.0 || !is_integer(param("min_leaf"))) fail("min_leaf must be a positive integer");
      break;
    }
    default:
      break;
  }
}

std::string LearnerSpec::label() const {
  std::ostringstream ss;
  ss << to_string(kind);
  if (!params.empty()) {
    ss << '(';
    bool first = true;
    for (const auto& [k, v] : params) {
      if (!first) ss << ',';
      ss << k << '=' << v;
      first = false;
    }
    ss << ')';
  }
  return ss.str();
}

void to_json(nlohmann::json& j, const LearnerSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)}, {"params", spec.params}, {"seed", spec.seed}};
}

void from_json(const nlohmann::json& j, LearnerSpec& spec) {
  spec.kind = learner_kind_from_string(j.at("kind").get<std::string>());
  spec.params = j.value("params", std::map<std::string, double>{});
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.validate();
}

std::vector<std::size_t> FoldAssignment::rows_in(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::rows_outside(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::parameter, "need at least two folds");
  if (n < k) throw Error(ErrorCode::parameter, "fewer rows than folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_rng(derive_seed(seed, "kfold"));
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  out.fold_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.fold_of[perm[i]] = i % k;
  return out;
}

FittedModel::FittedModel(LearnerKind kind, bool classifier, std::size_t n_train, std::size_t n_features,
                         Params params, std::vector<std::string> warnings)
    : kind_(kind),
      classifier_(classifier),
      n_train_(n_train),
      n_features_(n_features),
      params_(std::move(params)),
      warnings_(std::move(warnings)) {}

Eigen::VectorXd FittedModel::predict(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.cols()) != n_features_ && x.rows() > 0)
    throw Error(ErrorCode::shape, "predict: expected " + std::to_string(n_features_) + " columns, got " +
                                      std::to_string(x.cols()));
  const Eigen::Index n = x.rows();
  Eigen::VectorXd out(n);
  if (n == 0) return out;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearParams>) {
          out = (x * p.coef).array() + p.intercept;
          if (p.logistic) out = out.unaryExpr([](double eta) { return sigmoid(eta); });
        } else if constexpr (std::is_same_v<T, TreeParams>) {
          for (Eigen::Index i = 0; i < n; ++i) out[i] = predict_tree(p, x, i);
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          out.setZero();
          for (const auto& tree : p.trees)
            for (Eigen::Index i = 0; i < n; ++i) out[i] += predict_tree(tree, x, i);
          out /= static_cast<double>(p.trees.size());
        } else {
          out.setConstant(p.base);
          for (const auto& s : p.stumps)
            for (Eigen::Index i = 0; i < n; ++i) out[i] += x(i, s.feature) <= s.threshold ? s.left : s.right;
        }
      },
      params_);
  if (classifier_) out = out.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

std::vector<Eigen::VectorXd> FittedModel::member_predictions(const Eigen::MatrixXd& x) const {
  std::vector<Eigen::VectorXd> out;
  if (const auto* forest = std::get_if<ForestParams>(&params_)) {
    for (const auto& tree : forest->trees) {
      Eigen::VectorXd v(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i) v[i] = predict_tree(tree, x, i);
      out.push_back(std::move(v));
    }
  }
  return out;
}

FittedModel fit_regressor(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  check_training_input(x, y);
  if (spec.kind == LearnerKind::logistic) throw Error(ErrorCode::parameter, "logistic is a classifier");
  return fit_any(spec, x, y, false);
}

FittedModel fit_classifier(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& a) {
  check_training_input(x, a);
  bool has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) has0 = true;
    else if (a[i] == 1.0) has1 = true;
    else throw Error(ErrorCode::validation, "classifier labels must be 0 or 1");
  }
  if (!has0 || !has1) throw Error(ErrorCode::degenerate, "classifier needs both classes present");
  return fit_any(spec, x, a, true);
}

double cv_loss(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               const FoldAssignment& folds, TuningLoss loss) {
  if (folds.fold_of.size() != static_cast<std::size_t>(x.rows()))
    throw Error(ErrorCode::shape, "fold assignment does not match rows");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < folds.k; ++f) {
    const auto test = folds.rows_in(f);
    if (test.empty()) continue;
    const auto train = folds.rows_outside(f);
    const Eigen::MatrixXd x_train = stats::subset_rows(x, train);
    const Eigen::VectorXd y_train = stats::subset(y, train);
    const FittedModel model = loss == TuningLoss::log_loss ? fit_classifier(spec, x_train, y_train)
                                                           : fit_regressor(spec, x_train, y_train);
    const Eigen::VectorXd pred = model.predict(stats::subset_rows(x, test));
    for (std::size_t i = 0; i < test.size(); ++i) {
      const double target = y[static_cast<Eigen::Index>(test[i])];
      const double yhat = pred[static_cast<Eigen::Index>(i)];
      if (loss == TuningLoss::rmse) {
        total += (target - yhat) * (target - yhat);
      } else {
        const double pr = std::clamp(yhat, 1e-15, 1.0 - 1e-15);
        total -= target * std::log(pr) + (1.0 - target) * std::log(1.0 - pr);
      }
      ++count;
    }
  }
  const double m = total / static_cast<double>(count);
  return loss == TuningLoss::rmse ? std::sqrt(m) : m;
}

TuningResult grid_tune(const std::vector<LearnerSpec>& specs, const Eigen::MatrixXd& x,
                       const Eigen::VectorXd& y, const FoldAssignment& folds, TuningLoss loss) {
  if (specs.empty()) throw Error(ErrorCode::parameter, "grid_tune needs at least one spec");
  std::vector<TuningEntry> ok, failed;
  for (const auto& spec : specs) {
    try {
      ok.push_back({spec, cv_loss(spec, x, y, folds, loss), false, {}});
    } catch (const Error& e) {
      failed.push_back({spec, 0.0, true, e.what()});
    }
  }
  if (ok.empty()) throw Error(ErrorCode::tuning, "every learner spec failed during tuning: " + failed.front().error);
  std::stable_sort(ok.begin(), ok.end(), [](const auto& a, const auto& b) { return a.loss < b.loss; });
  TuningResult out;
  out.best = ok.front().spec;
  out.report = std::move(ok);
  out.report.insert(out.report.end(), failed.begin(), failed.end());
  return out;
}

}  // namespace rework
