#include <benchmark/benchmark.h>

#include <map>

#include "rework/cate.hpp"
#include "rework/dml.hpp"
#include "rework/learners.hpp"
#include "rework/policy.hpp"
#include "rework/simulator.hpp"

namespace {

using namespace rework;

const std::vector<std::string> kSummary{columns::kMainMean, columns::kSecondaryMean, columns::kInvalidCount,
                                        columns::kWorkload, columns::kMainVariance};

const Simulation& sim(std::size_t n) {
  static std::map<std::size_t, Simulation> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    SimConfig cfg;
    cfg.n_lots = n;
    it = cache.emplace(n, simulate(cfg)).first;
  }
  return it->second;
}

void BM_Simulate(benchmark::State& state) {
  SimConfig cfg;
  cfg.n_lots = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(simulate(cfg));
}
BENCHMARK(BM_Simulate)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_FitRegressor(benchmark::State& state) {
  const auto& d = sim(static_cast<std::size_t>(state.range(1))).data;
  const Eigen::MatrixXd x = d.select(kSummary);
  const auto kind = static_cast<LearnerKind>(state.range(0));
  const LearnerSpec spec{kind};
  for (auto _ : state) benchmark::DoNotOptimize(fit_regressor(spec, x, d.yield()).predict(x));
  state.SetLabel(to_string(kind));
}
BENCHMARK(BM_FitRegressor)
    ->Args({static_cast<int>(LearnerKind::ols), 20000})
    ->Args({static_cast<int>(LearnerKind::cart), 20000})
    ->Args({static_cast<int>(LearnerKind::boosted_stumps), 20000})
    ->Args({static_cast<int>(LearnerKind::random_forest), 5000})
    ->Unit(benchmark::kMillisecond);

void BM_Crossfit(benchmark::State& state) {
  const auto& d = sim(static_cast<std::size_t>(state.range(0))).data;
  CrossfitOptions opt;
  opt.features = kSummary;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        crossfit_nuisances(d, LearnerSpec{LearnerKind::boosted_stumps}, LearnerSpec{LearnerKind::logistic}, opt));
}
BENCHMARK(BM_Crossfit)->Arg(4000)->Arg(20000)->Unit(benchmark::kMillisecond);

struct Scored {
  Eigen::MatrixXd z;
  Eigen::VectorXd psi_b;
};

const Scored& scored() {
  static const Scored s = [] {
    const auto& d = sim(4000).data;
    CrossfitOptions opt;
    opt.features = kSummary;
    const auto nu = crossfit_nuisances(d, LearnerSpec{LearnerKind::ols}, LearnerSpec{LearnerKind::logistic}, opt);
    return Scored{d.select({columns::kMainMean, columns::kSecondaryMean, columns::kInvalidCount}),
                  aipw_scores(d, nu).psi_b};
  }();
  return s;
}

void BM_TreeSearch(benchmark::State& state) {
  const auto& s = scored();
  const auto search = state.range(0) == 0 ? TreeSearch::greedy : TreeSearch::exact;
  TreeOptions opt;
  opt.max_candidates = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(fit_policy_tree(s.z, s.psi_b, 0.0, 2, search, {}, opt));
  state.SetLabel(search == TreeSearch::greedy ? "greedy" : "exact");
}
BENCHMARK(BM_TreeSearch)->Args({0, 256})->Args({1, 64})->Args({1, 256})->Unit(benchmark::kMillisecond);

void BM_BootstrapBand(benchmark::State& state) {
  const auto& s = scored();
  const Eigen::VectorXd z = s.z.col(0);
  const CateFit fit = project_scores(s.psi_b, build_basis(z, 3, 5), z);
  const auto grid = linear_grid(z.minCoeff(), z.maxCoeff(), 101);
  for (auto _ : state)
    benchmark::DoNotOptimize(multiplier_bootstrap_band(fit, grid, {}, 0.05, static_cast<std::size_t>(state.range(0)), 3));
}
BENCHMARK(BM_BootstrapBand)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
