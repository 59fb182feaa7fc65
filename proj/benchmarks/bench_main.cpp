// Copyright 2026 The pmcmc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pmcmc/combine.hpp"
#include "pmcmc/criterion.hpp"
#include "pmcmc/forest.hpp"
#include "pmcmc/models.hpp"

namespace {

using namespace pmcmc;

// m machines of N draws in d dimensions with slightly shifted centres.
PooledDraws make_pool(std::size_t m, std::size_t N, std::size_t d) {
  Rng rng(42);
  std::vector<SampleSet> sets;
  for (std::size_t i = 0; i < m; ++i) {
    GaussianPosterior p{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 0.1 * static_cast<double>(i)),
                        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
    sets.push_back(sample_gaussian(p, N, rng));
  }
  return pool_draws(sets);
}

ForestConfig bench_config(std::size_t d) {
  ForestConfig c;
  c.num_trees = 50;
  c.mtry = static_cast<int>(d / 2 + 1);
  return c;
}

void BM_TrainForest(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  const PooledDraws pool = make_pool(5, N, 10);
  for (auto _ : state) benchmark::DoNotOptimize(train_forest(pool, bench_config(10), 7));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(pool.size()));
}
BENCHMARK(BM_TrainForest)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_PredictProba(benchmark::State& state) {
  const PooledDraws pool = make_pool(5, static_cast<std::size_t>(state.range(0)), 10);
  const Forest f = train_forest(pool, bench_config(10), 7);
  for (auto _ : state) benchmark::DoNotOptimize(predict_proba(f, pool.theta));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(pool.size()));
}
BENCHMARK(BM_PredictProba)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_UpperBoundKl(benchmark::State& state) {
  const PooledDraws pool = make_pool(5, static_cast<std::size_t>(state.range(0)), 10);
  const ClassProbabilityMatrix p = predict_proba(train_forest(pool, bench_config(10), 7), pool.theta);
  for (auto _ : state) benchmark::DoNotOptimize(upper_bound_kl(p, pool));
}
BENCHMARK(BM_UpperBoundKl)->Arg(2000)->Unit(benchmark::kMicrosecond);

void BM_CombineClassifier(benchmark::State& state) {
  const PooledDraws pool = make_pool(5, 1000, 10);
  const Forest f = train_forest(pool, bench_config(10), 7);
  for (auto _ : state) benchmark::DoNotOptimize(combine_classifier(pool, f, JitterConfig{}, 1000, 3));
}
BENCHMARK(BM_CombineClassifier)->Unit(benchmark::kMillisecond);

void BM_CombineConsensus(benchmark::State& state) {
  const auto parts = make_pool(5, 2000, 10).split_by_machine();
  for (auto _ : state) benchmark::DoNotOptimize(combine_consensus(parts));
}
BENCHMARK(BM_CombineConsensus)->Unit(benchmark::kMillisecond);

void BM_CombineWeierstrass(benchmark::State& state) {
  const auto parts = make_pool(5, 1000, 10).split_by_machine();
  for (auto _ : state) benchmark::DoNotOptimize(combine_weierstrass(parts, 1.0, 1000, 3));
}
BENCHMARK(BM_CombineWeierstrass)->Unit(benchmark::kMillisecond);

void BM_CombineKdeProduct(benchmark::State& state) {
  const auto parts = make_pool(5, 1000, 10).split_by_machine();
  const double h = default_bandwidth(parts);
  for (auto _ : state) benchmark::DoNotOptimize(combine_kde_product(parts, h, 200, 1000, 3));
}
BENCHMARK(BM_CombineKdeProduct)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
