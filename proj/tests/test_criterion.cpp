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

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "pmcmc/criterion.hpp"
#include "pmcmc/error.hpp"
#include "test_support.hpp"

namespace pmcmc {
namespace {

using testing::constant;
using testing::gaussian_pool;

ClassProbabilityMatrix random_probs(std::size_t rows, std::size_t m, Rng& rng) {
  std::gamma_distribution<double> g(0.7, 1.0);
  ClassProbabilityMatrix p(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m));
  std::vector<double> row(m);
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    for (auto& x : row) x = g(rng);
    double s = 0.0;
    for (double x : row) s += x;
    for (auto& x : row) x /= s;
    clamp_probability_row(row);
    for (std::size_t j = 0; j < m; ++j) p(k, static_cast<Eigen::Index>(j)) = row[j];
  }
  return p;
}

// U written out term by term in long double.
long double criterion_oracle(const ClassProbabilityMatrix& p, const std::vector<double>& log_density) {
  const auto m = static_cast<long double>(p.cols());
  long double max_ld = log_density[0];
  for (double x : log_density) max_ld = std::max<long double>(max_ld, x);
  long double z = 0.0L;
  for (double x : log_density) z += std::exp(static_cast<long double>(x) - max_ld);
  long double cf = 0.0L;
  long double weighted = 0.0L;
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    long double sum_log = 0.0L;
    for (Eigen::Index j = 0; j < p.cols(); ++j) sum_log += std::log(static_cast<long double>(p(k, j)));
    cf += m * std::exp(sum_log / m);
    const long double w = std::exp(static_cast<long double>(log_density[static_cast<std::size_t>(k)]) - max_ld) / z;
    weighted += w * sum_log;
  }
  return std::log(cf / m) - weighted / m;
}

TEST(ReconstructableProbability, UniformIsOneAndKlOracle) {
  EXPECT_NEAR(reconstructable_probability(std::vector<double>{0.25, 0.25, 0.25, 0.25}), 1.0, 1e-15);
  EXPECT_THROW(log_reconstructable_probability(std::vector<double>{1.0, 0.0}), ValidationError);
  Rng rng(1);
  const auto p = random_probs(200, 4, rng);
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    std::vector<double> row(4);
    double kl = 0.0;  // KL(Q || P), Q uniform
    for (int j = 0; j < 4; ++j) {
      row[j] = p(k, j);
      kl += 0.25 * std::log(0.25 / p(k, j));
    }
    const double pr = reconstructable_probability(row);
    EXPECT_NEAR(pr, std::exp(-kl), 1e-12);
    EXPECT_LE(pr, 1.0 + 1e-15);
  }
}

TEST(UpperBoundKl, MatchesDirectFormula) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + trial % 4;
    std::vector<Eigen::VectorXd> centres;
    for (std::size_t i = 0; i < m; ++i) centres.push_back(constant(2, 0.3 * static_cast<double>(i)));
    const PooledDraws pooled = gaussian_pool(centres, 1.0, 30, 100 + trial);
    const auto probs = random_probs(pooled.size(), m, rng);
    const long double oracle = criterion_oracle(probs, pooled.log_density);
    EXPECT_NEAR(upper_bound_kl(probs, pooled), static_cast<double>(oracle), 1e-10);
  }
}

TEST(UpperBoundKl, UniformClassifierGivesLogMN) {
  const PooledDraws pooled = gaussian_pool({constant(3, 0), constant(3, 1), constant(3, 2)}, 1.0, 400, 3);
  const ClassProbabilityMatrix uniform = ClassProbabilityMatrix::Constant(1200, 3, 1.0 / 3.0);
  EXPECT_NEAR(upper_bound_kl(uniform, pooled), std::log(1200.0), 1e-12);
  EXPECT_THROW(upper_bound_kl(ClassProbabilityMatrix::Constant(5, 3, 1.0 / 3.0), pooled), ValidationError);
}

TEST(KlBound, HoldsOnRandomInstances) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 2 + trial % 2;
    std::vector<Eigen::VectorXd> centres;
    for (std::size_t i = 0; i < m; ++i) centres.push_back(constant(1, 0.5 * static_cast<double>(i)));
    const PooledDraws pooled = gaussian_pool(centres, 1.0, 40, 200 + trial);
    std::vector<double> full(pooled.size());
    for (std::size_t k = 0; k < pooled.size(); ++k) {
      double s = 0.0;
      for (const auto& c : centres) {
        const double e = pooled.theta(static_cast<Eigen::Index>(k), 0) - c(0);
        s += -0.5 * e * e;
      }
      full[k] = s;
    }
    const auto probs = random_probs(pooled.size(), m, rng);
    const TheoremCheck t = verify_theorem_bound(pooled, probs, full);
    EXPECT_TRUE(t.holds) << "kl " << t.kl << " H " << t.H << " U " << t.bound;
    EXPECT_GE(t.kl, 0.0);
    EXPECT_GE(t.H, 1.0);
  }
}

TEST(EvaluateCriterion, ReportIsConsistent) {
  const PooledDraws pooled = gaussian_pool({constant(2, 0), constant(2, 0.5)}, 1.0, 100, 5);
  ForestConfig c;
  c.num_trees = 10;
  c.mtry = 2;
  const Forest f = train_forest(pooled, c, 3);
  const CriterionReport r = evaluate_criterion(f, pooled);
  EXPECT_NEAR(r.ub_kl, upper_bound_kl(predict_proba(f, pooled.theta), pooled), 1e-12);
  double cf = 0.0;
  for (double x : r.recon_prob) cf += x;
  EXPECT_NEAR(std::log(cf), r.log_cf, 1e-12);
  for (std::size_t k = 0; k < pooled.size(); ++k) EXPECT_NEAR(r.f_weights[k], r.recon_prob[k] / cf, 1e-12);
  EXPECT_EQ(r.config, c);
}

TEST(HyperparameterSpace, SamplesStayOnGrid) {
  const HyperparameterSpace s;
  Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    const ForestConfig c = s.sample(10, rng);
    EXPECT_GE(c.fraction, 0.8);
    EXPECT_LE(c.fraction, 0.999);
    EXPECT_NEAR(c.fraction * 1000.0, std::round(c.fraction * 1000.0), 1e-6);
    EXPECT_TRUE(c.num_trees >= 10 && c.num_trees <= 100);
    EXPECT_TRUE(c.min_node_size >= 5 && c.min_node_size <= 50);
    EXPECT_TRUE(c.mtry >= 1 && c.mtry <= 10);
    EXPECT_FALSE(c.allow_out_of_range);
  }
  HyperparameterSpace bad;
  bad.mtry_max = 11;
  EXPECT_THROW(bad.validate(10), ValidationError);
}

TEST(RandomSearch, PicksArgminAndIsDeterministic) {
  const PooledDraws pooled = gaussian_pool({constant(2, 0), constant(2, 0.5), constant(2, 1.0)}, 1.0, 60, 7);
  HyperparameterSpace space;
  space.trees_max = 15;
  std::atomic<int> calls{0};
  SearchOptions serial;
  serial.workers = 1;
  serial.observer = [&](std::size_t, const Forest&, const CriterionReport&) { ++calls; };
  const SearchResult a = random_search(pooled, space, 6, 42, serial);
  EXPECT_EQ(calls.load(), 6);
  ASSERT_EQ(a.trace.trials.size(), 6u);
  for (const auto& t : a.trace.trials) EXPECT_GE(t.ub_kl, a.trace.trials[a.trace.best_index].ub_kl);
  EXPECT_NEAR(a.best_report.ub_kl, a.trace.trials[a.trace.best_index].ub_kl, 0.0);
  SearchOptions threaded;
  threaded.workers = 3;
  const SearchResult b = random_search(pooled, space, 6, 42, threaded);
  EXPECT_EQ(a.trace.best_index, b.trace.best_index);
  EXPECT_EQ(a.best_forest.to_json(), b.best_forest.to_json());
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a.trace.trials[i].ub_kl, b.trace.trials[i].ub_kl);
    EXPECT_EQ(a.trace.trials[i].seed, b.trace.trials[i].seed);
  }
  EXPECT_THROW(random_search(pooled, space, 0, 1), ValidationError);
}

}  // namespace
}  // namespace pmcmc
