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

#include <algorithm>
#include <numeric>

#include "pmcmc/error.hpp"
#include "pmcmc/forest.hpp"
#include "test_support.hpp"

namespace pmcmc {
namespace {

using testing::constant;
using testing::gaussian_pool;

ForestConfig small_config(int trees = 20, int mtry = 1) {
  ForestConfig c;
  c.num_trees = trees;
  c.mtry = mtry;
  c.fraction = 0.9;
  c.min_node_size = 5;
  return c;
}

TEST(Forest, SeparableClustersAreLearned) {
  const PooledDraws train = gaussian_pool({constant(1, -10.0), constant(1, 10.0)}, 0.1, 200, 1);
  const PooledDraws test = gaussian_pool({constant(1, -10.0), constant(1, 10.0)}, 0.1, 200, 2);
  const Forest f = train_forest(train, small_config(), 7);
  const auto probs = predict_proba(f, test.theta);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    Eigen::Index arg = 0;
    probs.row(static_cast<Eigen::Index>(k)).maxCoeff(&arg);
    correct += arg == test.machine[k] ? 1 : 0;
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(test.size()), 0.99);
  EXPECT_GT(out_of_bag_accuracy(f, train), 0.99);
}

TEST(Forest, IdenticalCloudsAreExchangeable) {
  // Every machine holds the same draws.
  const PooledDraws one = gaussian_pool({constant(2, 0.0)}, 1.0, 300, 3);
  std::vector<SampleSet> sets(5, SampleSet{one.theta, one.log_density});
  const PooledDraws pooled = pool_draws(sets);
  const Forest f = train_forest(pooled, small_config(30, 2), 11);
  const Eigen::RowVectorXd mean = predict_proba(f, pooled.theta).colwise().mean();
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_NEAR(mean(j), 0.2, 0.05);
  // Out-of-bag rows only ever meet their in-bag twins, which carry the other
  // labels, so accuracy sits below chance.
  EXPECT_LT(out_of_bag_accuracy(f, pooled), 0.2);
  // Independent draws from one distribution: out-of-bag accuracy is chance.
  std::vector<Eigen::VectorXd> same(5, constant(2, 0.0));
  const PooledDraws fresh = gaussian_pool(same, 1.0, 300, 4);
  const Forest g = train_forest(fresh, small_config(30, 2), 11);
  EXPECT_NEAR(out_of_bag_accuracy(g, fresh), 0.2, 0.05);
}

TEST(Forest, DeterministicGivenConfigAndSeed) {
  const PooledDraws p = gaussian_pool({constant(3, 0.0), constant(3, 0.5)}, 1.0, 150, 4);
  for (int trees : {10, 100}) {
    const Forest a = train_forest(p, small_config(trees, 2), 5);
    const Forest b = train_forest(p, small_config(trees, 2), 5);
    EXPECT_EQ(a.trees().size(), static_cast<std::size_t>(trees));
    EXPECT_EQ(a.to_json(), b.to_json());
  }
  TrainOptions threaded;
  threaded.workers = 4;
  EXPECT_EQ(train_forest(p, small_config(), 5).to_json(), train_forest(p, small_config(), 5, threaded).to_json());
}

TEST(Forest, RejectsDegenerateLabelsAndBadMtry) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 1.0)}, 1.0, 20, 5);
  const std::vector<int> same(p.size(), 0);
  EXPECT_THROW(train_forest(p.theta, same, 2, small_config(), 1), ValidationError);
  EXPECT_THROW(train_forest(p, small_config(10, 3), 1), ValidationError);
  ForestConfig c = small_config();
  c.num_trees = 5;
  EXPECT_THROW(train_forest(p, c, 1), ValidationError);
  c.allow_out_of_range = true;
  EXPECT_NO_THROW(train_forest(p, c, 1));
}

TEST(Forest, ProbabilityRowsOnClampedSimplex) {
  const PooledDraws p = gaussian_pool({constant(2, -1.0), constant(2, 0.0), constant(2, 1.0)}, 0.5, 100, 6);
  const Forest f = train_forest(p, small_config(15, 2), 3);
  Rng rng(7);
  std::normal_distribution<double> z(0.0, 3.0);
  Eigen::MatrixXd pts(1000, 2);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) << z(rng), z(rng);
  const auto probs = predict_proba(f, pts);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    EXPECT_NEAR(probs.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(probs.row(i).minCoeff(), kProbabilityFloor * (1 - 1e-12));
  }
  EXPECT_THROW(predict_proba(f, Eigen::MatrixXd::Zero(3, 3)), ValidationError);
}

TEST(Forest, PureLeafIsClampedToFloor) {
  std::vector<DecisionTree::Node> nodes(1);
  nodes[0].leaf = 0;
  const DecisionTree tree(nodes, {1.0, 0.0, 0.0}, 3);
  const Forest f({tree}, 3, 1, small_config(), 0);
  const auto probs = predict_proba(f, Eigen::MatrixXd::Zero(1, 1));
  EXPECT_NEAR(probs(0, 1), kProbabilityFloor, 1e-15);
  EXPECT_NEAR(probs(0, 2), kProbabilityFloor, 1e-15);
  EXPECT_NEAR(probs(0, 0), 1.0 - 2 * kProbabilityFloor, 1e-15);
}

TEST(Forest, TwoTreeAverage) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 0.7)}, 1.0, 80, 8);
  ForestConfig c = small_config(2, 2);
  c.allow_out_of_range = true;
  const Forest f = train_forest(p, c, 9);
  const Eigen::MatrixXd raw = predict_raw(f, p.theta);
  for (Eigen::Index k = 0; k < p.theta.rows(); ++k) {
    const Eigen::VectorXd x = p.theta.row(k).transpose();
    const auto a = f.trees()[0].leaf_frequencies(x.data());
    const auto b = f.trees()[1].leaf_frequencies(x.data());
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(raw(k, static_cast<Eigen::Index>(j)), 0.5 * (a[j] + b[j]), 1e-15);
  }
}

TEST(Forest, LeafFrequenciesSumToOne) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 0.7), constant(2, 1.4)}, 1.0, 80, 10);
  ForestConfig c = small_config(10, 2);
  c.weight_adjustment = true;
  const Forest f = train_forest(p, c, 3);
  for (const auto& tree : f.trees()) {
    for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
      if (tree.nodes()[i].feature >= 0) continue;
      const auto v = tree.leaf_values(i);
      EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0), 1.0, 1e-12);
    }
  }
}

TEST(Forest, RowPermutationInvarianceWithRowIds) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 0.8)}, 1.0, 60, 11);
  std::vector<std::size_t> perm(p.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(12);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd theta(p.theta.rows(), p.theta.cols());
  std::vector<int> labels(p.size());
  std::vector<std::uint64_t> ids(p.size());
  std::vector<std::uint64_t> ids_orig(p.size());
  std::vector<double> w_raw(p.size());
  std::vector<double> w_perm(p.size());
  // Integer raw weights keep both normalizations exact in any summation order.
  std::uniform_int_distribution<int> u(1, 9);
  for (std::size_t k = 0; k < p.size(); ++k) w_raw[k] = u(rng);
  for (std::size_t k = 0; k < p.size(); ++k) {
    theta.row(static_cast<Eigen::Index>(k)) = p.theta.row(static_cast<Eigen::Index>(perm[k]));
    labels[k] = p.machine[perm[k]];
    ids[k] = perm[k];
    ids_orig[k] = k;
    w_perm[k] = w_raw[perm[k]];
  }
  for (bool replacement : {false, true}) {
    ForestConfig c = small_config(12, 2);
    c.replacement = replacement;
    TrainOptions a;
    a.row_ids = ids_orig;
    a.case_weights = SimplexWeights::from_raw(w_raw);
    TrainOptions b;
    b.row_ids = ids;
    b.case_weights = SimplexWeights::from_raw(w_perm);
    const Forest fa = train_forest(p.theta, p.machine, 2, c, 21, a);
    const Forest fb = train_forest(theta, labels, 2, c, 21, b);
    EXPECT_EQ(fa.to_json(), fb.to_json());
  }
}

TEST(Forest, LabelSwapSwapsColumns) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 0.6)}, 1.0, 100, 13);
  std::vector<int> swapped(p.machine.size());
  for (std::size_t k = 0; k < swapped.size(); ++k) swapped[k] = 1 - p.machine[k];
  const ForestConfig c = small_config(15, 2);
  const Forest a = train_forest(p.theta, p.machine, 2, c, 4);
  const Forest b = train_forest(p.theta, swapped, 2, c, 4);
  const auto pa = predict_proba(a, p.theta);
  const auto pb = predict_proba(b, p.theta);
  EXPECT_LT((pa.col(0) - pb.col(1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((pa.col(1) - pb.col(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forest, ConfusionGrowsAsCloudsMerge) {
  double previous = 1.0;
  for (double sep : {20.0, 8.0, 4.0, 2.0, 1.0, 0.5, 0.0}) {
    const PooledDraws p = gaussian_pool({constant(1, 0.0), constant(1, sep)}, 1.0, 200, 14);
    const Forest f = train_forest(p, small_config(20, 1), 5);
    const PooledDraws fresh = gaussian_pool({constant(1, 0.0), constant(1, sep)}, 1.0, 200, 15);
    const double mean_max = predict_proba(f, fresh.theta).rowwise().maxCoeff().mean();
    EXPECT_LE(mean_max, previous + 0.05) << "separation " << sep;
    previous = mean_max;
  }
}

TEST(Forest, JsonRoundTripPreservesPredictions) {
  const PooledDraws p = gaussian_pool({constant(3, 0.0), constant(3, 0.4)}, 1.0, 80, 16);
  const Forest f = train_forest(p, small_config(10, 3), 2);
  const Forest g = Forest::from_json(nlohmann::json::parse(f.to_json().dump()));
  EXPECT_EQ(predict_proba(f, p.theta), predict_proba(g, p.theta));
  EXPECT_EQ(g.config(), f.config());
  auto bad = f.to_json();
  bad["schema_version"] = 99;
  EXPECT_THROW(Forest::from_json(bad), ValidationError);
  auto cyc = f.to_json();
  cyc["trees"][0]["nodes"] = nlohmann::json::array({nlohmann::json::array({0, 0.0, 0, 0, nlohmann::json::array()})});
  EXPECT_THROW(Forest::from_json(cyc), ValidationError);
}

}  // namespace
}  // namespace pmcmc
