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

#include <cmath>
#include <set>

#include "pmcmc/combine.hpp"
#include "pmcmc/error.hpp"
#include "test_support.hpp"

namespace pmcmc {
namespace {

using testing::constant;
using testing::gaussian_pool;

ForestConfig quick_forest() {
  ForestConfig c;
  c.num_trees = 20;
  c.mtry = 2;
  c.min_node_size = 10;
  return c;
}

// One-leaf forest that predicts the uniform vector everywhere.
Forest uniform_forest(std::size_t m, std::size_t d) {
  std::vector<DecisionTree::Node> nodes(1);
  nodes[0].leaf = 0;
  const DecisionTree tree(nodes, std::vector<double>(m, 1.0 / static_cast<double>(m)), m);
  return Forest({tree}, m, d, quick_forest(), 0);
}

TEST(Jitter, PoolSizesAndProvenance) {
  const PooledDraws p = gaussian_pool({constant(2, 1.0), constant(2, 2.0)}, 0.5, 50, 1);
  Rng rng(2);
  JitterConfig none;
  none.kind = JitterKind::kNone;
  const CandidatePool a = jitter_augment(p, none, rng);
  EXPECT_EQ(a.points, p.theta);
  JitterConfig mult;
  const CandidatePool b = jitter_augment(p, mult, rng);
  ASSERT_EQ(b.points.rows(), 200);
  for (Eigen::Index r = 0; r < b.points.rows(); ++r) {
    const auto src = static_cast<Eigen::Index>(b.source[static_cast<std::size_t>(r)]);
    EXPECT_EQ(src, r % 100);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double ratio = b.points(r, j) / p.theta(src, j);
      EXPECT_GE(ratio, 1.0 / 3.0 - 1e-12);
      EXPECT_LE(ratio, 3.0 + 1e-12);
    }
  }
  mult.copies_per_draw = 3;
  EXPECT_EQ(jitter_augment(p, mult, rng).points.rows(), 400);
}

TEST(Jitter, ZeroIsAFixedPointOfMultiplicativeJitter) {
  std::vector<SampleSet> sets(2, SampleSet{Eigen::MatrixXd::Zero(5, 3), std::vector<double>(5, 0.0)});
  const PooledDraws p = pool_draws(sets);
  Rng rng(3);
  EXPECT_TRUE(jitter_augment(p, JitterConfig{}, rng).points.isZero(0.0));
  JitterConfig add;
  add.kind = JitterKind::kAdditiveGaussian;
  add.additive_scale = 0.1;
  EXPECT_FALSE(jitter_augment(p, add, rng).points.bottomRows(10).isZero(0.0));
}

TEST(Jitter, Validation) {
  JitterConfig c;
  c.low = 3.0;
  c.high = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  JitterConfig a;
  a.kind = JitterKind::kAdditiveGaussian;
  EXPECT_THROW(a.validate(), ValidationError);
  EXPECT_THROW(jitter_kind_from_string("sideways"), ValidationError);
  EXPECT_EQ(jitter_kind_from_string(to_string(JitterKind::kAdditiveGaussian)), JitterKind::kAdditiveGaussian);
}

TEST(CombineClassifier, IdenticalMachinesRecoverCommonMoments) {
  const PooledDraws one = gaussian_pool({constant(2, 1.0)}, 0.5, 1000, 4);
  std::vector<SampleSet> sets(3, SampleSet{one.theta, one.log_density});
  const PooledDraws p = pool_draws(sets);
  const Forest f = train_forest(p, quick_forest(), 5);
  JitterConfig none;
  none.kind = JitterKind::kNone;
  const CombineResult r = combine_classifier(p, f, none, 3000, 6);
  const MomentSummary m = sample_moments(r.draws);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(m.mean(j), 1.0, 0.05);
    EXPECT_NEAR(std::sqrt(m.covariance(j, j)), 0.5, 0.05);
  }
}

TEST(CombineClassifier, NoJitterStaysInsidePool) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 0.4)}, 1.0, 200, 7);
  const Forest f = train_forest(p, quick_forest(), 8);
  JitterConfig none;
  none.kind = JitterKind::kNone;
  const CombineResult r = combine_classifier(p, f, none, 500, 9);
  std::set<std::pair<double, double>> pool;
  for (Eigen::Index k = 0; k < p.theta.rows(); ++k) pool.insert({p.theta(k, 0), p.theta(k, 1)});
  for (Eigen::Index k = 0; k < r.draws.rows(); ++k) EXPECT_TRUE(pool.count({r.draws(k, 0), r.draws(k, 1)}));
  ASSERT_TRUE(r.weights_used.has_value());
  EXPECT_EQ(r.weights_used->size(), p.size());
}

TEST(CombineClassifier, UniformForestIsUniformBootstrap) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 0.4)}, 1.0, 100, 10);
  JitterConfig none;
  none.kind = JitterKind::kNone;
  const CombineResult r = combine_classifier(p, uniform_forest(2, 2), none, p.size(), 11);
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR((*r.weights_used)[k], 1.0 / 200.0, 1e-15);
  // Systematic resampling of n from n uniform weights takes every row once.
  std::multiset<double> got;
  std::multiset<double> want;
  for (Eigen::Index k = 0; k < r.draws.rows(); ++k) got.insert(r.draws(k, 0));
  for (Eigen::Index k = 0; k < p.theta.rows(); ++k) want.insert(p.theta(k, 0));
  EXPECT_EQ(got, want);
}

TEST(CombineClassifier, DimensionMismatchAndDeterminism) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 0.4)}, 1.0, 100, 12);
  EXPECT_THROW(combine_classifier(p, uniform_forest(2, 3), JitterConfig{}, 10, 1), ValidationError);
  const Forest f = train_forest(p, quick_forest(), 13);
  EXPECT_EQ(combine_classifier(p, f, JitterConfig{}, 100, 5).draws, combine_classifier(p, f, JitterConfig{}, 100, 5).draws);
}

TEST(CombineConsensus, EqualCovariancesGivePairwiseMean) {
  const PooledDraws a = gaussian_pool({constant(3, 0.0)}, 1.0, 200, 14);
  Eigen::MatrixXd b = a.theta;
  b.rowwise() += Eigen::RowVector3d(1.0, -2.0, 0.5);
  const std::vector<Eigen::MatrixXd> per{a.theta, b};
  const CombineResult r = combine_consensus(per);
  EXPECT_LT((r.draws - 0.5 * (a.theta + b)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(CombineConsensus, SingleMachineIsIdentity) {
  const PooledDraws a = gaussian_pool({constant(2, 0.0)}, 1.0, 50, 15);
  const std::vector<Eigen::MatrixXd> per{a.theta};
  EXPECT_EQ(combine_consensus(per).draws, a.theta);
}

TEST(CombineConsensus, ConjugateGaussianMean) {
  // Sub-posteriors N(mu_i, S_i); the product has precision sum S_i^-1.
  Rng rng(16);
  std::vector<Eigen::MatrixXd> per;
  Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(2, 2);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < 4; ++i) {
    GaussianPosterior g;
    g.mean = Eigen::Vector2d(0.1 * i, -0.2 * i);
    g.covariance = testing::random_spd(2, rng, 0.1);
    per.push_back(sample_gaussian(g, 4000, rng).draws);
    prec += g.covariance.inverse();
    eta += g.covariance.inverse() * g.mean;
  }
  const Eigen::VectorXd full_mean = prec.inverse() * eta;
  const MomentSummary m = sample_moments(combine_consensus(per).draws);
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(m.mean(j), full_mean(j), 5.0 * std::sqrt(prec.inverse()(j, j) / 4000.0));
}

TEST(CombineConsensus, SingularCovarianceIsError) {
  Eigen::MatrixXd x(20, 2);
  for (int t = 0; t < 20; ++t) x.row(t) << t, 2.0 * t;
  const std::vector<Eigen::MatrixXd> per{x, x};
  EXPECT_THROW(combine_consensus(per), NumericalError);
}

TEST(CombineWeierstrass, IdenticalMachinesHaveEqualWeights) {
  const PooledDraws a = gaussian_pool({constant(2, 0.0)}, 1.0, 100, 17);
  const std::vector<Eigen::MatrixXd> per{a.theta, a.theta, a.theta};
  WeierstrassOptions opt;
  opt.repairing_rounds = 0;
  const CombineResult r = combine_weierstrass(per, 0.1, 500, 18, opt);
  for (std::size_t k = 0; k < 100; ++k) EXPECT_NEAR((*r.weights_used)[k], 0.01, 1e-15);
  const MomentSummary m = sample_moments(r.draws);
  const MomentSummary s = sample_moments(a.theta);
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(m.covariance(j, j), s.covariance(j, j) + 0.01 / 3.0, 0.25);
}

TEST(CombineWeierstrass, HugeBandwidthGivesUniformWeights) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 3.0)}, 1.0, 50, 19);
  const auto per = p.split_by_machine();
  const CombineResult r = combine_weierstrass(per, 1e6, 100, 20);
  const auto w = r.weights_used->values();
  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  EXPECT_NEAR(*hi / *lo, 1.0, 1e-9);
}

TEST(CombineWeierstrass, MachineOrderDoesNotChangeWeights) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 0.3), constant(2, 0.6)}, 1.0, 80, 21);
  auto per = p.split_by_machine();
  WeierstrassOptions opt;
  opt.repairing_rounds = 0;
  const CombineResult a = combine_weierstrass(per, 0.8, 50, 22, opt);
  std::swap(per[0], per[2]);
  const CombineResult b = combine_weierstrass(per, 0.8, 50, 22, opt);
  for (std::size_t k = 0; k < 80; ++k) EXPECT_NEAR((*a.weights_used)[k], (*b.weights_used)[k], 1e-14);
}

TEST(CombineWeierstrass, DisjointMachinesUnderflow) {
  const PooledDraws p = gaussian_pool({constant(1, 0.0), constant(1, 100.0)}, 0.1, 30, 23);
  const auto per = p.split_by_machine();
  EXPECT_THROW(combine_weierstrass(per, 0.01, 10, 1), NumericalError);
  EXPECT_THROW(combine_weierstrass(per, 0.0, 10, 1), ValidationError);
}

TEST(CombineKdeProduct, SingleMachineIsSmoothedBootstrap) {
  const PooledDraws a = gaussian_pool({constant(1, 2.0)}, 1.0, 2000, 24);
  const std::vector<Eigen::MatrixXd> per{a.theta};
  const double h = 0.3;
  const CombineResult r = combine_kde_product(per, h, 100, 20000, 25);
  const MomentSummary m = sample_moments(r.draws);
  const MomentSummary s = sample_moments(a.theta);
  EXPECT_NEAR(m.mean(0), s.mean(0), 0.05);
  EXPECT_NEAR(m.covariance(0, 0), s.covariance(0, 0) + h * h, 0.08);
}

TEST(CombineKdeProduct, IdenticalMachinesSampleTheSquaredKde) {
  const PooledDraws a = gaussian_pool({constant(1, 0.0)}, 1.0, 300, 26);
  const std::vector<Eigen::MatrixXd> per{a.theta, a.theta};
  const double h = 0.3;
  const CombineResult r = combine_kde_product(per, h, 500, 40000, 27);
  // Oracle: mean and variance of KDE(x)^2 by quadrature.
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (double x = -8.0; x <= 8.0; x += 1e-3) {
    double k = 0.0;
    for (Eigen::Index i = 0; i < a.theta.rows(); ++i) k += std::exp(-0.5 * std::pow((x - a.theta(i, 0)) / h, 2));
    const double q = k * k;
    z += q;
    m1 += q * x;
    m2 += q * x * x;
  }
  const double mean = m1 / z;
  const double var = m2 / z - mean * mean;
  const MomentSummary m = sample_moments(r.draws);
  EXPECT_NEAR(m.mean(0), mean, 0.05);
  EXPECT_NEAR(m.covariance(0, 0), var, 0.15 * var);
}

TEST(CombineKdeProduct, FrozenChainAtTinyBandwidthFails) {
  // Two far-apart draws per machine: a start on a matched pair can never move.
  Eigen::MatrixXd draws(2, 1);
  draws << 0.0, 1000.0;
  const std::vector<Eigen::MatrixXd> per{draws, draws};
  int failures = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    try {
      combine_kde_product(per, 1e-3, 50, 10, seed);
    } catch (const NumericalError& e) {
      EXPECT_NE(std::string(e.what()).find("bandwidth too small"), std::string::npos);
      ++failures;
    }
    EXPECT_NO_THROW(combine_kde_product(per, 1e3, 50, 10, seed));
  }
  EXPECT_GT(failures, 0);
  EXPECT_LT(failures, 20);
}

TEST(DefaultBandwidth, MatchesRuleOfThumb) {
  const PooledDraws p = gaussian_pool({constant(2, 0.0), constant(2, 1.0)}, 1.5, 400, 29);
  const auto per = p.split_by_machine();
  double sd = 0.0;
  for (const auto& x : per) {
    for (int j = 0; j < 2; ++j) {
      const double mean = x.col(j).mean();
      sd += std::sqrt((x.col(j).array() - mean).square().sum() / (x.rows() - 1));
    }
  }
  sd /= 4.0;
  EXPECT_NEAR(default_bandwidth(per), sd * std::pow(800.0, -1.0 / 6.0), 1e-12);
}

}  // namespace
}  // namespace pmcmc
