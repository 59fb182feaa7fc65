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

// Data generation, row partitioning, sub-posterior construction and exact or
// Metropolis sampling for the Gaussian and three-component mixture testbeds.

#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pmcmc/rng.hpp"

namespace pmcmc {

struct Dataset {
  Eigen::MatrixXd rows;     // n x b
  std::vector<int> labels;  // empty, or one component label in {1,2,3} per row

  std::size_t size() const noexcept { return static_cast<std::size_t>(rows.rows()); }
  bool has_labels() const noexcept { return !labels.empty(); }

  /// Rows listed in `index`, labels carried along.
  Dataset subset(std::span<const std::size_t> index) const;
};

/// m disjoint, exhaustive sets of 0-based row indices.
struct Partition {
  std::vector<std::vector<std::size_t>> index_sets;

  std::size_t num_machines() const noexcept { return index_sets.size(); }
  std::vector<std::size_t> sizes() const;
  /// Machine owning each row (0-based), inverse of index_sets.
  std::vector<int> assignment(std::size_t n) const;
  static Partition from_assignment(std::span<const int> machine_of_row, std::size_t m);
};

/// One machine's output: draws and the log of its own sub-posterior density
/// evaluated at each draw.
struct SampleSet {
  Eigen::MatrixXd draws;            // N x d
  std::vector<double> log_density;  // N
};

/// The single artifact exchanged at the gather: all sub-posterior draws in
/// machine order. Row k = i*N + t is machine i's draw t (0-based).
struct PooledDraws {
  Eigen::MatrixXd theta;            // mN x d
  std::vector<int> machine;         // 0-based machine index per row
  std::vector<double> log_density;  // log pi(theta_k | X_machine(k))
  std::size_t num_machines = 0;
  std::size_t draws_per_machine = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(theta.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(theta.cols()); }
  /// Rows belonging to machine i as an N x d block copy.
  Eigen::MatrixXd machine_draws(std::size_t i) const;
  std::vector<Eigen::MatrixXd> split_by_machine() const;
};

// ---- data ------------------------------------------------------------------

/// Sigma_{g,l} = rho^{|g-l|}. Throws ValidationError("covariance not SPD")
/// unless 0 < rho < 1.
Eigen::MatrixXd ar1_covariance(std::size_t d, double rho);

Dataset generate_gaussian_data(std::size_t n, std::size_t d, const Eigen::VectorXd& mu, double rho,
                               Rng& rng);

inline constexpr std::array<double, 3> kMixtureWeights{0.25, 0.5, 0.25};
inline constexpr std::array<double, 3> kMixtureMeans{-3.0, 0.0, 3.0};

/// n labelled draws from 1/4 N(-3,1) + 1/2 N(0,1) + 1/4 N(3,1).
Dataset generate_mixture_data(std::size_t n, Rng& rng);

// ---- partitioning ----------------------------------------------------------

/// Random permutation split into m contiguous blocks whose sizes differ by
/// at most one.
Partition partition_rows(std::size_t n, std::size_t m, Rng& rng);

/// Label-stratified split: every machine gets floor or ceil of each label's
/// share, so every component is present on every machine when each label
/// occurs at least m times. Totals still differ by at most one.
Partition partition_stratified(std::span<const int> labels, std::size_t m, Rng& rng);

/// Exponent applied to the full log-prior on each machine (1/m).
double fractionate_prior_power(std::size_t m);

// ---- Gaussian testbed ------------------------------------------------------

struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Multivariate normal with a cached Cholesky factor.
class MultivariateNormal {
 public:
  /// Throws NumericalError("posterior covariance not SPD").
  explicit MultivariateNormal(const GaussianPosterior& p);

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd sample(Rng& rng) const;
  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  double log_norm_ = 0.0;
};

/// Flat-prior posterior of a normal mean with known covariance: mean is the
/// row average, covariance Sigma / N_i.
GaussianPosterior gaussian_subposterior(const Eigen::MatrixXd& data_part, const Eigen::MatrixXd& sigma);

/// N exact draws via Cholesky with their normalized log densities.
SampleSet sample_gaussian(const GaussianPosterior& p, std::size_t n_draws, Rng& rng);

// ---- mixture testbed -------------------------------------------------------

struct MixturePosterior {
  std::array<double, 3> component_means{};
  std::array<double, 3> component_variances{};
  std::array<double, 3> component_weights = kMixtureWeights;

  double log_pdf(double theta) const;
};

/// Builds the three-mode sub-posterior from a labelled partition. Throws
/// ValidationError("empty mixture component") when a label is absent.
MixturePosterior mixture_subposterior(const Dataset& labeled_part);

/// Exact mixture sampling; when `components` is non-null the chosen
/// component (0-based) of each draw is written to it.
SampleSet sample_mixture(const MixturePosterior& p, std::size_t n_draws, Rng& rng,
                         std::vector<int>* components = nullptr);

/// Unnormalized log full posterior under the independent product equation:
/// sum_i log pi(theta | D_i).
double mixture_full_log_density(std::span<const MixturePosterior> subposteriors, double theta);

// ---- generic sampler -------------------------------------------------------

using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;

struct MetropolisResult {
  SampleSet samples;
  double acceptance_rate = 0.0;
};

/// Gaussian random-walk Metropolis. Burn-in defaults to 10% of n_draws; the
/// returned chain holds n_draws post-burn-in states.
MetropolisResult random_walk_metropolis(const LogDensityFn& log_target, const Eigen::VectorXd& init,
                                        std::size_t n_draws, double step_scale, Rng& rng,
                                        std::optional<std::size_t> burn_in = std::nullopt);

// ---- gather ----------------------------------------------------------------

/// Concatenates per-machine outputs in machine order. Throws ValidationError
/// when machines disagree on N or d.
PooledDraws pool_draws(std::span<const SampleSet> per_machine);

/// The one permitted cross-machine exchange. Each machine may submit exactly
/// once; a second submission throws ContractViolation. Thread-safe.
class OneShotGather {
 public:
  explicit OneShotGather(std::size_t num_machines);

  void submit(std::size_t machine, SampleSet payload);
  /// Pools once every machine has reported. Throws ContractViolation if a
  /// machine is missing.
  PooledDraws collect() const;

  std::size_t messages_from(std::size_t machine) const;
  std::size_t total_messages() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::optional<SampleSet>> inbox_;
  std::vector<std::size_t> counts_;
};

}  // namespace pmcmc
