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

// Classifier selection machinery.
//
// For a pooled draw theta_k with class probabilities p_k = Pr(z = . | theta_k)
// over m machines, the reconstructable-area probability is
//
//   Pr(P_k = Q) = exp(log m + (1/m) sum_j log p_kj),
//
// i.e. exp(-KL(Q || P_k)) against the uniform Q. Normalizing it over the pool
// gives the resampling distribution f. The selection criterion is
//
//   U = log(C_f / m) - (1/m) sum_k w_k sum_j log p_kj,
//
// with C_f the sum of Pr(P_k = Q) and w_k the pooled sub-posterior density
// weights. U times a classifier-independent constant bounds KL(f_pi || f),
// where f_pi is the full posterior restricted to the pool. Everything here is
// evaluated in log space.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pmcmc/forest.hpp"
#include "pmcmc/models.hpp"
#include "pmcmc/numerics.hpp"
#include "pmcmc/rng.hpp"

namespace pmcmc {

/// w_k = exp(log_density_k - LSE(log_density)).
SimplexWeights subposterior_weights(const PooledDraws& pooled);

/// log Pr(P = Q) = log m + mean_j log p_j. Throws ValidationError when any
/// p_j <= 0.
double log_reconstructable_probability(std::span<const double> p);
double reconstructable_probability(std::span<const double> p);

/// log Pr(P_k = Q) for every row of `probs`.
std::vector<double> log_reconstructable_probabilities(const ClassProbabilityMatrix& probs);

/// f_k = Pr(P_k = Q) / C_f.
SimplexWeights approx_posterior_weights(const ClassProbabilityMatrix& probs);

/// The selection criterion U for one classifier's in-sample probabilities.
double upper_bound_kl(const ClassProbabilityMatrix& probs, const PooledDraws& pooled);

struct CriterionReport {
  std::vector<double> recon_prob;  // Pr(P_k = Q) per pooled draw
  SimplexWeights f_weights;
  SimplexWeights w_sub;
  double log_cf = 0.0;
  double ub_kl = 0.0;
  ForestConfig config;
};

/// Predicts on the pooled draws and assembles the report.
CriterionReport evaluate_criterion(const Forest& forest, const PooledDraws& pooled);

struct TheoremCheck {
  double kl = 0.0;     // KL(f_pi || f) over the pool
  double bound = 0.0;  // U
  double H = 0.0;      // max_k f_pi(k) / min_k w_sub(k)
  bool holds = false;  // kl <= H * bound
};

/// Brute-force check of KL(f_pi || f) <= H * U on a small pool.
/// `full_log_density` is log pi(theta_k | X) up to an additive constant.
TheoremCheck verify_theorem_bound(const PooledDraws& pooled, const ClassProbabilityMatrix& probs,
                                  std::span<const double> full_log_density);

// ---- hyperparameter search -------------------------------------------------

/// Discrete grids the random search samples from, uniformly and
/// independently per hyperparameter.
struct HyperparameterSpace {
  double fraction_min = 0.8;
  double fraction_max = 0.999;
  double fraction_step = 0.001;
  int trees_min = 10;
  int trees_max = 100;
  int node_size_min = 5;
  int node_size_max = 50;
  int mtry_min = 1;
  int mtry_max = 0;  // 0 means d
  std::vector<bool> replacement{false, true};
  std::vector<bool> weight_adjustment{false, true};

  void validate(std::size_t d) const;
  ForestConfig sample(std::size_t d, Rng& rng) const;
};

struct SearchTrial {
  ForestConfig config;
  double ub_kl = 0.0;
  std::uint64_t seed = 0;  // forest train seed
  bool failed = false;
};

struct SearchTrace {
  std::vector<SearchTrial> trials;
  std::size_t best_index = 0;
};

struct SearchResult {
  SearchTrace trace;
  Forest best_forest;
  CriterionReport best_report;
};

/// Called once per successful trial with its trained forest and report.
/// Calls may come from several threads.
using TrialObserver = std::function<void(std::size_t trial, const Forest&, const CriterionReport&)>;

struct SearchOptions {
  std::size_t workers = 0;
  TrialObserver observer;
};

/// Random search over `space`: trial i draws its config and train seed from
/// the stream (master_seed, i), trains on the pool and scores it by U on the
/// same pool. Returns the argmin forest and the full trace.
SearchResult random_search(const PooledDraws& pooled, const HyperparameterSpace& space, std::size_t budget,
                           std::uint64_t master_seed, const SearchOptions& options = {});

}  // namespace pmcmc
