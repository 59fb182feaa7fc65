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

// Log-space arithmetic, weighted moments and resampling shared by every
// stage of the pipeline. All functions are pure; RNG state is passed in.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pmcmc/rng.hpp"

namespace pmcmc {

/// Nonnegative weights summing to one.
class SimplexWeights {
 public:
  SimplexWeights() = default;

  /// Normalizes `raw` onto the simplex. Throws ValidationError when an entry
  /// is negative or non-finite, or when the total is zero.
  static SimplexWeights from_raw(std::vector<double> raw);
  static SimplexWeights uniform(std::size_t n);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  /// Kish effective sample size, 1 / sum(w^2).
  double effective_sample_size() const noexcept;

 private:
  explicit SimplexWeights(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

struct MomentSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// log(sum(exp(v))). Throws ValidationError on empty input ("empty vector")
/// or any non-finite entry ("non-finite weight").
double log_sum_exp(std::span<const double> v);

/// exp(v_k - log_sum_exp(v)), renormalized so the sum is 1 to rounding.
SimplexWeights normalize_log_weights(std::span<const double> v);

/// Weighted mean and population-form covariance of the rows of `draws`.
MomentSummary weighted_moments(const Eigen::MatrixXd& draws, std::span<const double> w);

/// Unweighted sample moments. Population form (divisor M) to match
/// `weighted_moments` with uniform weights.
MomentSummary sample_moments(const Eigen::MatrixXd& draws);

/// Systematic resampling: `count` indices from categorical(w) using a single
/// uniform offset. Throws ValidationError if w sums to zero.
std::vector<std::size_t> resample_indices(std::span<const double> w, std::size_t count, Rng& rng);

/// Lower-triangular Cholesky factor; throws NumericalError(what) when the
/// matrix is not symmetric positive definite.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a, const char* what);

/// log|A| from a lower Cholesky factor.
double log_det_from_cholesky(const Eigen::MatrixXd& lower);

}  // namespace pmcmc
