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

#include "pmcmc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pmcmc/error.hpp"

namespace pmcmc {

SimplexWeights SimplexWeights::from_raw(std::vector<double> raw) {
  detail::require(!raw.empty(), "empty vector");
  double total = 0.0;
  for (double x : raw) {
    if (!std::isfinite(x) || x < 0.0) detail::fail_validation("weights must be finite and nonnegative");
    total += x;
  }
  if (!(total > 0.0)) detail::fail_validation("degenerate weights: sum is zero");
  for (double& x : raw) x /= total;
  return SimplexWeights(std::move(raw));
}

SimplexWeights SimplexWeights::uniform(std::size_t n) {
  detail::require(n > 0, "empty vector");
  return SimplexWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

double SimplexWeights::effective_sample_size() const noexcept {
  double s = 0.0;
  for (double w : values_) s += w * w;
  return s > 0.0 ? 1.0 / s : 0.0;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) detail::fail_validation("empty vector");
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) detail::fail_validation("non-finite weight");
    hi = std::max(hi, x);
  }
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

SimplexWeights normalize_log_weights(std::span<const double> v) {
  const double lse = log_sum_exp(v);
  std::vector<double> w(v.size());
  std::transform(v.begin(), v.end(), w.begin(), [lse](double x) { return std::exp(x - lse); });
  return SimplexWeights::from_raw(std::move(w));
}

MomentSummary weighted_moments(const Eigen::MatrixXd& draws, std::span<const double> w) {
  const auto rows = static_cast<std::size_t>(draws.rows());
  detail::require(draws.cols() >= 1, "draws must have at least one column");
  detail::require(w.size() == rows, "weight length does not match number of draws");
  detail::require(rows >= 1, "empty vector");
  double total = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) detail::fail_validation("weights must be finite and nonnegative");
    total += x;
  }
  if (!(total > 0.0)) detail::fail_validation("all-zero weights");

  const Eigen::Index d = draws.cols();
  MomentSummary out{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  for (Eigen::Index k = 0; k < draws.rows(); ++k) out.mean += (w[k] / total) * draws.row(k).transpose();
  for (Eigen::Index k = 0; k < draws.rows(); ++k) {
    if (w[k] == 0.0) continue;
    const Eigen::VectorXd c = draws.row(k).transpose() - out.mean;
    out.covariance.noalias() += (w[k] / total) * c * c.transpose();
  }
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

MomentSummary sample_moments(const Eigen::MatrixXd& draws) {
  std::vector<double> w(static_cast<std::size_t>(draws.rows()), 1.0);
  return weighted_moments(draws, w);
}

std::vector<std::size_t> resample_indices(std::span<const double> w, std::size_t count, Rng& rng) {
  detail::require(count >= 1, "resample count must be positive");
  detail::require(!w.empty(), "empty vector");
  double total = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) detail::fail_validation("weights must be finite and nonnegative");
    total += x;
  }
  if (!(total > 0.0)) detail::fail_validation("degenerate weights: sum is zero");

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double step = 1.0 / static_cast<double>(count);
  const double offset = unif(rng) * step;

  std::vector<std::size_t> out;
  out.reserve(count);
  std::size_t i = 0;
  double cumulative = w[0] / total;
  const std::size_t last = w.size() - 1;
  for (std::size_t j = 0; j < count; ++j) {
    const double target = offset + static_cast<double>(j) * step;
    while (target >= cumulative && i < last) {
      ++i;
      cumulative += w[i] / total;
    }
    // Rounding can leave the last targets past the final positive weight.
    std::size_t pick = i;
    while (w[pick] == 0.0 && pick > 0) --pick;
    out.push_back(pick);
  }
  return out;
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) detail::fail_numerical(what);
  if (!a.allFinite()) detail::fail_numerical(what);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) detail::fail_numerical(what);
  Eigen::MatrixXd l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) detail::fail_numerical(what);
  }
  return l;
}

double log_det_from_cholesky(const Eigen::MatrixXd& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

}  // namespace pmcmc
