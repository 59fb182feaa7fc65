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

#include "pmcmc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pmcmc/error.hpp"

namespace pmcmc {

double gaussian_kl(const MomentSummary& full, const MomentSummary& approx) {
  const auto d = full.mean.size();
  detail::require(d >= 1 && approx.mean.size() == d, "moment summaries disagree on dimension");
  detail::require(full.covariance.rows() == d && full.covariance.cols() == d && approx.covariance.rows() == d &&
                      approx.covariance.cols() == d,
                  "covariance shape does not match mean");
  const Eigen::MatrixXd lf = cholesky_lower(full.covariance, "full covariance not SPD");
  const Eigen::MatrixXd la = cholesky_lower(approx.covariance, "approx covariance not SPD");
  // With Sa = La La': tr(Sa^-1 Sf) = |La^-1 Lf|_F^2 and the quadratic form is |La^-1 dm|^2.
  const auto la_view = la.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd a = la_view.solve(lf);
  const Eigen::VectorXd b = la_view.solve(approx.mean - full.mean);
  const double kl = 0.5 * (a.squaredNorm() + b.squaredNorm() - static_cast<double>(d) + log_det_from_cholesky(la) -
                           log_det_from_cholesky(lf));
  if (!std::isfinite(kl)) detail::fail_numerical("Gaussian KL is not finite");
  return kl;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size(), "correlation inputs differ in length");
  detail::require(x.size() >= 3, "correlation needs at least 3 pairs");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) detail::fail_validation("correlation input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double DensityTrace::integral() const {
  double s = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) s += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
  return s;
}

DensityTrace density_trace(std::span<const double> draws, std::optional<std::span<const double>> weights,
                           std::span<const double> grid, double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) detail::fail_validation("bandwidth must be positive");
  detail::require(draws.size() >= 10, "density trace needs at least 10 draws");
  detail::require(grid.size() >= 2, "density grid needs at least 2 points");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    detail::require(grid[i] > grid[i - 1], "density grid must be strictly increasing");
  }
  std::vector<double> w(draws.size(), 1.0 / static_cast<double>(draws.size()));
  if (weights) {
    detail::require(weights->size() == draws.size(), "weights length must match draws");
    const SimplexWeights sw = SimplexWeights::from_raw({weights->begin(), weights->end()});
    w.assign(sw.values().begin(), sw.values().end());
  }
  const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * std::numbers::pi));
  DensityTrace t;
  t.grid.assign(grid.begin(), grid.end());
  t.density.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (std::size_t k = 0; k < draws.size(); ++k) {
      const double u = (grid[g] - draws[k]) / bandwidth;
      s += w[k] * std::exp(-0.5 * u * u);
    }
    t.density[g] = norm * s;
  }
  return t;
}

std::vector<double> default_grid(std::span<const double> draws, double bandwidth, std::size_t points) {
  detail::require(!draws.empty(), "grid needs at least one draw");
  detail::require(points >= 2, "grid needs at least 2 points");
  if (!(bandwidth > 0.0)) detail::fail_validation("bandwidth must be positive");
  const auto [lo, hi] = std::minmax_element(draws.begin(), draws.end());
  const double a = *lo - 3.0 * bandwidth;
  const double b = *hi + 3.0 * bandwidth;
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return grid;
}

std::vector<double> mode_locations(const DensityTrace& t, double prominence) {
  if (!(prominence > 0.0)) detail::fail_validation("prominence must be positive");
  std::vector<double> out;
  if (t.density.size() < 3) return out;
  const double top = *std::max_element(t.density.begin(), t.density.end());
  for (std::size_t i = 1; i + 1 < t.density.size(); ++i) {
    const double v = t.density[i];
    if (v > t.density[i - 1] && v > t.density[i + 1] && v > prominence * top) out.push_back(t.grid[i]);
  }
  return out;
}

std::size_t count_modes(const DensityTrace& t, double prominence) { return mode_locations(t, prominence).size(); }

std::vector<double> log_density_modes(std::span<const double> grid, std::span<const double> log_values,
                                      double window) {
  detail::require(grid.size() == log_values.size(), "grid and log values differ in length");
  std::vector<double> out;
  if (grid.size() < 3) return out;
  const double top = *std::max_element(log_values.begin(), log_values.end());
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    const double v = log_values[i];
    if (v > log_values[i - 1] && v > log_values[i + 1] && v >= top - window) out.push_back(grid[i]);
  }
  return out;
}

}  // namespace pmcmc
