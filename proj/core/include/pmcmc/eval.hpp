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

// Metrics for judging a combined sample: Gaussian KL from moments, Pearson
// correlation, and 1-d kernel density traces with mode counting.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pmcmc/numerics.hpp"

namespace pmcmc {

/// KL(full || approx) between the Gaussians with the given moments:
/// 0.5 [tr(Sa^-1 Sf) + dm' Sa^-1 dm - d + log(|Sa| / |Sf|)].
/// Throws NumericalError when either covariance is not SPD.
double gaussian_kl(const MomentSummary& full, const MomentSummary& approx);

/// Throws ValidationError on length mismatch, fewer than 3 pairs or zero
/// variance.
double pearson_correlation(std::span<const double> x, std::span<const double> y);

struct DensityTrace {
  std::vector<double> grid;     // strictly increasing
  std::vector<double> density;  // >= 0

  /// Trapezoid rule over the grid.
  double integral() const;
};

/// Gaussian-kernel density of 1-d draws on `grid`. Weights default to
/// uniform and are normalized internally.
DensityTrace density_trace(std::span<const double> draws, std::optional<std::span<const double>> weights,
                           std::span<const double> grid, double bandwidth);

/// `points` equally spaced values from min(draws) - 3h to max(draws) + 3h.
std::vector<double> default_grid(std::span<const double> draws, double bandwidth, std::size_t points = 512);

/// Strict interior local maxima whose height exceeds prominence * max.
std::size_t count_modes(const DensityTrace& t, double prominence);

/// Grid positions of the maxima counted by count_modes, ascending.
std::vector<double> mode_locations(const DensityTrace& t, double prominence);

/// Strict interior local maxima of a log-density evaluated on `grid` that lie
/// within `window` nats of the largest value.
std::vector<double> log_density_modes(std::span<const double> grid, std::span<const double> log_values,
                                      double window);

}  // namespace pmcmc
