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

// Combiners that turn pooled sub-posterior draws into approximate
// full-posterior draws: the classifier-weighted resampler and three
// baselines (consensus averaging, KDE product, Weierstrass importance).

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pmcmc/forest.hpp"
#include "pmcmc/models.hpp"
#include "pmcmc/numerics.hpp"
#include "pmcmc/rng.hpp"

namespace pmcmc {

enum class JitterKind { kMultiplicative, kAdditiveGaussian, kNone };

std::string to_string(JitterKind k);
JitterKind jitter_kind_from_string(const std::string& s);

struct JitterConfig {
  JitterKind kind = JitterKind::kMultiplicative;
  double low = 1.0 / 3.0;
  double high = 3.0;
  int copies_per_draw = 1;
  double additive_scale = 0.0;  // standard deviation of the additive kind

  void validate() const;
  nlohmann::json to_json() const;
};

struct CandidatePool {
  Eigen::MatrixXd points;           // originals first, then jittered copies
  std::vector<std::size_t> source;  // pooled row each candidate came from
};

/// Originals plus `copies_per_draw` jittered copies of every pooled draw.
CandidatePool jitter_augment(const PooledDraws& pooled, const JitterConfig& jc, Rng& rng);

enum class CombineMethod { kClassifier, kConsensus, kKdeProduct, kWeierstrass };

std::string to_string(CombineMethod m);
CombineMethod combine_method_from_string(const std::string& s);

struct CombineResult {
  Eigen::MatrixXd draws;  // M x d
  CombineMethod method = CombineMethod::kClassifier;
  std::optional<SimplexWeights> weights_used;
  nlohmann::json config_snapshot;
  std::uint64_t seed = 0;
  double seconds = 0.0;
};

/// Scores jittered candidates with the forest, weights them by the
/// reconstructable-area probability and draws M of them by systematic
/// resampling.
CombineResult combine_classifier(const PooledDraws& pooled, const Forest& forest, const JitterConfig& jc,
                                 std::size_t n_out, std::uint64_t seed);

/// Precision-weighted average of draws paired by iteration index, weights
/// being inverse sample covariances.
CombineResult combine_consensus(std::span<const Eigen::MatrixXd> per_machine);

struct WeierstrassOptions {
  /// Random re-pairing rounds added to the N iteration-paired tuples.
  std::size_t repairing_rounds = 19;
};

/// Importance-weighted tuple resampler with tuple weight
/// exp(-m (mean|r|^2 - |mean r|^2) / (2 h^2)) and output N(mean r, h^2/m I).
CombineResult combine_weierstrass(std::span<const Eigen::MatrixXd> per_machine, double h, std::size_t n_out,
                                  std::uint64_t seed, const WeierstrassOptions& options = {});

/// Independent-Metropolis-within-Gibbs over index tuples of the product of
/// per-machine Gaussian KDEs. `warmup` sweeps are discarded; one draw is
/// emitted per kept sweep.
CombineResult combine_kde_product(std::span<const Eigen::MatrixXd> per_machine, double h, std::size_t warmup,
                                  std::size_t n_out, std::uint64_t seed);

/// Mean over machines and dimensions of the per-machine draw standard
/// deviation, scaled by (mN)^(-1/(4+d)).
double default_bandwidth(std::span<const Eigen::MatrixXd> per_machine);

}  // namespace pmcmc
