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

#include "pmcmc/combine.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "pmcmc/criterion.hpp"
#include "pmcmc/error.hpp"

namespace pmcmc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_same_shape(std::span<const Eigen::MatrixXd> per_machine, bool same_rows) {
  detail::require(!per_machine.empty(), "no machines to combine");
  const auto d = per_machine.front().cols();
  const auto n = per_machine.front().rows();
  detail::require(d >= 1 && n >= 1, "machine draws must be nonempty");
  for (const auto& draws : per_machine) {
    detail::require(draws.cols() == d, "machines disagree on dimension");
    detail::require(draws.rows() >= 1, "machine draws must be nonempty");
    if (same_rows) detail::require(draws.rows() == n, "machines must contribute equal N");
    detail::require(draws.allFinite(), "machine draws must be finite");
  }
}

// Sum over machines of |r_i - mean r|^2, which equals m (mean|r|^2 - |mean r|^2).
double tuple_spread(const Eigen::MatrixXd& tuple, Eigen::VectorXd& centre) {
  centre = tuple.colwise().mean().transpose();
  return (tuple.rowwise() - centre.transpose()).squaredNorm();
}

Eigen::VectorXd standard_normal(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = z(rng);
  return v;
}

}  // namespace

std::string to_string(JitterKind k) {
  switch (k) {
    case JitterKind::kMultiplicative:
      return "multiplicative";
    case JitterKind::kAdditiveGaussian:
      return "additive-gaussian";
    case JitterKind::kNone:
      return "none";
  }
  return "none";
}

JitterKind jitter_kind_from_string(const std::string& s) {
  if (s == "multiplicative") return JitterKind::kMultiplicative;
  if (s == "additive-gaussian" || s == "additive") return JitterKind::kAdditiveGaussian;
  if (s == "none") return JitterKind::kNone;
  detail::fail_validation("jitter: unknown kind '" + s + "'");
}

void JitterConfig::validate() const {
  detail::require(copies_per_draw >= 0, "jitter copies_per_draw must be nonnegative");
  if (kind == JitterKind::kMultiplicative) {
    detail::require(low > 0.0 && low < high && std::isfinite(high), "jitter requires 0 < low < high");
  } else if (kind == JitterKind::kAdditiveGaussian) {
    detail::require(additive_scale > 0.0 && std::isfinite(additive_scale), "jitter additive_scale must be positive");
  }
}

nlohmann::json JitterConfig::to_json() const {
  return {{"kind", to_string(kind)},
          {"low", low},
          {"high", high},
          {"copies_per_draw", copies_per_draw},
          {"additive_scale", additive_scale}};
}

CandidatePool jitter_augment(const PooledDraws& pooled, const JitterConfig& jc, Rng& rng) {
  jc.validate();
  const auto n = static_cast<Eigen::Index>(pooled.size());
  const auto d = static_cast<Eigen::Index>(pooled.dim());
  const Eigen::Index copies = jc.kind == JitterKind::kNone ? 0 : jc.copies_per_draw;
  CandidatePool pool;
  pool.points.resize(n * (1 + copies), d);
  pool.source.resize(static_cast<std::size_t>(n * (1 + copies)));
  pool.points.topRows(n) = pooled.theta;
  std::iota(pool.source.begin(), pool.source.begin() + n, std::size_t{0});

  std::uniform_real_distribution<double> mult(jc.low, jc.high);
  std::normal_distribution<double> add(0.0, jc.additive_scale > 0.0 ? jc.additive_scale : 1.0);
  for (Eigen::Index c = 1; c <= copies; ++c) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index row = c * n + k;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double x = pooled.theta(k, j);
        pool.points(row, j) = jc.kind == JitterKind::kMultiplicative ? x * mult(rng) : x + add(rng);
      }
      pool.source[static_cast<std::size_t>(row)] = static_cast<std::size_t>(k);
    }
  }
  return pool;
}

std::string to_string(CombineMethod m) {
  switch (m) {
    case CombineMethod::kClassifier:
      return "classifier";
    case CombineMethod::kConsensus:
      return "consensus";
    case CombineMethod::kKdeProduct:
      return "kde-product";
    case CombineMethod::kWeierstrass:
      return "weierstrass";
  }
  return "classifier";
}

CombineMethod combine_method_from_string(const std::string& s) {
  if (s == "classifier") return CombineMethod::kClassifier;
  if (s == "consensus") return CombineMethod::kConsensus;
  if (s == "kde-product") return CombineMethod::kKdeProduct;
  if (s == "weierstrass") return CombineMethod::kWeierstrass;
  detail::fail_validation("method: unknown combiner '" + s + "'");
}

CombineResult combine_classifier(const PooledDraws& pooled, const Forest& forest, const JitterConfig& jc,
                                 std::size_t n_out, std::uint64_t seed) {
  const auto start = Clock::now();
  detail::require(n_out >= 1, "number of output draws must be positive");
  if (pooled.dim() != forest.num_features()) {
    detail::fail_validation("dimension mismatch: forest trained on d=" + std::to_string(forest.num_features()) +
                            ", pool has d=" + std::to_string(pooled.dim()));
  }
  Rng rng(seed);
  const CandidatePool pool = jitter_augment(pooled, jc, rng);
  const ClassProbabilityMatrix probs = predict_proba(forest, pool.points);
  SimplexWeights f = approx_posterior_weights(probs);
  const auto picks = resample_indices(f.values(), n_out, rng);

  CombineResult out;
  out.draws.resize(static_cast<Eigen::Index>(n_out), pool.points.cols());
  for (std::size_t r = 0; r < picks.size(); ++r) {
    out.draws.row(static_cast<Eigen::Index>(r)) = pool.points.row(static_cast<Eigen::Index>(picks[r]));
  }
  out.method = CombineMethod::kClassifier;
  out.weights_used = std::move(f);
  out.config_snapshot = {{"forest", to_json(forest.config())},
                         {"forest_train_seed", forest.train_seed()},
                         {"jitter", jc.to_json()},
                         {"n_out", n_out}};
  out.seed = seed;
  out.seconds = seconds_since(start);
  return out;
}

CombineResult combine_consensus(std::span<const Eigen::MatrixXd> per_machine) {
  const auto start = Clock::now();
  require_same_shape(per_machine, true);
  CombineResult out;
  out.method = CombineMethod::kConsensus;
  out.config_snapshot = {{"weights", "inverse sample covariance"}, {"machines", per_machine.size()}};
  if (per_machine.size() == 1) {
    out.draws = per_machine.front();
    out.seconds = seconds_since(start);
    return out;
  }
  const auto n = per_machine.front().rows();
  const auto d = per_machine.front().cols();
  detail::require(n >= 2, "consensus needs at least two draws per machine");

  std::vector<Eigen::MatrixXd> precision;
  Eigen::MatrixXd precision_sum = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < per_machine.size(); ++i) {
    const auto& draws = per_machine[i];
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Eigen::MatrixXd centred = draws.rowwise() - mean;
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)) {
      detail::fail_numerical("singular covariance on machine " + std::to_string(i + 1));
    }
    precision.push_back(llt.solve(Eigen::MatrixXd::Identity(d, d)));
    precision_sum += precision.back();
  }
  Eigen::LLT<Eigen::MatrixXd> total(precision_sum);
  if (total.info() != Eigen::Success) detail::fail_numerical("singular covariance: summed precision not SPD");

  Eigen::MatrixXd weighted = Eigen::MatrixXd::Zero(n, d);
  for (std::size_t i = 0; i < per_machine.size(); ++i) weighted += per_machine[i] * precision[i];
  // Rows: (sum W)^{-1} sum_i W_i theta_i^(t); W symmetric so row form is theta^T W.
  out.draws = total.solve(weighted.transpose()).transpose();
  out.seconds = seconds_since(start);
  return out;
}

CombineResult combine_weierstrass(std::span<const Eigen::MatrixXd> per_machine, double h, std::size_t n_out,
                                  std::uint64_t seed, const WeierstrassOptions& options) {
  const auto start = Clock::now();
  require_same_shape(per_machine, true);
  detail::require(h > 0.0 && std::isfinite(h), "bandwidth h must be positive");
  detail::require(n_out >= 1, "number of output draws must be positive");
  const auto m = static_cast<Eigen::Index>(per_machine.size());
  const auto n = static_cast<std::size_t>(per_machine.front().rows());
  const auto d = per_machine.front().cols();
  Rng rng(seed);

  // Round 0 pairs by iteration index; later rounds permute each machine.
  const std::size_t rounds = 1 + options.repairing_rounds;
  std::vector<std::vector<std::size_t>> index(static_cast<std::size_t>(m) * rounds, std::vector<std::size_t>(n));
  for (std::size_t r = 0; r < rounds; ++r) {
    for (Eigen::Index i = 0; i < m; ++i) {
      auto& perm = index[r * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)];
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      if (r > 0) std::shuffle(perm.begin(), perm.end(), rng);
    }
  }
  const std::size_t num_tuples = rounds * n;
  auto tuple_at = [&](std::size_t k, Eigen::MatrixXd& tuple) {
    const std::size_t r = k / n;
    const std::size_t t = k % n;
    for (Eigen::Index i = 0; i < m; ++i) {
      tuple.row(i) = per_machine[static_cast<std::size_t>(i)].row(
          static_cast<Eigen::Index>(index[r * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)][t]));
    }
  };

  std::vector<double> log_w(num_tuples);
  Eigen::MatrixXd tuple(m, d);
  Eigen::VectorXd centre(d);
  double max_log_w = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < num_tuples; ++k) {
    tuple_at(k, tuple);
    log_w[k] = -tuple_spread(tuple, centre) / (2.0 * h * h);
    max_log_w = std::max(max_log_w, log_w[k]);
  }
  // exp() of anything below this is zero or subnormal in double precision.
  if (!(max_log_w > std::log(std::numeric_limits<double>::min()))) {
    detail::fail_numerical("empty reconstructable area at this bandwidth");
  }
  SimplexWeights w = normalize_log_weights(log_w);
  const auto picks = resample_indices(w.values(), n_out, rng);

  CombineResult out;
  out.draws.resize(static_cast<Eigen::Index>(n_out), d);
  const double noise_sd = h / std::sqrt(static_cast<double>(m));
  for (std::size_t r = 0; r < picks.size(); ++r) {
    tuple_at(picks[r], tuple);
    tuple_spread(tuple, centre);
    out.draws.row(static_cast<Eigen::Index>(r)) = (centre + noise_sd * standard_normal(d, rng)).transpose();
  }
  out.method = CombineMethod::kWeierstrass;
  out.weights_used = std::move(w);
  out.config_snapshot = {{"h", h}, {"n_out", n_out}, {"repairing_rounds", options.repairing_rounds},
                         {"tuples", num_tuples}};
  out.seed = seed;
  out.seconds = seconds_since(start);
  return out;
}

CombineResult combine_kde_product(std::span<const Eigen::MatrixXd> per_machine, double h, std::size_t warmup,
                                  std::size_t n_out, std::uint64_t seed) {
  const auto start = Clock::now();
  require_same_shape(per_machine, false);
  detail::require(h > 0.0 && std::isfinite(h), "bandwidth h must be positive");
  detail::require(warmup >= 1, "Gibbs warm-up must be at least one sweep");
  detail::require(n_out >= 1, "number of output draws must be positive");
  const auto m = static_cast<Eigen::Index>(per_machine.size());
  const auto d = per_machine.front().cols();
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<std::size_t> t(static_cast<std::size_t>(m));
  Eigen::MatrixXd tuple(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& draws = per_machine[static_cast<std::size_t>(i)];
    std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(draws.rows()) - 1);
    t[static_cast<std::size_t>(i)] = pick(rng);
    tuple.row(i) = draws.row(static_cast<Eigen::Index>(t[static_cast<std::size_t>(i)]));
  }
  Eigen::VectorXd centre(d);
  const double scale = 1.0 / (2.0 * h * h);
  double current = -tuple_spread(tuple, centre) * scale;

  CombineResult out;
  out.draws.resize(static_cast<Eigen::Index>(n_out), d);
  const double noise_sd = h / std::sqrt(static_cast<double>(m));
  std::size_t warmup_accepts = 0;
  std::size_t accepts = 0;
  std::size_t proposals = 0;
  const std::size_t sweeps = warmup + n_out;
  Eigen::RowVectorXd saved(d);
  for (std::size_t s = 0; s < sweeps; ++s) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& draws = per_machine[static_cast<std::size_t>(i)];
      std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(draws.rows()) - 1);
      const std::size_t proposal = pick(rng);
      saved = tuple.row(i);
      tuple.row(i) = draws.row(static_cast<Eigen::Index>(proposal));
      const double candidate = -tuple_spread(tuple, centre) * scale;
      ++proposals;
      if (std::log(unif(rng)) < candidate - current) {
        // Re-proposing the current index is accepted but is not a move.
        if (proposal != t[static_cast<std::size_t>(i)]) {
          ++accepts;
          if (s < warmup) ++warmup_accepts;
        }
        t[static_cast<std::size_t>(i)] = proposal;
        current = candidate;
      } else {
        tuple.row(i) = saved;
      }
    }
    if (s + 1 == warmup && warmup_accepts == 0) detail::fail_numerical("bandwidth too small: no moves accepted");
    if (s >= warmup) {
      tuple_spread(tuple, centre);
      out.draws.row(static_cast<Eigen::Index>(s - warmup)) = (centre + noise_sd * standard_normal(d, rng)).transpose();
    }
  }
  out.method = CombineMethod::kKdeProduct;
  out.config_snapshot = {{"h", h},
                         {"warmup", warmup},
                         {"n_out", n_out},
                         {"acceptance_rate", static_cast<double>(accepts) / static_cast<double>(proposals)}};
  out.seed = seed;
  out.seconds = seconds_since(start);
  return out;
}

double default_bandwidth(std::span<const Eigen::MatrixXd> per_machine) {
  require_same_shape(per_machine, false);
  const auto d = per_machine.front().cols();
  double sd_sum = 0.0;
  std::size_t total = 0;
  for (const auto& draws : per_machine) {
    detail::require(draws.rows() >= 2, "bandwidth rule needs at least two draws per machine");
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Eigen::RowVectorXd var =
        (draws.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(draws.rows() - 1);
    sd_sum += var.array().sqrt().sum();
    total += static_cast<std::size_t>(draws.rows());
  }
  const double mean_sd = sd_sum / static_cast<double>(per_machine.size() * static_cast<std::size_t>(d));
  const double h = mean_sd * std::pow(static_cast<double>(total), -1.0 / (4.0 + static_cast<double>(d)));
  if (!(h > 0.0)) detail::fail_numerical("bandwidth rule produced h = 0 (constant draws)");
  return h;
}

}  // namespace pmcmc
