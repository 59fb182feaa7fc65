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

#include "pmcmc/criterion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>

#include "pmcmc/error.hpp"
#include "pmcmc/parallel.hpp"

namespace pmcmc {

SimplexWeights subposterior_weights(const PooledDraws& pooled) { return normalize_log_weights(pooled.log_density); }

double log_reconstructable_probability(std::span<const double> p) {
  detail::require(!p.empty(), "empty probability vector");
  double mean_log = 0.0;
  for (double pj : p) {
    if (!(pj > 0.0) || !std::isfinite(pj)) detail::fail_validation("class probability must be positive");
    mean_log += std::log(pj);
  }
  const auto m = static_cast<double>(p.size());
  return std::log(m) + mean_log / m;
}

double reconstructable_probability(std::span<const double> p) { return std::exp(log_reconstructable_probability(p)); }

std::vector<double> log_reconstructable_probabilities(const ClassProbabilityMatrix& probs) {
  detail::require(probs.rows() >= 1 && probs.cols() >= 1, "empty probability matrix");
  std::vector<double> out(static_cast<std::size_t>(probs.rows()));
  std::vector<double> row(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index k = 0; k < probs.rows(); ++k) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) row[static_cast<std::size_t>(j)] = probs(k, j);
    out[static_cast<std::size_t>(k)] = log_reconstructable_probability(row);
  }
  return out;
}

SimplexWeights approx_posterior_weights(const ClassProbabilityMatrix& probs) {
  return normalize_log_weights(log_reconstructable_probabilities(probs));
}

namespace {

double criterion_value(std::span<const double> log_recon, const SimplexWeights& w_sub, double m) {
  // U = log C_f - log m - (1/m) sum_k w_k sum_j log p_kj, and
  // (1/m) sum_j log p_kj = log_recon_k - log m.
  const double log_cf = log_sum_exp(log_recon);
  double weighted = 0.0;
  for (std::size_t k = 0; k < log_recon.size(); ++k) weighted += w_sub[k] * (log_recon[k] - std::log(m));
  return log_cf - std::log(m) - weighted;
}

}  // namespace

double upper_bound_kl(const ClassProbabilityMatrix& probs, const PooledDraws& pooled) {
  if (static_cast<std::size_t>(probs.rows()) != pooled.size()) {
    detail::fail_validation("probability rows must match pooled draws");
  }
  const std::vector<double> log_recon = log_reconstructable_probabilities(probs);
  return criterion_value(log_recon, subposterior_weights(pooled), static_cast<double>(probs.cols()));
}

CriterionReport evaluate_criterion(const Forest& forest, const PooledDraws& pooled) {
  const ClassProbabilityMatrix probs = predict_proba(forest, pooled.theta);
  const std::vector<double> log_recon = log_reconstructable_probabilities(probs);
  CriterionReport report;
  report.w_sub = subposterior_weights(pooled);
  report.f_weights = normalize_log_weights(log_recon);
  report.log_cf = log_sum_exp(log_recon);
  report.ub_kl = criterion_value(log_recon, report.w_sub, static_cast<double>(probs.cols()));
  report.recon_prob.resize(log_recon.size());
  std::transform(log_recon.begin(), log_recon.end(), report.recon_prob.begin(), [](double x) { return std::exp(x); });
  report.config = forest.config();
  if (!std::isfinite(report.ub_kl)) detail::fail_numerical("criterion is not finite");
  return report;
}

TheoremCheck verify_theorem_bound(const PooledDraws& pooled, const ClassProbabilityMatrix& probs,
                                  std::span<const double> full_log_density) {
  detail::require(pooled.size() <= 1000, "brute-force bound check is limited to 1000 pooled draws");
  detail::require(full_log_density.size() == pooled.size(), "full log density length must match pool");
  detail::require(static_cast<std::size_t>(probs.rows()) == pooled.size(), "probability rows must match pool");

  const std::vector<double> log_recon = log_reconstructable_probabilities(probs);
  const double log_cf = log_sum_exp(log_recon);
  const double log_c_full = log_sum_exp(full_log_density);
  const double log_c_sub = log_sum_exp(pooled.log_density);

  TheoremCheck out;
  double kl = 0.0;
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    const double log_fpi = full_log_density[k] - log_c_full;
    const double log_f = log_recon[k] - log_cf;
    const double fpi = std::exp(log_fpi);
    if (fpi > 0.0) kl += fpi * (log_fpi - log_f);
  }
  if (!std::isfinite(kl)) detail::fail_numerical("KL(f_pi || f) is not finite");
  out.kl = std::max(kl, 0.0);

  double max_log_fpi = -std::numeric_limits<double>::infinity();
  double min_log_w = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    max_log_fpi = std::max(max_log_fpi, full_log_density[k] - log_c_full);
    min_log_w = std::min(min_log_w, pooled.log_density[k] - log_c_sub);
  }
  out.H = std::exp(max_log_fpi - min_log_w);
  out.bound = criterion_value(log_recon, normalize_log_weights(pooled.log_density), static_cast<double>(probs.cols()));
  // Both sides are sums of nonnegative terms; allow only rounding slack.
  const double rhs = out.H * out.bound;
  out.holds = out.kl <= rhs + 1e-12 * std::max(1.0, std::abs(rhs));
  return out;
}

// ---- hyperparameter search -------------------------------------------------

void HyperparameterSpace::validate(std::size_t d) const {
  using detail::require;
  require(fraction_step > 0.0 && fraction_min <= fraction_max, "fraction grid is empty");
  require(fraction_min > 0.0 && fraction_max <= 1.0, "fraction grid must lie in (0, 1]");
  require(trees_min >= 1 && trees_min <= trees_max, "num_trees grid is empty");
  require(node_size_min >= 1 && node_size_min <= node_size_max, "min_node_size grid is empty");
  const int hi = mtry_max == 0 ? static_cast<int>(d) : mtry_max;
  require(mtry_min >= 1 && mtry_min <= hi && static_cast<std::size_t>(hi) <= d, "mtry grid must lie in [1, d]");
  require(!replacement.empty() && !weight_adjustment.empty(), "boolean grids must be nonempty");
}

ForestConfig HyperparameterSpace::sample(std::size_t d, Rng& rng) const {
  const auto steps = static_cast<long>(std::llround((fraction_max - fraction_min) / fraction_step));
  std::uniform_int_distribution<long> frac(0, steps);
  std::uniform_int_distribution<int> trees(trees_min, trees_max);
  std::uniform_int_distribution<int> node(node_size_min, node_size_max);
  std::uniform_int_distribution<int> mtry(mtry_min, mtry_max == 0 ? static_cast<int>(d) : mtry_max);
  std::uniform_int_distribution<std::size_t> rep(0, replacement.size() - 1);
  std::uniform_int_distribution<std::size_t> wadj(0, weight_adjustment.size() - 1);

  ForestConfig c;
  // Round to the grid so the config prints exactly as a grid value.
  c.fraction = std::round((fraction_min + static_cast<double>(frac(rng)) * fraction_step) * 1e9) / 1e9;
  c.num_trees = trees(rng);
  c.min_node_size = node(rng);
  c.mtry = mtry(rng);
  c.replacement = replacement[rep(rng)];
  c.weight_adjustment = weight_adjustment[wadj(rng)];
  const bool in_grid = c.fraction >= 0.8 && c.fraction <= 0.999 && c.num_trees >= 10 && c.num_trees <= 100 &&
                       c.min_node_size >= 5 && c.min_node_size <= 50;
  c.allow_out_of_range = !in_grid;
  return c;
}

SearchResult random_search(const PooledDraws& pooled, const HyperparameterSpace& space, std::size_t budget,
                           std::uint64_t master_seed, const SearchOptions& options) {
  detail::require(budget >= 1, "tuning budget must be at least 1");
  detail::require(pooled.num_machines >= 2, "random search needs at least two machines");
  space.validate(pooled.dim());

  SearchResult result;
  result.trace.trials.resize(budget);
  std::mutex best_mu;
  std::optional<std::size_t> best;

  const std::size_t trial_workers = options.workers == 0 ? default_workers() : options.workers;
  const std::size_t tree_workers = trial_workers > 1 ? 1 : 0;

  parallel_for(budget, trial_workers, [&](std::size_t i) {
    Rng rng = make_rng(master_seed, streams::kTuning, i);
    SearchTrial& trial = result.trace.trials[i];
    trial.config = space.sample(pooled.dim(), rng);
    trial.seed = rng();
    try {
      TrainOptions train_options;
      train_options.workers = tree_workers;
      Forest forest = train_forest(pooled, trial.config, trial.seed, train_options);
      CriterionReport report = evaluate_criterion(forest, pooled);
      trial.ub_kl = report.ub_kl;
      if (options.observer) options.observer(i, forest, report);
      std::lock_guard lock(best_mu);
      const bool better = !best || report.ub_kl < result.trace.trials[*best].ub_kl ||
                          (report.ub_kl == result.trace.trials[*best].ub_kl && i < *best);
      if (better) {
        best = i;
        result.best_forest = std::move(forest);
        result.best_report = std::move(report);
      }
    } catch (const NumericalError&) {
      trial.failed = true;
      trial.ub_kl = std::numeric_limits<double>::quiet_NaN();
    }
  });
  if (!best) detail::fail_numerical("every tuning trial failed to train");
  result.trace.best_index = *best;
  return result;
}

}  // namespace pmcmc
