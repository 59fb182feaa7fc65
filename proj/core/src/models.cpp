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

#include "pmcmc/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "pmcmc/error.hpp"
#include "pmcmc/numerics.hpp"

namespace pmcmc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::VectorXd standard_normal_vector(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = z(rng);
  return v;
}

double normal_log_pdf(double x, double mean, double variance) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + r * r / variance);
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> index) const {
  Dataset out;
  out.rows.resize(static_cast<Eigen::Index>(index.size()), rows.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    detail::require(index[r] < size(), "row index out of range");
    out.rows.row(static_cast<Eigen::Index>(r)) = rows.row(static_cast<Eigen::Index>(index[r]));
  }
  if (has_labels()) {
    out.labels.reserve(index.size());
    for (std::size_t r : index) out.labels.push_back(labels[r]);
  }
  return out;
}

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> s;
  s.reserve(index_sets.size());
  for (const auto& set : index_sets) s.push_back(set.size());
  return s;
}

std::vector<int> Partition::assignment(std::size_t n) const {
  std::vector<int> out(n, -1);
  for (std::size_t i = 0; i < index_sets.size(); ++i) {
    for (std::size_t r : index_sets[i]) {
      detail::require(r < n, "partition row index out of range");
      detail::require(out[r] == -1, "partition index sets overlap");
      out[r] = static_cast<int>(i);
    }
  }
  for (int a : out) detail::require(a >= 0, "partition does not cover every row");
  return out;
}

Partition Partition::from_assignment(std::span<const int> machine_of_row, std::size_t m) {
  detail::require(m >= 1, "number of machines must be positive");
  Partition p;
  p.index_sets.resize(m);
  for (std::size_t r = 0; r < machine_of_row.size(); ++r) {
    const int i = machine_of_row[r];
    detail::require(i >= 0 && static_cast<std::size_t>(i) < m, "machine label out of range");
    p.index_sets[static_cast<std::size_t>(i)].push_back(r);
  }
  for (const auto& s : p.index_sets) detail::require(!s.empty(), "every machine needs at least one row");
  return p;
}

Eigen::MatrixXd PooledDraws::machine_draws(std::size_t i) const {
  detail::require(i < num_machines, "machine index out of range");
  const auto n = static_cast<Eigen::Index>(draws_per_machine);
  return theta.middleRows(static_cast<Eigen::Index>(i) * n, n);
}

std::vector<Eigen::MatrixXd> PooledDraws::split_by_machine() const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(num_machines);
  for (std::size_t i = 0; i < num_machines; ++i) out.push_back(machine_draws(i));
  return out;
}

Eigen::MatrixXd ar1_covariance(std::size_t d, double rho) {
  detail::require(d >= 1, "dimension must be positive");
  if (!(rho > 0.0 && rho < 1.0)) detail::fail_validation("covariance not SPD: rho must lie in (0, 1)");
  Eigen::MatrixXd s(d, d);
  for (std::size_t g = 0; g < d; ++g) {
    for (std::size_t l = 0; l < d; ++l) {
      const auto lag = static_cast<double>(g > l ? g - l : l - g);
      s(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(l)) = std::pow(rho, lag);
    }
  }
  return s;
}

Dataset generate_gaussian_data(std::size_t n, std::size_t d, const Eigen::VectorXd& mu, double rho,
                               Rng& rng) {
  detail::require(n >= 1, "n must be at least 1");
  detail::require(static_cast<std::size_t>(mu.size()) == d, "mean vector length must equal d");
  const Eigen::MatrixXd sigma = ar1_covariance(d, rho);
  const Eigen::MatrixXd l = cholesky_lower(sigma, "covariance not SPD");
  Dataset out;
  out.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    out.rows.row(static_cast<Eigen::Index>(r)) =
        (mu + l * standard_normal_vector(static_cast<Eigen::Index>(d), rng)).transpose();
  }
  return out;
}

Dataset generate_mixture_data(std::size_t n, Rng& rng) {
  detail::require(n >= 3, "mixture data needs n >= 3");
  std::discrete_distribution<int> pick(kMixtureWeights.begin(), kMixtureWeights.end());
  std::normal_distribution<double> z(0.0, 1.0);
  Dataset out;
  out.rows.resize(static_cast<Eigen::Index>(n), 1);
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const int c = pick(rng);
    out.labels[r] = c + 1;
    out.rows(static_cast<Eigen::Index>(r), 0) = kMixtureMeans[static_cast<std::size_t>(c)] + z(rng);
  }
  return out;
}

Partition partition_rows(std::size_t n, std::size_t m, Rng& rng) {
  detail::require(m >= 2, "partition needs m >= 2 machines");
  if (m > n) detail::fail_validation("more machines than rows (m > n)");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  Partition p;
  p.index_sets.resize(m);
  const std::size_t base = n / m;
  const std::size_t extra = n % m;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    p.index_sets[i].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                           perm.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(p.index_sets[i].begin(), p.index_sets[i].end());
    pos += len;
  }
  return p;
}

Partition partition_stratified(std::span<const int> labels, std::size_t m, Rng& rng) {
  detail::require(m >= 2, "partition needs m >= 2 machines");
  const std::size_t n = labels.size();
  if (m > n) detail::fail_validation("more machines than rows (m > n)");
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  // Shuffle within each label, concatenate label blocks, deal round-robin.
  std::vector<std::size_t> order;
  order.reserve(n);
  for (int lab : distinct) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < n; ++r) {
      if (labels[r] == lab) rows.push_back(r);
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    order.insert(order.end(), rows.begin(), rows.end());
  }
  Partition p;
  p.index_sets.resize(m);
  for (std::size_t j = 0; j < order.size(); ++j) p.index_sets[j % m].push_back(order[j]);
  for (auto& s : p.index_sets) std::sort(s.begin(), s.end());
  return p;
}

double fractionate_prior_power(std::size_t m) {
  detail::require(m >= 1, "number of machines must be at least 1");
  return 1.0 / static_cast<double>(m);
}

MultivariateNormal::MultivariateNormal(const GaussianPosterior& p) : mean_(p.mean), cov_(p.covariance) {
  detail::require(cov_.rows() == mean_.size() && cov_.cols() == mean_.size(),
                  "covariance shape does not match mean");
  chol_ = cholesky_lower(cov_, "posterior covariance not SPD");
  log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + log_det_from_cholesky(chol_));
}

double MultivariateNormal::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

Eigen::VectorXd MultivariateNormal::sample(Rng& rng) const {
  return mean_ + chol_ * standard_normal_vector(mean_.size(), rng);
}

GaussianPosterior gaussian_subposterior(const Eigen::MatrixXd& data_part, const Eigen::MatrixXd& sigma) {
  if (data_part.rows() == 0) detail::fail_validation("empty partition: N_i = 0");
  detail::require(sigma.rows() == data_part.cols() && sigma.cols() == data_part.cols(),
                  "Sigma shape does not match data dimension");
  const double n = static_cast<double>(data_part.rows());
  return GaussianPosterior{data_part.colwise().mean().transpose(), sigma / n};
}

SampleSet sample_gaussian(const GaussianPosterior& p, std::size_t n_draws, Rng& rng) {
  detail::require(n_draws >= 1, "number of draws must be positive");
  const MultivariateNormal mvn(p);
  SampleSet out;
  out.draws.resize(static_cast<Eigen::Index>(n_draws), p.mean.size());
  out.log_density.resize(n_draws);
  for (std::size_t t = 0; t < n_draws; ++t) {
    const Eigen::VectorXd x = mvn.sample(rng);
    out.draws.row(static_cast<Eigen::Index>(t)) = x.transpose();
    out.log_density[t] = mvn.log_pdf(x);
  }
  return out;
}

double MixturePosterior::log_pdf(double theta) const {
  std::array<double, 3> terms{};
  for (std::size_t c = 0; c < 3; ++c) {
    terms[c] = std::log(component_weights[c]) + normal_log_pdf(theta, component_means[c], component_variances[c]);
  }
  return log_sum_exp(terms);
}

MixturePosterior mixture_subposterior(const Dataset& labeled_part) {
  detail::require(labeled_part.has_labels(), "mixture sub-posterior needs labelled rows");
  detail::require(labeled_part.rows.cols() == 1, "mixture data must be one-dimensional");
  std::array<double, 3> sum{};
  std::array<std::size_t, 3> count{};
  for (std::size_t r = 0; r < labeled_part.size(); ++r) {
    const int lab = labeled_part.labels[r];
    detail::require(lab >= 1 && lab <= 3, "mixture label outside {1,2,3}");
    sum[static_cast<std::size_t>(lab - 1)] += labeled_part.rows(static_cast<Eigen::Index>(r), 0);
    ++count[static_cast<std::size_t>(lab - 1)];
  }
  MixturePosterior p;
  for (std::size_t c = 0; c < 3; ++c) {
    if (count[c] == 0) detail::fail_validation("empty mixture component");
    p.component_means[c] = sum[c] / static_cast<double>(count[c]);
    p.component_variances[c] = 1.0 / static_cast<double>(count[c]);
  }
  return p;
}

SampleSet sample_mixture(const MixturePosterior& p, std::size_t n_draws, Rng& rng, std::vector<int>* components) {
  detail::require(n_draws >= 1, "number of draws must be positive");
  for (double v : p.component_variances) {
    if (!(v > 0.0)) detail::fail_validation("mixture component variance must be positive");
  }
  std::discrete_distribution<int> pick(p.component_weights.begin(), p.component_weights.end());
  std::normal_distribution<double> z(0.0, 1.0);
  SampleSet out;
  out.draws.resize(static_cast<Eigen::Index>(n_draws), 1);
  out.log_density.resize(n_draws);
  if (components != nullptr) components->resize(n_draws);
  for (std::size_t t = 0; t < n_draws; ++t) {
    const auto c = static_cast<std::size_t>(pick(rng));
    const double x = p.component_means[c] + std::sqrt(p.component_variances[c]) * z(rng);
    out.draws(static_cast<Eigen::Index>(t), 0) = x;
    out.log_density[t] = p.log_pdf(x);
    if (components != nullptr) (*components)[t] = static_cast<int>(c);
  }
  return out;
}

double mixture_full_log_density(std::span<const MixturePosterior> subposteriors, double theta) {
  double s = 0.0;
  for (const auto& p : subposteriors) s += p.log_pdf(theta);
  return s;
}

MetropolisResult random_walk_metropolis(const LogDensityFn& log_target, const Eigen::VectorXd& init,
                                        std::size_t n_draws, double step_scale, Rng& rng,
                                        std::optional<std::size_t> burn_in) {
  detail::require(n_draws >= 1, "number of draws must be positive");
  detail::require(step_scale > 0.0 && std::isfinite(step_scale), "step_scale must be positive");
  detail::require(init.size() >= 1, "initial state must be nonempty");
  double current_lp = log_target(init);
  if (std::isnan(current_lp)) detail::fail_validation("log target is NaN at the initial state");
  if (!std::isfinite(current_lp)) detail::fail_validation("log target is not finite at the initial state");

  const std::size_t warmup = burn_in.value_or(n_draws / 10);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd current = init;

  MetropolisResult out;
  out.samples.draws.resize(static_cast<Eigen::Index>(n_draws), init.size());
  out.samples.log_density.resize(n_draws);
  std::size_t accepted = 0;
  const std::size_t total = warmup + n_draws;
  for (std::size_t it = 0; it < total; ++it) {
    Eigen::VectorXd proposal = current;
    for (Eigen::Index j = 0; j < proposal.size(); ++j) proposal(j) += step_scale * z(rng);
    const double lp = log_target(proposal);
    const double log_u = std::log(unif(rng));
    if (std::isfinite(lp) && log_u < lp - current_lp) {
      current = std::move(proposal);
      current_lp = lp;
      if (it >= warmup) ++accepted;
    }
    if (it >= warmup) {
      const auto t = static_cast<Eigen::Index>(it - warmup);
      out.samples.draws.row(t) = current.transpose();
      out.samples.log_density[static_cast<std::size_t>(t)] = current_lp;
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(n_draws);
  return out;
}

PooledDraws pool_draws(std::span<const SampleSet> per_machine) {
  detail::require(!per_machine.empty(), "no machines to pool");
  const auto n = per_machine.front().draws.rows();
  const auto d = per_machine.front().draws.cols();
  detail::require(n >= 1 && d >= 1, "machine 1 contributed no draws");
  for (std::size_t i = 0; i < per_machine.size(); ++i) {
    const auto& s = per_machine[i];
    if (s.draws.rows() != n || s.draws.cols() != d ||
        s.log_density.size() != static_cast<std::size_t>(s.draws.rows())) {
      detail::fail_validation("ragged inputs: machine " + std::to_string(i + 1) +
                              " disagrees on draw count or dimension");
    }
  }
  PooledDraws out;
  out.num_machines = per_machine.size();
  out.draws_per_machine = static_cast<std::size_t>(n);
  out.theta.resize(n * static_cast<Eigen::Index>(per_machine.size()), d);
  out.machine.reserve(out.size());
  out.log_density.reserve(out.size());
  for (std::size_t i = 0; i < per_machine.size(); ++i) {
    out.theta.middleRows(static_cast<Eigen::Index>(i) * n, n) = per_machine[i].draws;
    for (Eigen::Index t = 0; t < n; ++t) out.machine.push_back(static_cast<int>(i));
    for (double ld : per_machine[i].log_density) {
      if (!std::isfinite(ld)) detail::fail_validation("log_density must be finite");
      out.log_density.push_back(ld);
    }
  }
  return out;
}

OneShotGather::OneShotGather(std::size_t num_machines) : inbox_(num_machines), counts_(num_machines, 0) {
  detail::require(num_machines >= 1, "gather needs at least one machine");
}

void OneShotGather::submit(std::size_t machine, SampleSet payload) {
  std::lock_guard lock(mu_);
  detail::require(machine < inbox_.size(), "machine index out of range");
  ++counts_[machine];
  if (counts_[machine] > 1) {
    throw ContractViolation("one-shot contract violated: second message from machine " +
                            std::to_string(machine + 1));
  }
  inbox_[machine] = std::move(payload);
}

PooledDraws OneShotGather::collect() const {
  std::lock_guard lock(mu_);
  std::vector<SampleSet> parts;
  parts.reserve(inbox_.size());
  for (std::size_t i = 0; i < inbox_.size(); ++i) {
    if (!inbox_[i]) throw ContractViolation("machine " + std::to_string(i + 1) + " never reported");
    parts.push_back(*inbox_[i]);
  }
  return pool_draws(parts);
}

std::size_t OneShotGather::messages_from(std::size_t machine) const {
  std::lock_guard lock(mu_);
  detail::require(machine < counts_.size(), "machine index out of range");
  return counts_[machine];
}

std::size_t OneShotGather::total_messages() const {
  std::lock_guard lock(mu_);
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

}  // namespace pmcmc
