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

// End-to-end experiment: simulate data, partition it, sample every machine
// independently, gather once, tune the forest, combine and evaluate. The
// stage helpers are public so the command-line tool can run stages one at a
// time and still reproduce the pipeline's numbers.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmcmc/combine.hpp"
#include "pmcmc/criterion.hpp"
#include "pmcmc/eval.hpp"
#include "pmcmc/models.hpp"

namespace pmcmc {

enum class Scenario { kGaussian, kMixture };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

struct ExperimentConfig {
  Scenario scenario = Scenario::kGaussian;
  std::size_t n = 10000;
  std::size_t m = 5;
  std::size_t d = 10;
  std::size_t N = 2000;  // draws per machine
  double rho = 0.8;
  std::size_t tuning_budget = 50;
  JitterConfig jitter;
  std::uint64_t master_seed = 1;
  std::filesystem::path output_dir;  // empty: no artifacts written
  std::vector<CombineMethod> methods{CombineMethod::kClassifier, CombineMethod::kConsensus,
                                     CombineMethod::kKdeProduct, CombineMethod::kWeierstrass};
  std::size_t M = 0;  // output draws per method, 0 means N
  std::optional<double> weierstrass_h;
  std::size_t weierstrass_rounds = 19;
  std::optional<double> kde_h;
  std::size_t kde_warmup = 1000;
  double trace_bandwidth = 0.5;
  double mode_prominence = 0.1;
  double mode_tolerance = 0.5;
  std::size_t reference_draws = 10000;
  std::size_t workers = 0;

  std::size_t output_draws() const noexcept { return M == 0 ? N : M; }
  void validate() const;
  nlohmann::json to_json() const;
};

/// Scenario defaults: the Gaussian testbed uses d = 10; the mixture testbed
/// is one-dimensional.
ExperimentConfig default_config(Scenario s);

/// Flat "key = value" text with '#' comments. Must declare
/// schema_version = 1. Keys not present keep the values of `base`.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base);
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base);

// ---- stages ----------------------------------------------------------------

Dataset simulate_data(const ExperimentConfig& cfg);
Partition make_partition(const ExperimentConfig& cfg, const Dataset& data);

/// Draws machine i's sub-posterior sample from its own data block.
SampleSet sample_machine(const ExperimentConfig& cfg, const Dataset& data, const Partition& partition,
                         std::size_t machine);

/// Runs every machine concurrently; each submits exactly once to `gather`.
PooledDraws sample_all(const ExperimentConfig& cfg, const Dataset& data, const Partition& partition,
                       OneShotGather& gather);

/// Seed of a combine run, shared by the pipeline and the CLI.
std::uint64_t combine_seed(std::uint64_t master_seed, CombineMethod method);

/// Runs one combiner. `forest` is required for the classifier method.
CombineResult run_combiner(CombineMethod method, const ExperimentConfig& cfg, const PooledDraws& pooled,
                           const Forest* forest);

/// Exact full posterior of the Gaussian testbed.
GaussianPosterior gaussian_full_posterior(const ExperimentConfig& cfg, const Dataset& data);

/// Sample-moment KL (full || approx) against reference draws of the exact
/// full posterior.
double gaussian_true_kl(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& approx);

/// Exact reference sample of the Gaussian full posterior.
Eigen::MatrixXd gaussian_reference_draws(const ExperimentConfig& cfg, const Dataset& data);

/// Local maxima of the exact mixture full posterior within 50 nats of its peak.
std::vector<double> mixture_full_modes(const ExperimentConfig& cfg, const Dataset& data,
                                       const Partition& partition);

struct ModeCheck {
  std::size_t count = 0;
  std::vector<double> locations;
  bool matches_full = false;  // same count, each within tolerance after sorting
  DensityTrace trace;
};

ModeCheck check_modes(const Eigen::MatrixXd& draws, const std::vector<double>& full_modes, double bandwidth,
                      double prominence, double tolerance);

// ---- pipeline --------------------------------------------------------------

struct MethodOutcome {
  CombineMethod method = CombineMethod::kClassifier;
  bool ok = false;
  std::string error;
  std::optional<double> true_kl;
  std::optional<ModeCheck> modes;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd draws;
};

struct ExperimentReport {
  ExperimentConfig config;
  SearchTrace trace;
  std::vector<double> trial_true_kl;  // NaN where a trial failed or the scenario has no KL
  std::optional<double> correlation;
  std::vector<MethodOutcome> methods;
  std::vector<double> full_modes;
  std::vector<std::size_t> gather_messages;
  std::size_t total_messages = 0;
  Forest best_forest;
  nlohmann::json report;  // deterministic content of report.json
  nlohmann::json timing;  // wall-clock seconds, written to timing.json

  const MethodOutcome* outcome(CombineMethod m) const;
};

/// Runs the whole pipeline; per-method failures are recorded, not thrown.
/// Writes artifacts when cfg.output_dir is set.
ExperimentReport run_pipeline(const ExperimentConfig& cfg);

}  // namespace pmcmc
