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

#include "pmcmc/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

#include "pmcmc/error.hpp"
#include "pmcmc/io.hpp"
#include "pmcmc/parallel.hpp"

namespace pmcmc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::size_t parse_count(const std::string& v, const std::string& key) {
  const long long x = io::parse_integer(v, key);
  if (x < 0) detail::fail_validation(key + ": must be nonnegative");
  return static_cast<std::size_t>(x);
}

std::vector<CombineMethod> parse_methods(const std::string& v) {
  std::vector<CombineMethod> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const CombineMethod m = combine_method_from_string(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) detail::fail_validation("methods: list is empty");
  return out;
}

std::vector<double> column(const Eigen::MatrixXd& draws, Eigen::Index j) {
  std::vector<double> v(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index r = 0; r < draws.rows(); ++r) v[static_cast<std::size_t>(r)] = draws(r, j);
  return v;
}

}  // namespace

std::string to_string(Scenario s) { return s == Scenario::kGaussian ? "gaussian" : "mixture"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "gaussian") return Scenario::kGaussian;
  if (s == "mixture") return Scenario::kMixture;
  detail::fail_validation("scenario: expected gaussian or mixture, got '" + s + "'");
}

void ExperimentConfig::validate() const {
  using detail::require;
  require(m >= 2, "m: at least 2 machines are required (m >= 2)");
  require(N >= 10, "N: at least 10 draws per machine are required");
  require(tuning_budget >= 1, "tuning_budget: must be at least 1");
  require(n >= m, "n: need at least one data row per machine");
  require(d >= 1, "d: dimension must be positive");
  require(rho > 0.0 && rho < 1.0, "rho: must lie in (0, 1)");
  if (scenario == Scenario::kMixture) {
    require(d == 1, "d: the mixture scenario is one-dimensional");
    require(n >= 3 * m, "n: the mixture scenario needs every component on every machine");
  }
  require(!methods.empty(), "methods: list is empty");
  jitter.validate();
  require(!weierstrass_h || *weierstrass_h > 0.0, "weierstrass.h: must be positive");
  require(!kde_h || *kde_h > 0.0, "kde.h: must be positive");
  require(kde_warmup >= 1, "kde.warmup: must be at least 1");
  require(trace_bandwidth > 0.0, "trace_bandwidth: must be positive");
  require(mode_prominence > 0.0, "mode_prominence: must be positive");
  require(mode_tolerance > 0.0, "mode_tolerance: must be positive");
  require(reference_draws >= 2 * d + 2, "reference_draws: too few for a covariance estimate");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json methods_json = nlohmann::json::array();
  for (auto m_ : methods) methods_json.push_back(to_string(m_));
  nlohmann::json j = {{"schema_version", kConfigSchemaVersion},
                      {"scenario", to_string(scenario)},
                      {"n", n},
                      {"m", m},
                      {"d", d},
                      {"N", N},
                      {"rho", rho},
                      {"tuning_budget", tuning_budget},
                      {"jitter", jitter.to_json()},
                      {"seed", master_seed},
                      {"methods", methods_json},
                      {"M", output_draws()},
                      {"weierstrass_rounds", weierstrass_rounds},
                      {"kde_warmup", kde_warmup},
                      {"trace_bandwidth", trace_bandwidth},
                      {"mode_prominence", mode_prominence},
                      {"mode_tolerance", mode_tolerance},
                      {"reference_draws", reference_draws}};
  j["weierstrass_h"] = weierstrass_h ? nlohmann::json(*weierstrass_h) : nlohmann::json("default");
  j["kde_h"] = kde_h ? nlohmann::json(*kde_h) : nlohmann::json("default");
  return j;
}

ExperimentConfig default_config(Scenario s) {
  ExperimentConfig c;
  c.scenario = s;
  if (s == Scenario::kMixture) c.d = 1;
  return c;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig c) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_version = false;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      detail::fail_validation("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (seen.count(key)) detail::fail_validation("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen[key] = lineno;
    const std::string field = "config key '" + key + "'";
    if (key == "schema_version") {
      if (io::parse_integer(v, field) != kConfigSchemaVersion) {
        detail::fail_validation(field + ": unsupported schema version " + v);
      }
      have_version = true;
    } else if (key == "scenario") {
      const Scenario s = scenario_from_string(v);
      if (s != c.scenario) {
        const auto keep_seed = c.master_seed;
        const auto keep_out = c.output_dir;
        c = default_config(s);
        c.master_seed = keep_seed;
        c.output_dir = keep_out;
      }
    } else if (key == "n") {
      c.n = parse_count(v, field);
    } else if (key == "m") {
      c.m = parse_count(v, field);
    } else if (key == "d") {
      c.d = parse_count(v, field);
    } else if (key == "N") {
      c.N = parse_count(v, field);
    } else if (key == "rho") {
      c.rho = io::parse_double(v, field);
    } else if (key == "tuning_budget") {
      c.tuning_budget = parse_count(v, field);
    } else if (key == "seed") {
      c.master_seed = static_cast<std::uint64_t>(parse_count(v, field));
    } else if (key == "methods") {
      c.methods = parse_methods(v);
    } else if (key == "M") {
      c.M = parse_count(v, field);
    } else if (key == "jitter.kind") {
      c.jitter.kind = jitter_kind_from_string(v);
    } else if (key == "jitter.low") {
      c.jitter.low = io::parse_double(v, field);
    } else if (key == "jitter.high") {
      c.jitter.high = io::parse_double(v, field);
    } else if (key == "jitter.copies_per_draw") {
      c.jitter.copies_per_draw = static_cast<int>(parse_count(v, field));
    } else if (key == "jitter.additive_scale") {
      c.jitter.additive_scale = io::parse_double(v, field);
    } else if (key == "weierstrass.h") {
      c.weierstrass_h = io::parse_double(v, field);
    } else if (key == "weierstrass.repairing_rounds") {
      c.weierstrass_rounds = parse_count(v, field);
    } else if (key == "kde.h") {
      c.kde_h = io::parse_double(v, field);
    } else if (key == "kde.warmup") {
      c.kde_warmup = parse_count(v, field);
    } else if (key == "trace_bandwidth") {
      c.trace_bandwidth = io::parse_double(v, field);
    } else if (key == "mode_prominence") {
      c.mode_prominence = io::parse_double(v, field);
    } else if (key == "mode_tolerance") {
      c.mode_tolerance = io::parse_double(v, field);
    } else if (key == "reference_draws") {
      c.reference_draws = parse_count(v, field);
    } else if (key == "workers") {
      c.workers = parse_count(v, field);
    } else {
      detail::fail_validation("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (!have_version) detail::fail_validation("config: missing required key 'schema_version'");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail_validation("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

// ---- stages ----------------------------------------------------------------

Dataset simulate_data(const ExperimentConfig& cfg) {
  Rng rng = make_rng(cfg.master_seed, streams::kData);
  if (cfg.scenario == Scenario::kMixture) return generate_mixture_data(cfg.n, rng);
  return generate_gaussian_data(cfg.n, cfg.d, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.d)), cfg.rho, rng);
}

Partition make_partition(const ExperimentConfig& cfg, const Dataset& data) {
  Rng rng = make_rng(cfg.master_seed, streams::kPartition);
  if (cfg.scenario == Scenario::kMixture) return partition_stratified(data.labels, cfg.m, rng);
  return partition_rows(data.size(), cfg.m, rng);
}

SampleSet sample_machine(const ExperimentConfig& cfg, const Dataset& data, const Partition& partition,
                         std::size_t machine) {
  detail::require(machine < partition.num_machines(), "machine index out of range");
  const Dataset part = data.subset(partition.index_sets[machine]);
  Rng rng = make_rng(cfg.master_seed, streams::kMachine, machine);
  if (cfg.scenario == Scenario::kMixture) return sample_mixture(mixture_subposterior(part), cfg.N, rng);
  const Eigen::MatrixXd sigma = ar1_covariance(static_cast<std::size_t>(data.rows.cols()), cfg.rho);
  return sample_gaussian(gaussian_subposterior(part.rows, sigma), cfg.N, rng);
}

PooledDraws sample_all(const ExperimentConfig& cfg, const Dataset& data, const Partition& partition,
                       OneShotGather& gather) {
  parallel_for(partition.num_machines(), cfg.workers, [&](std::size_t i) {
    gather.submit(i, sample_machine(cfg, data, partition, i));
  });
  return gather.collect();
}

std::uint64_t combine_seed(std::uint64_t master_seed, CombineMethod method) {
  return derive_seed(master_seed, streams::kCombine, static_cast<std::uint64_t>(method));
}

CombineResult run_combiner(CombineMethod method, const ExperimentConfig& cfg, const PooledDraws& pooled,
                           const Forest* forest) {
  const std::size_t n_out = cfg.output_draws();
  const std::uint64_t seed = combine_seed(cfg.master_seed, method);
  if (method == CombineMethod::kClassifier) {
    detail::require(forest != nullptr, "classifier combine needs a trained forest");
    return combine_classifier(pooled, *forest, cfg.jitter, n_out, seed);
  }
  detail::require(pooled.num_machines >= 2, "combine needs draws from m >= 2 machines");
  const std::vector<Eigen::MatrixXd> per_machine = pooled.split_by_machine();
  switch (method) {
    case CombineMethod::kConsensus:
      return combine_consensus(per_machine);
    case CombineMethod::kWeierstrass: {
      WeierstrassOptions opt;
      opt.repairing_rounds = cfg.weierstrass_rounds;
      const double h = cfg.weierstrass_h ? *cfg.weierstrass_h : default_bandwidth(per_machine);
      return combine_weierstrass(per_machine, h, n_out, seed, opt);
    }
    case CombineMethod::kKdeProduct: {
      const double h = cfg.kde_h ? *cfg.kde_h : default_bandwidth(per_machine);
      return combine_kde_product(per_machine, h, cfg.kde_warmup, n_out, seed);
    }
    case CombineMethod::kClassifier:
      break;
  }
  detail::fail_validation("unsupported combine method");
}

GaussianPosterior gaussian_full_posterior(const ExperimentConfig& cfg, const Dataset& data) {
  return gaussian_subposterior(data.rows, ar1_covariance(static_cast<std::size_t>(data.rows.cols()), cfg.rho));
}

Eigen::MatrixXd gaussian_reference_draws(const ExperimentConfig& cfg, const Dataset& data) {
  Rng rng = make_rng(cfg.master_seed, streams::kReference);
  return sample_gaussian(gaussian_full_posterior(cfg, data), cfg.reference_draws, rng).draws;
}

double gaussian_true_kl(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& approx) {
  detail::require(reference.cols() == approx.cols(), "reference and approximate draws differ in dimension");
  return gaussian_kl(sample_moments(reference), sample_moments(approx));
}

std::vector<double> mixture_full_modes(const ExperimentConfig& cfg, const Dataset& data, const Partition& partition) {
  (void)cfg;
  std::vector<MixturePosterior> subs;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& rows : partition.index_sets) {
    subs.push_back(mixture_subposterior(data.subset(rows)));
    for (double mu : subs.back().component_means) {
      lo = std::min(lo, mu);
      hi = std::max(hi, mu);
    }
  }
  lo -= 1.0;
  hi += 1.0;
  const double step = 5e-4;
  const auto points = static_cast<std::size_t>(std::ceil((hi - lo) / step)) + 1;
  std::vector<double> grid(points);
  std::vector<double> logv(points);
  for (std::size_t g = 0; g < points; ++g) {
    grid[g] = lo + step * static_cast<double>(g);
    logv[g] = mixture_full_log_density(subs, grid[g]);
  }
  return log_density_modes(grid, logv, 50.0);
}

ModeCheck check_modes(const Eigen::MatrixXd& draws, const std::vector<double>& full_modes, double bandwidth,
                      double prominence, double tolerance) {
  detail::require(draws.cols() == 1, "mode check needs one-dimensional draws");
  const std::vector<double> x = column(draws, 0);
  ModeCheck out;
  out.trace = density_trace(x, std::nullopt, default_grid(x, bandwidth), bandwidth);
  out.locations = mode_locations(out.trace, prominence);
  out.count = out.locations.size();
  out.matches_full = out.count == full_modes.size();
  std::vector<double> full = full_modes;
  std::sort(full.begin(), full.end());
  for (std::size_t i = 0; out.matches_full && i < full.size(); ++i) {
    out.matches_full = std::abs(out.locations[i] - full[i]) <= tolerance;
  }
  return out;
}

// ---- pipeline --------------------------------------------------------------

const MethodOutcome* ExperimentReport::outcome(CombineMethod m) const {
  for (const auto& o : methods) {
    if (o.method == m) return &o;
  }
  return nullptr;
}

ExperimentReport run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport rep;
  rep.config = cfg;
  nlohmann::json timing = nlohmann::json::object();
  const bool write = !cfg.output_dir.empty();
  if (write) io::ensure_directory(cfg.output_dir);
  const auto path = [&](const std::string& name) { return cfg.output_dir / name; };

  auto t0 = Clock::now();
  const Dataset data = simulate_data(cfg);
  const Partition partition = make_partition(cfg, data);
  timing["simulate_seconds"] = seconds_since(t0);

  t0 = Clock::now();
  OneShotGather gather(cfg.m);
  const PooledDraws pooled = sample_all(cfg, data, partition, gather);
  timing["sample_seconds"] = seconds_since(t0);
  for (std::size_t i = 0; i < cfg.m; ++i) rep.gather_messages.push_back(gather.messages_from(i));

  // Reference quantities come from the full data; they are evaluation-only.
  Eigen::MatrixXd reference;
  if (cfg.scenario == Scenario::kGaussian) reference = gaussian_reference_draws(cfg, data);
  if (cfg.scenario == Scenario::kMixture) rep.full_modes = mixture_full_modes(cfg, data, partition);

  t0 = Clock::now();
  rep.trial_true_kl.assign(cfg.tuning_budget, std::numeric_limits<double>::quiet_NaN());
  SearchOptions search_options;
  search_options.workers = cfg.workers;
  if (cfg.scenario == Scenario::kGaussian) {
    search_options.observer = [&](std::size_t trial, const Forest& forest, const CriterionReport&) {
      try {
        const CombineResult r = run_combiner(CombineMethod::kClassifier, cfg, pooled, &forest);
        rep.trial_true_kl[trial] = gaussian_true_kl(reference, r.draws);
      } catch (const NumericalError&) {
      }
    };
  }
  SearchResult search = random_search(pooled, HyperparameterSpace{}, cfg.tuning_budget, cfg.master_seed, search_options);
  timing["tuning_seconds"] = seconds_since(t0);
  rep.trace = search.trace;
  rep.best_forest = std::move(search.best_forest);

  if (cfg.scenario == Scenario::kGaussian) {
    std::vector<double> u;
    std::vector<double> kl;
    for (std::size_t i = 0; i < cfg.tuning_budget; ++i) {
      if (!rep.trace.trials[i].failed && std::isfinite(rep.trial_true_kl[i])) {
        u.push_back(rep.trace.trials[i].ub_kl);
        kl.push_back(rep.trial_true_kl[i]);
      }
    }
    if (u.size() >= 3) {
      try {
        rep.correlation = pearson_correlation(u, kl);
      } catch (const ValidationError&) {
      }
    }
  }

  nlohmann::json methods_json = nlohmann::json::object();
  nlohmann::json method_seconds = nlohmann::json::object();
  for (CombineMethod method : cfg.methods) {
    MethodOutcome o;
    o.method = method;
    o.seed = combine_seed(cfg.master_seed, method);
    nlohmann::json mj = {{"seed", o.seed}};
    try {
      CombineResult r = run_combiner(method, cfg, pooled, &rep.best_forest);
      o.seconds = r.seconds;
      o.draws = std::move(r.draws);
      if (cfg.scenario == Scenario::kGaussian) {
        o.true_kl = gaussian_true_kl(reference, o.draws);
        mj["true_kl"] = *o.true_kl;
      } else {
        o.modes = check_modes(o.draws, rep.full_modes, cfg.trace_bandwidth, cfg.mode_prominence, cfg.mode_tolerance);
        mj["mode_count"] = o.modes->count;
        mj["mode_locations"] = o.modes->locations;
        mj["modes_match_full"] = o.modes->matches_full;
      }
      o.ok = true;
      mj["status"] = "ok";
      mj["config"] = r.config_snapshot;
      mj["draws_file"] = "draws_" + to_string(method) + ".csv";
      if (write) {
        io::write_draws(path("draws_" + to_string(method) + ".csv"), o.draws);
        r.draws = o.draws;
        io::write_json(path("draws_" + to_string(method) + ".json"), io::combine_sidecar(r));
        if (o.modes) io::write_density(path("density_" + to_string(method) + ".csv"), o.modes->trace);
      }
    } catch (const ValidationError& e) {
      o.error = e.what();
    } catch (const NumericalError& e) {
      o.error = e.what();
    }
    if (!o.ok) {
      mj["status"] = "failed";
      mj["error"] = o.error;
    }
    method_seconds[to_string(method)] = o.seconds;
    methods_json[to_string(method)] = mj;
    rep.methods.push_back(std::move(o));
  }
  timing["combine_seconds"] = method_seconds;

  rep.total_messages = gather.total_messages();
  const auto& best = rep.trace.trials[rep.trace.best_index];
  nlohmann::json trials_json = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.trace.trials.size(); ++i) {
    const auto& t = rep.trace.trials[i];
    nlohmann::json tj = {{"trial", i + 1}, {"ub_kl", t.failed ? nlohmann::json() : nlohmann::json(t.ub_kl)}};
    if (cfg.scenario == Scenario::kGaussian) {
      tj["true_kl"] = std::isfinite(rep.trial_true_kl[i]) ? nlohmann::json(rep.trial_true_kl[i]) : nlohmann::json();
    }
    trials_json.push_back(tj);
  }
  std::size_t failed = 0;
  for (const auto& t : rep.trace.trials) failed += t.failed ? 1 : 0;

  nlohmann::json machine_seeds = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.m; ++i) machine_seeds.push_back(derive_seed(cfg.master_seed, streams::kMachine, i));

  rep.report = {{"schema_version", kReportSchemaVersion},
                {"config", cfg.to_json()},
                {"seeds",
                 {{"master", cfg.master_seed},
                  {"data", derive_seed(cfg.master_seed, streams::kData)},
                  {"partition", derive_seed(cfg.master_seed, streams::kPartition)},
                  {"machines", machine_seeds},
                  {"reference", derive_seed(cfg.master_seed, streams::kReference)}}},
                {"gather", {{"messages_per_machine", rep.gather_messages}, {"total_messages", rep.total_messages}}},
                {"tuning",
                 {{"trace_file", "trace.csv"},
                  {"trials", rep.trace.trials.size()},
                  {"failed_trials", failed},
                  {"best_trial", rep.trace.best_index + 1},
                  {"best_ub_kl", best.ub_kl},
                  {"best_config", to_json(best.config)},
                  {"best_train_seed", best.seed},
                  {"per_trial", trials_json}}},
                {"methods", methods_json}};
  rep.report["correlation_ub_kl_true_kl"] = rep.correlation ? nlohmann::json(*rep.correlation) : nlohmann::json();
  if (cfg.scenario == Scenario::kMixture) rep.report["full_posterior_modes"] = rep.full_modes;
  rep.timing = timing;

  if (write) {
    io::write_dataset(path("data.csv"), data);
    io::write_partition(path("partition.csv"), partition);
    io::write_pooled(path("pooled.csv"), pooled);
    io::write_trace(path("trace.csv"), rep.trace);
    io::write_json(path("best_forest.json"), rep.best_forest.to_json());
    io::write_json(path("report.json"), rep.report);
    io::write_json(path("timing.json"), rep.timing);
  }
  return rep;
}

}  // namespace pmcmc
