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

// Command-line front end. Every stage of the experiment is available as a
// subcommand reading and writing the CSV/JSON artifacts of the library, and
// `experiment` runs them all at once. Exit codes: 0 success, 1 invalid input,
// 2 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pmcmc/error.hpp"
#include "pmcmc/io.hpp"
#include "pmcmc/runner.hpp"

namespace fs = std::filesystem;
using namespace pmcmc;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out = ".";
  std::size_t workers = 0;
};

ExperimentConfig make_config(const Globals& g, Scenario scenario) {
  ExperimentConfig cfg = default_config(scenario);
  if (!g.config_path.empty()) cfg = load_config(g.config_path, cfg);
  if (g.seed) cfg.master_seed = *g.seed;
  cfg.workers = g.workers;
  return cfg;
}

// The data file decides the scenario: labelled rows are the mixture testbed.
ExperimentConfig config_for_data(const Globals& g, const Dataset& data) {
  ExperimentConfig cfg = make_config(g, data.has_labels() ? Scenario::kMixture : Scenario::kGaussian);
  cfg.d = static_cast<std::size_t>(data.rows.cols());
  cfg.n = data.size();
  return cfg;
}

void print_summary(const ExperimentReport& rep) {
  std::cout << "scenario " << to_string(rep.config.scenario) << ", m=" << rep.config.m << ", d=" << rep.config.d
            << ", N=" << rep.config.N << ", seed=" << rep.config.master_seed << "\n";
  const auto& best = rep.trace.trials[rep.trace.best_index];
  std::cout << "best trial " << rep.trace.best_index + 1 << " of " << rep.trace.trials.size() << ": ub_kl "
            << best.ub_kl << "\n";
  if (rep.correlation) std::cout << "correlation(ub_kl, true KL) " << *rep.correlation << "\n";
  for (const auto& o : rep.methods) {
    std::cout << "  " << to_string(o.method) << ": ";
    if (!o.ok) {
      std::cout << "failed (" << o.error << ")\n";
      continue;
    }
    if (o.true_kl) std::cout << "true KL " << *o.true_kl;
    if (o.modes) std::cout << "modes " << o.modes->count << (o.modes->matches_full ? " (match)" : " (no match)");
    std::cout << ", " << o.seconds << " s\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot parallel MCMC with a classifier-based combiner"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--config", g.config_path, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads (0: hardware count)")->capture_default_str();

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run the whole pipeline");
  std::string exp_scenario;
  std::optional<std::size_t> exp_budget;
  exp->add_option("scenario", exp_scenario, "gaussian or mixture")
      ->required()
      ->check(CLI::IsMember({"gaussian", "mixture"}));
  exp->add_option("--budget", exp_budget, "Tuning trials");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset");
  std::string sim_scenario = "gaussian";
  sim->add_option("--scenario", sim_scenario)->check(CLI::IsMember({"gaussian", "mixture"}))->capture_default_str();

  // partition
  auto* par = app.add_subcommand("partition", "Split data rows across machines");
  std::string par_data;
  par->add_option("--data", par_data)->required()->check(CLI::ExistingFile);

  // sample
  auto* smp = app.add_subcommand("sample", "Sample every machine and gather the draws once");
  std::string smp_data;
  std::string smp_partition;
  smp->add_option("--data", smp_data)->required()->check(CLI::ExistingFile);
  smp->add_option("--partition", smp_partition)->required()->check(CLI::ExistingFile);

  // tune
  auto* tun = app.add_subcommand("tune", "Random search over forest hyperparameters");
  std::string tun_pooled;
  std::size_t tun_budget = 50;
  tun->add_option("--pooled", tun_pooled)->required()->check(CLI::ExistingFile);
  tun->add_option("--budget", tun_budget)->capture_default_str();

  // combine
  auto* cmb = app.add_subcommand("combine", "Combine pooled draws");
  std::string cmb_method;
  std::string cmb_pooled;
  std::string cmb_forest;
  std::optional<std::size_t> cmb_M;
  std::optional<double> cmb_h;
  cmb->add_option("--method", cmb_method)
      ->required()
      ->check(CLI::IsMember({"classifier", "consensus", "kde-product", "weierstrass"}));
  cmb->add_option("--pooled", cmb_pooled)->required()->check(CLI::ExistingFile);
  cmb->add_option("--forest", cmb_forest, "Forest JSON (classifier method)")->check(CLI::ExistingFile);
  cmb->add_option("--M", cmb_M, "Output draws (default N)");
  cmb->add_option("--bandwidth", cmb_h, "Bandwidth (kde-product, weierstrass)");

  // evaluate
  auto* evl = app.add_subcommand("evaluate", "Score combined draws against the full posterior");
  std::string evl_draws;
  std::string evl_data;
  std::string evl_partition;
  evl->add_option("--draws", evl_draws)->required()->check(CLI::ExistingFile);
  evl->add_option("--data", evl_data)->required()->check(CLI::ExistingFile);
  evl->add_option("--partition", evl_partition, "Needed for the mixture scenario")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const fs::path out = g.out;
    io::ensure_directory(out);
    if (*exp) {
      ExperimentConfig cfg = make_config(g, scenario_from_string(exp_scenario));
      if (exp_budget) cfg.tuning_budget = *exp_budget;
      cfg.output_dir = out;
      const ExperimentReport rep = run_pipeline(cfg);
      print_summary(rep);
      std::cout << "wrote " << (out / "report.json").string() << "\n";
    } else if (*sim) {
      const ExperimentConfig cfg = make_config(g, scenario_from_string(sim_scenario));
      cfg.validate();
      io::write_dataset(out / "data.csv", simulate_data(cfg));
      std::cout << "wrote " << (out / "data.csv").string() << "\n";
    } else if (*par) {
      const Dataset data = io::read_dataset(par_data);
      const ExperimentConfig cfg = config_for_data(g, data);
      cfg.validate();
      io::write_partition(out / "partition.csv", make_partition(cfg, data));
      std::cout << "wrote " << (out / "partition.csv").string() << "\n";
    } else if (*smp) {
      const Dataset data = io::read_dataset(smp_data);
      ExperimentConfig cfg = config_for_data(g, data);
      const Partition partition = io::read_partition(smp_partition, 0);
      cfg.m = partition.num_machines();
      cfg.validate();
      OneShotGather gather(cfg.m);
      const PooledDraws pooled = sample_all(cfg, data, partition, gather);
      io::write_pooled(out / "pooled.csv", pooled);
      std::cout << "gathered " << gather.total_messages() << " messages from " << cfg.m << " machines\n";
      std::cout << "wrote " << (out / "pooled.csv").string() << "\n";
    } else if (*tun) {
      const PooledDraws pooled = io::read_pooled(tun_pooled);
      const ExperimentConfig cfg = make_config(g, Scenario::kGaussian);
      SearchOptions options;
      options.workers = cfg.workers;
      const SearchResult r = random_search(pooled, HyperparameterSpace{}, tun_budget, cfg.master_seed, options);
      io::write_trace(out / "trace.csv", r.trace);
      io::write_json(out / "best_forest.json", r.best_forest.to_json());
      const auto& best = r.trace.trials[r.trace.best_index];
      std::cout << "best trial " << r.trace.best_index + 1 << ": ub_kl " << best.ub_kl << "\n";
      std::cout << "wrote " << (out / "trace.csv").string() << ", " << (out / "best_forest.json").string() << "\n";
    } else if (*cmb) {
      const PooledDraws pooled = io::read_pooled(cmb_pooled);
      ExperimentConfig cfg = make_config(g, pooled.dim() == 1 ? Scenario::kMixture : Scenario::kGaussian);
      cfg.N = pooled.draws_per_machine;
      if (cmb_M) cfg.M = *cmb_M;
      const CombineMethod method = combine_method_from_string(cmb_method);
      if (cmb_h) {
        if (method == CombineMethod::kWeierstrass) cfg.weierstrass_h = *cmb_h;
        if (method == CombineMethod::kKdeProduct) cfg.kde_h = *cmb_h;
      }
      std::optional<Forest> forest;
      if (method == CombineMethod::kClassifier) {
        if (cmb_forest.empty()) detail::fail_validation("--forest: required for the classifier method");
        forest = Forest::from_json(io::read_json(cmb_forest));
      }
      const CombineResult r = run_combiner(method, cfg, pooled, forest ? &*forest : nullptr);
      const std::string stem = "draws_" + to_string(method);
      io::write_draws(out / (stem + ".csv"), r.draws);
      io::write_json(out / (stem + ".json"), io::combine_sidecar(r));
      std::cout << "wrote " << (out / (stem + ".csv")).string() << " (" << r.draws.rows() << " draws, " << r.seconds
                << " s)\n";
    } else if (*evl) {
      const Dataset data = io::read_dataset(evl_data);
      const ExperimentConfig cfg = config_for_data(g, data);
      const Eigen::MatrixXd draws = io::read_draws(evl_draws);
      nlohmann::json result = {{"draws_file", fs::path(evl_draws).filename().string()}};
      if (cfg.scenario == Scenario::kGaussian) {
        const double kl = gaussian_true_kl(gaussian_reference_draws(cfg, data), draws);
        result["true_kl"] = kl;
        std::cout << "true KL " << kl << "\n";
      } else {
        if (evl_partition.empty()) detail::fail_validation("--partition: required for the mixture scenario");
        const Partition partition = io::read_partition(evl_partition, 0);
        const std::vector<double> full = mixture_full_modes(cfg, data, partition);
        const ModeCheck mc = check_modes(draws, full, cfg.trace_bandwidth, cfg.mode_prominence, cfg.mode_tolerance);
        result["mode_count"] = mc.count;
        result["mode_locations"] = mc.locations;
        result["full_posterior_modes"] = full;
        result["modes_match_full"] = mc.matches_full;
        io::write_density(out / "density.csv", mc.trace);
        std::cout << "modes " << mc.count << (mc.matches_full ? " (match full posterior)" : " (no match)") << "\n";
      }
      io::write_json(out / "evaluation.json", result);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
