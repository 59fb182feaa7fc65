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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include "pmcmc/error.hpp"
#include "pmcmc/io.hpp"
#include "pmcmc/runner.hpp"

namespace pmcmc {
namespace {

namespace fs = std::filesystem;

ExperimentConfig small_gaussian(std::size_t m = 3) {
  ExperimentConfig c = default_config(Scenario::kGaussian);
  c.n = 600;
  c.m = m;
  c.d = 2;
  c.N = 100;
  c.tuning_budget = 3;
  c.reference_draws = 2000;
  c.kde_warmup = 100;
  c.master_seed = 11;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string validation_message(const std::string& text) {
  try {
    parse_config(text, default_config(Scenario::kGaussian));
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(ParseConfig, OverridesAndDefaults) {
  const ExperimentConfig c = parse_config(
      "# comment\nschema_version = 1\nn = 400\nm = 4\nmethods = consensus, weierstrass\n"
      "jitter.kind = additive\njitter.additive_scale = 0.01\nweierstrass.h = 0.3  # inline\n",
      default_config(Scenario::kGaussian));
  EXPECT_EQ(c.n, 400u);
  EXPECT_EQ(c.m, 4u);
  EXPECT_EQ(c.d, 10u);
  EXPECT_EQ(c.N, 2000u);
  ASSERT_EQ(c.methods.size(), 2u);
  EXPECT_EQ(c.methods[1], CombineMethod::kWeierstrass);
  EXPECT_EQ(c.jitter.kind, JitterKind::kAdditiveGaussian);
  EXPECT_DOUBLE_EQ(*c.weierstrass_h, 0.3);
  EXPECT_FALSE(c.kde_h.has_value());

  const ExperimentConfig mix = parse_config("schema_version = 1\nscenario = mixture\n", default_config(Scenario::kGaussian));
  EXPECT_EQ(mix.scenario, Scenario::kMixture);
  EXPECT_EQ(mix.d, 1u);
}

TEST(ParseConfig, RejectsBadInput) {
  EXPECT_NE(validation_message("n = 10\n").find("schema_version"), std::string::npos);
  EXPECT_NE(validation_message("schema_version = 2\n").find("schema"), std::string::npos);
  EXPECT_NE(validation_message("schema_version = 1\nbogus = 3\n").find("line 2: unknown key 'bogus'"),
            std::string::npos);
  EXPECT_NE(validation_message("schema_version = 1\nn = 5\nn = 6\n").find("duplicate"), std::string::npos);
  EXPECT_NE(validation_message("schema_version = 1\nm = 1\n").find("m >= 2"), std::string::npos);
  EXPECT_NE(validation_message("schema_version = 1\nrho = 1.5\n").find("rho"), std::string::npos);
  EXPECT_NE(validation_message("schema_version = 1\nmethods = classifier, magic\n").find("method"), std::string::npos);
  EXPECT_NE(validation_message("schema_version = 1\njitter.low = 5\n").find("jitter"), std::string::npos);
  EXPECT_NE(validation_message("schema_version = 1\nn x\n").find("key = value"), std::string::npos);
}

TEST(Stages, MachinesSeeOnlyTheirOwnBlock) {
  const ExperimentConfig c = small_gaussian();
  const Dataset data = simulate_data(c);
  const Partition p = make_partition(c, data);
  const SampleSet a = sample_machine(c, data, p, 1);
  // Changing rows owned by other machines leaves machine 1 untouched.
  Dataset other = data;
  for (std::size_t r : p.index_sets[0]) other.rows.row(static_cast<Eigen::Index>(r)).setConstant(100.0);
  const SampleSet b = sample_machine(c, other, p, 1);
  EXPECT_TRUE(a.draws == b.draws);
}

TEST(Stages, GatherReceivesOneMessagePerMachine) {
  const ExperimentConfig c = small_gaussian(4);
  const Dataset data = simulate_data(c);
  const Partition p = make_partition(c, data);
  OneShotGather gather(c.m);
  const PooledDraws pooled = sample_all(c, data, p, gather);
  EXPECT_EQ(gather.total_messages(), c.m);
  for (std::size_t i = 0; i < c.m; ++i) EXPECT_EQ(gather.messages_from(i), 1u);
  EXPECT_EQ(pooled.size(), c.m * c.N);
  EXPECT_THROW(gather.submit(0, sample_machine(c, data, p, 0)), ContractViolation);
}

TEST(Stages, MixturePartitionPutsEveryComponentOnEveryMachine) {
  ExperimentConfig c = default_config(Scenario::kMixture);
  c.n = 60;
  c.m = 5;
  const Dataset data = simulate_data(c);
  const Partition p = make_partition(c, data);
  for (const auto& rows : p.index_sets) {
    std::set<int> seen;
    for (std::size_t r : rows) seen.insert(data.labels[r]);
    EXPECT_EQ(seen.size(), 3u);
  }
}

TEST(TrueKl, ReferenceAgainstItselfIsNearZero) {
  const ExperimentConfig c = small_gaussian();
  const Dataset data = simulate_data(c);
  const Eigen::MatrixXd ref = gaussian_reference_draws(c, data);
  EXPECT_NEAR(gaussian_true_kl(ref, ref), 0.0, 1e-10);
  EXPECT_GT(gaussian_true_kl(ref, ref.array() + 1.0), 0.1);
}

TEST(Pipeline, DeterministicReport) {
  const fs::path base = fs::temp_directory_path() / "pmcmc_runner_det";
  fs::remove_all(base);
  ExperimentConfig c = small_gaussian();
  c.output_dir = base / "a";
  const ExperimentReport a = run_pipeline(c);
  c.output_dir = base / "b";
  c.workers = 1;
  const ExperimentReport b = run_pipeline(c);
  const std::string ra = slurp(base / "a" / "report.json");
  EXPECT_FALSE(ra.empty());
  EXPECT_EQ(ra, slurp(base / "b" / "report.json"));
  for (const char* f : {"data.csv", "partition.csv", "pooled.csv", "trace.csv", "draws_classifier.csv"}) {
    EXPECT_EQ(slurp(base / "a" / f), slurp(base / "b" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(base / "a" / "timing.json"));
  EXPECT_EQ(a.report["gather"]["total_messages"], 3);
  EXPECT_EQ(a.report["tuning"]["trials"], 3);
  for (const auto& o : a.methods) EXPECT_TRUE(o.ok) << to_string(o.method) << ": " << o.error;
  ASSERT_TRUE(a.correlation.has_value());
  EXPECT_GE(*a.correlation, -1.0);
  EXPECT_LE(*a.correlation, 1.0);
  fs::remove_all(base);
}

std::set<std::string> key_paths(const nlohmann::json& j, const std::string& prefix = "") {
  std::set<std::string> out;
  if (!j.is_object()) return out;
  for (const auto& [k, v] : j.items()) {
    if (prefix.empty() && k == "config") continue;
    const std::string p = prefix + "/" + k;
    out.insert(p);
    if (k == "per_trial") continue;
    for (const auto& s : key_paths(v, p)) out.insert(s);
  }
  return out;
}

TEST(Pipeline, ReportSchemaDoesNotDependOnMachineCount) {
  ExperimentConfig two = small_gaussian(2);
  ExperimentConfig ten = small_gaussian(10);
  two.tuning_budget = ten.tuning_budget = 2;
  const ExperimentReport a = run_pipeline(two);
  const ExperimentReport b = run_pipeline(ten);
  EXPECT_EQ(key_paths(a.report), key_paths(b.report));
  EXPECT_EQ(b.report["gather"]["messages_per_machine"].size(), 10u);
  EXPECT_EQ(b.report["gather"]["total_messages"], 10);
}

TEST(Pipeline, MethodFailureIsRecordedNotThrown) {
  ExperimentConfig c = small_gaussian();
  c.tuning_budget = 1;
  c.d = 6;
  c.weierstrass_h = 1e-9;
  const ExperimentReport r = run_pipeline(c);
  const MethodOutcome* w = r.outcome(CombineMethod::kWeierstrass);
  ASSERT_NE(w, nullptr);
  EXPECT_FALSE(w->ok);
  EXPECT_NE(w->error.find("bandwidth"), std::string::npos);
  EXPECT_EQ(r.report["methods"]["weierstrass"]["status"], "failed");
  EXPECT_TRUE(r.outcome(CombineMethod::kClassifier)->ok);
  EXPECT_TRUE(r.outcome(CombineMethod::kConsensus)->ok);
}

TEST(RunCombiner, NeedsTwoMachinesForBaselines) {
  ExperimentConfig c = small_gaussian();
  const Dataset data = simulate_data(c);
  const Partition p = make_partition(c, data);
  SampleSet s = sample_machine(c, data, p, 0);
  const PooledDraws one = pool_draws(std::span<const SampleSet>(&s, 1));
  for (CombineMethod m : {CombineMethod::kConsensus, CombineMethod::kKdeProduct, CombineMethod::kWeierstrass}) {
    try {
      run_combiner(m, c, one, nullptr);
      ADD_FAILURE() << to_string(m);
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find("m >= 2"), std::string::npos);
    }
  }
  EXPECT_THROW(run_combiner(CombineMethod::kClassifier, c, one, nullptr), ValidationError);
}

}  // namespace
}  // namespace pmcmc
