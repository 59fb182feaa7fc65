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

// CSV and JSON artifacts. Doubles are written in shortest round-trip form so
// files reload bit-exactly. Readers throw ValidationError naming the file,
// line and column at fault.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pmcmc/combine.hpp"
#include "pmcmc/criterion.hpp"
#include "pmcmc/eval.hpp"
#include "pmcmc/models.hpp"

namespace pmcmc::io {

std::string format_double(double x);
double parse_double(std::string_view text, std::string_view field);
long long parse_integer(std::string_view text, std::string_view field);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);

/// machine,iter,theta_1..theta_d,log_density with 1-based machine and iter.
void write_pooled(const std::filesystem::path& path, const PooledDraws& pooled);
PooledDraws read_pooled(const std::filesystem::path& path);

/// row,label,x_1..x_b; label is empty for unlabelled data.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

/// row,machine, both 1-based.
void write_partition(const std::filesystem::path& path, const Partition& partition);
Partition read_partition(const std::filesystem::path& path, std::size_t num_machines);

/// trial,fraction,num_trees,min_node_size,mtry,replacement,weight_adjustment,ub_kl,seed
void write_trace(const std::filesystem::path& path, const SearchTrace& trace);

/// iter,theta_1..theta_d
void write_draws(const std::filesystem::path& path, const Eigen::MatrixXd& draws);
Eigen::MatrixXd read_draws(const std::filesystem::path& path);

/// Method, config snapshot, seed and wall-clock seconds of a combine run.
nlohmann::json combine_sidecar(const CombineResult& result);

/// grid,density
void write_density(const std::filesystem::path& path, const DensityTrace& trace);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

void ensure_directory(const std::filesystem::path& dir);

}  // namespace pmcmc::io
