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

#include "pmcmc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "pmcmc/error.hpp"

namespace pmcmc::io {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) detail::fail_validation("cannot write " + path.string());
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string where(const std::filesystem::path& path, std::size_t line, const std::string& column) {
  return path.filename().string() + " line " + std::to_string(line) + " column '" + column + "'";
}

void expect_header(const CsvTable& t, const std::filesystem::path& path, const std::vector<std::string>& prefix) {
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i >= t.header.size() || t.header[i] != prefix[i]) {
      detail::fail_validation(path.filename().string() + ": header field " + std::to_string(i + 1) + " must be '" +
                              prefix[i] + "'");
    }
  }
}

void expect_width(const CsvTable& t, const std::filesystem::path& path) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.header.size()) {
      detail::fail_validation(path.filename().string() + " line " + std::to_string(r + 2) + ": expected " +
                              std::to_string(t.header.size()) + " fields, found " + std::to_string(t.rows[r].size()));
    }
  }
}

std::size_t count_indexed(const CsvTable& t, std::size_t from, const std::string& stem) {
  std::size_t k = 0;
  while (from + k < t.header.size() && t.header[from + k] == stem + std::to_string(k + 1)) ++k;
  return k;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return {buf, r.ptr};
}

double parse_double(std::string_view text, std::string_view field) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size() || text.empty()) {
    detail::fail_validation(std::string(field) + ": not a number: '" + std::string(text) + "'");
  }
  if (!std::isfinite(v)) detail::fail_validation(std::string(field) + ": value must be finite");
  return v;
}

long long parse_integer(std::string_view text, std::string_view field) {
  long long v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size() || text.empty()) {
    detail::fail_validation(std::string(field) + ": not an integer: '" + std::string(text) + "'");
  }
  return v;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail_validation("cannot read " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      t.header = split(line);
      first = false;
    } else {
      t.rows.push_back(split(line));
    }
  }
  if (first) detail::fail_validation(path.filename().string() + ": missing header");
  return t;
}

void write_pooled(const std::filesystem::path& path, const PooledDraws& pooled) {
  auto out = open_out(path);
  out << "machine,iter";
  for (std::size_t j = 0; j < pooled.dim(); ++j) out << ",theta_" << j + 1;
  out << ",log_density\n";
  std::vector<std::size_t> iter(pooled.num_machines, 0);
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    const auto mi = static_cast<std::size_t>(pooled.machine[k]);
    out << mi + 1 << ',' << ++iter[mi];
    for (Eigen::Index j = 0; j < pooled.theta.cols(); ++j) {
      out << ',' << format_double(pooled.theta(static_cast<Eigen::Index>(k), j));
    }
    out << ',' << format_double(pooled.log_density[k]) << '\n';
  }
}

PooledDraws read_pooled(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, path, {"machine", "iter"});
  const std::size_t d = count_indexed(t, 2, "theta_");
  if (d == 0) detail::fail_validation(path.filename().string() + ": header needs theta_1..theta_d");
  if (t.header.size() != d + 3 || t.header.back() != "log_density") {
    detail::fail_validation(path.filename().string() + ": last header field must be 'log_density'");
  }
  expect_width(t, path);
  if (t.rows.empty()) detail::fail_validation(path.filename().string() + ": no draws");

  int max_machine = 0;
  std::vector<int> machine(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const long long mi = parse_integer(t.rows[r][0], where(path, r + 2, "machine"));
    if (mi < 1) detail::fail_validation(where(path, r + 2, "machine") + ": machine labels start at 1");
    machine[r] = static_cast<int>(mi);
    max_machine = std::max(max_machine, machine[r]);
  }
  std::vector<SampleSet> sets(static_cast<std::size_t>(max_machine));
  std::vector<std::vector<std::size_t>> rows_of(sets.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) rows_of[static_cast<std::size_t>(machine[r] - 1)].push_back(r);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& rows = rows_of[i];
    if (rows.empty()) detail::fail_validation(path.filename().string() + ": machine " + std::to_string(i + 1) + " has no draws");
    sets[i].draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    sets[i].log_density.resize(rows.size());
    for (std::size_t t_i = 0; t_i < rows.size(); ++t_i) {
      const auto& row = t.rows[rows[t_i]];
      const long long it = parse_integer(row[1], where(path, rows[t_i] + 2, "iter"));
      if (it != static_cast<long long>(t_i + 1)) {
        detail::fail_validation(where(path, rows[t_i] + 2, "iter") + ": iterations must run 1..N per machine");
      }
      for (std::size_t j = 0; j < d; ++j) {
        sets[i].draws(static_cast<Eigen::Index>(t_i), static_cast<Eigen::Index>(j)) =
            parse_double(row[2 + j], where(path, rows[t_i] + 2, t.header[2 + j]));
      }
      sets[i].log_density[t_i] = parse_double(row[d + 2], where(path, rows[t_i] + 2, "log_density"));
    }
  }
  return pool_draws(sets);
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  auto out = open_out(path);
  out << "row,label";
  for (Eigen::Index j = 0; j < data.rows.cols(); ++j) out << ",x_" << j + 1;
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    out << r + 1 << ',';
    if (data.has_labels()) out << data.labels[r];
    for (Eigen::Index j = 0; j < data.rows.cols(); ++j) out << ',' << format_double(data.rows(static_cast<Eigen::Index>(r), j));
    out << '\n';
  }
}

Dataset read_dataset(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, path, {"row", "label"});
  const std::size_t b = count_indexed(t, 2, "x_");
  if (b == 0 || t.header.size() != b + 2) detail::fail_validation(path.filename().string() + ": header needs x_1..x_b");
  expect_width(t, path);
  if (t.rows.empty()) detail::fail_validation(path.filename().string() + ": no rows");
  Dataset data;
  data.rows.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(b));
  const bool labelled = !t.rows.front()[1].empty();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (parse_integer(row[0], where(path, r + 2, "row")) != static_cast<long long>(r + 1)) {
      detail::fail_validation(where(path, r + 2, "row") + ": rows must be numbered 1..n");
    }
    if (labelled) {
      const long long lab = parse_integer(row[1], where(path, r + 2, "label"));
      if (lab < 1 || lab > 3) detail::fail_validation(where(path, r + 2, "label") + ": label must be in {1,2,3}");
      data.labels.push_back(static_cast<int>(lab));
    } else if (!row[1].empty()) {
      detail::fail_validation(where(path, r + 2, "label") + ": labels must be all present or all empty");
    }
    for (std::size_t j = 0; j < b; ++j) {
      data.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_double(row[2 + j], where(path, r + 2, t.header[2 + j]));
    }
  }
  return data;
}

void write_partition(const std::filesystem::path& path, const Partition& partition) {
  std::size_t n = 0;
  for (const auto& s : partition.index_sets) n += s.size();
  const std::vector<int> owner = partition.assignment(n);
  auto out = open_out(path);
  out << "row,machine\n";
  for (std::size_t r = 0; r < n; ++r) out << r + 1 << ',' << owner[r] + 1 << '\n';
}

Partition read_partition(const std::filesystem::path& path, std::size_t num_machines) {
  const CsvTable t = read_csv(path);
  expect_header(t, path, {"row", "machine"});
  expect_width(t, path);
  std::vector<int> owner(t.rows.size());
  std::size_t m = num_machines;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (parse_integer(t.rows[r][0], where(path, r + 2, "row")) != static_cast<long long>(r + 1)) {
      detail::fail_validation(where(path, r + 2, "row") + ": rows must be numbered 1..n");
    }
    const long long mi = parse_integer(t.rows[r][1], where(path, r + 2, "machine"));
    if (mi < 1) detail::fail_validation(where(path, r + 2, "machine") + ": machine labels start at 1");
    owner[r] = static_cast<int>(mi - 1);
    if (num_machines == 0) m = std::max(m, static_cast<std::size_t>(mi));
  }
  return Partition::from_assignment(owner, m);
}

void write_trace(const std::filesystem::path& path, const SearchTrace& trace) {
  auto out = open_out(path);
  out << "trial,fraction,num_trees,min_node_size,mtry,replacement,weight_adjustment,ub_kl,seed\n";
  for (std::size_t i = 0; i < trace.trials.size(); ++i) {
    const auto& tr = trace.trials[i];
    out << i + 1 << ',' << format_double(tr.config.fraction) << ',' << tr.config.num_trees << ','
        << tr.config.min_node_size << ',' << tr.config.mtry << ',' << (tr.config.replacement ? "true" : "false") << ','
        << (tr.config.weight_adjustment ? "true" : "false") << ',' << (tr.failed ? "NA" : format_double(tr.ub_kl))
        << ',' << tr.seed << '\n';
  }
}

void write_draws(const std::filesystem::path& path, const Eigen::MatrixXd& draws) {
  auto out = open_out(path);
  out << "iter";
  for (Eigen::Index j = 0; j < draws.cols(); ++j) out << ",theta_" << j + 1;
  out << '\n';
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    out << r + 1;
    for (Eigen::Index j = 0; j < draws.cols(); ++j) out << ',' << format_double(draws(r, j));
    out << '\n';
  }
}

Eigen::MatrixXd read_draws(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, path, {"iter"});
  const std::size_t d = count_indexed(t, 1, "theta_");
  if (d == 0 || t.header.size() != d + 1) detail::fail_validation(path.filename().string() + ": header needs theta_1..theta_d");
  expect_width(t, path);
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_double(t.rows[r][1 + j], where(path, r + 2, t.header[1 + j]));
    }
  }
  return draws;
}

nlohmann::json combine_sidecar(const CombineResult& result) {
  return {{"method", to_string(result.method)},
          {"config", result.config_snapshot},
          {"seed", result.seed},
          {"seconds", result.seconds},
          {"draws", result.draws.rows()}};
}

void write_density(const std::filesystem::path& path, const DensityTrace& trace) {
  auto out = open_out(path);
  out << "grid,density\n";
  for (std::size_t i = 0; i < trace.grid.size(); ++i) {
    out << format_double(trace.grid[i]) << ',' << format_double(trace.density[i]) << '\n';
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail_validation("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    detail::fail_validation(path.filename().string() + ": malformed JSON: " + e.what());
  }
}

void ensure_directory(const std::filesystem::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) detail::fail_validation("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace pmcmc::io
