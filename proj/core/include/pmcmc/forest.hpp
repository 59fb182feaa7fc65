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

// Random forest classifier over machine labels. Trees use axis-aligned
// splits chosen by weighted Gini impurity; leaves store weighted class
// frequencies, and the forest averages them into Pr(z = j | theta).

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pmcmc/models.hpp"
#include "pmcmc/numerics.hpp"

namespace pmcmc {

/// Floor applied to every class probability before it reaches a logarithm.
inline constexpr double kProbabilityFloor = 1e-6;

struct ForestConfig {
  double fraction = 0.9;  // per-tree subsample share
  int num_trees = 50;
  int min_node_size = 5;
  int mtry = 1;
  bool replacement = false;
  bool weight_adjustment = false;
  // Lifts the tuning-grid range checks (fraction, num_trees, min_node_size).
  bool allow_out_of_range = false;

  /// Throws ValidationError naming the offending field.
  void validate(std::size_t num_features) const;

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

nlohmann::json to_json(const ForestConfig& c);
ForestConfig forest_config_from_json(const nlohmann::json& j);

/// Flat array-of-nodes decision tree. Leaves have feature == -1 and own
/// `num_classes` consecutive entries of `leaf_values` starting at `leaf`.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int leaf = -1;
  };

  DecisionTree() = default;
  DecisionTree(std::vector<Node> nodes, std::vector<double> leaf_values, std::size_t num_classes);

  /// Leaf class-frequency vector reached by `x` (`x` goes left when
  /// x[feature] <= threshold).
  std::span<const double> leaf_frequencies(const double* x) const;

  /// Class frequencies stored at leaf node `node`.
  std::span<const double> leaf_values(std::size_t node) const;

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t num_leaves() const noexcept;
  std::size_t depth() const;

 private:
  std::vector<Node> nodes_;
  std::vector<double> leaf_values_;
  std::size_t num_classes_ = 0;
};

/// Rows x classes matrix of clamped class probabilities.
using ClassProbabilityMatrix = Eigen::MatrixXd;

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<DecisionTree> trees, std::size_t num_classes, std::size_t num_features,
         ForestConfig config, std::uint64_t train_seed);

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t num_features() const noexcept { return num_features_; }
  const ForestConfig& config() const noexcept { return config_; }
  std::uint64_t train_seed() const noexcept { return train_seed_; }

  /// Per-tree multiplicity of each training row in that tree's resample.
  /// Empty for forests loaded from JSON.
  const std::vector<std::vector<std::uint32_t>>& in_bag_counts() const noexcept { return in_bag_; }
  void set_in_bag_counts(std::vector<std::vector<std::uint32_t>> counts) { in_bag_ = std::move(counts); }

  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& j);

 private:
  std::vector<DecisionTree> trees_;
  std::size_t num_classes_ = 0;
  std::size_t num_features_ = 0;
  ForestConfig config_;
  std::uint64_t train_seed_ = 0;
  std::vector<std::vector<std::uint32_t>> in_bag_;
};

inline constexpr int kForestSchemaVersion = 1;

struct TrainOptions {
  /// Case weights per pooled row. When absent and config.weight_adjustment
  /// is set, the normalized sub-posterior density weights are used.
  std::optional<SimplexWeights> case_weights;
  /// Stable row identifiers used to key the per-tree resample. Defaults to
  /// the pooled index; with explicit ids, permuting the training rows leaves
  /// the forest unchanged.
  std::optional<std::vector<std::uint64_t>> row_ids;
  /// Threads used for tree construction; 0 picks the hardware count.
  std::size_t workers = 0;
};

/// Trains `config.num_trees` trees on (theta, machine). Throws
/// ValidationError("degenerate labels") with fewer than two classes, and on
/// mtry > d.
Forest train_forest(const Eigen::MatrixXd& theta, std::span<const int> labels, std::size_t num_classes,
                    const ForestConfig& config, std::uint64_t train_seed, const TrainOptions& options = {});

Forest train_forest(const PooledDraws& pooled, const ForestConfig& config, std::uint64_t train_seed,
                    const TrainOptions& options = {});

/// Tree-averaged leaf frequencies, no clamping.
Eigen::MatrixXd predict_raw(const Forest& forest, const Eigen::MatrixXd& points);

/// Tree-averaged probabilities clamped to [kProbabilityFloor, 1] and
/// renormalized so each row sums to one.
ClassProbabilityMatrix predict_proba(const Forest& forest, const Eigen::MatrixXd& points);

/// Clamp one probability row in place: entries below the floor are raised to
/// it and the remaining mass is rescaled so the row still sums to one.
void clamp_probability_row(std::span<double> row, double floor = kProbabilityFloor);

/// Share of out-of-bag rows whose argmax probability matches their label.
/// Throws ValidationError when no row is out of bag in any tree.
double out_of_bag_accuracy(const Forest& forest, const PooledDraws& pooled);

}  // namespace pmcmc
