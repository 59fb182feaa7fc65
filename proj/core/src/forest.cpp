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

#include "pmcmc/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "pmcmc/error.hpp"
#include "pmcmc/parallel.hpp"
#include "pmcmc/rng.hpp"

namespace pmcmc {

void ForestConfig::validate(std::size_t num_features) const {
  using detail::require;
  require(num_features >= 1, "forest needs at least one feature");
  if (allow_out_of_range) {
    require(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1]");
    require(num_trees >= 1, "num_trees must be at least 1");
    require(min_node_size >= 1, "min_node_size must be at least 1");
  } else {
    require(fraction >= 0.8 && fraction <= 0.999, "fraction must lie in [0.8, 0.999]");
    require(num_trees >= 10 && num_trees <= 100, "num_trees must lie in [10, 100]");
    require(min_node_size >= 5 && min_node_size <= 50, "min_node_size must lie in [5, 50]");
  }
  require(mtry >= 1, "mtry must be at least 1");
  require(static_cast<std::size_t>(mtry) <= num_features, "mtry must not exceed the dimension d");
}

nlohmann::json to_json(const ForestConfig& c) {
  return nlohmann::json{{"fraction", c.fraction},
                        {"num_trees", c.num_trees},
                        {"min_node_size", c.min_node_size},
                        {"mtry", c.mtry},
                        {"replacement", c.replacement},
                        {"weight_adjustment", c.weight_adjustment},
                        {"allow_out_of_range", c.allow_out_of_range}};
}

ForestConfig forest_config_from_json(const nlohmann::json& j) {
  ForestConfig c;
  try {
    c.fraction = j.at("fraction").get<double>();
    c.num_trees = j.at("num_trees").get<int>();
    c.min_node_size = j.at("min_node_size").get<int>();
    c.mtry = j.at("mtry").get<int>();
    c.replacement = j.at("replacement").get<bool>();
    c.weight_adjustment = j.at("weight_adjustment").get<bool>();
    c.allow_out_of_range = j.value("allow_out_of_range", false);
  } catch (const nlohmann::json::exception& e) {
    detail::fail_validation(std::string("malformed forest config: ") + e.what());
  }
  return c;
}

// ---- DecisionTree ----------------------------------------------------------

DecisionTree::DecisionTree(std::vector<Node> nodes, std::vector<double> leaf_values, std::size_t num_classes)
    : nodes_(std::move(nodes)), leaf_values_(std::move(leaf_values)), num_classes_(num_classes) {
  detail::require(!nodes_.empty(), "tree has no nodes");
  const auto n = static_cast<int>(nodes_.size());
  for (int i = 0; i < n; ++i) {
    const auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.feature < 0) {
      detail::require(node.leaf >= 0 &&
                          static_cast<std::size_t>(node.leaf) + num_classes_ <= leaf_values_.size(),
                      "leaf node without frequency vector");
    } else {
      // Children always follow their parent, which also rules out cycles.
      detail::require(node.left > i && node.left < n && node.right > i && node.right < n,
                      "internal node needs two children");
    }
  }
}

std::span<const double> DecisionTree::leaf_frequencies(const double* x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& node = nodes_[i];
    i = static_cast<std::size_t>(x[node.feature] <= node.threshold ? node.left : node.right);
  }
  return {leaf_values_.data() + nodes_[i].leaf, num_classes_};
}

std::span<const double> DecisionTree::leaf_values(std::size_t node) const {
  detail::require(node < nodes_.size() && nodes_[node].feature < 0, "not a leaf node");
  return {leaf_values_.data() + nodes_[node].leaf, num_classes_};
}

std::size_t DecisionTree::num_leaves() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

std::size_t DecisionTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, dep] = stack.back();
    stack.pop_back();
    best = std::max(best, dep);
    const auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.feature >= 0) {
      stack.emplace_back(node.left, dep + 1);
      stack.emplace_back(node.right, dep + 1);
    }
  }
  return best;
}

// ---- Forest ----------------------------------------------------------------

Forest::Forest(std::vector<DecisionTree> trees, std::size_t num_classes, std::size_t num_features,
               ForestConfig config, std::uint64_t train_seed)
    : trees_(std::move(trees)),
      num_classes_(num_classes),
      num_features_(num_features),
      config_(config),
      train_seed_(train_seed) {}

nlohmann::json Forest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
      const auto& node = tree.nodes()[i];
      nlohmann::json freq = nlohmann::json::array();
      if (node.feature < 0) {
        for (double v : tree.leaf_values(i)) freq.push_back(v);
      }
      nodes.push_back(nlohmann::json::array({node.feature, node.threshold, node.left, node.right, std::move(freq)}));
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return nlohmann::json{{"schema_version", kForestSchemaVersion},
                        {"num_classes", num_classes_},
                        {"num_features", num_features_},
                        {"train_seed", train_seed_},
                        {"config", pmcmc::to_json(config_)},
                        {"trees", std::move(trees)}};
}

Forest Forest::from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kForestSchemaVersion) {
      detail::fail_validation("unsupported forest schema_version " + std::to_string(version));
    }
    const auto num_classes = j.at("num_classes").get<std::size_t>();
    const auto num_features = j.at("num_features").get<std::size_t>();
    detail::require(num_classes >= 2, "forest num_classes must be at least 2");
    detail::require(num_features >= 1, "forest num_features must be at least 1");
    const ForestConfig config = forest_config_from_json(j.at("config"));
    std::vector<DecisionTree> trees;
    for (const auto& jt : j.at("trees")) {
      std::vector<DecisionTree::Node> nodes;
      std::vector<double> leaf_values;
      for (const auto& jn : jt.at("nodes")) {
        detail::require(jn.is_array() && jn.size() == 5, "forest node must be a 5-element array");
        DecisionTree::Node node;
        node.feature = jn[0].get<int>();
        node.threshold = jn[1].get<double>();
        node.left = jn[2].get<int>();
        node.right = jn[3].get<int>();
        if (node.feature < 0) {
          detail::require(jn[4].size() == num_classes, "leaf frequency length must equal num_classes");
          node.leaf = static_cast<int>(leaf_values.size());
          for (const auto& v : jn[4]) leaf_values.push_back(v.get<double>());
        } else {
          detail::require(static_cast<std::size_t>(node.feature) < num_features, "split feature out of range");
        }
        nodes.push_back(node);
      }
      trees.emplace_back(std::move(nodes), std::move(leaf_values), num_classes);
    }
    detail::require(!trees.empty(), "forest has no trees");
    return Forest(std::move(trees), num_classes, num_features, config, j.at("train_seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    detail::fail_validation(std::string("malformed forest JSON: ") + e.what());
  }
}

// ---- training --------------------------------------------------------------

namespace {

struct TrainingData {
  const Eigen::MatrixXd& theta;  // column-major: feature columns are contiguous
  std::span<const int> labels;
  std::span<const double> weights;  // positive, mean one
  std::span<const std::uint64_t> row_ids;
  std::size_t num_classes;

  double value(std::size_t row, std::size_t feature) const {
    return theta(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(feature));
  }
};

// Sum in ascending order so relabelling classes cannot change the rounding.
// Overwrites `v`.
double label_free_sum(std::vector<double>& v) {
  const std::size_t n = v.size();
  // Insertion sort: n is the machine count, usually a handful.
  for (std::size_t i = 1; i < n; ++i) {
    const double x = v[i];
    std::size_t j = i;
    for (; j > 0 && v[j - 1] > x; --j) v[j] = v[j - 1];
    v[j] = x;
  }
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Builds one tree over a per-tree resample. `sample` holds row indices (with
// multiplicity) in canonical order; every feature keeps its own sorted view
// of sample positions, and splitting stable-partitions each view so node
// ranges stay aligned across features.
class TreeBuilder {
 public:
  TreeBuilder(const TrainingData& data, const ForestConfig& config, std::vector<std::size_t> sample, Rng& rng)
      : data_(data), config_(config), sample_(std::move(sample)), rng_(rng) {
    const std::size_t d = static_cast<std::size_t>(data_.theta.cols());
    const std::size_t s = sample_.size();
    sorted_.resize(d);
    for (std::size_t f = 0; f < d; ++f) {
      auto& view = sorted_[f];
      view.resize(s);
      std::iota(view.begin(), view.end(), std::uint32_t{0});
      std::stable_sort(view.begin(), view.end(), [&](std::uint32_t a, std::uint32_t b) {
        return data_.value(sample_[a], f) < data_.value(sample_[b], f);
      });
    }
    goes_left_.assign(s, 0);
    scratch_.resize(s);
    features_.resize(d);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  DecisionTree build() {
    struct Pending {
      std::size_t node, begin, end;
    };
    nodes_.emplace_back();
    std::vector<Pending> stack{{0, 0, sample_.size()}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      const auto split = find_split(p.begin, p.end);
      if (!split) {
        make_leaf(p.node, p.begin, p.end);
        continue;
      }
      const std::size_t mid = apply_split(p.begin, p.end, split->feature, split->threshold);
      const auto left = nodes_.size();
      nodes_.emplace_back();
      const auto right = nodes_.size();
      nodes_.emplace_back();
      auto& node = nodes_[p.node];
      node.feature = static_cast<int>(split->feature);
      node.threshold = split->threshold;
      node.left = static_cast<int>(left);
      node.right = static_cast<int>(right);
      stack.push_back({right, mid, p.end});
      stack.push_back({left, p.begin, mid});
    }
    return DecisionTree(std::move(nodes_), std::move(leaf_values_), data_.num_classes);
  }

 private:
  struct Split {
    std::size_t feature;
    double threshold;
  };

  std::vector<double> class_weights(std::size_t begin, std::size_t end) const {
    std::vector<double> w(data_.num_classes, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t row = sample_[sorted_[0][i]];
      w[static_cast<std::size_t>(data_.labels[row])] += data_.weights[row];
    }
    return w;
  }

  std::optional<Split> find_split(std::size_t begin, std::size_t end) {
    const std::size_t count = end - begin;
    if (count < static_cast<std::size_t>(config_.min_node_size) || count < 2) return std::nullopt;
    const std::vector<double> total = class_weights(begin, end);
    std::vector<double> scratch = total;
    const double total_weight = label_free_sum(scratch);
    const auto nonzero = std::count_if(total.begin(), total.end(), [](double w) { return w > 0.0; });
    if (nonzero <= 1 || !(total_weight > 0.0)) return std::nullopt;

    // Candidate features: mtry distinct indices, visited in ascending order
    // so equal-gain ties resolve to the lowest feature index.
    const std::size_t d = features_.size();
    const auto mtry = static_cast<std::size_t>(config_.mtry);
    for (std::size_t k = 0; k < mtry; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, d - 1);
      std::swap(features_[k], features_[pick(rng_)]);
    }
    std::vector<std::size_t> candidates(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry));
    std::sort(candidates.begin(), candidates.end());

    std::vector<double> sq_left(data_.num_classes);
    std::vector<double> sq_right(data_.num_classes);
    for (std::size_t c = 0; c < total.size(); ++c) sq_left[c] = total[c] * total[c];
    const double parent_score = label_free_sum(sq_left) / total_weight;

    double best_score = parent_score * (1.0 + 1e-12);
    std::optional<Split> best;
    std::vector<double> left(data_.num_classes);
    for (std::size_t f : candidates) {
      std::fill(left.begin(), left.end(), 0.0);
      double left_weight = 0.0;
      const auto& view = sorted_[f];
      for (std::size_t i = begin; i + 1 < end; ++i) {
        const std::size_t row = sample_[view[i]];
        const double w = data_.weights[row];
        left[static_cast<std::size_t>(data_.labels[row])] += w;
        left_weight += w;
        const double v = data_.value(row, f);
        const double next = data_.value(sample_[view[i + 1]], f);
        if (!(v < next)) continue;
        const double right_weight = total_weight - left_weight;
        if (!(left_weight > 0.0) || !(right_weight > 0.0)) continue;
        for (std::size_t c = 0; c < data_.num_classes; ++c) {
          sq_left[c] = left[c] * left[c];
          const double r = total[c] - left[c];
          sq_right[c] = r * r;
        }
        const double score = label_free_sum(sq_left) / left_weight + label_free_sum(sq_right) / right_weight;
        if (score > best_score) {
          double threshold = 0.5 * (v + next);
          if (!(threshold < next)) threshold = v;
          best_score = score;
          best = Split{f, threshold};
        }
      }
    }
    return best;
  }

  std::size_t apply_split(std::size_t begin, std::size_t end, std::size_t feature, double threshold) {
    std::size_t n_left = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t pos = sorted_[feature][i];
      const bool left = data_.value(sample_[pos], feature) <= threshold;
      goes_left_[pos] = left ? 1 : 0;
      n_left += left ? 1 : 0;
    }
    for (auto& view : sorted_) {
      auto* out_left = scratch_.data();
      auto* out_right = scratch_.data() + n_left;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t pos = view[i];
        if (goes_left_[pos]) {
          *out_left++ = pos;
        } else {
          *out_right++ = pos;
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(end - begin),
                view.begin() + static_cast<std::ptrdiff_t>(begin));
    }
    return begin + n_left;
  }

  void make_leaf(std::size_t node, std::size_t begin, std::size_t end) {
    std::vector<double> w = class_weights(begin, end);
    std::vector<double> scratch = w;
    double total = label_free_sum(scratch);
    if (!(total > 0.0)) {
      // Every case weight underflowed: fall back to plain counts.
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t i = begin; i < end; ++i) w[static_cast<std::size_t>(data_.labels[sample_[sorted_[0][i]]])] += 1.0;
      total = static_cast<double>(end - begin);
    }
    nodes_[node].feature = -1;
    nodes_[node].leaf = static_cast<int>(leaf_values_.size());
    for (double x : w) leaf_values_.push_back(x / total);
  }

  const TrainingData& data_;
  const ForestConfig& config_;
  std::vector<std::size_t> sample_;
  Rng& rng_;
  std::vector<std::vector<std::uint32_t>> sorted_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> scratch_;
  std::vector<std::size_t> features_;
  std::vector<DecisionTree::Node> nodes_;
  std::vector<double> leaf_values_;
};

// Per-tree resample in a canonical row order keyed by (tree seed, row id),
// so the result does not depend on the order rows were supplied in.
std::vector<std::size_t> draw_tree_sample(const TrainingData& data, const ForestConfig& config,
                                          std::uint64_t tree_seed, Rng& rng) {
  const std::size_t n = data.labels.size();
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
  for (std::size_t r = 0; r < n; ++r) {
    keyed[r] = {mix64(tree_seed ^ mix64(data.row_ids[r] + streams::kTreeRows)), r};
  }
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : data.row_ids[a.second] < data.row_ids[b.second];
  });
  auto size = static_cast<std::size_t>(std::llround(config.fraction * static_cast<double>(n)));
  size = std::clamp<std::size_t>(size, std::min<std::size_t>(2, n), n);

  std::vector<std::size_t> sample;
  sample.reserve(size);
  if (config.replacement) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> positions(size);
    for (auto& p : positions) p = pick(rng);
    std::sort(positions.begin(), positions.end());
    for (std::size_t p : positions) sample.push_back(keyed[p].second);
  } else {
    for (std::size_t p = 0; p < size; ++p) sample.push_back(keyed[p].second);
  }
  return sample;
}

}  // namespace

Forest train_forest(const Eigen::MatrixXd& theta, std::span<const int> labels, std::size_t num_classes,
                    const ForestConfig& config, std::uint64_t train_seed, const TrainOptions& options) {
  const auto n = static_cast<std::size_t>(theta.rows());
  const auto d = static_cast<std::size_t>(theta.cols());
  detail::require(labels.size() == n, "label count does not match number of rows");
  detail::require(n >= 2, "forest needs at least two training rows");
  config.validate(d);
  detail::require(theta.allFinite(), "training points must be finite");
  detail::require(num_classes >= 2, "degenerate labels: need at least two classes");
  std::vector<std::size_t> seen(num_classes, 0);
  for (int z : labels) {
    detail::require(z >= 0 && static_cast<std::size_t>(z) < num_classes, "label out of range");
    ++seen[static_cast<std::size_t>(z)];
  }
  if (std::count_if(seen.begin(), seen.end(), [](std::size_t c) { return c > 0; }) < 2) {
    detail::fail_validation("degenerate labels: need at least two distinct machine labels");
  }

  std::vector<double> weights(n, 1.0);
  if (options.case_weights) {
    detail::require(options.case_weights->size() == n, "case weight length must equal pool size");
    for (std::size_t r = 0; r < n; ++r) weights[r] = (*options.case_weights)[r] * static_cast<double>(n);
  } else if (config.weight_adjustment) {
    detail::fail_validation("weight_adjustment requires case weights or pooled log densities");
  }

  std::vector<std::uint64_t> row_ids(n);
  if (options.row_ids) {
    detail::require(options.row_ids->size() == n, "row id count must equal pool size");
    row_ids = *options.row_ids;
  } else {
    std::iota(row_ids.begin(), row_ids.end(), std::uint64_t{0});
  }

  const TrainingData data{theta, labels, weights, row_ids, num_classes};
  const auto num_trees = static_cast<std::size_t>(config.num_trees);
  std::vector<DecisionTree> trees(num_trees);
  std::vector<std::vector<std::uint32_t>> in_bag(num_trees);
  parallel_for(num_trees, options.workers, [&](std::size_t t) {
    const std::uint64_t tree_seed = derive_seed(train_seed, streams::kTree, t);
    Rng rng(tree_seed);
    std::vector<std::size_t> sample = draw_tree_sample(data, config, tree_seed, rng);
    in_bag[t].assign(n, 0);
    for (std::size_t r : sample) ++in_bag[t][r];
    TreeBuilder builder(data, config, std::move(sample), rng);
    trees[t] = builder.build();
  });
  Forest forest(std::move(trees), num_classes, d, config, train_seed);
  forest.set_in_bag_counts(std::move(in_bag));
  return forest;
}

Forest train_forest(const PooledDraws& pooled, const ForestConfig& config, std::uint64_t train_seed,
                    const TrainOptions& options) {
  detail::require(pooled.num_machines >= 2, "degenerate labels: need at least two machines");
  if (config.weight_adjustment && !options.case_weights) {
    TrainOptions with_weights = options;
    with_weights.case_weights = normalize_log_weights(pooled.log_density);
    return train_forest(pooled.theta, pooled.machine, pooled.num_machines, config, train_seed, with_weights);
  }
  return train_forest(pooled.theta, pooled.machine, pooled.num_machines, config, train_seed, options);
}

// ---- prediction ------------------------------------------------------------

void clamp_probability_row(std::span<double> row, double floor) {
  const std::size_t m = row.size();
  detail::require(m >= 1 && floor * static_cast<double>(m) < 1.0, "probability floor too large for row");
  std::vector<bool> pinned(m, false);
  // Raising entries to the floor shrinks the rest; repeat until no free
  // entry drops below the floor.
  for (std::size_t pass = 0; pass <= m; ++pass) {
    double free_mass = 0.0;
    std::size_t n_pinned = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (pinned[j]) {
        ++n_pinned;
      } else {
        free_mass += std::max(row[j], 0.0);
      }
    }
    const double target = 1.0 - floor * static_cast<double>(n_pinned);
    bool changed = false;
    for (std::size_t j = 0; j < m; ++j) {
      if (pinned[j]) {
        row[j] = floor;
        continue;
      }
      row[j] = free_mass > 0.0 ? std::max(row[j], 0.0) * target / free_mass
                               : target / static_cast<double>(m - n_pinned);
      if (row[j] < floor) {
        pinned[j] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (pinned[j]) row[j] = floor;
  }
}

Eigen::MatrixXd predict_raw(const Forest& forest, const Eigen::MatrixXd& points) {
  detail::require(!forest.trees().empty(), "forest has no trees");
  if (static_cast<std::size_t>(points.cols()) != forest.num_features()) {
    detail::fail_validation("dimension mismatch: forest trained on d=" + std::to_string(forest.num_features()) +
                            ", points have d=" + std::to_string(points.cols()));
  }
  const auto m = static_cast<Eigen::Index>(forest.num_classes());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.rows(), m);
  std::vector<double> x(static_cast<std::size_t>(points.cols()));
  const double scale = 1.0 / static_cast<double>(forest.trees().size());
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    for (Eigen::Index f = 0; f < points.cols(); ++f) x[static_cast<std::size_t>(f)] = points(r, f);
    for (const auto& tree : forest.trees()) {
      const auto freq = tree.leaf_frequencies(x.data());
      for (Eigen::Index j = 0; j < m; ++j) out(r, j) += freq[static_cast<std::size_t>(j)];
    }
    out.row(r) *= scale;
  }
  return out;
}

ClassProbabilityMatrix predict_proba(const Forest& forest, const Eigen::MatrixXd& points) {
  Eigen::MatrixXd raw = predict_raw(forest, points);
  std::vector<double> row(static_cast<std::size_t>(raw.cols()));
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) row[static_cast<std::size_t>(j)] = raw(r, j);
    clamp_probability_row(row);
    for (Eigen::Index j = 0; j < raw.cols(); ++j) raw(r, j) = row[static_cast<std::size_t>(j)];
  }
  return raw;
}

double out_of_bag_accuracy(const Forest& forest, const PooledDraws& pooled) {
  const auto& in_bag = forest.in_bag_counts();
  detail::require(!in_bag.empty(), "forest carries no in-bag information");
  detail::require(in_bag.front().size() == pooled.size(), "forest was trained on a different pool");
  detail::require(pooled.dim() == forest.num_features(), "dimension mismatch");
  const std::size_t m = forest.num_classes();
  std::vector<double> acc(m);
  std::vector<double> x(pooled.dim());
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < pooled.size(); ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    std::size_t votes = 0;
    for (std::size_t f = 0; f < x.size(); ++f) {
      x[f] = pooled.theta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));
    }
    for (std::size_t t = 0; t < forest.trees().size(); ++t) {
      if (in_bag[t][r] != 0) continue;
      const auto freq = forest.trees()[t].leaf_frequencies(x.data());
      for (std::size_t j = 0; j < m; ++j) acc[j] += freq[j];
      ++votes;
    }
    if (votes == 0) continue;
    ++evaluated;
    const auto best = static_cast<int>(std::max_element(acc.begin(), acc.end()) - acc.begin());
    if (best == pooled.machine[r]) ++correct;
  }
  if (evaluated == 0) detail::fail_validation("no out-of-bag rows: every row is in every tree's sample");
  return static_cast<double>(correct) / static_cast<double>(evaluated);
}

}  // namespace pmcmc
