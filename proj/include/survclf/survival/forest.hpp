#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "survclf/core/error.hpp"
#include "survclf/core/parallel.hpp"
#include "survclf/core/rng.hpp"
#include "survclf/survival/estimators.hpp"
#include "survclf/survival/step_function.hpp"
#include "survclf/tree/tree.hpp"

namespace survclf::survival {

using tree::FeatureMatrix;

struct SurvivalData {
  std::vector<int> time;   // days, >= 1
  std::vector<int> event;  // 0 or 1
  FeatureMatrix x;

  std::size_t size() const { return time.size(); }
};

struct ForestParams {
  int n_trees = 100;
  int mtry = 0;  // 0 selects ceil(sqrt(M))
  int min_split = 6;
  int min_leaf = 3;
  int max_depth = 0;  // 0 is unlimited
  bool bootstrap = true;
  std::uint64_t seed = 0;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

// Leaf curves are stored sparsely: the forest-grid positions where the leaf's
// Nelson-Aalen / Kaplan-Meier estimates change, and the values from there on.
// Expanded over the grid they are exactly the leaf estimators evaluated on it.
struct SurvivalLeaf {
  int n0 = 0;  // event = 0 training samples (with bootstrap multiplicity)
  int n1 = 0;  // event = 1 training samples
  std::vector<int> grid_index;
  std::vector<double> chf;
  std::vector<double> surv;

  // Sum of the leaf's cumulative hazard over the whole grid.
  double chf_mass(std::size_t grid_size) const {
    double mass = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < grid_index.size(); ++k) {
      mass += (chf[k] - prev) * static_cast<double>(grid_size - grid_index[k]);
      prev = chf[k];
    }
    return mass;
  }

  double survival_at_index(int g) const {
    const auto it = std::upper_bound(grid_index.begin(), grid_index.end(), g);
    return it == grid_index.begin() ? 1.0 : surv[static_cast<std::size_t>(it - grid_index.begin()) - 1];
  }
  double chf_at_index(int g) const {
    const auto it = std::upper_bound(grid_index.begin(), grid_index.end(), g);
    return it == grid_index.begin() ? 0.0 : chf[static_cast<std::size_t>(it - grid_index.begin()) - 1];
  }

  friend bool operator==(const SurvivalLeaf&, const SurvivalLeaf&) = default;
};

struct SurvivalTree {
  std::vector<tree::Node> nodes;
  std::vector<SurvivalLeaf> leaves;

  const SurvivalLeaf& leaf_for(std::span<const int> x) const {
    return leaves[tree::find_leaf(nodes, x)];
  }
};

class SurvivalForest {
 public:
  SurvivalForest() = default;
  SurvivalForest(ForestParams params, std::vector<int> arities, std::vector<int> grid,
                 std::vector<SurvivalTree> trees)
      : params_(params), arities_(std::move(arities)), grid_(std::move(grid)), trees_(std::move(trees)) {
    refresh();
  }

  const ForestParams& params() const { return params_; }
  const std::vector<int>& arities() const { return arities_; }
  const std::vector<int>& event_time_grid() const { return grid_; }
  const std::vector<SurvivalTree>& trees() const { return trees_; }
  std::size_t n_trees() const { return trees_.size(); }

  // Ensemble survival: pointwise mean of the reached leaves' curves on the grid.
  StepFunction predict_survival(std::span<const int> x) const {
    tree::check_row(x, arities_);
    const std::size_t g = grid_.size();
    std::vector<double> sum(g, 0.0);
    for (const auto& t : trees_) {
      const auto& leaf = t.leaf_for(x);
      double cur = 1.0;
      std::size_t k = 0;
      for (std::size_t i = 0; i < g; ++i) {
        while (k < leaf.grid_index.size() && leaf.grid_index[k] == static_cast<int>(i)) {
          cur = leaf.surv[k++];
        }
        sum[i] += cur;
      }
    }
    const double n = static_cast<double>(trees_.size());
    for (auto& v : sum) v /= n;
    return {std::vector<double>(grid_.begin(), grid_.end()), std::move(sum), 1.0};
  }

  // Ensemble cumulative hazard on the grid.
  StepFunction predict_chf(std::span<const int> x) const {
    tree::check_row(x, arities_);
    std::vector<double> sum(grid_.size(), 0.0);
    for (const auto& t : trees_) {
      const auto& leaf = t.leaf_for(x);
      for (std::size_t i = 0; i < grid_.size(); ++i) sum[i] += leaf.chf_at_index(static_cast<int>(i));
    }
    for (auto& v : sum) v /= static_cast<double>(trees_.size());
    return {std::vector<double>(grid_.begin(), grid_.end()), std::move(sum), 0.0};
  }

  // Risk score: ensemble cumulative-hazard mass over the event-time grid.
  double predict_risk(std::span<const int> x) const {
    tree::check_row(x, arities_);
    double sum = 0.0;
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      sum += leaf_mass_[t][tree::find_leaf(trees_[t].nodes, x)];
    }
    return sum / static_cast<double>(trees_.size());
  }

  // Cumulative-hazard mass of the leaf reached in one tree.
  double tree_risk(std::size_t t, std::span<const int> x) const {
    return leaf_mass_[t][tree::find_leaf(trees_[t].nodes, x)];
  }

  // Mean over trees of the leaf survival at `day` (right-constant past the grid).
  double survival_at(std::span<const int> x, double day) const {
    tree::check_row(x, arities_);
    const int g = grid_position(day);
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.leaf_for(x).survival_at_index(g);
    return sum / static_cast<double>(trees_.size());
  }

  // (n0, n1) of the leaf reached in every tree.
  std::vector<std::pair<int, int>> leaf_distribution(std::span<const int> x) const {
    tree::check_row(x, arities_);
    std::vector<std::pair<int, int>> out;
    out.reserve(trees_.size());
    for (const auto& t : trees_) {
      const auto& leaf = t.leaf_for(x);
      out.emplace_back(leaf.n0, leaf.n1);
    }
    return out;
  }

  // Index of the last grid time <= day, -1 when day precedes the grid.
  int grid_position(double day) const {
    return static_cast<int>(std::upper_bound(grid_.begin(), grid_.end(), day) - grid_.begin()) - 1;
  }

 private:
  void refresh() {
    leaf_mass_.clear();
    for (const auto& t : trees_) {
      std::vector<double> m;
      m.reserve(t.leaves.size());
      for (const auto& leaf : t.leaves) m.push_back(leaf.chf_mass(grid_.size()));
      leaf_mass_.push_back(std::move(m));
    }
  }

  ForestParams params_;
  std::vector<int> arities_;
  std::vector<int> grid_;
  std::vector<SurvivalTree> trees_;
  std::vector<std::vector<double>> leaf_mass_;
};

// Bootstrap draw of tree t: n indices from the tree's own generator. Tree
// growth continues from the same generator state.
inline std::vector<std::size_t> bootstrap_draw(Rng& rng, std::size_t n) {
  std::vector<std::size_t> samples(n);
  for (auto& s : samples) s = rng.index(n);
  return samples;
}

namespace detail {

class SurvivalTreeBuilder {
 public:
  SurvivalTreeBuilder(const SurvivalData& data, const std::vector<int>& arities,
                      const std::vector<int>& grid, const ForestParams& params, int mtry,
                      std::uint64_t seed)
      : data_(data), arities_(arities), grid_(grid), params_(params), mtry_(mtry), rng_(seed) {}

  SurvivalTree build() {
    const std::size_t n = data_.size();
    std::vector<std::size_t> samples(n);
    if (params_.bootstrap) {
      samples = bootstrap_draw(rng_, n);
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    // Time-sorted once; children inherit the order by stable partition.
    std::stable_sort(samples.begin(), samples.end(), [&](std::size_t a, std::size_t b) {
      return data_.time[a] < data_.time[b];
    });
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t>& samples, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const auto split = (params_.max_depth > 0 && depth >= params_.max_depth)
                           ? tree::SplitChoice{}
                           : find_split(samples);
    if (!split.valid()) {
      tree_.nodes[id].leaf = static_cast<int>(tree_.leaves.size());
      tree_.leaves.push_back(make_leaf(samples));
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto s : samples) {
      (tree::contains(split.left_set, data_.x(s, split.feature)) ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();
    tree_.nodes[id].feature = split.feature;
    tree_.nodes[id].left_set = split.left_set;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  tree::SplitChoice find_split(const std::vector<std::size_t>& samples) {
    tree::SplitChoice best;
    const auto n = samples.size();
    if (static_cast<int>(n) < params_.min_split) return best;
    bool any_event = false;
    for (auto s : samples) any_event = any_event || data_.event[s];
    if (!any_event) return best;

    const std::size_t m = arities_.size();
    auto features = rng_.sample_without_replacement(m, static_cast<std::size_t>(mtry_));
    std::sort(features.begin(), features.end());
    // Node samples are kept in time order, so positions 0..n-1 are the sorted order.
    gather(samples);
    const std::span<const std::size_t> order(identity(n).data(), n);
    column_.resize(n);
    for (auto f : features) {
      tree::CategoryStats st{std::vector<double>(arities_[f], 0.0),
                             std::vector<double>(arities_[f], 0.0)};
      for (std::size_t p = 0; p < n; ++p) {
        const int c = data_.x(samples[p], f);
        column_[p] = c;
        st.count[c] += 1;
        st.events[c] += event_buf_[p];
      }
      for (auto cut : tree::ordered_cuts(st)) {
        double n_left = 0;
        for (int c = 0; c < arities_[f]; ++c) {
          if (tree::contains(cut, c)) n_left += st.count[c];
        }
        if (n_left < params_.min_leaf || static_cast<double>(n) - n_left < params_.min_leaf) {
          continue;
        }
        const auto stat = logrank_sorted(time_buf_, event_buf_, order, [&](std::size_t p) {
          return tree::contains(cut, column_[p]);
        });
        if (stat) best.offer(*stat, static_cast<int>(f), cut);
      }
    }
    return best;
  }

  void gather(const std::vector<std::size_t>& samples) {
    time_buf_.resize(samples.size());
    event_buf_.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      time_buf_[i] = data_.time[samples[i]];
      event_buf_[i] = data_.event[samples[i]];
    }
  }
  const std::vector<std::size_t>& identity(std::size_t n) {
    while (identity_.size() < n) identity_.push_back(identity_.size());
    return identity_;
  }

  SurvivalLeaf make_leaf(const std::vector<std::size_t>& samples) {
    SurvivalLeaf leaf;
    for (auto s : samples) (data_.event[s] ? leaf.n1 : leaf.n0)++;
    gather(samples);
    const auto rt = risk_table_sorted(time_buf_, event_buf_,
                                      std::span<const std::size_t>(identity(samples.size()).data(),
                                                                   samples.size()));
    double h = 0.0, surv = 1.0;
    for (std::size_t j = 0; j < rt.time.size(); ++j) {
      h += rt.deaths[j] / rt.at_risk[j];
      surv *= 1.0 - rt.deaths[j] / rt.at_risk[j];
      const auto g = std::lower_bound(grid_.begin(), grid_.end(), rt.time[j]) - grid_.begin();
      leaf.grid_index.push_back(static_cast<int>(g));
      leaf.chf.push_back(h);
      leaf.surv.push_back(surv);
    }
    return leaf;
  }

  const SurvivalData& data_;
  const std::vector<int>& arities_;
  const std::vector<int>& grid_;
  const ForestParams& params_;
  int mtry_;
  Rng rng_;
  SurvivalTree tree_;
  std::vector<int> time_buf_, event_buf_, column_;
  std::vector<std::size_t> identity_;
};

}  // namespace detail

// Grows params.n_trees log-rank survival trees; tree t uses seed + t.
inline SurvivalForest fit_survival_forest(const SurvivalData& data, const std::vector<int>& arities,
                                          const ForestParams& params, std::size_t threads = 1) {
  if (data.time.size() != data.event.size() || data.time.size() != data.x.rows()) {
    throw DataError("survival data columns have different lengths");
  }
  tree::check_arities(data.x, arities);
  if (params.n_trees < 1) throw ConfigError("forest.n_trees must be >= 1");
  if (params.min_leaf < 1) throw ConfigError("forest.min_leaf must be >= 1");
  if (params.min_split < 2) throw ConfigError("forest.min_split must be >= 2");
  if (arities.empty()) throw DataError("no features");
  for (int a : arities) {
    if (a < 1 || a > 64) throw DataError("feature arity must lie in [1, 64]");
  }
  if (static_cast<int>(data.size()) < params.min_split) {
    throw DataError("training set smaller than min_split");
  }
  std::vector<int> grid;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.time[i] < 1) throw DataError("observation times must be >= 1 day");
    if (data.event[i] != 0 && data.event[i] != 1) throw DataError("event flags must be 0 or 1");
    if (data.event[i]) grid.push_back(data.time[i]);
  }
  if (grid.empty()) throw DataError("training data contains no events");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const int mtry = params.mtry > 0 ? std::min<int>(params.mtry, static_cast<int>(arities.size()))
                                   : tree::default_mtry(arities.size());
  std::vector<SurvivalTree> trees(params.n_trees);
  parallel_for(trees.size(), threads, [&](std::size_t t) {
    detail::SurvivalTreeBuilder b(data, arities, grid, params, mtry, params.seed + t);
    trees[t] = b.build();
  });
  return SurvivalForest(params, arities, std::move(grid), std::move(trees));
}

// Risk of each training row averaged over the trees that did not draw it.
// Bootstraps are regenerated from the tree seeds, so `x` must be the exact
// training matrix in training order. Rows drawn by every tree, and all rows
// of a forest grown without bootstrap, fall back to the full-forest risk.
inline std::vector<double> out_of_bag_risk(const SurvivalForest& forest, const tree::FeatureMatrix& x,
                                           std::size_t threads = 1) {
  const std::size_t n = x.rows(), n_trees = forest.n_trees();
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  if (forest.params().bootstrap) {
    std::vector<std::vector<char>> inbag(n_trees);
    parallel_for(n_trees, threads, [&](std::size_t t) {
      Rng rng(forest.params().seed + t);
      inbag[t].assign(n, 0);
      for (auto s : bootstrap_draw(rng, n)) inbag[t][s] = 1;
    });
    parallel_for(n, threads, [&](std::size_t i) {
      for (std::size_t t = 0; t < n_trees; ++t) {
        if (!inbag[t][i]) {
          sum[i] += forest.tree_risk(t, x.row(i));
          ++count[i];
        }
      }
    });
  }
  std::vector<double> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    out[i] = count[i] ? sum[i] / static_cast<double>(count[i]) : forest.predict_risk(x.row(i));
  });
  return out;
}

}  // namespace survclf::survival
