#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "survclf/core/error.hpp"
#include "survclf/core/parallel.hpp"
#include "survclf/core/rng.hpp"
#include "survclf/survival/forest.hpp"
#include "survclf/survival/model_io.hpp"
#include "survclf/tree/tree.hpp"

namespace survclf::baseline {

using survival::ForestParams;
using tree::FeatureMatrix;

// Plain CART defaults: grow until pure.
inline ForestParams default_params() {
  ForestParams p;
  p.min_leaf = 1;
  p.min_split = 2;
  return p;
}

struct ClassLeaf {
  int n0 = 0, n1 = 0;
  double positive_fraction() const { return static_cast<double>(n1) / static_cast<double>(n0 + n1); }
};

struct ClassificationTree {
  std::vector<tree::Node> nodes;
  std::vector<ClassLeaf> leaves;
  const ClassLeaf& leaf_for(std::span<const int> x) const { return leaves[tree::find_leaf(nodes, x)]; }
};

class ClassificationForest {
 public:
  ClassificationForest(ForestParams params, std::vector<int> arities, std::vector<ClassificationTree> trees)
      : params_(params), arities_(std::move(arities)), trees_(std::move(trees)) {}

  // Mean leaf positive fraction over trees.
  double predict_proba(std::span<const int> x) const {
    tree::check_row(x, arities_);
    double s = 0;
    for (const auto& t : trees_) s += t.leaf_for(x).positive_fraction();
    return s / static_cast<double>(trees_.size());
  }
  int predict(std::span<const int> x) const { return predict_proba(x) > 0.5 ? 1 : 0; }

  const ForestParams& params() const { return params_; }
  const std::vector<int>& arities() const { return arities_; }
  const std::vector<ClassificationTree>& trees() const { return trees_; }

 private:
  ForestParams params_;
  std::vector<int> arities_;
  std::vector<ClassificationTree> trees_;
};

namespace detail {

// Gini decrease n*G(parent) - nl*G(left) - nr*G(right), written with counts.
inline double gini_gain(double n, double pos, double nl, double pl) {
  auto weighted = [](double m, double p) { return m > 0 ? 2.0 * p * (m - p) / m : 0.0; };
  return weighted(n, pos) - weighted(nl, pl) - weighted(n - nl, pos - pl);
}

class ClassificationTreeBuilder {
 public:
  ClassificationTreeBuilder(const FeatureMatrix& x, std::span<const int> y, const std::vector<int>& arities,
                            const ForestParams& params, int mtry, std::uint64_t seed)
      : x_(x), y_(y), arities_(arities), params_(params), mtry_(mtry), rng_(seed) {}

  ClassificationTree build() {
    const std::size_t n = y_.size();
    std::vector<std::size_t> samples(n);
    if (params_.bootstrap) {
      for (auto& s : samples) s = rng_.index(n);
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t>& samples, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const auto split = (params_.max_depth > 0 && depth >= params_.max_depth) ? tree::SplitChoice{}
                                                                              : find_split(samples);
    if (!split.valid()) {
      ClassLeaf leaf;
      for (auto s : samples) (y_[s] ? leaf.n1 : leaf.n0)++;
      tree_.nodes[id].leaf = static_cast<int>(tree_.leaves.size());
      tree_.leaves.push_back(leaf);
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto s : samples) (tree::contains(split.left_set, x_(s, split.feature)) ? left : right).push_back(s);
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
    const double n = static_cast<double>(samples.size());
    if (static_cast<int>(samples.size()) < params_.min_split) return best;
    double pos = 0;
    for (auto s : samples) pos += y_[s];
    if (pos == 0 || pos == n) return best;

    auto features = rng_.sample_without_replacement(arities_.size(), static_cast<std::size_t>(mtry_));
    std::sort(features.begin(), features.end());
    for (auto f : features) {
      tree::CategoryStats st{std::vector<double>(arities_[f], 0.0), std::vector<double>(arities_[f], 0.0)};
      for (auto s : samples) {
        const int c = x_(s, f);
        st.count[c] += 1;
        st.events[c] += y_[s];
      }
      for (auto cut : tree::ordered_cuts(st)) {
        double nl = 0, pl = 0;
        for (int c = 0; c < arities_[f]; ++c) {
          if (tree::contains(cut, c)) {
            nl += st.count[c];
            pl += st.events[c];
          }
        }
        if (nl < params_.min_leaf || n - nl < params_.min_leaf) continue;
        best.offer(gini_gain(n, pos, nl, pl), static_cast<int>(f), cut);
      }
    }
    return best;
  }

  const FeatureMatrix& x_;
  std::span<const int> y_;
  const std::vector<int>& arities_;
  const ForestParams& params_;
  int mtry_;
  Rng rng_;
  ClassificationTree tree_;
};

}  // namespace detail

// Gini CART trees on the event labels; tree t uses seed + t.
inline ClassificationForest fit_classifier(const FeatureMatrix& x, std::span<const int> y,
                                           const std::vector<int>& arities,
                                           const ForestParams& params = default_params(),
                                           std::size_t threads = 1) {
  if (x.rows() != y.size()) throw DataError("label count does not match feature rows");
  if (y.empty()) throw DataError("empty training set");
  tree::check_arities(x, arities);
  for (int v : y) {
    if (v != 0 && v != 1) throw DataError("labels must be 0 or 1");
  }
  if (params.n_trees < 1) throw ConfigError("forest.n_trees must be >= 1");
  if (params.min_leaf < 1) throw ConfigError("forest.min_leaf must be >= 1");
  const int mtry = params.mtry > 0 ? std::min<int>(params.mtry, static_cast<int>(arities.size()))
                                   : tree::default_mtry(arities.size());
  std::vector<ClassificationTree> trees(params.n_trees);
  parallel_for(trees.size(), threads, [&](std::size_t t) {
    detail::ClassificationTreeBuilder b(x, y, arities, params, mtry, params.seed + t);
    trees[t] = b.build();
  });
  return ClassificationForest(params, arities, std::move(trees));
}

inline nlohmann::json to_json(const ClassificationForest& f) {
  auto j = model_io::header("classification_forest", f.params().seed, f.arities());
  j["params"] = model_io::params_to_json(f.params());
  auto& jt = j["trees"] = nlohmann::json::array();
  for (const auto& t : f.trees()) {
    std::vector<int> n0, n1;
    for (const auto& l : t.leaves) {
      n0.push_back(l.n0);
      n1.push_back(l.n1);
    }
    jt.push_back({{"nodes", model_io::nodes_to_json(t.nodes)}, {"leaves", {{"n0", n0}, {"n1", n1}}}});
  }
  return j;
}

inline ClassificationForest classification_forest_from_json(const nlohmann::json& j) {
  model_io::check_header(j, "classification_forest");
  try {
    const auto seed = j.at("seed").get<std::uint64_t>();
    auto arities = j.at("arities").get<std::vector<int>>();
    std::vector<ClassificationTree> trees;
    for (const auto& jt : j.at("trees")) {
      ClassificationTree t;
      const auto n0 = jt.at("leaves").at("n0").get<std::vector<int>>();
      const auto n1 = jt.at("leaves").at("n1").get<std::vector<int>>();
      if (n0.size() != n1.size()) throw DataError("corrupt model: leaf table sizes disagree");
      for (std::size_t l = 0; l < n0.size(); ++l) {
        if (n0[l] < 0 || n1[l] < 0 || n0[l] + n1[l] == 0) throw DataError("corrupt model: empty leaf");
        t.leaves.push_back({n0[l], n1[l]});
      }
      t.nodes = model_io::nodes_from_json(jt.at("nodes"), t.leaves.size(), arities.size());
      trees.push_back(std::move(t));
    }
    if (trees.empty()) throw DataError("corrupt model: no trees");
    return ClassificationForest(model_io::params_from_json(j.at("params"), seed), std::move(arities),
                                std::move(trees));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt model: ") + e.what());
  }
}

}  // namespace survclf::baseline
