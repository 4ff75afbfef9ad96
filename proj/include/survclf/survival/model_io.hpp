#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "survclf/core/error.hpp"
#include "survclf/survival/forest.hpp"

namespace survclf::model_io {

using nlohmann::json;

inline constexpr const char* kFormat = "survclf-model";
inline constexpr int kVersion = 1;

inline json params_to_json(const survival::ForestParams& p) {
  return {{"n_trees", p.n_trees}, {"mtry", p.mtry},         {"min_split", p.min_split},
          {"min_leaf", p.min_leaf}, {"max_depth", p.max_depth}, {"bootstrap", p.bootstrap}};
}

inline survival::ForestParams params_from_json(const json& j, std::uint64_t seed) {
  survival::ForestParams p;
  p.n_trees = j.at("n_trees").get<int>();
  p.mtry = j.at("mtry").get<int>();
  p.min_split = j.at("min_split").get<int>();
  p.min_leaf = j.at("min_leaf").get<int>();
  p.max_depth = j.at("max_depth").get<int>();
  p.bootstrap = j.at("bootstrap").get<bool>();
  p.seed = seed;
  return p;
}

inline json nodes_to_json(const std::vector<tree::Node>& nodes) {
  json feature = json::array(), left_set = json::array(), left = json::array(),
       right = json::array(), leaf = json::array();
  for (const auto& n : nodes) {
    feature.push_back(n.feature);
    left_set.push_back(n.left_set);
    left.push_back(n.left);
    right.push_back(n.right);
    leaf.push_back(n.leaf);
  }
  return {{"feature", feature}, {"left_set", left_set}, {"left", left}, {"right", right},
          {"leaf", leaf}};
}

inline std::vector<tree::Node> nodes_from_json(const json& j, std::size_t n_leaves,
                                               std::size_t n_features) {
  const auto& feature = j.at("feature");
  const std::size_t n = feature.size();
  std::vector<tree::Node> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = nodes[i];
    node.feature = feature.at(i).get<int>();
    node.left_set = j.at("left_set").at(i).get<std::uint64_t>();
    node.left = j.at("left").at(i).get<int>();
    node.right = j.at("right").at(i).get<int>();
    node.leaf = j.at("leaf").at(i).get<int>();
    const bool ok = node.is_leaf()
                        ? static_cast<std::size_t>(node.leaf) < n_leaves
                        : node.feature >= 0 && static_cast<std::size_t>(node.feature) < n_features &&
                              node.left > static_cast<int>(i) && node.right > static_cast<int>(i) &&
                              static_cast<std::size_t>(node.left) < n &&
                              static_cast<std::size_t>(node.right) < n;
    if (!ok) throw DataError("corrupt model: inconsistent node " + std::to_string(i));
  }
  if (n == 0) throw DataError("corrupt model: empty tree");
  return nodes;
}

inline json header(const char* type, std::uint64_t seed, const std::vector<int>& arities) {
  return {{"format", kFormat}, {"version", kVersion}, {"type", type}, {"seed", seed},
          {"arities", arities}};
}

inline json to_json(const survival::SurvivalForest& f) {
  json j = header("survival_forest", f.params().seed, f.arities());
  j["params"] = params_to_json(f.params());
  j["event_time_grid"] = f.event_time_grid();
  json trees = json::array();
  for (const auto& t : f.trees()) {
    json n0 = json::array(), n1 = json::array(), offsets = json::array(), idx = json::array(),
         chf = json::array(), surv = json::array();
    std::size_t off = 0;
    for (const auto& leaf : t.leaves) {
      n0.push_back(leaf.n0);
      n1.push_back(leaf.n1);
      offsets.push_back(off);
      off += leaf.grid_index.size();
      for (std::size_t k = 0; k < leaf.grid_index.size(); ++k) {
        idx.push_back(leaf.grid_index[k]);
        chf.push_back(leaf.chf[k]);
        surv.push_back(leaf.surv[k]);
      }
    }
    offsets.push_back(off);
    trees.push_back({{"nodes", nodes_to_json(t.nodes)},
                     {"leaves",
                      {{"n0", n0}, {"n1", n1}, {"offsets", offsets}, {"grid_index", idx},
                       {"chf", chf}, {"surv", surv}}}});
  }
  j["trees"] = std::move(trees);
  return j;
}

// Checks format tag, version and type; throws DataError otherwise.
inline void check_header(const json& j, const std::string& type) {
  if (!j.is_object() || j.value("format", "") != kFormat) {
    throw DataError("not a survclf model file");
  }
  const int version = j.at("version").get<int>();
  if (version != kVersion) {
    throw DataError("unsupported model version " + std::to_string(version) + " (expected " +
                    std::to_string(kVersion) + ")");
  }
  if (j.at("type").get<std::string>() != type) {
    throw DataError("model type is '" + j.at("type").get<std::string>() + "', expected '" + type +
                    "'");
  }
}

inline survival::SurvivalForest survival_forest_from_json(const json& j) {
  check_header(j, "survival_forest");
  try {
    const auto seed = j.at("seed").get<std::uint64_t>();
    auto arities = j.at("arities").get<std::vector<int>>();
    auto grid = j.at("event_time_grid").get<std::vector<int>>();
    std::vector<survival::SurvivalTree> trees;
    for (const auto& jt : j.at("trees")) {
      survival::SurvivalTree t;
      const auto& jl = jt.at("leaves");
      const auto offsets = jl.at("offsets").get<std::vector<std::size_t>>();
      const auto n0 = jl.at("n0").get<std::vector<int>>();
      const auto n1 = jl.at("n1").get<std::vector<int>>();
      const auto idx = jl.at("grid_index").get<std::vector<int>>();
      const auto chf = jl.at("chf").get<std::vector<double>>();
      const auto surv = jl.at("surv").get<std::vector<double>>();
      if (offsets.size() != n0.size() + 1 || n1.size() != n0.size() || chf.size() != idx.size() ||
          surv.size() != idx.size() || offsets.back() != idx.size()) {
        throw DataError("corrupt model: leaf table sizes disagree");
      }
      for (std::size_t l = 0; l < n0.size(); ++l) {
        survival::SurvivalLeaf leaf;
        leaf.n0 = n0[l];
        leaf.n1 = n1[l];
        for (std::size_t k = offsets[l]; k < offsets[l + 1]; ++k) {
          if (idx[k] < 0 || static_cast<std::size_t>(idx[k]) >= grid.size()) {
            throw DataError("corrupt model: grid index out of range");
          }
          leaf.grid_index.push_back(idx[k]);
          leaf.chf.push_back(chf[k]);
          leaf.surv.push_back(surv[k]);
        }
        t.leaves.push_back(std::move(leaf));
      }
      t.nodes = nodes_from_json(jt.at("nodes"), t.leaves.size(), arities.size());
      trees.push_back(std::move(t));
    }
    if (trees.empty()) throw DataError("corrupt model: no trees");
    return survival::SurvivalForest(params_from_json(j.at("params"), seed), std::move(arities),
                                    std::move(grid), std::move(trees));
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt model: ") + e.what());
  }
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump() << '\n';
}

inline json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("corrupt model file " + path + ": " + e.what());
  }
}

inline void save_model(const std::string& path, const survival::SurvivalForest& f) {
  write_json(path, to_json(f));
}

inline survival::SurvivalForest load_model(const std::string& path) {
  return survival_forest_from_json(read_json(path));
}

}  // namespace survclf::model_io
