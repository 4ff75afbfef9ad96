#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "survclf/classify/classify.hpp"
#include "survclf/cohort/cohort.hpp"
#include "survclf/cohort/feature_io.hpp"
#include "survclf/core/json_util.hpp"
#include "survclf/explain/explain.hpp"
#include "survclf/survival/forest.hpp"
#include "survclf/synthgen/synthgen.hpp"

namespace survclf::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct ExplainSettings {
  explain::SurfaceMode mode = explain::SurfaceMode::Binary;
  std::size_t background_size = 100;
  std::size_t n_explained = 20;
  std::size_t budget = 2048;
  cohort::Split split = cohort::Split::Test;
  std::size_t top_k = 20;
  std::optional<fs::path> external_ranking;
};

struct RunConfig {
  std::string name = "cohort";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  fs::path input;   // record bundle directory
  fs::path output;  // artifact directory
  fs::path model;
  std::optional<json> synth;  // raw block, parsed on demand by `synth`
  cohort::CohortSpec cohort;
  std::vector<cohort::FeatureSpec> features;
  std::optional<fs::path> features_file;  // features resolved lazily when set
  survival::ForestParams forest;
  classify::ClassifierConfig classifier;
  classify::RiskSource rs_risk_source = classify::RiskSource::OutOfBag;
  double histogram_bin_days = 30.0;
  ExplainSettings explain;

  std::vector<std::string> feature_names() const {
    std::vector<std::string> out;
    for (const auto& f : features) out.push_back(f.name);
    return out;
  }
};

// Independent random streams derived from the master seed.
enum Stream : std::uint64_t { kForestStream = 1, kExplainStream = 2 };

inline std::uint64_t stream_seed(std::uint64_t seed, Stream s) { return mix_seed(seed, s); }

inline json read_json_file(const fs::path& p, bool config) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    const auto msg = "cannot open " + p.string();
    if (config) throw ConfigError(msg);
    throw DataError(msg);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    const auto msg = p.string() + ": invalid JSON (" + e.what() + ")";
    if (config) throw ConfigError(msg);
    throw DataError(msg);
  }
}

inline cohort::CohortSpec parse_cohort(const json& j, std::uint64_t seed) {
  const std::string ctx = "cohort";
  cohort::CohortSpec c;
  c.disease_codes = cohort::CodeSet::parse(jsonu::get<std::vector<std::string>>(j, "disease_codes", ctx));
  c.window_days = jsonu::get_or(j, "window_days", c.window_days, ctx);
  c.approach = cohort::parse_approach(jsonu::get_or<std::string>(j, "approach", "similar", ctx));
  c.min_encounters = jsonu::get_or(j, "min_encounters", c.min_encounters, ctx);
  c.min_span_days = jsonu::get_or(j, "min_span_days", c.min_span_days, ctx);
  c.balance_ratio = jsonu::get_or(j, "balance_ratio", c.balance_ratio, ctx);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    c.split.train = jsonu::get<double>(s, "train", "cohort.split");
    c.split.validation = jsonu::get<double>(s, "validation", "cohort.split");
    c.split.test = jsonu::get<double>(s, "test", "cohort.split");
  }
  c.seed = seed;
  c.validate();
  return c;
}

inline survival::ForestParams parse_forest(const json& j, std::uint64_t seed) {
  const std::string ctx = "forest";
  survival::ForestParams p;
  if (!j.is_null()) {
    p.n_trees = jsonu::get_or(j, "n_trees", p.n_trees, ctx);
    p.mtry = jsonu::get_or(j, "mtry", p.mtry, ctx);
    p.min_split = jsonu::get_or(j, "min_split", p.min_split, ctx);
    p.min_leaf = jsonu::get_or(j, "min_leaf", p.min_leaf, ctx);
    p.max_depth = jsonu::get_or(j, "max_depth", p.max_depth, ctx);
  }
  if (p.n_trees < 1) throw ConfigError("forest.n_trees must be >= 1");
  if (p.mtry < 0) throw ConfigError("forest.mtry must be >= 0 (0 = default)");
  if (p.min_leaf < 1) throw ConfigError("forest.min_leaf must be >= 1");
  if (p.min_split < 2) throw ConfigError("forest.min_split must be >= 2");
  if (p.max_depth < 0) throw ConfigError("forest.max_depth must be >= 0 (0 = unlimited)");
  p.seed = stream_seed(seed, kForestStream);
  return p;
}

inline RunConfig parse_config(const json& j, const fs::path& base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.seed = jsonu::get<std::uint64_t>(j, "seed");
  c.name = jsonu::get_or<std::string>(j, "name", c.name);
  c.threads = jsonu::get_or<std::size_t>(j, "threads", 1);
  auto resolve = [&](const fs::path& p) { return p.is_absolute() || base.empty() ? p : base / p; };
  const auto& paths = jsonu::require(j, "paths");
  c.input = resolve(jsonu::get<std::string>(paths, "input", "paths"));
  c.output = resolve(jsonu::get<std::string>(paths, "output", "paths"));
  c.model = paths.contains("model") ? resolve(jsonu::get<std::string>(paths, "model", "paths")) : c.output / "model.json";
  if (j.contains("synth")) c.synth = j.at("synth");
  c.cohort = parse_cohort(jsonu::require(j, "cohort"), c.seed);

  const auto& fj = jsonu::require(j, "features");
  if (fj.is_string()) {
    c.features_file = resolve(fj.get<std::string>());
  } else {
    c.features = cohort::features_from_json(fj);
  }
  c.forest = parse_forest(j.value("forest", json()), c.seed);

  const auto cj = j.value("classifier", json::object());
  const std::string cc = "classifier";
  c.classifier.technique = classify::parse_technique(jsonu::get_or<std::string>(cj, "technique", "sp", cc));
  c.classifier.horizon_days = jsonu::get_or(cj, "horizon_days", c.classifier.horizon_days, cc);
  c.classifier.sp_threshold = jsonu::get_or(cj, "sp_threshold", c.classifier.sp_threshold, cc);
  c.classifier.rs_objective = classify::parse_objective(jsonu::get_or<std::string>(cj, "rs_objective", "f1", cc));
  c.classifier.ln_aggregation =
      classify::parse_aggregation(jsonu::get_or<std::string>(cj, "ln_aggregation", "average_probability", cc));
  c.rs_risk_source = classify::parse_risk_source(jsonu::get_or<std::string>(cj, "rs_risk_source", "oob", cc));
  if (cj.contains("rs_threshold")) throw ConfigError("classifier.rs_threshold is learned by train, not configured");
  {
    auto probe = c.classifier;
    probe.technique = classify::Technique::SP;
    probe.validate();
  }

  c.histogram_bin_days = jsonu::get_or(j.value("times", json::object()), "bin_days", c.histogram_bin_days, "times");

  const auto ej = j.value("explain", json::object());
  const std::string ec = "explain";
  auto& e = c.explain;
  e.mode = explain::parse_mode(jsonu::get_or<std::string>(ej, "mode", "binary", ec));
  e.background_size = jsonu::get_or(ej, "background_size", e.background_size, ec);
  e.n_explained = jsonu::get_or(ej, "n_explained", e.n_explained, ec);
  e.budget = jsonu::get_or(ej, "budget", e.budget, ec);
  e.split = cohort::parse_split(jsonu::get_or<std::string>(ej, "split", "test", ec));
  e.top_k = jsonu::get_or(ej, "top_k", e.top_k, ec);
  if (ej.contains("external_ranking") && !ej.at("external_ranking").is_null()) {
    e.external_ranking = resolve(jsonu::get<std::string>(ej, "external_ranking", ec));
  }
  if (e.background_size == 0) throw ConfigError("explain.background_size must be >= 1");
  if (e.top_k == 0) throw ConfigError("explain.top_k must be >= 1");
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  return parse_config(read_json_file(path, true), path.parent_path());
}

// Feature list, reading the referenced file (typically a synth features.json) if needed.
inline const std::vector<cohort::FeatureSpec>& resolve_features(RunConfig& c) {
  if (c.features_file && c.features.empty()) {
    c.features = cohort::features_from_json(read_json_file(*c.features_file, true), c.features_file->filename().string());
  }
  if (c.features.empty()) throw ConfigError("features must not be empty");
  return c.features;
}

}  // namespace survclf::pipeline
