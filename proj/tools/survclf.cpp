#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "survclf/pipeline/pipeline.hpp"

using namespace survclf;

int main(int argc, char** argv) {
  CLI::App app{"survclf: survival-forest disease classification pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::string split, approach, technique;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  for (const auto& name : pipeline::kSubcommands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--split", split, "train, validation or test");
    sub->add_option("--approach", approach, "similar, overlap or distinct (overrides config)");
    sub->add_option("--technique", technique, "rs, sp or ln (overrides config)");
    sub->add_option("--seed", seed, "master seed (overrides config)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores (overrides config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const auto* sub = app.get_subcommands().front();
  try {
    auto cfg = pipeline::load_config(config_path);
    pipeline::Overrides o;
    if (!split.empty()) o.split = cohort::parse_split(split);
    if (!approach.empty()) o.approach = cohort::parse_approach(approach);
    if (!technique.empty()) o.technique = classify::parse_technique(technique);
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--threads")) o.threads = threads;
    std::cout << pipeline::run(sub->get_name(), cfg, o) << std::flush;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
