// Library walk-through: simulate a cohort, window it, fit a survival forest,
// classify with each technique and explain one patient.
//
//   ./quickstart [n_patients] [seed]

#include <cstdio>
#include <cstdlib>

#include "survclf/classify/classify.hpp"
#include "survclf/cohort/cohort.hpp"
#include "survclf/explain/explain.hpp"
#include "survclf/metrics/evaluate.hpp"
#include "survclf/synthgen/synthgen.hpp"

using namespace survclf;

static metrics::EvalData to_eval(const std::vector<cohort::LabeledSample>& rows, std::size_t m) {
  metrics::EvalData d;
  d.x = tree::FeatureMatrix(0, m);
  for (const auto& r : rows) {
    d.time.push_back(r.time_days);
    d.event.push_back(r.event);
    d.x.push_row(r.features);
  }
  return d;
}

int main(int argc, char** argv) {
  synthgen::SynthSpec spec;
  spec.n_patients = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 3000;
  spec.seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
  spec.features = synthgen::binary_features(10, 4, 1.5);
  const auto synth = synthgen::generate(spec);
  const auto features = spec.feature_specs();

  cohort::CohortSpec cs;
  cs.disease_codes = cohort::CodeSet::parse({spec.disease_code});
  cs.approach = cohort::Approach::Distinct;
  cs.seed = spec.seed;
  const auto set = cohort::build_samples(synth.records, cs, features);
  const auto ds = cohort::balance_and_split(set.samples, cs);
  std::printf("%zu records -> %zu samples (%zu excluded); train %zu, test %zu\n", synth.records.size(),
              set.samples.size(), set.excluded.size(), ds.train.size(), ds.test.size());

  const auto train = to_eval(ds.train, features.size());
  const auto test = to_eval(ds.test, features.size());
  survival::ForestParams params;
  params.seed = spec.seed;
  auto forest = std::make_shared<const survival::SurvivalForest>(
      survival::fit_survival_forest({train.time, train.event, train.x}, cohort::arities(features), params));
  const double theta = classify::fit_rs_threshold(*forest, train.x, train.event, classify::RsObjective::F1);

  std::vector<std::pair<std::string, metrics::MetricsReport>> rows;
  for (auto t : classify::kAllTechniques) {
    classify::RiskModel model{forest, {}};
    model.config.technique = t;
    if (t == classify::Technique::RS) model.config.rs_threshold = theta;
    rows.push_back({classify::to_string(t), metrics::evaluate(model, test)});
  }
  std::printf("\n%s\n", metrics::format_table(rows).c_str());

  classify::RiskModel sp{forest, {}};
  const auto f = explain::prediction_function(sp, explain::SurfaceMode::Probability);
  const auto background = explain::sample_background(train.x, 50, spec.seed);
  const auto a = explain::kernel_shap(f, test.x.row(0), background);
  std::printf("patient %s: f(x) %.3f, base %.3f\n", ds.test[0].patient_id.c_str(), a.f_x, a.base_value);
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::printf("  %-4s = %d  phi %+.4f\n", features[i].name.c_str(), test.x(0, i), a.phi[i]);
  }
  return 0;
}
