#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "survclf/baseline/classification_forest.hpp"
#include "survclf/classify/classify.hpp"
#include "survclf/cohort/cohort.hpp"
#include "survclf/core/csv.hpp"
#include "survclf/explain/explain.hpp"
#include "survclf/metrics/evaluate.hpp"
#include "survclf/pipeline/config.hpp"
#include "survclf/survival/model_io.hpp"
#include "survclf/synthgen/synthgen.hpp"

namespace survclf::pipeline {

// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<cohort::Split> split;
  std::optional<cohort::Approach> approach;
  std::optional<classify::Technique> technique;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

inline void apply(RunConfig& c, const Overrides& o) {
  if (o.seed) {
    c.seed = *o.seed;
    c.cohort.seed = *o.seed;
    c.forest.seed = stream_seed(*o.seed, kForestStream);
  }
  if (o.approach) c.cohort.approach = *o.approach;
  if (o.technique) c.classifier.technique = *o.technique;
  if (o.threads) c.threads = *o.threads;
}

inline fs::path samples_path(const RunConfig& c, cohort::Approach a) {
  return c.output / ("samples_" + cohort::to_string(a) + ".csv");
}

inline std::string fmt(double v, int digits = 3) { return csv::fixed(v, digits); }

// ---- samples file ----------------------------------------------------------

struct SplitSample {
  cohort::LabeledSample sample;
  cohort::Split split;
};

inline void write_samples(const fs::path& path, const cohort::Dataset& ds, const std::vector<std::string>& names) {
  csv::Writer w(path.string());
  std::vector<std::string> header = {"patient_id", "cutoff_date", "time_days", "event", "split"};
  header.insert(header.end(), names.begin(), names.end());
  w.row(header);
  for (auto split : {cohort::Split::Train, cohort::Split::Validation, cohort::Split::Test}) {
    for (const auto& s : ds.get(split)) {
      std::vector<std::string> row = {s.patient_id, s.cutoff_date.iso(), std::to_string(s.time_days),
                                      std::to_string(s.event), cohort::to_string(split)};
      for (int v : s.features) row.push_back(std::to_string(v));
      w.row(row);
    }
  }
}

inline cohort::Dataset read_samples(const fs::path& path, const std::vector<cohort::FeatureSpec>& features) {
  if (!fs::exists(path)) throw DataError(path.string() + " not found; run prepare first");
  std::vector<std::string> header = {"patient_id", "cutoff_date", "time_days", "event", "split"};
  for (const auto& f : features) header.push_back(f.name);
  std::size_t bad = 0;
  const auto t = csv::read(path.string(), header, &bad);
  if (bad) throw DataError(path.string() + ": " + std::to_string(bad) + " malformed rows");
  const auto ar = cohort::arities(features);
  cohort::Dataset ds;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const auto where = path.string() + ":" + std::to_string(t.line_numbers[i]);
    cohort::LabeledSample s;
    s.patient_id = r[0];
    const auto date = Date::parse(r[1]);
    int time = 0, event = 0;
    if (!date || !csv::parse_int(r[2], time) || !csv::parse_int(r[3], event) || (event != 0 && event != 1)) {
      throw DataError(where + ": invalid sample row");
    }
    s.cutoff_date = *date;
    s.time_days = time;
    s.event = event;
    for (std::size_t k = 0; k < features.size(); ++k) {
      int v = 0;
      if (!csv::parse_int(r[5 + k], v) || v < 0 || v >= ar[k]) throw DataError(where + ": feature value out of range");
      s.features.push_back(v);
    }
    cohort::Split split;
    try {
      split = cohort::parse_split(r[4]);
    } catch (const ConfigError&) {
      throw DataError(where + ": unknown split '" + r[4] + "'");
    }
    (split == cohort::Split::Train ? ds.train : split == cohort::Split::Validation ? ds.validation : ds.test)
        .push_back(std::move(s));
  }
  return ds;
}

inline metrics::EvalData to_eval(const std::vector<cohort::LabeledSample>& v, std::size_t m) {
  metrics::EvalData e;
  e.x = tree::FeatureMatrix(0, m);
  for (const auto& s : v) {
    e.time.push_back(s.time_days);
    e.event.push_back(s.event);
    e.x.push_row(s.features);
  }
  return e;
}

// ---- model file ------------------------------------------------------------

struct TrainedModel {
  std::shared_ptr<const survival::SurvivalForest> forest;
  double rs_threshold = 0;
  classify::ClassifierConfig classifier;  // as trained; technique may be overridden later
  std::vector<std::string> feature_names;
  std::string approach;

  classify::RiskModel risk_model(classify::Technique t) const {
    classify::RiskModel m{forest, classifier};
    m.config.technique = t;
    m.config.rs_threshold = t == classify::Technique::RS ? std::optional<double>(rs_threshold) : std::nullopt;
    return m;
  }
};

inline json classifier_to_json(const classify::ClassifierConfig& c) {
  return {{"technique", classify::to_string(c.technique)},
          {"horizon_days", c.horizon_days},
          {"sp_threshold", c.sp_threshold},
          {"rs_objective", classify::to_string(c.rs_objective)},
          {"ln_aggregation", classify::to_string(c.ln_aggregation)}};
}

inline void save_trained(const fs::path& path, const TrainedModel& m) {
  auto j = model_io::header("risk_model", m.forest->params().seed, m.forest->arities());
  j["classifier"] = classifier_to_json(m.classifier);
  j["rs_threshold"] = m.rs_threshold;
  j["feature_names"] = m.feature_names;
  j["approach"] = m.approach;
  j["forest"] = model_io::to_json(*m.forest);
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  model_io::write_json(path.string(), j);
}

inline TrainedModel load_trained(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("model file " + path.string() + " not found; run train first");
  const auto j = model_io::read_json(path.string());
  model_io::check_header(j, "risk_model");
  try {
    TrainedModel m;
    m.forest = std::make_shared<const survival::SurvivalForest>(model_io::survival_forest_from_json(j.at("forest")));
    m.rs_threshold = j.at("rs_threshold").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.approach = j.at("approach").get<std::string>();
    const auto& c = j.at("classifier");
    m.classifier.technique = classify::parse_technique(c.at("technique").get<std::string>());
    m.classifier.horizon_days = c.at("horizon_days").get<int>();
    m.classifier.sp_threshold = c.at("sp_threshold").get<double>();
    m.classifier.rs_objective = classify::parse_objective(c.at("rs_objective").get<std::string>());
    m.classifier.ln_aggregation = classify::parse_aggregation(c.at("ln_aggregation").get<std::string>());
    m.classifier.rs_threshold.reset();
    if (m.feature_names.size() != m.forest->arities().size()) throw DataError("corrupt model: feature names");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt model: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt model: ") + e.what());
  }
}

inline void check_features_match(const TrainedModel& m, const RunConfig& c) {
  if (m.feature_names != c.feature_names()) {
    throw DataError("model features do not match the configured features; retrain");
  }
}

// ---- stages ----------------------------------------------------------------

inline std::string run_synth(RunConfig& c) {
  if (!c.synth) throw ConfigError("missing required key 'synth'");
  const auto spec = synthgen::spec_from_json(*c.synth, c.seed);
  const auto cohort = synthgen::generate(spec, c.threads);
  synthgen::write_cohort(c.input, spec, cohort);
  std::size_t events = 0, encounters = 0;
  for (const auto& g : cohort.truth) events += g.event;
  for (const auto& r : cohort.records) encounters += r.encounters.size();
  std::ostringstream out;
  out << "synth: " << cohort.records.size() << " patients, " << events << " diagnosed, " << encounters
      << " encounters -> " << c.input.string() << "\n"
      << "expected event rate " << fmt(synthgen::expected_event_rate(spec)) << ", observed "
      << fmt(static_cast<double>(events) / static_cast<double>(cohort.records.size())) << "\n";
  return out.str();
}

struct Prepared {
  cohort::ParseStats stats;
  cohort::SampleSet samples;
  cohort::Dataset dataset;
};

inline Prepared prepare_dataset(const std::vector<cohort::PatientRecord>& records, const RunConfig& c,
                                cohort::Approach approach) {
  auto spec = c.cohort;
  spec.approach = approach;
  Prepared p;
  p.samples = cohort::build_samples(records, spec, c.features);
  p.dataset = cohort::balance_and_split(p.samples.samples, spec);
  return p;
}

inline std::string run_prepare(RunConfig& c) {
  resolve_features(c);
  const auto parsed = cohort::parse_records(c.input);
  auto p = prepare_dataset(parsed.records, c, c.cohort.approach);
  fs::create_directories(c.output);
  write_samples(samples_path(c, c.cohort.approach), p.dataset, c.feature_names());
  {
    csv::Writer w((c.output / ("exclusions_" + cohort::to_string(c.cohort.approach) + ".csv")).string());
    w.row({"patient_id", "reason"});
    for (const auto& e : p.samples.excluded) w.row({e.patient_id, cohort::to_string(e.reason)});
  }
  const auto& st = parsed.stats;
  std::size_t events = 0;
  for (const auto& s : p.samples.samples) events += s.event;
  std::ostringstream out;
  out << "prepare (" << cohort::to_string(c.cohort.approach) << "): " << parsed.records.size() << " patients parsed, "
      << st.total_dropped() << " rows dropped (invalid dates " << st.invalid_dates << ", duplicates "
      << st.duplicate_rows << ", malformed " << st.malformed_rows << ", invalid values " << st.invalid_values
      << ", orphans " << st.orphan_rows << ")\n"
      << "samples: " << p.samples.samples.size() << " eligible (" << events << " events), "
      << p.samples.excluded.size() << " excluded; balanced split train " << p.dataset.train.size()
      << " / validation " << p.dataset.validation.size() << " / test " << p.dataset.test.size() << "\n";
  return out.str();
}

inline std::string run_times(RunConfig& c) {
  resolve_features(c);
  const auto parsed = cohort::parse_records(c.input);
  fs::create_directories(c.output);
  csv::Writer w((c.output / "times.csv").string());
  w.row({"approach", "event", "bin_start_days", "bin_end_days", "bin_start_months", "count"});
  std::ostringstream out;
  out << "observation times (days), per approach:\n";
  for (auto a : cohort::kAllApproaches) {
    auto spec = c.cohort;
    spec.approach = a;
    const auto samples = cohort::build_samples(parsed.records, spec, c.features).samples;
    for (const auto& b : cohort::observation_time_histogram(samples, c.histogram_bin_days)) {
      const double lo = b.bin * c.histogram_bin_days;
      w.row({cohort::to_string(a), std::to_string(b.event), csv::num(lo), csv::num(lo + c.histogram_bin_days),
             csv::num(lo / kDaysPerMonth), std::to_string(b.count)});
    }
    int lo[2] = {INT32_MAX, INT32_MAX}, hi[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    for (const auto& s : samples) {
      lo[s.event] = std::min(lo[s.event], s.time_days);
      hi[s.event] = std::max(hi[s.event], s.time_days);
      ++n[s.event];
    }
    out << "  " << cohort::to_string(a) << ": normals " << n[0];
    if (n[0]) out << " [" << lo[0] << ", " << hi[0] << "]";
    out << ", events " << n[1];
    if (n[1]) out << " [" << lo[1] << ", " << hi[1] << "]";
    out << "\n";
  }
  return out.str();
}

inline TrainedModel train_model(const cohort::Dataset& ds, const RunConfig& c, cohort::Approach approach) {
  const auto tr = to_eval(ds.train, c.features.size());
  const survival::SurvivalData d{tr.time, tr.event, tr.x};
  TrainedModel m;
  m.forest = std::make_shared<const survival::SurvivalForest>(
      survival::fit_survival_forest(d, cohort::arities(c.features), c.forest, c.threads));
  m.rs_threshold =
      classify::fit_rs_threshold(*m.forest, tr.x, tr.event, c.classifier.rs_objective, c.rs_risk_source, c.threads);
  m.classifier = c.classifier;
  m.classifier.rs_threshold.reset();
  m.feature_names = c.feature_names();
  m.approach = cohort::to_string(approach);
  return m;
}

inline std::string run_train(RunConfig& c) {
  resolve_features(c);
  const auto ds = read_samples(samples_path(c, c.cohort.approach), c.features);
  if (ds.train.empty()) throw DataError("training split is empty");
  const auto m = train_model(ds, c, c.cohort.approach);
  save_trained(c.model, m);
  std::size_t leaves = 0;
  for (const auto& t : m.forest->trees()) leaves += t.leaves.size();
  std::ostringstream out;
  out << "train (" << m.approach << "): " << m.forest->n_trees() << " trees, " << leaves << " leaves, "
      << m.forest->event_time_grid().size() << " event times on " << ds.train.size() << " samples\n"
      << "rs_threshold " << csv::num(m.rs_threshold) << " -> " << c.model.string() << "\n";
  return out.str();
}

inline std::string run_evaluate(RunConfig& c, cohort::Split split) {
  resolve_features(c);
  const auto m = load_trained(c.model);
  check_features_match(m, c);
  const auto ds = read_samples(samples_path(c, c.cohort.approach), c.features);
  const auto data = to_eval(ds.get(split), c.features.size());
  const auto model = m.risk_model(c.classifier.technique);
  const auto report = metrics::evaluate(model, data, c.threads);
  fs::create_directories(c.output);
  const std::string row_name = c.name + " (" + classify::to_string(c.classifier.technique) + ")";
  metrics::write_report_csv((c.output / "report.csv").string(), {{row_name, report}});
  {
    const auto preds = classify::predict_batch(model, data.x, c.threads);
    csv::Writer w((c.output / "predictions.csv").string());
    w.row({"patient_id", "technique", "score", "label", "survival_at_horizon"});
    const auto& rows = ds.get(split);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      w.row({rows[i].patient_id, classify::to_string(c.classifier.technique), csv::num(preds[i].score),
             std::to_string(preds[i].label), csv::num(preds[i].survival_at_horizon)});
    }
  }
  return "evaluate on " + cohort::to_string(split) + " (" + std::to_string(data.time.size()) + " samples)\n" +
         metrics::format_table({{row_name, report}});
}

inline std::string run_compare(RunConfig& c) {
  resolve_features(c);
  const auto parsed = cohort::parse_records(c.input);
  const auto ar = cohort::arities(c.features);
  fs::create_directories(c.output);
  csv::Writer w((c.output / "compare.csv").string());
  w.row({"disease", "approach", "method", "f1", "auroc", "accuracy", "c_index"});
  const std::vector<std::string> methods = {"baseline", "rs", "sp", "ln"};
  std::map<std::string, double> f1_sum;
  std::vector<std::pair<std::string, std::vector<std::optional<double>>>> table;
  auto opt = [](const std::optional<double>& v) { return v ? csv::num(*v) : std::string("n/a"); };
  for (auto a : cohort::kAllApproaches) {
    const auto p = prepare_dataset(parsed.records, c, a);
    const auto m = train_model(p.dataset, c, a);
    const auto te = to_eval(p.dataset.test, c.features.size());
    std::vector<std::optional<double>> f1s;

    auto bparams = baseline::default_params();
    bparams.n_trees = c.forest.n_trees;
    bparams.mtry = c.forest.mtry;
    bparams.seed = c.forest.seed;  // same bootstrap samples as the survival forest
    const auto tr = to_eval(p.dataset.train, c.features.size());
    const auto bf = baseline::fit_classifier(tr.x, tr.event, ar, bparams, c.threads);
    std::vector<int> labels(te.x.rows());
    std::vector<double> probs(te.x.rows());
    for (std::size_t i = 0; i < te.x.rows(); ++i) {
      probs[i] = bf.predict_proba(te.x.row(i));
      labels[i] = probs[i] > 0.5 ? 1 : 0;
    }
    const auto bm = metrics::confusion_metrics(te.event, labels);
    w.row({c.name, cohort::to_string(a), "baseline", opt(bm.f1), opt(metrics::auroc(te.event, probs)), opt(bm.accuracy),
           opt(metrics::c_index(te.time, te.event, probs))});
    f1s.push_back(bm.f1);

    for (auto t : classify::kAllTechniques) {
      const auto r = metrics::evaluate(m.risk_model(t), te, c.threads);
      w.row({c.name, cohort::to_string(a), classify::to_string(t), opt(r.f1), opt(r.auroc), opt(r.accuracy), opt(r.c_index)});
      f1s.push_back(r.f1);
    }
    for (std::size_t k = 0; k < methods.size(); ++k) f1_sum[methods[k]] += f1s[k].value_or(0.0) / 3.0;
    table.emplace_back(cohort::to_string(a), f1s);
  }
  std::ostringstream out;
  out << "F1 by approach (" << c.name << ")\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s | %-8s | %-8s | %-8s | %-8s\n", "approach", "baseline", "RS", "SP", "LN");
  out << line << std::string(52, '-') << "\n";
  for (const auto& [name, f1s] : table) {
    std::snprintf(line, sizeof line, "%-10s | %-8s | %-8s | %-8s | %-8s\n", name.c_str(),
                  metrics::format_value(f1s[0]).c_str(), metrics::format_value(f1s[1]).c_str(),
                  metrics::format_value(f1s[2]).c_str(), metrics::format_value(f1s[3]).c_str());
    out << line;
  }
  std::snprintf(line, sizeof line, "%-10s | %-8s | %-8s | %-8s | %-8s\n", "average", fmt(f1_sum["baseline"]).c_str(),
                fmt(f1_sum["rs"]).c_str(), fmt(f1_sum["sp"]).c_str(), fmt(f1_sum["ln"]).c_str());
  out << line;
  return out.str();
}

inline std::string run_explain(RunConfig& c) {
  resolve_features(c);
  const auto m = load_trained(c.model);
  check_features_match(m, c);
  const auto ds = read_samples(samples_path(c, c.cohort.approach), c.features);
  const auto& e = c.explain;
  const std::size_t mcount = c.features.size();
  const auto train = to_eval(ds.train, mcount);
  const auto& rows = ds.get(e.split);
  const auto target = to_eval(rows, mcount);
  if (train.x.rows() == 0) throw DataError("training split is empty; no background available");
  const auto model = m.risk_model(c.classifier.technique);
  const auto surface = explain::prediction_function(model, e.mode);
  const auto background = explain::sample_background(train.x, e.background_size, stream_seed(c.seed, kExplainStream));

  const std::size_t n = std::min(e.n_explained, rows.size());
  std::vector<explain::Attribution> attributions;
  std::vector<std::string> ids;
  std::size_t singular = 0;
  double worst_residual = 0;
  for (std::size_t i = 0; i < n; ++i) {
    explain::ShapOptions o;
    o.budget = e.budget;
    o.seed = mix_seed(stream_seed(c.seed, kExplainStream), i);
    o.threads = c.threads;
    attributions.push_back(explain::kernel_shap(surface, target.x.row(i), background, o));
    ids.push_back(rows[i].patient_id);
    singular += attributions.back().singular ? 1 : 0;
    worst_residual = std::max(worst_residual, std::abs(attributions.back().residual));
  }
  fs::create_directories(c.output);
  const auto names = c.feature_names();
  explain::write_attributions((c.output / "attributions.csv").string(), ids, attributions, names);
  const auto ranking = explain::global_importance(attributions, names);
  explain::write_importance((c.output / "importance.csv").string(), ranking);
  const auto curves = explain::clustered_survival_curves(model, target.x, target.event, c.threads);
  explain::write_curves((c.output / "curves.csv").string(), curves);

  std::ostringstream out;
  out << "explain " << n << " " << cohort::to_string(e.split) << " samples (" << explain::to_string(e.mode) << ", "
      << classify::to_string(c.classifier.technique) << ", background " << background.rows() << ")";
  if (singular) out << ", " << singular << " singular systems";
  out << "\nmax |residual| " << csv::num(worst_residual) << "\ntop features:";
  for (std::size_t i = 0; i < std::min<std::size_t>(5, ranking.entries.size()); ++i) {
    out << " " << ranking.entries[i].first << " (" << fmt(ranking.entries[i].second, 4) << ")";
  }
  out << "\nclusters (true,pred):";
  for (std::size_t k = 0; k < 4; ++k) {
    out << " " << explain::cluster_label(k) << " n=" << curves.counts[k];
    if (curves.curves[k]) out << " S_end=" << fmt(curves.curves[k]->back());
  }
  out << "\n";
  if (e.external_ranking) {
    const auto other = explain::read_ranking(e.external_ranking->string());
    csv::Writer w((c.output / "agreement.csv").string());
    w.row({"k", "top_k_overlap", "rank_correlation"});
    std::vector<std::size_t> ks = {5, e.top_k};
    if (e.top_k == 5) ks = {5};
    for (auto k : ks) {
      const auto g = explain::ranking_agreement(ranking, other, k);
      w.row({std::to_string(k), std::to_string(g.top_k_overlap), g.rank_correlation ? csv::num(*g.rank_correlation) : "n/a"});
      out << "agreement top-" << k << ": overlap " << g.top_k_overlap << ", spearman "
          << (g.rank_correlation ? fmt(*g.rank_correlation) : "n/a") << "\n";
    }
  }
  return out.str();
}

inline const std::vector<std::string> kSubcommands = {"synth", "prepare", "times", "train", "evaluate", "compare", "explain"};

// Runs one subcommand and returns its summary text.
inline std::string run(const std::string& command, RunConfig& c, const Overrides& o) {
  apply(c, o);
  if (c.threads == 0) c.threads = resolve_threads(0);
  if (command == "synth") return run_synth(c);
  if (command == "prepare") return run_prepare(c);
  if (command == "times") return run_times(c);
  if (command == "train") return run_train(c);
  if (command == "evaluate") return run_evaluate(c, o.split.value_or(cohort::Split::Test));
  if (command == "compare") return run_compare(c);
  if (command == "explain") {
    if (o.split) c.explain.split = *o.split;
    return run_explain(c);
  }
  throw ConfigError("unknown subcommand '" + command + "'");
}

}  // namespace survclf::pipeline
