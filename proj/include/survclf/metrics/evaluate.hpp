#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "survclf/classify/classify.hpp"
#include "survclf/core/csv.hpp"
#include "survclf/metrics/metrics.hpp"

namespace survclf::metrics {

struct EvalData {
  std::vector<int> time;
  std::vector<int> event;
  tree::FeatureMatrix x;
};

// Confusion metrics from the configured technique's labels, AUROC/AUPRC from
// its oriented score, and the C-index from the forest risk score.
inline MetricsReport evaluate(const classify::RiskModel& model, const EvalData& data,
                              std::size_t threads = 1) {
  if (data.time.empty()) throw DataError("cannot evaluate on an empty dataset");
  const auto preds = classify::predict_batch(model, data.x, threads);
  std::vector<int> labels(preds.size());
  std::vector<double> scores(preds.size()), risks(preds.size());
  parallel_for(preds.size(), threads, [&](std::size_t i) {
    labels[i] = preds[i].label;
    scores[i] = preds[i].score;
    risks[i] = model.config.technique == classify::Technique::RS
                   ? preds[i].score
                   : model.forest->predict_risk(data.x.row(i));
  });
  const auto cm = confusion_metrics(data.event, labels);
  MetricsReport r;
  r.c_index = c_index(data.time, data.event, risks);
  r.accuracy = cm.accuracy;
  r.precision = cm.precision;
  r.recall = cm.recall;
  r.npv = cm.npv;
  r.specificity = cm.specificity;
  r.f1 = cm.f1;
  r.auroc = auroc(data.event, scores);
  r.auprc = auprc(data.event, scores);
  return r;
}

inline std::string format_value(const std::optional<double>& v) {
  return v ? csv::fixed(*v, 3) : "n/a";
}

inline const std::vector<std::string> kReportColumns = {
    "C Index", "Accuracy", "Precision", "Recall", "NPV", "Specificity", "AUROC", "AUPRC", "F1 score"};

inline std::vector<std::optional<double>> report_values(const MetricsReport& r) {
  return {r.c_index, r.accuracy, r.precision, r.recall, r.npv, r.specificity, r.auroc, r.auprc, r.f1};
}

// Fixed-width table in the column order C Index .. F1 score.
inline std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t name_width = 7;
  for (const auto& [name, r] : rows) name_width = std::max(name_width, name.size());
  auto pad = [](const std::string& s, std::size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
  };
  std::string out = pad("Dataset", name_width);
  for (const auto& c : kReportColumns) out += " | " + pad(c, std::max<std::size_t>(c.size(), 5));
  while (out.back() == ' ') out.pop_back();
  out += '\n';
  out += std::string(out.size() - 1, '-') + '\n';
  for (const auto& [name, r] : rows) {
    std::string line = pad(name, name_width);
    const auto vals = report_values(r);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      line += " | " + pad(format_value(vals[i]), std::max<std::size_t>(kReportColumns[i].size(), 5));
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

inline void write_report_csv(const std::string& path,
                             const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  csv::Writer w(path);
  w.row({"dataset", "c_index", "accuracy", "precision", "recall", "npv", "specificity", "auroc",
         "auprc", "f1"});
  for (const auto& [name, r] : rows) {
    std::vector<std::string> f = {name};
    for (const auto& v : report_values(r)) f.push_back(v ? csv::num(*v) : "n/a");
    w.row(f);
  }
}

}  // namespace survclf::metrics
