#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "survclf/classify/classify.hpp"
#include "survclf/core/csv.hpp"
#include "survclf/explain/kernel_shap.hpp"

namespace survclf::explain {

using classify::RiskModel;
using classify::Technique;

enum class SurfaceMode { Binary, Probability };

inline SurfaceMode parse_mode(std::string_view s) {
  if (s == "binary") return SurfaceMode::Binary;
  if (s == "probability") return SurfaceMode::Probability;
  throw ConfigError("unknown explain mode '" + std::string(s) + "'");
}
inline std::string to_string(SurfaceMode m) { return m == SurfaceMode::Binary ? "binary" : "probability"; }

// RS risk mapped into [0, 1) around the fitted threshold: 0.5 at the threshold.
inline double normalized_risk(double risk, double threshold) {
  const double d = risk + threshold;
  return d > 0 ? risk / d : 0.5;
}

// Binary mode: the configured technique's label. Probability mode:
// 1 - S(horizon) for SP, normalized risk for RS, leaf probability for LN.
inline Surface prediction_function(const RiskModel& model, SurfaceMode mode) {
  model.config.validate();
  if (!model.forest) throw ConfigError("risk model has no forest");
  if (mode == SurfaceMode::Probability && model.config.technique == Technique::LN &&
      model.config.ln_aggregation == classify::LnAggregation::MajorityVote) {
    throw ConfigError("probability mode needs ln_aggregation average_probability");
  }
  if (mode == SurfaceMode::Binary) {
    return [model](std::span<const int> x) { return static_cast<double>(classify::predict(model, x).label); };
  }
  switch (model.config.technique) {
    case Technique::SP:
      return [model](std::span<const int> x) {
        return 1.0 - model.forest->survival_at(x, model.config.horizon_days);
      };
    case Technique::RS:
      return [model](std::span<const int> x) {
        return normalized_risk(model.forest->predict_risk(x), *model.config.rs_threshold);
      };
    case Technique::LN:
      return [model](std::span<const int> x) {
        return classify::classify_ln(*model.forest, model.config.ln_aggregation, x).probability;
      };
  }
  throw ConfigError("unknown technique");
}

struct ImportanceRanking {
  std::vector<std::pair<std::string, double>> entries;  // non-increasing importance
};

inline ImportanceRanking global_importance(const std::vector<Attribution>& attributions,
                                           const std::vector<std::string>& names) {
  std::vector<double> mean(names.size(), 0.0);
  for (const auto& a : attributions) {
    if (a.phi.size() != names.size()) throw DataError("attribution width does not match feature names");
    for (std::size_t i = 0; i < names.size(); ++i) mean[i] += std::abs(a.phi[i]);
  }
  if (!attributions.empty()) {
    for (auto& v : mean) v /= static_cast<double>(attributions.size());
  }
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  ImportanceRanking r;
  for (auto i : order) r.entries.emplace_back(names[i], mean[i]);
  return r;
}

struct Agreement {
  std::size_t top_k_overlap = 0;
  std::optional<double> rank_correlation;  // undefined with fewer than two features or no spread
};

// Spearman over the union of both top-k lists; features outside a list's top
// k get rank k + 1 there.
inline Agreement ranking_agreement(const ImportanceRanking& a, const ImportanceRanking& b, std::size_t k) {
  if (k == 0) throw ConfigError("ranking agreement needs k >= 1");
  auto top = [k](const ImportanceRanking& r) {
    std::unordered_map<std::string, double> rank;
    for (std::size_t i = 0; i < std::min(k, r.entries.size()); ++i) rank[r.entries[i].first] = double(i + 1);
    return rank;
  };
  const auto ra = top(a), rb = top(b);
  std::vector<std::string> uni;
  for (std::size_t i = 0; i < std::min(k, a.entries.size()); ++i) uni.push_back(a.entries[i].first);
  Agreement out;
  for (std::size_t i = 0; i < std::min(k, b.entries.size()); ++i) {
    const auto& name = b.entries[i].first;
    if (ra.count(name)) {
      ++out.top_k_overlap;
    } else {
      uni.push_back(name);
    }
  }
  if (uni.size() < 2) return out;
  const double missing = static_cast<double>(k + 1);
  std::vector<double> xa, xb;
  for (const auto& name : uni) {
    auto ia = ra.find(name), ib = rb.find(name);
    xa.push_back(ia == ra.end() ? missing : ia->second);
    xb.push_back(ib == rb.end() ? missing : ib->second);
  }
  const double n = static_cast<double>(uni.size());
  const double ma = std::accumulate(xa.begin(), xa.end(), 0.0) / n;
  const double mb = std::accumulate(xb.begin(), xb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < uni.size(); ++i) {
    sab += (xa[i] - ma) * (xb[i] - mb);
    saa += (xa[i] - ma) * (xa[i] - ma);
    sbb += (xb[i] - mb) * (xb[i] - mb);
  }
  if (saa > 0 && sbb > 0) out.rank_correlation = sab / std::sqrt(saa * sbb);
  return out;
}

// Cluster (truth, predicted) -> index 2 * truth + predicted.
struct ClusterCurves {
  std::vector<int> grid;
  std::array<std::optional<std::vector<double>>, 4> curves;
  std::array<std::size_t, 4> counts{};

  const std::optional<std::vector<double>>& at(int truth, int predicted) const {
    return curves[2 * truth + predicted];
  }
};

inline std::string cluster_label(std::size_t c) {
  return "(" + std::to_string(c / 2) + "," + std::to_string(c % 2) + ")";
}

inline ClusterCurves clustered_survival_curves(const RiskModel& model, const FeatureMatrix& x,
                                               std::span<const int> truth, std::size_t threads = 1) {
  if (truth.size() != x.rows()) throw DataError("label count does not match feature rows");
  const auto preds = classify::predict_batch(model, x, threads);
  ClusterCurves out;
  out.grid = model.forest->event_time_grid();
  const std::size_t g = out.grid.size();
  std::vector<std::vector<double>> curves(x.rows());
  parallel_for(x.rows(), threads, [&](std::size_t i) { curves[i] = model.forest->predict_survival(x.row(i)).values(); });
  std::array<std::vector<double>, 4> sums;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t c = 2 * static_cast<std::size_t>(truth[i] != 0) + static_cast<std::size_t>(preds[i].label);
    if (sums[c].empty()) sums[c].assign(g, 0.0);
    for (std::size_t t = 0; t < g; ++t) sums[c][t] += curves[i][t];
    ++out.counts[c];
  }
  for (std::size_t c = 0; c < 4; ++c) {
    if (out.counts[c] == 0) continue;
    for (auto& v : sums[c]) v /= static_cast<double>(out.counts[c]);
    out.curves[c] = std::move(sums[c]);
  }
  return out;
}

inline void write_attributions(const std::string& path, const std::vector<std::string>& sample_ids,
                               const std::vector<Attribution>& attributions,
                               const std::vector<std::string>& names) {
  csv::Writer w(path);
  w.row({"sample_id", "feature", "phi"});
  for (std::size_t s = 0; s < attributions.size(); ++s) {
    for (std::size_t i = 0; i < names.size(); ++i) w.row({sample_ids[s], names[i], csv::num(attributions[s].phi[i])});
  }
}

inline void write_importance(const std::string& path, const ImportanceRanking& r) {
  csv::Writer w(path);
  w.row({"feature", "mean_abs_phi", "rank"});
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    w.row({r.entries[i].first, csv::num(r.entries[i].second), std::to_string(i + 1)});
  }
}

inline void write_curves(const std::string& path, const ClusterCurves& c) {
  csv::Writer w(path);
  w.row({"cluster", "time", "mean_survival"});
  for (std::size_t k = 0; k < 4; ++k) {
    if (!c.curves[k]) continue;
    for (std::size_t t = 0; t < c.grid.size(); ++t) {
      w.row({cluster_label(k), std::to_string(c.grid[t]), csv::num((*c.curves[k])[t])});
    }
  }
}

// External ranking file with header feature,importance; sorted here.
inline ImportanceRanking read_ranking(const std::string& path) {
  std::size_t bad = 0;
  const auto t = csv::read(path, {"feature", "importance"}, &bad);
  if (bad > 0) throw DataError(path + ": malformed ranking rows");
  ImportanceRanking r;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    double v;
    if (!csv::parse_double(t.rows[i][1], v)) {
      throw DataError(path + ":" + std::to_string(t.line_numbers[i]) + ": importance is not a number");
    }
    r.entries.emplace_back(t.rows[i][0], v);
  }
  std::stable_sort(r.entries.begin(), r.entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return r;
}

}  // namespace survclf::explain
