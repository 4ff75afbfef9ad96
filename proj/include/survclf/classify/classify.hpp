#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survclf/core/error.hpp"
#include "survclf/core/parallel.hpp"
#include "survclf/metrics/metrics.hpp"
#include "survclf/survival/forest.hpp"

namespace survclf::classify {

using survival::SurvivalForest;
using tree::FeatureMatrix;

// RS: risk score above a learned threshold. SP: survival at the horizon at or
// below 0.5. LN: label distribution of the reached leaves.
enum class Technique { RS, SP, LN };
enum class RsObjective { F1, Accuracy };
enum class LnAggregation { MajorityVote, AverageProbability };

inline constexpr std::array<Technique, 3> kAllTechniques = {Technique::RS, Technique::SP,
                                                            Technique::LN};

inline std::string to_string(Technique t) {
  switch (t) {
    case Technique::RS: return "rs";
    case Technique::SP: return "sp";
    case Technique::LN: return "ln";
  }
  return "?";
}

inline Technique parse_technique(std::string_view s) {
  if (s == "rs" || s == "RS") return Technique::RS;
  if (s == "sp" || s == "SP") return Technique::SP;
  if (s == "ln" || s == "LN") return Technique::LN;
  throw ConfigError("unknown technique '" + std::string(s) + "'");
}

inline RsObjective parse_objective(std::string_view s) {
  if (s == "f1") return RsObjective::F1;
  if (s == "accuracy") return RsObjective::Accuracy;
  throw ConfigError("unknown rs_objective '" + std::string(s) + "'");
}

inline LnAggregation parse_aggregation(std::string_view s) {
  if (s == "majority_vote") return LnAggregation::MajorityVote;
  if (s == "average_probability") return LnAggregation::AverageProbability;
  throw ConfigError("unknown ln_aggregation '" + std::string(s) + "'");
}

inline std::string to_string(LnAggregation a) {
  return a == LnAggregation::MajorityVote ? "majority_vote" : "average_probability";
}
inline std::string to_string(RsObjective o) { return o == RsObjective::F1 ? "f1" : "accuracy"; }

struct ClassifierConfig {
  Technique technique = Technique::SP;
  int horizon_days = 365;
  double sp_threshold = 0.5;
  std::optional<double> rs_threshold;  // learned; present iff technique is RS
  RsObjective rs_objective = RsObjective::F1;
  LnAggregation ln_aggregation = LnAggregation::AverageProbability;

  void validate() const {
    if (horizon_days < 1) throw ConfigError("classifier.horizon_days must be >= 1");
    if (!(sp_threshold >= 0 && sp_threshold <= 1)) {
      throw ConfigError("classifier.sp_threshold must lie in [0, 1]");
    }
    if (technique == Technique::RS && !rs_threshold) {
      throw ConfigError("technique rs requires a fitted rs_threshold");
    }
    if (technique != Technique::RS && rs_threshold) {
      throw ConfigError("rs_threshold is only meaningful for technique rs");
    }
  }
};

struct RiskModel {
  std::shared_ptr<const SurvivalForest> forest;
  ClassifierConfig config;
};

// Risk threshold maximising the objective over the training set. Candidates
// are the distinct training scores, the rule is label = risk > threshold, and
// ties go to the smallest candidate.
inline double fit_rs_threshold(std::span<const double> risks, std::span<const int> labels,
                               RsObjective objective) {
  const std::size_t n = risks.size();
  if (labels.size() != n) throw DataError("fit_rs_threshold: length mismatch");
  std::int64_t total_pos = 0;
  for (int l : labels) total_pos += l ? 1 : 0;
  if (total_pos == 0 || total_pos == static_cast<std::int64_t>(n)) {
    throw DataError("fit_rs_threshold needs both classes in the training set");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return risks[a] < risks[b]; });

  // Walking candidates upward moves each group from predicted-1 to predicted-0.
  metrics::Confusion c;
  c.tp = total_pos;
  c.fp = static_cast<std::int64_t>(n) - total_pos;
  double best_value = -1, best_threshold = risks[order[0]];
  for (std::size_t k = 0; k < n;) {
    std::size_t end = k;
    const double theta = risks[order[k]];
    while (end < n && risks[order[end]] == theta) ++end;
    for (std::size_t q = k; q < end; ++q) {
      if (labels[order[q]]) {
        --c.tp;
        ++c.fn;
      } else {
        --c.fp;
        ++c.tn;
      }
    }
    const double value = objective == RsObjective::F1
                             ? metrics::f1_or_zero(c)
                             : static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
    if (value > best_value) {
      best_value = value;
      best_threshold = theta;
    }
    k = end;
  }
  return best_threshold;
}

enum class RiskSource { OutOfBag, InBag };

inline RiskSource parse_risk_source(std::string_view s) {
  if (s == "oob") return RiskSource::OutOfBag;
  if (s == "in_bag") return RiskSource::InBag;
  throw ConfigError("unknown rs_risk_source '" + std::string(s) + "'");
}

// Threshold from the forest's risk scores on its own training rows. Out-of-bag
// scores by default: in-bag scores of deep trees mostly echo each row's own
// label and push the threshold too low.
inline double fit_rs_threshold(const SurvivalForest& forest, const FeatureMatrix& x,
                               std::span<const int> labels, RsObjective objective,
                               RiskSource source = RiskSource::OutOfBag, std::size_t threads = 1) {
  std::vector<double> risks;
  if (source == RiskSource::OutOfBag) {
    risks = survival::out_of_bag_risk(forest, x, threads);
  } else {
    risks.resize(x.rows());
    parallel_for(x.rows(), threads, [&](std::size_t i) { risks[i] = forest.predict_risk(x.row(i)); });
  }
  return fit_rs_threshold(risks, labels, objective);
}

struct Prediction {
  int label = 0;
  // Oriented so that larger means more likely diseased: risk (RS),
  // 1 - S(horizon) (SP), leaf probability or vote share (LN).
  double score = 0.0;
  double survival_at_horizon = 1.0;
  bool vote_tie = false;  // LN majority vote split evenly, resolved to 1

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct RsOutcome {
  int label;
  double risk;
};
struct SpOutcome {
  int label;
  double survival;
};
struct LnOutcome {
  int label;
  double probability;
  bool tie = false;
};

inline RsOutcome classify_rs(const SurvivalForest& forest, double threshold, std::span<const int> x) {
  const double risk = forest.predict_risk(x);
  return {risk > threshold ? 1 : 0, risk};
}

inline SpOutcome classify_sp(const SurvivalForest& forest, int horizon_days, std::span<const int> x,
                             double threshold = 0.5) {
  const double s = forest.survival_at(x, horizon_days);
  return {s <= threshold ? 1 : 0, s};
}

inline LnOutcome classify_ln(const SurvivalForest& forest, LnAggregation aggregation,
                             std::span<const int> x) {
  const auto dist = forest.leaf_distribution(x);
  double p_sum = 0;
  std::size_t votes = 0;
  for (auto [n0, n1] : dist) {
    const double p = static_cast<double>(n1) / static_cast<double>(n0 + n1);
    p_sum += p;
    votes += p > 0.5 ? 1 : 0;
  }
  const double n = static_cast<double>(dist.size());
  if (aggregation == LnAggregation::AverageProbability) {
    const double p = p_sum / n;
    return {p > 0.5 ? 1 : 0, p};
  }
  const bool tie = 2 * votes == dist.size();
  return {2 * votes >= dist.size() ? 1 : 0, static_cast<double>(votes) / n, tie};
}

inline Prediction predict(const RiskModel& model, std::span<const int> x) {
  const auto& cfg = model.config;
  const auto& f = *model.forest;
  Prediction p;
  p.survival_at_horizon = f.survival_at(x, cfg.horizon_days);
  switch (cfg.technique) {
    case Technique::RS: {
      const auto r = classify_rs(f, *cfg.rs_threshold, x);
      p.label = r.label;
      p.score = r.risk;
      break;
    }
    case Technique::SP:
      p.label = p.survival_at_horizon <= cfg.sp_threshold ? 1 : 0;
      p.score = 1.0 - p.survival_at_horizon;
      break;
    case Technique::LN: {
      const auto r = classify_ln(f, cfg.ln_aggregation, x);
      p.label = r.label;
      p.score = r.probability;
      p.vote_tie = r.tie;
      break;
    }
  }
  return p;
}

// One prediction per row, in row order.
inline std::vector<Prediction> predict_batch(const RiskModel& model, const FeatureMatrix& x,
                                             std::size_t threads = 1) {
  model.config.validate();
  if (!model.forest) throw ConfigError("risk model has no forest");
  std::vector<Prediction> out(x.rows());
  parallel_for(x.rows(), threads, [&](std::size_t i) { out[i] = predict(model, x.row(i)); });
  return out;
}

// Per-row technique requests must all agree with the model's technique.
inline std::vector<Prediction> predict_batch(const RiskModel& model, const FeatureMatrix& x,
                                             std::span<const Technique> requested,
                                             std::size_t threads = 1) {
  if (requested.size() != x.rows()) throw ConfigError("one technique per row expected");
  for (auto t : requested) {
    if (t != model.config.technique) {
      throw ConfigError("mixed techniques in one batch: model uses " +
                        to_string(model.config.technique) + ", row requests " + to_string(t));
    }
  }
  return predict_batch(model, x, threads);
}

// Shares the forest; RS thresholds are dropped unless the target is RS.
inline RiskModel with_technique(const RiskModel& base, Technique t,
                                std::optional<double> rs_threshold = std::nullopt) {
  RiskModel m = base;
  m.config.technique = t;
  m.config.rs_threshold = t == Technique::RS ? rs_threshold : std::nullopt;
  m.config.validate();
  return m;
}

}  // namespace survclf::classify
