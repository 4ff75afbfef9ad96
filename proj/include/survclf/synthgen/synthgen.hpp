#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "survclf/cohort/feature_io.hpp"
#include "survclf/cohort/records.hpp"
#include "survclf/core/csv.hpp"
#include "survclf/core/date.hpp"
#include "survclf/core/error.hpp"
#include "survclf/core/json_util.hpp"
#include "survclf/core/parallel.hpp"
#include "survclf/core/rng.hpp"
#include "survclf/metrics/metrics.hpp"

namespace survclf::synthgen {

using cohort::PatientRecord;

// A latent categorical feature and how it shows up in the records: a code
// feature as a diagnosis row on the first encounter, a vital feature as a
// measurement inside its bin at every encounter.
struct SynthFeature {
  enum class Kind { Code, Vital };
  std::string name;
  Kind kind = Kind::Code;
  std::string code;            // Code
  std::string vital;           // Vital
  std::vector<double> edges;   // Vital bins
  std::vector<double> weights; // draw weights over categories 1..arity-1 (code: absent, present)
  std::vector<double> effects; // log-odds contribution per category, arity entries

  int arity() const { return kind == Kind::Code ? 2 : static_cast<int>(edges.size()) + 2; }

  // Categories a patient can actually have.
  int first_category() const { return kind == Kind::Code ? 0 : 1; }

  cohort::FeatureSpec feature_spec() const {
    cohort::FeatureSpec f;
    f.name = name;
    if (kind == Kind::Code) {
      f.kind = cohort::FeatureKind::CodePresence;
      f.codes = cohort::CodeSet::parse({code});
    } else {
      f.kind = cohort::FeatureKind::BinnedNumeric;
      f.token = vital;
      f.edges = edges;
    }
    return f;
  }
};

struct SynthSpec {
  std::size_t n_patients = 2000;
  std::vector<SynthFeature> features;
  double baseline_hazard = 0.0015;  // monthly, before effects
  std::string disease_code = "I10";
  double encounters_per_year = 6.0;
  int run_in_months = 12;       // enrollment period with no diagnoses
  int follow_up_months = 48;    // months at risk after the run-in
  double censoring_rate = 0.003;  // monthly drop-out probability
  std::string start_date = "2014-01-01";
  int enrollment_spread_days = 365;
  std::uint64_t seed = 0;

  std::vector<cohort::FeatureSpec> feature_specs() const {
    std::vector<cohort::FeatureSpec> out;
    for (const auto& f : features) out.push_back(f.feature_spec());
    return out;
  }
};

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Hazards at or above this are treated as saturated.
inline constexpr double kMaxHazard = 1.0 - 1e-9;

inline void validate(const SynthSpec& s) {
  if (s.n_patients == 0) throw ConfigError("synth.n_patients must be >= 1");
  if (s.features.empty()) throw ConfigError("synth.features must not be empty");
  if (!(s.baseline_hazard >= 0 && s.baseline_hazard < 1)) {
    throw ConfigError("synth.baseline_hazard must lie in [0, 1)");
  }
  if (!(s.encounters_per_year > 0)) throw ConfigError("synth.encounters_per_year must be positive");
  if (s.run_in_months < 0 || s.follow_up_months < 1) throw ConfigError("synth follow-up months out of range");
  if (!(s.censoring_rate >= 0 && s.censoring_rate < 1)) throw ConfigError("synth.censoring_rate must lie in [0, 1)");
  if (s.enrollment_spread_days < 1) throw ConfigError("synth.enrollment_spread_days must be >= 1");
  if (!Date::parse(s.start_date)) throw ConfigError("synth.start_date is not a valid YYYY-MM-DD date");
  if (cohort::CodePattern::normalize(s.disease_code).empty()) throw ConfigError("synth.disease_code is empty");
  double max_effect = 0;
  for (const auto& f : s.features) {
    const auto where = "synth feature '" + f.name + "': ";
    if (f.kind == SynthFeature::Kind::Vital) {
      if (f.edges.empty()) throw ConfigError(where + "vital features need bin edges");
      for (std::size_t i = 1; i < f.edges.size(); ++i) {
        if (!(f.edges[i] > f.edges[i - 1])) throw ConfigError(where + "edges must be strictly increasing");
      }
    } else if (cohort::CodePattern::normalize(f.code).empty()) {
      throw ConfigError(where + "code features need a code");
    } else if (cohort::CodeSet::parse({s.disease_code}).matches(f.code)) {
      throw ConfigError(where + "code collides with the disease code");
    }
    if (f.effects.size() != static_cast<std::size_t>(f.arity())) {
      throw ConfigError(where + "needs one effect per category (" + std::to_string(f.arity()) + ")");
    }
    if (f.weights.size() != static_cast<std::size_t>(f.arity() - f.first_category())) {
      throw ConfigError(where + "needs one draw weight per reachable category");
    }
    double total = 0, best = -INFINITY;
    for (double w : f.weights) {
      if (!(w >= 0) || !std::isfinite(w)) throw ConfigError(where + "draw weights must be non-negative");
      total += w;
    }
    if (!(total > 0)) throw ConfigError(where + "draw weights sum to zero");
    for (double e : f.effects) {
      if (!std::isfinite(e)) throw ConfigError(where + "effects must be finite");
    }
    for (int c = f.first_category(); c < f.arity(); ++c) {
      if (f.weights[c - f.first_category()] > 0) best = std::max(best, f.effects[c]);
    }
    max_effect += best;
  }
  if (s.baseline_hazard > 0 && logistic(logit(s.baseline_hazard) + max_effect) >= kMaxHazard) {
    throw ConfigError("synth spec saturates the hazard: monthly hazard reaches 1 for some patients");
  }
}

inline double monthly_hazard(const SynthSpec& s, double linear_predictor) {
  return s.baseline_hazard == 0 ? 0.0 : logistic(linear_predictor);
}

// P(diagnosis during follow-up) for a constant monthly hazard h: each month a
// patient first survives drop-out, then is diagnosed with probability h.
inline double event_probability(const SynthSpec& s, double h) {
  const double stay = (1.0 - s.censoring_rate) * (1.0 - h);
  const double months = s.follow_up_months;
  if (stay >= 1.0) return 0.0;
  return (1.0 - s.censoring_rate) * h * (1.0 - std::pow(stay, months)) / (1.0 - stay);
}

// Expected event rate under the spec, by convolving the per-feature effect
// distributions into the distribution of the linear predictor.
inline double expected_event_rate(const SynthSpec& s) {
  validate(s);
  std::map<double, double> dist = {{s.baseline_hazard > 0 ? logit(s.baseline_hazard) : 0.0, 1.0}};
  for (const auto& f : s.features) {
    double total = 0;
    for (double w : f.weights) total += w;
    std::map<double, double> next;
    for (const auto& [z, p] : dist) {
      for (int c = f.first_category(); c < f.arity(); ++c) {
        const double w = f.weights[c - f.first_category()] / total;
        if (w > 0) next[z + f.effects[c]] += p * w;
      }
    }
    dist = std::move(next);
  }
  double rate = 0;
  for (const auto& [z, p] : dist) rate += p * event_probability(s, monthly_hazard(s, z));
  return rate;
}

struct GroundTruth {
  std::string patient_id;
  std::vector<int> categories;
  double linear_predictor = 0;
  double monthly_hazard = 0;
  int event = 0;
  std::optional<Date> diagnosis_date;
};

struct Cohort {
  std::vector<PatientRecord> records;
  std::vector<GroundTruth> truth;
};

inline std::string patient_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%06zu", i + 1);
  return buf;
}

namespace detail {

inline int draw_category(Rng& rng, const SynthFeature& f) {
  double total = 0;
  for (double w : f.weights) total += w;
  double u = rng.uniform01() * total;
  for (std::size_t k = 0; k < f.weights.size(); ++k) {
    if (u < f.weights[k]) return f.first_category() + static_cast<int>(k);
    u -= f.weights[k];
  }
  // Rounding fell past the end: last reachable category with weight.
  for (std::size_t k = f.weights.size(); k-- > 0;) {
    if (f.weights[k] > 0) return f.first_category() + static_cast<int>(k);
  }
  return f.first_category();
}

// A measurement that bins to category c (1-based bin of the feature spec).
inline double vital_value(Rng& rng, const SynthFeature& f, int c) {
  const auto& e = f.edges;
  const double width = e.size() > 1 ? (e.back() - e.front()) / static_cast<double>(e.size() - 1)
                                    : std::max(1.0, std::abs(e.front()) * 0.1);
  const double lo = c == 1 ? e.front() - width : e[c - 2];
  const double hi = c - 1 < static_cast<int>(e.size()) ? e[c - 1] : e.back() + width;
  const double v = lo + (hi - lo) * (0.1 + 0.8 * rng.uniform01());
  const double rounded = std::round(v * 100.0) / 100.0;
  return rounded >= lo && rounded < hi ? rounded : v;
}

inline const std::vector<std::string> kGenders = {"F", "M"};
inline const std::vector<std::string> kRaces = {"White", "Black", "Asian", "Other"};
inline const std::vector<std::string> kMarital = {"Single", "Married", "Divorced", "Widowed"};

}  // namespace detail

inline std::pair<PatientRecord, GroundTruth> generate_patient(const SynthSpec& s, std::size_t index) {
  Rng rng(mix_seed(s.seed, index));
  PatientRecord r;
  GroundTruth g;
  r.patient_id = g.patient_id = patient_id(index);

  double z = s.baseline_hazard > 0 ? logit(s.baseline_hazard) : 0.0;
  for (const auto& f : s.features) {
    const int c = detail::draw_category(rng, f);
    g.categories.push_back(c);
    z += f.effects[c];
  }
  g.linear_predictor = z;
  g.monthly_hazard = monthly_hazard(s, z);

  const Date start = Date::parse(s.start_date)->plus_days(static_cast<std::int32_t>(rng.index(s.enrollment_spread_days)));
  auto month_day = [&](double months) { return start.plus_days(static_cast<std::int32_t>(std::lround(months * kDaysPerMonth))); };
  Date end = month_day(s.run_in_months + s.follow_up_months);
  for (int k = 0; k < s.follow_up_months; ++k) {
    if (rng.bernoulli(s.censoring_rate)) {
      end = month_day(s.run_in_months + k);
      break;
    }
    if (rng.bernoulli(g.monthly_hazard)) {
      g.event = 1;
      g.diagnosis_date = month_day(s.run_in_months + k + rng.uniform01());
      end = *g.diagnosis_date;
      break;
    }
  }

  auto& d = r.demographics;
  d.birth_date = start.plus_days(-static_cast<std::int32_t>(std::lround((30 + 50 * rng.uniform01()) * kDaysPerYear)));
  d.gender = detail::kGenders[rng.index(detail::kGenders.size())];
  d.race = detail::kRaces[rng.index(detail::kRaces.size())];
  d.marital_status = detail::kMarital[rng.index(detail::kMarital.size())];

  std::vector<std::pair<std::string, double>> vitals;
  for (std::size_t i = 0; i < s.features.size(); ++i) {
    const auto& f = s.features[i];
    if (f.kind == SynthFeature::Kind::Vital) {
      // One measurement per vital; the first vital feature naming it wins.
      bool taken = false;
      for (const auto& [name, v] : vitals) taken = taken || name == f.vital;
      const double v = detail::vital_value(rng, f, g.categories[i]);
      if (!taken) vitals.emplace_back(f.vital, v);
    }
  }

  const double mean_gap = 365.0 / s.encounters_per_year;
  for (Date t = start; t < end;) {
    r.encounters.push_back({t, vitals});
    t = t.plus_days(std::max<std::int32_t>(1, static_cast<std::int32_t>(std::lround(rng.exponential(mean_gap)))));
  }
  if (g.event) {
    // The diagnosis is recorded at a visit.
    if (r.encounters.back().date < end) r.encounters.push_back({end, vitals});
    r.diagnoses.push_back({cohort::CodePattern::normalize(s.disease_code), end, false});
  }
  for (std::size_t i = 0; i < s.features.size(); ++i) {
    const auto& f = s.features[i];
    if (f.kind == SynthFeature::Kind::Code && g.categories[i] == 1) {
      r.diagnoses.push_back({cohort::CodePattern::normalize(f.code), start, false});
    }
  }
  std::stable_sort(r.diagnoses.begin(), r.diagnoses.end(), [](const auto& a, const auto& b) {
    return std::tie(a.date, a.code) < std::tie(b.date, b.code);
  });
  // Dedupe in case two features share a code.
  r.diagnoses.erase(std::unique(r.diagnoses.begin(), r.diagnoses.end()), r.diagnoses.end());
  return {std::move(r), std::move(g)};
}

inline Cohort generate(const SynthSpec& s, std::size_t threads = 1) {
  validate(s);
  std::vector<std::pair<PatientRecord, GroundTruth>> out(s.n_patients);
  parallel_for(s.n_patients, threads, [&](std::size_t i) { out[i] = generate_patient(s, i); });
  Cohort c;
  c.records.reserve(out.size());
  c.truth.reserve(out.size());
  for (auto& [r, g] : out) {
    c.records.push_back(std::move(r));
    c.truth.push_back(std::move(g));
  }
  return c;
}

// Patient indices from highest to lowest true linear predictor (stable).
inline std::vector<std::size_t> oracle_rank(const std::vector<GroundTruth>& truth) {
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return truth[a].linear_predictor > truth[b].linear_predictor;
  });
  return order;
}

// C-index of the true linear predictor as a risk score.
inline std::optional<double> oracle_c_index(std::span<const int> times, std::span<const int> events,
                                            std::span<const double> linear_predictors) {
  return metrics::c_index(times, events, linear_predictors);
}

inline void write_ground_truth(const std::string& path, const SynthSpec& s, const std::vector<GroundTruth>& truth) {
  csv::Writer w(path);
  std::vector<std::string> header = {"patient_id", "linear_predictor", "monthly_hazard", "event", "diagnosis_date"};
  for (const auto& f : s.features) header.push_back(f.name);
  w.row(header);
  for (const auto& g : truth) {
    std::vector<std::string> row = {g.patient_id, csv::num(g.linear_predictor), csv::num(g.monthly_hazard),
                                    std::to_string(g.event), g.diagnosis_date ? g.diagnosis_date->iso() : ""};
    for (int c : g.categories) row.push_back(std::to_string(c));
    w.row(row);
  }
}

// Four-file bundle, ground_truth.csv, and features.json describing how to
// extract the latent features back out of the records.
inline void write_cohort(const std::filesystem::path& dir, const SynthSpec& s, const Cohort& c) {
  cohort::write_bundle(dir, c.records);
  write_ground_truth((dir / "ground_truth.csv").string(), s, c.truth);
  std::ofstream out(dir / "features.json", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "features.json").string());
  out << cohort::features_to_json(s.feature_specs()).dump(2) << '\n';
}

// Binary code features named f00, f01, ... (codes U00, U01, ...). The first
// n_signal move the log-odds by -weight when absent and +weight when present.
inline std::vector<SynthFeature> binary_features(std::size_t n_features, std::size_t n_signal, double weight,
                                                 double prevalence = 0.5) {
  std::vector<SynthFeature> out;
  for (std::size_t i = 0; i < n_features; ++i) {
    char name[32], code[32];
    std::snprintf(name, sizeof name, "f%02zu", i);
    std::snprintf(code, sizeof code, "U%02zu", i);
    SynthFeature f;
    f.name = name;
    f.code = code;
    f.weights = {1.0 - prevalence, prevalence};
    f.effects = i < n_signal ? std::vector<double>{-weight, weight} : std::vector<double>{0.0, 0.0};
    out.push_back(f);
  }
  return out;
}

inline SynthFeature parse_feature(const nlohmann::json& j, const std::string& ctx) {
  SynthFeature f;
  f.name = jsonu::get<std::string>(j, "name", ctx);
  const auto kind = jsonu::get<std::string>(j, "kind", ctx);
  if (kind == "code") {
    f.kind = SynthFeature::Kind::Code;
    f.code = jsonu::get<std::string>(j, "code", ctx);
  } else if (kind == "vital") {
    f.kind = SynthFeature::Kind::Vital;
    f.vital = jsonu::get<std::string>(j, "vital", ctx);
    f.edges = jsonu::get<std::vector<double>>(j, "edges", ctx);
  } else {
    throw ConfigError("'" + jsonu::path(ctx, "kind") + "' must be code or vital");
  }
  f.effects = jsonu::get<std::vector<double>>(j, "effects", ctx);
  const std::size_t reachable = static_cast<std::size_t>(f.arity() - f.first_category());
  f.weights = jsonu::get_or<std::vector<double>>(j, "weights", std::vector<double>(reachable, 1.0), ctx);
  if (f.kind == SynthFeature::Kind::Vital) f.feature_spec().validate();
  return f;
}

// "features" is either an explicit list or a binary generator block
// {"binary": n, "signal": k, "weight": w, "prevalence": p}.
inline SynthSpec spec_from_json(const nlohmann::json& j, std::uint64_t seed, const std::string& ctx = "synth") {
  SynthSpec s;
  s.seed = seed;
  s.n_patients = jsonu::get<std::size_t>(j, "n_patients", ctx);
  s.baseline_hazard = jsonu::get_or(j, "baseline_hazard", s.baseline_hazard, ctx);
  s.disease_code = jsonu::get_or(j, "disease_code", s.disease_code, ctx);
  s.encounters_per_year = jsonu::get_or(j, "encounters_per_year", s.encounters_per_year, ctx);
  s.run_in_months = jsonu::get_or(j, "run_in_months", s.run_in_months, ctx);
  s.follow_up_months = jsonu::get_or(j, "follow_up_months", s.follow_up_months, ctx);
  s.censoring_rate = jsonu::get_or(j, "censoring_rate", s.censoring_rate, ctx);
  s.start_date = jsonu::get_or(j, "start_date", s.start_date, ctx);
  s.enrollment_spread_days = jsonu::get_or(j, "enrollment_spread_days", s.enrollment_spread_days, ctx);
  const auto& fj = jsonu::require(j, "features", ctx);
  const auto fctx = jsonu::path(ctx, "features");
  if (fj.is_object()) {
    s.features = binary_features(jsonu::get<std::size_t>(fj, "binary", fctx), jsonu::get<std::size_t>(fj, "signal", fctx),
                                 jsonu::get<double>(fj, "weight", fctx), jsonu::get_or(fj, "prevalence", 0.5, fctx));
  } else if (fj.is_array()) {
    for (std::size_t i = 0; i < fj.size(); ++i) s.features.push_back(parse_feature(fj[i], fctx + "[" + std::to_string(i) + "]"));
    for (const auto& f : s.features) {
      for (const auto& g : s.features) {
        if (&f != &g && f.name == g.name) throw ConfigError("duplicate synth feature name '" + f.name + "'");
      }
    }
  } else {
    throw ConfigError("'" + fctx + "' must be an object or an array");
  }
  validate(s);
  return s;
}

}  // namespace survclf::synthgen
