#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "survclf/cohort/codes.hpp"
#include "survclf/cohort/features.hpp"
#include "survclf/cohort/records.hpp"
#include "survclf/core/date.hpp"
#include "survclf/core/error.hpp"
#include "survclf/core/rng.hpp"

namespace survclf::cohort {

// How the cutoff encounter of a patient without the disease is chosen.
//   Similar:  earliest encounter in the window before the last encounter
//   Overlap:  the second encounter
//   Distinct: latest encounter before the window opens
enum class Approach { Similar, Overlap, Distinct };

inline constexpr std::array<Approach, 3> kAllApproaches = {Approach::Similar, Approach::Overlap,
                                                           Approach::Distinct};

inline std::string to_string(Approach a) {
  switch (a) {
    case Approach::Similar: return "similar";
    case Approach::Overlap: return "overlap";
    case Approach::Distinct: return "distinct";
  }
  return "?";
}

inline Approach parse_approach(std::string_view s) {
  const auto v = detail::lower(s);
  if (v == "similar" || v == "1") return Approach::Similar;
  if (v == "overlap" || v == "2") return Approach::Overlap;
  if (v == "distinct" || v == "3") return Approach::Distinct;
  throw ConfigError("unknown approach '" + std::string(s) + "'");
}

struct SplitFractions {
  double train = 0.70;
  double validation = 0.10;
  double test = 0.20;
};

struct CohortSpec {
  CodeSet disease_codes;
  int window_days = 365;
  Approach approach = Approach::Similar;
  int min_encounters = 3;
  int min_span_days = 365;
  double balance_ratio = 1.0;
  SplitFractions split;
  std::uint64_t seed = 0;

  void validate() const {
    if (disease_codes.empty()) throw ConfigError("cohort.disease_codes must not be empty");
    if (window_days < 1) throw ConfigError("cohort.window_days must be >= 1");
    if (min_encounters < 1) throw ConfigError("cohort.min_encounters must be >= 1");
    if (min_span_days < 1) throw ConfigError("cohort.min_span_days must be >= 1");
    if (!(balance_ratio > 0) || !std::isfinite(balance_ratio)) {
      throw ConfigError("cohort.balance_ratio must be positive");
    }
    for (double f : {split.train, split.validation, split.test}) {
      if (!(f > 0 && f < 1)) throw ConfigError("cohort.split fractions must lie in (0, 1)");
    }
    if (std::abs(split.train + split.validation + split.test - 1.0) > 1e-9) {
      throw ConfigError("cohort.split fractions must sum to 1");
    }
  }
};

// Earliest date of any diagnosis matching the disease codes.
inline std::optional<Date> diagnosis_date(const PatientRecord& record, const CohortSpec& spec) {
  std::optional<Date> best;
  for (const auto& d : record.diagnoses) {
    if (spec.disease_codes.matches(d.code) && (!best || d.date < *best)) best = d.date;
  }
  return best;
}

enum class ExclusionReason {
  InsufficientHistory,   // diseased, too few encounters before diagnosis
  TooFewEncounters,      // normal, fewer than min_encounters
  SpanBelowMinimum,      // normal, first-to-last span too short
  NoCutoffEncounter,     // no encounter qualifies as cutoff under the approach
};

inline std::string to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::InsufficientHistory: return "insufficient_history";
    case ExclusionReason::TooFewEncounters: return "too_few_encounters";
    case ExclusionReason::SpanBelowMinimum: return "span_below_min";
    case ExclusionReason::NoCutoffEncounter: return "no_cutoff_encounter";
  }
  return "?";
}

struct Exclusion {
  std::string patient_id;
  ExclusionReason reason;
};

struct Eligibility {
  std::vector<std::size_t> events;   // indices into the record list
  std::vector<std::size_t> normals;
  std::vector<Exclusion> excluded;
};

inline Eligibility eligibility_filter(const std::vector<PatientRecord>& records,
                                      const CohortSpec& spec) {
  Eligibility out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (const auto dx = diagnosis_date(r, spec)) {
      const auto prior = std::count_if(r.encounters.begin(), r.encounters.end(),
                                       [&](const Encounter& e) { return e.date < *dx; });
      if (prior >= spec.min_encounters) {
        out.events.push_back(i);
      } else {
        out.excluded.push_back({r.patient_id, ExclusionReason::InsufficientHistory});
      }
      continue;
    }
    if (static_cast<int>(r.encounters.size()) < spec.min_encounters) {
      out.excluded.push_back({r.patient_id, ExclusionReason::TooFewEncounters});
    } else if (r.last_encounter() - r.first_encounter() < spec.min_span_days) {
      out.excluded.push_back({r.patient_id, ExclusionReason::SpanBelowMinimum});
    } else {
      out.normals.push_back(i);
    }
  }
  return out;
}

struct Cutoff {
  Date date;
  int time_days = 0;
  int event = 0;

  friend bool operator==(const Cutoff&, const Cutoff&) = default;
};

// Cutoff encounter for an eligible record. The window is [anchor - window, anchor).
inline std::optional<Cutoff> select_cutoff(const PatientRecord& record, const CohortSpec& spec) {
  const auto& enc = record.encounters;
  auto earliest_in_window = [&](Date anchor) -> std::optional<Date> {
    const Date open = anchor.plus_days(-spec.window_days);
    for (const auto& e : enc) {
      if (e.date >= open && e.date < anchor) return e.date;
    }
    return std::nullopt;
  };

  if (const auto dx = diagnosis_date(record, spec)) {
    const auto c = earliest_in_window(*dx);
    if (!c) return std::nullopt;
    return Cutoff{*c, *dx - *c, 1};
  }

  const Date anchor = record.last_encounter();
  std::optional<Date> c;
  switch (spec.approach) {
    case Approach::Similar:
      c = earliest_in_window(anchor);
      break;
    case Approach::Overlap:
      if (enc.size() >= 2) c = enc[1].date;
      break;
    case Approach::Distinct: {
      const Date open = anchor.plus_days(-spec.window_days);
      for (const auto& e : enc) {
        if (e.date < open) c = e.date;
      }
      break;
    }
  }
  if (!c || !(*c < anchor)) return std::nullopt;
  return Cutoff{*c, anchor - *c, 0};
}

struct LabeledSample {
  std::string patient_id;
  Date cutoff_date;
  int time_days = 0;
  int event = 0;
  std::vector<int> features;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct SampleSet {
  std::vector<LabeledSample> samples;
  std::vector<Exclusion> excluded;
};

// Eligibility, cutoff selection and feature extraction over a record list.
// Output keeps record order.
inline SampleSet build_samples(const std::vector<PatientRecord>& records, const CohortSpec& spec,
                               const std::vector<FeatureSpec>& features) {
  spec.validate();
  for (const auto& f : features) f.validate();
  auto elig = eligibility_filter(records, spec);
  SampleSet out;
  out.excluded = std::move(elig.excluded);
  std::vector<std::size_t> order;
  order.insert(order.end(), elig.events.begin(), elig.events.end());
  order.insert(order.end(), elig.normals.begin(), elig.normals.end());
  std::sort(order.begin(), order.end());
  for (std::size_t i : order) {
    const auto& r = records[i];
    const auto cut = select_cutoff(r, spec);
    if (!cut) {
      out.excluded.push_back({r.patient_id, ExclusionReason::NoCutoffEncounter});
      continue;
    }
    out.samples.push_back(
        LabeledSample{r.patient_id, cut->date, cut->time_days, cut->event,
                      extract_features(r, cut->date, features)});
  }
  return out;
}

enum class Split { Train, Validation, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  const auto v = detail::lower(s);
  if (v == "train") return Split::Train;
  if (v == "validation" || v == "val") return Split::Validation;
  if (v == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

struct Dataset {
  std::vector<LabeledSample> train, validation, test;

  const std::vector<LabeledSample>& get(Split s) const {
    return s == Split::Train ? train : s == Split::Validation ? validation : test;
  }
};

// Random under-sampling of the majority class to balance_ratio x minority,
// then a stratified shuffle split. Partition contents keep input order.
inline Dataset balance_and_split(const std::vector<LabeledSample>& samples, const CohortSpec& spec) {
  spec.validate();
  std::unordered_set<std::string> ids;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!ids.insert(samples[i].patient_id).second) {
      throw DataError("duplicate patient_id in samples: " + samples[i].patient_id);
    }
    (samples[i].event ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) {
    throw DataError("cannot balance: one class is empty (" + std::to_string(pos.size()) +
                    " events, " + std::to_string(neg.size()) + " normals)");
  }
  Rng rng(mix_seed(spec.seed, 0xba1a));
  auto& major = pos.size() > neg.size() ? pos : neg;
  const auto& minor = pos.size() > neg.size() ? neg : pos;
  const auto keep = std::min<std::size_t>(
      major.size(), static_cast<std::size_t>(std::llround(spec.balance_ratio * minor.size())));
  if (keep == 0) throw DataError("cannot balance: balance_ratio leaves no majority samples");
  {
    auto picked = rng.sample_without_replacement(major.size(), keep);
    std::sort(picked.begin(), picked.end());
    std::vector<std::size_t> kept;
    for (auto p : picked) kept.push_back(major[p]);
    major = std::move(kept);
  }

  std::vector<Split> assignment(samples.size(), Split::Test);
  std::vector<bool> retained(samples.size(), false);
  for (auto* cls : {&pos, &neg}) {
    auto shuffled = *cls;
    rng.shuffle(shuffled);
    const auto n = shuffled.size();
    const auto n_train = static_cast<std::size_t>(std::llround(spec.split.train * n));
    const auto n_val =
        std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.split.validation * n)));
    for (std::size_t k = 0; k < n; ++k) {
      retained[shuffled[k]] = true;
      assignment[shuffled[k]] =
          k < n_train ? Split::Train : k < n_train + n_val ? Split::Validation : Split::Test;
    }
  }
  Dataset ds;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!retained[i]) continue;
    auto& part = assignment[i] == Split::Train        ? ds.train
                 : assignment[i] == Split::Validation ? ds.validation
                                                      : ds.test;
    part.push_back(samples[i]);
  }
  return ds;
}

// Histogram of observation times, one row per (event flag, bin).
struct TimeBin {
  int event = 0;
  int bin = 0;  // bin index; lower edge = bin * width
  std::size_t count = 0;
};

inline std::vector<TimeBin> observation_time_histogram(const std::vector<LabeledSample>& samples,
                                                       double bin_width_days) {
  if (!(bin_width_days > 0)) throw ConfigError("histogram bin width must be positive");
  std::map<std::pair<int, int>, std::size_t> counts;
  for (const auto& s : samples) {
    const int bin = static_cast<int>(std::floor(s.time_days / bin_width_days));
    ++counts[{s.event, bin}];
  }
  std::vector<TimeBin> out;
  for (const auto& [k, n] : counts) out.push_back({k.first, k.second, n});
  return out;
}

}  // namespace survclf::cohort
