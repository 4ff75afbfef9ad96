#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "survclf/cohort/codes.hpp"
#include "survclf/cohort/records.hpp"
#include "survclf/core/csv.hpp"
#include "survclf/core/date.hpp"
#include "survclf/core/error.hpp"

namespace survclf::cohort {

enum class FeatureKind {
  CodePresence,
  ComorbidityGroup,
  MedicationPrefix,
  FamilyHistory,
  SocialHistory,
  BinnedNumeric,
  DurationSinceFirst,
  Demographic,
};

enum class DemographicField { Age, Gender, Race, MaritalStatus };

// Vital names the encounter table may carry.
inline constexpr std::array<std::string_view, 11> kKnownVitals = {
    "bmi",          "map",         "respiration", "heart_rate", "systolic_bp", "diastolic_bp",
    "temperature",  "weight",      "height",      "spo2",       "pulse"};

inline constexpr int kMissing = 0;
inline constexpr int kPresent = 1;
inline constexpr int kMaxArity = 64;

// One categorical feature. Category 0 always means absent or missing.
struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::CodePresence;
  CodeSet codes;                        // code kinds and duration_since_first
  std::string token;                    // GPI prefix, history token, or vital name
  std::vector<double> edges;            // numeric bins (duration bins are in years)
  DemographicField field = DemographicField::Age;
  std::vector<std::string> categories;  // categorical demographics

  bool is_binned() const {
    return kind == FeatureKind::BinnedNumeric || kind == FeatureKind::DurationSinceFirst ||
           (kind == FeatureKind::Demographic && field == DemographicField::Age);
  }

  int arity() const {
    if (is_binned()) return static_cast<int>(edges.size()) + 2;
    if (kind == FeatureKind::Demographic) return static_cast<int>(categories.size()) + 1;
    return 2;
  }

  // Value v lands in 1 + (number of edges <= v): below the first edge is 1,
  // [e_k, e_k+1) is k + 2, at or above the last edge is edges + 1.
  int bin(double v) const {
    return 1 + static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
  }

  std::string category_label(int c) const {
    if (c == kMissing) return is_binned() || kind == FeatureKind::Demographic ? "missing" : "absent";
    if (is_binned()) {
      auto fmt = [](double x) {
        std::string s = csv::num(x);
        return s;
      };
      const int k = c - 2;
      if (c == 1) return "<" + fmt(edges.front());
      if (k + 1 >= static_cast<int>(edges.size())) return ">=" + fmt(edges.back());
      return fmt(edges[k]) + "-" + fmt(edges[k + 1]);
    }
    if (kind == FeatureKind::Demographic) return categories.at(c - 1);
    return "present";
  }

  void validate() const {
    auto fail = [&](const std::string& why) {
      throw ConfigError("feature '" + name + "': " + why);
    };
    if (name.empty()) throw ConfigError("feature with empty name");
    switch (kind) {
      case FeatureKind::CodePresence:
      case FeatureKind::ComorbidityGroup:
      case FeatureKind::DurationSinceFirst:
        if (codes.empty()) fail("needs at least one code pattern");
        break;
      case FeatureKind::MedicationPrefix:
      case FeatureKind::FamilyHistory:
      case FeatureKind::SocialHistory:
        if (token.empty()) fail("needs a non-empty token");
        break;
      case FeatureKind::BinnedNumeric:
        if (std::find(kKnownVitals.begin(), kKnownVitals.end(), token) == kKnownVitals.end()) {
          fail("unknown vital name '" + token + "'");
        }
        break;
      case FeatureKind::Demographic:
        if (field != DemographicField::Age && categories.empty()) fail("needs categories");
        break;
    }
    if (is_binned()) {
      if (edges.empty()) fail("needs bin edges");
      for (std::size_t i = 0; i < edges.size(); ++i) {
        if (!std::isfinite(edges[i])) fail("bin edges must be finite");
        if (i && !(edges[i] > edges[i - 1])) fail("bin edges must be strictly increasing");
      }
    }
    if (arity() > kMaxArity) fail("more than 64 categories");
  }
};

inline std::vector<int> arities(const std::vector<FeatureSpec>& specs) {
  std::vector<int> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(s.arity());
  return out;
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string gpi_digits(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += c;
  }
  return out;
}

inline bool has_token(const std::vector<std::string>& tokens, std::string_view token) {
  const auto want = lower(token);
  return std::any_of(tokens.begin(), tokens.end(),
                     [&](const std::string& t) { return lower(t) == want; });
}

}  // namespace detail

// Categorical feature vector at `cutoff`. Nothing dated after the cutoff is
// consulted.
inline std::vector<int> extract_features(const PatientRecord& record, Date cutoff,
                                         const std::vector<FeatureSpec>& specs) {
  std::vector<int> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    int value = kMissing;
    switch (spec.kind) {
      case FeatureKind::CodePresence:
      case FeatureKind::ComorbidityGroup:
        for (const auto& d : record.diagnoses) {
          if (d.date <= cutoff && spec.codes.matches(d.code)) {
            value = kPresent;
            break;
          }
        }
        break;
      case FeatureKind::MedicationPrefix: {
        const auto prefix = detail::gpi_digits(spec.token);
        for (const auto& m : record.medications) {
          if (m.date <= cutoff && detail::gpi_digits(m.code).starts_with(prefix)) {
            value = kPresent;
            break;
          }
        }
        break;
      }
      case FeatureKind::FamilyHistory:
        value = detail::has_token(record.family_history, spec.token) ? kPresent : kMissing;
        break;
      case FeatureKind::SocialHistory:
        value = detail::has_token(record.social_history, spec.token) ? kPresent : kMissing;
        break;
      case FeatureKind::BinnedNumeric:
        if (std::find(kKnownVitals.begin(), kKnownVitals.end(), spec.token) ==
            kKnownVitals.end()) {
          throw ConfigError("feature '" + spec.name + "': unknown vital name '" + spec.token + "'");
        }
        for (auto it = record.encounters.rbegin(); it != record.encounters.rend(); ++it) {
          if (it->date > cutoff) continue;
          if (auto v = it->vital(spec.token)) {
            value = spec.bin(*v);
            break;
          }
        }
        break;
      case FeatureKind::DurationSinceFirst:
        // Diagnoses are date-sorted, so the first match is the earliest.
        for (const auto& d : record.diagnoses) {
          if (d.date > cutoff) break;
          if (spec.codes.matches(d.code)) {
            value = spec.bin(static_cast<double>(cutoff - d.date) / kDaysPerYear);
            break;
          }
        }
        break;
      case FeatureKind::Demographic: {
        const auto& demo = record.demographics;
        if (spec.field == DemographicField::Age) {
          if (demo.birth_date && *demo.birth_date <= cutoff) {
            const double years =
                std::floor(static_cast<double>(cutoff - *demo.birth_date) / kDaysPerYear);
            value = spec.bin(years);
          }
          break;
        }
        const std::string& raw = spec.field == DemographicField::Gender ? demo.gender
                                 : spec.field == DemographicField::Race ? demo.race
                                                                        : demo.marital_status;
        const auto want = detail::lower(raw);
        for (std::size_t c = 0; c < spec.categories.size(); ++c) {
          if (detail::lower(spec.categories[c]) == want) {
            value = static_cast<int>(c) + 1;
            break;
          }
        }
        break;
      }
    }
    out.push_back(value);
  }
  return out;
}

// Drops everything dated after `cutoff`. Used by leakage tests and audits.
inline PatientRecord truncate_record(const PatientRecord& record, Date cutoff) {
  PatientRecord r = record;
  std::erase_if(r.encounters, [&](const Encounter& e) { return e.date > cutoff; });
  std::erase_if(r.diagnoses, [&](const CodedEvent& e) { return e.date > cutoff; });
  std::erase_if(r.medications, [&](const CodedEvent& e) { return e.date > cutoff; });
  return r;
}

}  // namespace survclf::cohort
