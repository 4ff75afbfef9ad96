#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "survclf/core/csv.hpp"
#include "survclf/core/date.hpp"
#include "survclf/core/error.hpp"

namespace survclf::cohort {

struct Encounter {
  Date date;
  // Named measurements in file order, e.g. bmi, map, respiration.
  std::vector<std::pair<std::string, double>> vitals;

  std::optional<double> vital(std::string_view name) const {
    for (const auto& [k, v] : vitals) {
      if (k == name) return v;
    }
    return std::nullopt;
  }
};

// A dated diagnosis (ICD-10) or medication (GPI) entry.
struct CodedEvent {
  std::string code;
  Date date;
  // Dated before the first encounter, i.e. history carried into the record.
  bool historical = false;

  friend bool operator==(const CodedEvent&, const CodedEvent&) = default;
};

struct Demographics {
  std::optional<Date> birth_date;
  std::string gender;
  std::string race;
  std::string marital_status;
};

struct PatientRecord {
  std::string patient_id;
  Demographics demographics;
  std::vector<Encounter> encounters;  // non-empty, strictly increasing dates
  std::vector<CodedEvent> diagnoses;  // sorted by (date, code)
  std::vector<CodedEvent> medications;
  std::vector<std::string> family_history;
  std::vector<std::string> social_history;

  Date first_encounter() const { return encounters.front().date; }
  Date last_encounter() const { return encounters.back().date; }
};

struct ParseStats {
  std::size_t invalid_dates = 0;
  std::size_t duplicate_rows = 0;
  std::size_t malformed_rows = 0;
  std::size_t invalid_values = 0;
  std::size_t orphan_rows = 0;        // rows whose patient is not in patients.csv
  std::size_t no_encounters = 0;      // patients dropped for lacking encounters
  std::size_t vital_ties = 0;         // same vital twice on one encounter day
  std::size_t duplicate_patients = 0;

  std::size_t total_dropped() const {
    return invalid_dates + duplicate_rows + malformed_rows + invalid_values + orphan_rows +
           no_encounters + duplicate_patients;
  }
};

struct ParseResult {
  std::vector<PatientRecord> records;
  ParseStats stats;
};

inline const std::vector<std::string> kEncounterHeader = {"patient_id", "date", "vital_name",
                                                          "vital_value"};
inline const std::vector<std::string> kDiagnosisHeader = {"patient_id", "date", "icd10"};
inline const std::vector<std::string> kMedicationHeader = {"patient_id", "date", "gpi"};
inline const std::vector<std::string> kPatientHeader = {
    "patient_id", "birth_date", "gender", "race", "marital_status", "family_history",
    "social_history"};

namespace detail {

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += (s.empty() ? "" : ";") + t;
  return s;
}

inline void sort_events(std::vector<CodedEvent>& v) {
  std::stable_sort(v.begin(), v.end(), [](const CodedEvent& a, const CodedEvent& b) {
    return std::tie(a.date, a.code) < std::tie(b.date, b.code);
  });
}

}  // namespace detail

// Reads the four-file CSV bundle in `dir`. Records come back in patients.csv
// order with encounters merged per day and sorted ascending.
inline ParseResult parse_records(const std::filesystem::path& dir) {
  ParseResult result;
  auto& st = result.stats;
  auto file = [&](const char* name) { return (dir / name).string(); };

  const auto patients = csv::read(file("patients.csv"), kPatientHeader, &st.malformed_rows);
  const auto encounters = csv::read(file("encounters.csv"), kEncounterHeader, &st.malformed_rows);
  const auto diagnoses = csv::read(file("diagnoses.csv"), kDiagnosisHeader, &st.malformed_rows);
  const auto medications =
      csv::read(file("medications.csv"), kMedicationHeader, &st.malformed_rows);

  std::vector<PatientRecord> records;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& row : patients.rows) {
    PatientRecord r;
    r.patient_id = row[0];
    if (r.patient_id.empty()) {
      ++st.malformed_rows;
      continue;
    }
    if (!row[1].empty()) {
      r.demographics.birth_date = Date::parse(row[1]);
      if (!r.demographics.birth_date) {
        ++st.invalid_dates;
        continue;
      }
    }
    r.demographics.gender = row[2];
    r.demographics.race = row[3];
    r.demographics.marital_status = row[4];
    r.family_history = csv::split(row[5], ';');
    r.social_history = csv::split(row[6], ';');
    if (!index.emplace(r.patient_id, records.size()).second) {
      ++st.duplicate_patients;
      continue;
    }
    records.push_back(std::move(r));
  }

  // Encounters: one row per vital; rows sharing (patient, date) form one encounter.
  std::vector<std::map<Date, Encounter>> by_day(records.size());
  for (const auto& row : encounters.rows) {
    auto it = index.find(row[0]);
    if (it == index.end()) {
      ++st.orphan_rows;
      continue;
    }
    const auto date = Date::parse(row[1]);
    if (!date) {
      ++st.invalid_dates;
      continue;
    }
    auto& enc = by_day[it->second][*date];
    enc.date = *date;
    if (row[2].empty()) continue;
    double value = 0.0;
    if (!csv::parse_double(row[3], value) || !std::isfinite(value)) {
      ++st.invalid_values;
      continue;
    }
    if (enc.vital(row[2])) {
      ++st.vital_ties;  // first in input order wins
      continue;
    }
    enc.vitals.emplace_back(row[2], value);
  }

  auto read_events = [&](const csv::Table& t, auto member) {
    std::vector<std::map<std::pair<Date, std::string>, bool>> seen(records.size());
    for (const auto& row : t.rows) {
      auto it = index.find(row[0]);
      if (it == index.end()) {
        ++st.orphan_rows;
        continue;
      }
      const auto date = Date::parse(row[1]);
      if (!date) {
        ++st.invalid_dates;
        continue;
      }
      if (row[2].empty()) {
        ++st.malformed_rows;
        continue;
      }
      if (!seen[it->second].emplace(std::pair{*date, row[2]}, true).second) {
        ++st.duplicate_rows;
        continue;
      }
      (records[it->second].*member).push_back(CodedEvent{row[2], *date, false});
    }
  };
  read_events(diagnoses, &PatientRecord::diagnoses);
  read_events(medications, &PatientRecord::medications);

  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    if (by_day[i].empty()) {
      ++st.no_encounters;
      continue;
    }
    for (auto& [d, enc] : by_day[i]) r.encounters.push_back(std::move(enc));
    for (auto* events : {&r.diagnoses, &r.medications}) {
      detail::sort_events(*events);
      for (auto& e : *events) e.historical = e.date < r.first_encounter();
    }
    result.records.push_back(std::move(r));
  }
  if (result.records.empty()) throw DataError("no usable patient records in " + dir.string());
  return result;
}

// Writes records in the bundle layout parse_records reads. Output is a pure
// function of the records, so parse(write(r)) followed by write is byte-exact.
inline void write_bundle(const std::filesystem::path& dir, const std::vector<PatientRecord>& records) {
  std::filesystem::create_directories(dir);
  csv::Writer patients((dir / "patients.csv").string());
  csv::Writer encounters((dir / "encounters.csv").string());
  csv::Writer diagnoses((dir / "diagnoses.csv").string());
  csv::Writer medications((dir / "medications.csv").string());
  patients.row(kPatientHeader);
  encounters.row(kEncounterHeader);
  diagnoses.row(kDiagnosisHeader);
  medications.row(kMedicationHeader);
  for (const auto& r : records) {
    const auto& d = r.demographics;
    patients.row({r.patient_id, d.birth_date ? d.birth_date->iso() : "", d.gender, d.race,
                  d.marital_status, detail::join_tokens(r.family_history),
                  detail::join_tokens(r.social_history)});
    for (const auto& e : r.encounters) {
      if (e.vitals.empty()) encounters.row({r.patient_id, e.date.iso(), "", ""});
      for (const auto& [name, value] : e.vitals) {
        encounters.row({r.patient_id, e.date.iso(), name, csv::num(value)});
      }
    }
    for (const auto& e : r.diagnoses) diagnoses.row({r.patient_id, e.date.iso(), e.code});
    for (const auto& e : r.medications) medications.row({r.patient_id, e.date.iso(), e.code});
  }
}

}  // namespace survclf::cohort
