#include <filesystem>
#include <fstream>
#include <set>

#include "gtest/gtest.h"
#include "survclf/cohort/cohort.hpp"
#include "survclf/cohort/feature_io.hpp"
#include "survclf/synthgen/synthgen.hpp"

// Designated initializers below leave the remaining members defaulted on purpose.
#pragma GCC diagnostic ignored "-Wmissing-field-initializers"

using namespace survclf;
using namespace survclf::cohort;

namespace {

const Date kDay0 = *Date::parse("2015-01-01");

Date day(int d) { return kDay0.plus_days(d); }

PatientRecord record(const std::string& id, std::vector<int> encounter_days,
                     std::vector<std::pair<std::string, int>> dx = {}) {
  PatientRecord r;
  r.patient_id = id;
  for (int d : encounter_days) r.encounters.push_back(Encounter{day(d), {}});
  for (auto& [code, d] : dx) r.diagnoses.push_back(CodedEvent{code, day(d), false});
  std::sort(r.diagnoses.begin(), r.diagnoses.end(),
            [](const CodedEvent& a, const CodedEvent& b) { return a.date < b.date; });
  return r;
}

CohortSpec htn_spec(Approach a = Approach::Similar) {
  CohortSpec s;
  s.disease_codes = CodeSet::parse({"I10-I13"});
  s.approach = a;
  return s;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("survclf_cohort_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream(p) << body;
}

std::filesystem::path two_patient_bundle(const std::string& name, const std::string& extra_dx = "",
                                         const std::string& extra_enc = "") {
  auto dir = scratch(name);
  write_file(dir / "patients.csv",
             "patient_id,birth_date,gender,race,marital_status,family_history,social_history\n"
             "A,1960-05-01,F,White,Married,diabetes,smoking;alcohol\n"
             "B,,M,Black,Single,,\n");
  write_file(dir / "encounters.csv",
             "patient_id,date,vital_name,vital_value\n"
             "A,2016-03-01,bmi,31.5\n"
             "A,2015-01-10,bmi,29\n"
             "A,2015-01-10,map,95\n"
             "B,2015-02-01,,\n"
             "B,2014-02-01,map,101\n" +
                 extra_enc);
  write_file(dir / "diagnoses.csv", "patient_id,date,icd10\nA,2015-06-01,E78.5\n" + extra_dx);
  write_file(dir / "medications.csv", "patient_id,date,gpi\nB,2014-02-01,36100010\n");
  return dir;
}

}  // namespace

TEST(ParseRecords, GroupsPatientsAndSortsEncounters) {
  auto res = parse_records(two_patient_bundle("basic"));
  ASSERT_EQ(res.records.size(), 2u);
  const auto& a = res.records[0];
  ASSERT_EQ(a.encounters.size(), 2u);
  EXPECT_EQ(a.encounters[0].date, *Date::parse("2015-01-10"));
  EXPECT_EQ(a.encounters[0].vital("map"), 95.0);
  EXPECT_EQ(a.encounters[1].vital("bmi"), 31.5);
  EXPECT_EQ(a.social_history, (std::vector<std::string>{"smoking", "alcohol"}));
  const auto& b = res.records[1];
  EXPECT_FALSE(b.demographics.birth_date);
  EXPECT_EQ(b.encounters.front().date, *Date::parse("2014-02-01"));
  EXPECT_EQ(res.stats.total_dropped(), 0u);
}

TEST(ParseRecords, DuplicateDiagnosisKeptOnce) {
  auto res = parse_records(two_patient_bundle("dup", "A,2015-06-01,E78.5\n"));
  EXPECT_EQ(res.records[0].diagnoses.size(), 1u);
  EXPECT_EQ(res.stats.duplicate_rows, 1u);
}

TEST(ParseRecords, InvalidDateRowDropped) {
  auto res = parse_records(two_patient_bundle("baddate", "", "A,2019-13-40,bmi,30\n"));
  EXPECT_EQ(res.stats.invalid_dates, 1u);
  EXPECT_EQ(res.records[0].encounters.size(), 2u);
}

TEST(ParseRecords, MissingFileAndBadHeaderAreDataErrors) {
  auto dir = two_patient_bundle("errors");
  std::filesystem::remove(dir / "medications.csv");
  EXPECT_THROW(parse_records(dir), DataError);
  write_file(dir / "medications.csv", "pid,date,gpi\n");
  EXPECT_THROW(parse_records(dir), DataError);
}

TEST(ParseRecords, WriteThenParseIsStable) {
  auto res = parse_records(two_patient_bundle("roundtrip"));
  auto out = scratch("roundtrip_out");
  write_bundle(out, res.records);
  auto again = parse_records(out);
  ASSERT_EQ(again.records.size(), res.records.size());
  EXPECT_EQ(again.records[0].encounters[0].vitals, res.records[0].encounters[0].vitals);
  EXPECT_EQ(again.records[1].medications[0].code, "36100010");
}

TEST(CodePatterns, RangesAndSuffixes) {
  auto set = CodeSet::parse({"N18, I12, I13, [E08-E13].22"});
  EXPECT_TRUE(set.matches("E11.22"));
  EXPECT_TRUE(set.matches("e08.22"));
  EXPECT_FALSE(set.matches("E11.21"));
  EXPECT_FALSE(set.matches("E14.22"));
  EXPECT_TRUE(set.matches("N18.3"));
  EXPECT_FALSE(set.matches("I10"));
  EXPECT_THROW(CodeSet::parse({"[E08-E13"}), ConfigError);
}

TEST(DiagnosisDate, EarliestMatch) {
  auto spec = htn_spec();
  EXPECT_EQ(diagnosis_date(record("p", {0}, {{"I10", 500}, {"I12", 300}}), spec), day(300));
  CohortSpec ckd = spec;
  ckd.disease_codes = CodeSet::parse({"[E08-E13].22"});
  EXPECT_EQ(diagnosis_date(record("p", {0}, {{"E11.22", 400}}), ckd), day(400));
  EXPECT_FALSE(diagnosis_date(record("p", {0}, {{"E78", 10}}), spec));
}

TEST(Eligibility, ThresholdsAndReasons) {
  auto spec = htn_spec();
  std::vector<PatientRecord> rs = {record("ok", {0, 100, 400}), record("short", {0, 100, 200}),
                                   record("early", {0, 30}, {{"I10", 50}}),
                                   record("few", {0, 400})};
  auto e = eligibility_filter(rs, spec);
  EXPECT_EQ(e.normals, (std::vector<std::size_t>{0}));
  EXPECT_TRUE(e.events.empty());
  ASSERT_EQ(e.excluded.size(), 3u);
  EXPECT_EQ(e.excluded[0].reason, ExclusionReason::SpanBelowMinimum);
  EXPECT_EQ(e.excluded[1].reason, ExclusionReason::InsufficientHistory);
  EXPECT_EQ(e.excluded[2].reason, ExclusionReason::TooFewEncounters);
}

TEST(Eligibility, EncounterOnDiagnosisDayDoesNotCount) {
  auto spec = htn_spec();
  auto e = eligibility_filter({record("p", {0, 10, 50}, {{"I10", 50}})}, spec);
  EXPECT_TRUE(e.events.empty());
  e = eligibility_filter({record("p", {0, 10, 20, 50}, {{"I10", 50}})}, spec);
  EXPECT_EQ(e.events.size(), 1u);
}

TEST(SelectCutoff, EventUsesEarliestEncounterInWindow) {
  auto r = record("e", {0, 200, 400, 600}, {{"I10", 700}});
  for (auto a : kAllApproaches) {
    auto c = select_cutoff(r, htn_spec(a));
    ASSERT_TRUE(c);
    EXPECT_EQ(*c, (Cutoff{day(400), 300, 1}));
  }
}

TEST(SelectCutoff, NormalUnderEachApproach) {
  auto r = record("n", {0, 100, 300, 900, 1000});
  EXPECT_EQ(*select_cutoff(r, htn_spec(Approach::Overlap)), (Cutoff{day(100), 900, 0}));
  EXPECT_EQ(*select_cutoff(r, htn_spec(Approach::Distinct)), (Cutoff{day(300), 700, 0}));
  EXPECT_EQ(*select_cutoff(r, htn_spec(Approach::Similar)), (Cutoff{day(900), 100, 0}));
}

TEST(SelectCutoff, AbsentWithoutQualifyingEncounter) {
  // Nothing in the year before diagnosis.
  EXPECT_FALSE(select_cutoff(record("e", {0, 10, 20}, {{"I10", 800}}), htn_spec()));
  // Nothing earlier than the final-year window.
  EXPECT_FALSE(select_cutoff(record("n", {700, 800, 1000}), htn_spec(Approach::Distinct)));
}

TEST(Features, PresenceRespectsCutoff) {
  FeatureSpec f{.name = "hld", .kind = FeatureKind::CodePresence, .codes = CodeSet::parse({"E78"})};
  EXPECT_EQ(extract_features(record("p", {0}, {{"E78", 100}}), day(400), {f})[0], kPresent);
  EXPECT_EQ(extract_features(record("p", {0}, {{"E78", 500}}), day(400), {f})[0], kMissing);
}

TEST(Features, DurationSinceFirstBinsYears) {
  FeatureSpec f{.name = "obesity_years",
                .kind = FeatureKind::DurationSinceFirst,
                .codes = CodeSet::parse({"E66"}),
                .edges = {0, 1, 2, 5}};
  const int c = extract_features(record("p", {0}, {{"E66", 0}, {"E66", 300}}), day(800), {f})[0];
  EXPECT_EQ(f.category_label(c), "2-5");
  EXPECT_EQ(extract_features(record("p", {0}), day(800), {f})[0], kMissing);
}

TEST(Features, VitalsUseLatestMeasurementAtOrBeforeCutoff) {
  FeatureSpec f{.name = "bmi", .kind = FeatureKind::BinnedNumeric, .token = "bmi",
                .edges = {18.5, 25, 30}};
  auto r = record("p", {0, 100, 200});
  r.encounters[0].vitals = {{"bmi", 24.0}};
  r.encounters[2].vitals = {{"bmi", 33.0}};
  EXPECT_EQ(f.category_label(extract_features(r, day(100), {f})[0]), "18.5-25");
  EXPECT_EQ(f.category_label(extract_features(r, day(200), {f})[0]), ">=30");
  EXPECT_EQ(extract_features(r, day(-1), {f})[0], kMissing);
  f.token = "glucose";
  EXPECT_THROW(f.validate(), ConfigError);
  EXPECT_THROW(extract_features(r, day(100), {f}), ConfigError);
}

TEST(Features, DemographicsAndHistories) {
  std::vector<FeatureSpec> specs = {
      {.name = "age", .kind = FeatureKind::Demographic, .edges = {40, 50, 60},
       .field = DemographicField::Age},
      {.name = "gender", .kind = FeatureKind::Demographic, .field = DemographicField::Gender,
       .categories = {"F", "M"}},
      {.name = "smoker", .kind = FeatureKind::SocialHistory, .token = "Smoking"},
      {.name = "fh_dm", .kind = FeatureKind::FamilyHistory, .token = "diabetes"},
      {.name = "statin", .kind = FeatureKind::MedicationPrefix, .token = "3940"}};
  auto r = record("p", {0});
  r.demographics.birth_date = Date::parse("1960-01-01");
  r.demographics.gender = "m";
  r.social_history = {"smoking"};
  r.medications = {CodedEvent{"39400010", day(10), false}};
  const auto v = extract_features(r, *Date::parse("2015-06-01"), specs);
  EXPECT_EQ(specs[0].category_label(v[0]), "50-60");
  EXPECT_EQ(specs[1].category_label(v[1]), "M");
  EXPECT_EQ(v[2], kPresent);
  EXPECT_EQ(v[3], kMissing);
  EXPECT_EQ(v[4], kPresent);
  r.demographics.gender = "X";
  EXPECT_EQ(extract_features(r, day(20), specs)[1], kMissing);
}

TEST(Features, JsonRoundTrip) {
  std::vector<FeatureSpec> specs = {
      {.name = "ckd", .kind = FeatureKind::ComorbidityGroup,
       .codes = CodeSet::parse({"N18", "[E08-E13].22"})},
      {.name = "map", .kind = FeatureKind::BinnedNumeric, .token = "map", .edges = {80, 100}},
      {.name = "race", .kind = FeatureKind::Demographic, .field = DemographicField::Race,
       .categories = {"White", "Black"}}};
  auto back = features_from_json(features_to_json(specs));
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1].edges, specs[1].edges);
  EXPECT_TRUE(back[0].codes.matches("E10.22"));
  EXPECT_EQ(back[2].arity(), 3);
  auto dup = features_to_json(specs);
  dup.push_back(dup[0]);
  EXPECT_THROW(features_from_json(dup), ConfigError);
}

TEST(TemporalHygiene, FeaturesMatchTruncatedRecord) {
  synthgen::SynthSpec s;
  s.n_patients = 300;
  s.seed = 11;
  s.features = synthgen::binary_features(6, 3, 1.0);
  s.features.push_back({.name = "map", .kind = synthgen::SynthFeature::Kind::Vital,
                        .vital = "map", .edges = {80, 100}, .weights = {1, 1, 1},
                        .effects = {0, 0, 0, 0.5}});
  auto cohort = synthgen::generate(s);
  auto specs = s.feature_specs();
  specs.push_back({.name = "dur", .kind = FeatureKind::DurationSinceFirst,
                   .codes = CodeSet::parse({"U00"}), .edges = {0.5, 1, 2}});
  CohortSpec cs = htn_spec(Approach::Distinct);
  cs.disease_codes = CodeSet::parse({s.disease_code});
  std::size_t checked = 0;
  for (auto a : kAllApproaches) {
    cs.approach = a;
    auto set = build_samples(cohort.records, cs, specs);
    for (std::size_t i = 0, k = 0; i < cohort.records.size() && k < set.samples.size(); ++i) {
      const auto& r = cohort.records[i];
      if (r.patient_id != set.samples[k].patient_id) continue;
      const auto& smp = set.samples[k++];
      EXPECT_EQ(extract_features(truncate_record(r, smp.cutoff_date), smp.cutoff_date, specs),
                smp.features)
          << r.patient_id;
      ++checked;
    }
  }
  EXPECT_GT(checked, 300u);
}

TEST(Windowing, ShapesAndSharedEventSamples) {
  synthgen::SynthSpec s;
  s.n_patients = 400;
  s.seed = 3;
  s.features = synthgen::binary_features(5, 2, 1.0);
  auto cohort = synthgen::generate(s);
  auto specs = s.feature_specs();
  CohortSpec cs = htn_spec();
  cs.disease_codes = CodeSet::parse({s.disease_code});
  std::vector<std::vector<LabeledSample>> events;
  for (auto a : kAllApproaches) {
    cs.approach = a;
    auto set = build_samples(cohort.records, cs, specs);
    std::vector<LabeledSample> ev;
    for (const auto& smp : set.samples) {
      EXPECT_GE(smp.time_days, 1);
      if (a == Approach::Similar) {
        EXPECT_LE(smp.time_days, cs.window_days);
      }
      if (a == Approach::Distinct && !smp.event) {
        EXPECT_GE(smp.time_days, cs.window_days);
      }
      if (smp.event) ev.push_back(smp);
    }
    events.push_back(ev);
  }
  EXPECT_FALSE(events[0].empty());
  EXPECT_EQ(events[0], events[1]);
  EXPECT_EQ(events[0], events[2]);
}

TEST(BalanceSplit, UndersamplesAndSplitsStratified) {
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 6000; ++i) {
    samples.push_back({"p" + std::to_string(i), day(0), 10, i < 1000 ? 1 : 0, {}});
  }
  auto spec = htn_spec();
  spec.seed = 4;
  auto ds = balance_and_split(samples, spec);
  auto count = [](const std::vector<LabeledSample>& v) {
    return std::count_if(v.begin(), v.end(), [](const LabeledSample& s) { return s.event; });
  };
  EXPECT_EQ(ds.train.size(), 1400u);
  EXPECT_EQ(ds.validation.size(), 200u);
  EXPECT_EQ(ds.test.size(), 400u);
  EXPECT_EQ(count(ds.train), 700);
  EXPECT_EQ(count(ds.validation), 100);
  EXPECT_EQ(count(ds.test), 200);

  std::set<std::string> ids;
  for (auto s : {Split::Train, Split::Validation, Split::Test}) {
    for (const auto& x : ds.get(s)) EXPECT_TRUE(ids.insert(x.patient_id).second);
  }
  EXPECT_EQ(ids.size(), 2000u);

  auto again = balance_and_split(samples, spec);
  EXPECT_EQ(again.train, ds.train);
  EXPECT_EQ(again.test, ds.test);
  spec.seed = 5;
  EXPECT_NE(balance_and_split(samples, spec).train, ds.train);
}

TEST(BalanceSplit, OneClassEmptyIsAnError) {
  std::vector<LabeledSample> samples = {{"a", day(0), 5, 0, {}}, {"b", day(0), 5, 0, {}}};
  EXPECT_THROW(balance_and_split(samples, htn_spec()), DataError);
}

TEST(TimeHistogram, BinsByEventFlag) {
  std::vector<LabeledSample> samples = {{"a", day(0), 5, 0, {}},
                                        {"b", day(0), 29, 0, {}},
                                        {"c", day(0), 30, 1, {}}};
  auto h = observation_time_histogram(samples, 30);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].count, 2u);
  EXPECT_EQ(h[1].bin, 1);
}
