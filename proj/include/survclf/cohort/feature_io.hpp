#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "survclf/cohort/features.hpp"
#include "survclf/core/json_util.hpp"

namespace survclf::cohort {

inline const std::vector<std::pair<FeatureKind, std::string>> kKindNames = {
    {FeatureKind::CodePresence, "code_presence"},
    {FeatureKind::ComorbidityGroup, "comorbidity_group"},
    {FeatureKind::MedicationPrefix, "medication_prefix"},
    {FeatureKind::FamilyHistory, "family_history"},
    {FeatureKind::SocialHistory, "social_history"},
    {FeatureKind::BinnedNumeric, "binned_numeric"},
    {FeatureKind::DurationSinceFirst, "duration_since_first"},
    {FeatureKind::Demographic, "demographic"},
};

inline const std::vector<std::pair<DemographicField, std::string>> kFieldNames = {
    {DemographicField::Age, "age"},
    {DemographicField::Gender, "gender"},
    {DemographicField::Race, "race"},
    {DemographicField::MaritalStatus, "marital_status"},
};

inline std::string to_string(FeatureKind k) {
  for (const auto& [v, s] : kKindNames) {
    if (v == k) return s;
  }
  return "?";
}

inline nlohmann::json feature_to_json(const FeatureSpec& f) {
  nlohmann::json j = {{"name", f.name}, {"kind", to_string(f.kind)}};
  switch (f.kind) {
    case FeatureKind::CodePresence:
    case FeatureKind::ComorbidityGroup:
    case FeatureKind::DurationSinceFirst: {
      std::vector<std::string> codes;
      for (const auto& p : f.codes.patterns()) codes.push_back(p.text());
      j["codes"] = codes;
      break;
    }
    case FeatureKind::BinnedNumeric:
      j["vital"] = f.token;
      break;
    case FeatureKind::Demographic:
      for (const auto& [v, s] : kFieldNames) {
        if (v == f.field) j["field"] = s;
      }
      if (f.field != DemographicField::Age) j["categories"] = f.categories;
      break;
    default:
      j["token"] = f.token;
  }
  if (f.is_binned()) j["edges"] = f.edges;
  return j;
}

inline FeatureSpec feature_from_json(const nlohmann::json& j, const std::string& ctx) {
  FeatureSpec f;
  f.name = jsonu::get<std::string>(j, "name", ctx);
  const auto kind = jsonu::get<std::string>(j, "kind", ctx);
  bool known = false;
  for (const auto& [v, s] : kKindNames) {
    if (s == kind) {
      f.kind = v;
      known = true;
    }
  }
  if (!known) throw ConfigError("'" + jsonu::path(ctx, "kind") + "': unknown feature kind '" + kind + "'");
  switch (f.kind) {
    case FeatureKind::CodePresence:
    case FeatureKind::ComorbidityGroup:
    case FeatureKind::DurationSinceFirst:
      f.codes = CodeSet::parse(jsonu::get<std::vector<std::string>>(j, "codes", ctx));
      break;
    case FeatureKind::BinnedNumeric:
      f.token = jsonu::get<std::string>(j, "vital", ctx);
      break;
    case FeatureKind::Demographic: {
      const auto field = jsonu::get<std::string>(j, "field", ctx);
      known = false;
      for (const auto& [v, s] : kFieldNames) {
        if (s == field) {
          f.field = v;
          known = true;
        }
      }
      if (!known) throw ConfigError("'" + jsonu::path(ctx, "field") + "': unknown field '" + field + "'");
      if (f.field != DemographicField::Age) f.categories = jsonu::get<std::vector<std::string>>(j, "categories", ctx);
      break;
    }
    default:
      f.token = jsonu::get<std::string>(j, "token", ctx);
  }
  if (f.is_binned()) f.edges = jsonu::get<std::vector<double>>(j, "edges", ctx);
  f.validate();
  return f;
}

inline nlohmann::json features_to_json(const std::vector<FeatureSpec>& fs) {
  auto arr = nlohmann::json::array();
  for (const auto& f : fs) arr.push_back(feature_to_json(f));
  return arr;
}

inline std::vector<FeatureSpec> features_from_json(const nlohmann::json& arr, const std::string& ctx = "features") {
  if (!arr.is_array()) throw ConfigError("'" + ctx + "' must be an array");
  std::vector<FeatureSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(feature_from_json(arr[i], ctx + "[" + std::to_string(i) + "]"));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (out[i].name == out[k].name) throw ConfigError("duplicate feature name '" + out[i].name + "'");
    }
  }
  return out;
}

}  // namespace survclf::cohort
