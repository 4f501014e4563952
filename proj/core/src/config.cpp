// Copyright 2026 The apsbo Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "apsbo/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "apsbo/error.hpp"

namespace apsbo {

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::string_view section,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw ValidationError("config: section '" + std::string(section) +
                          "' must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) {
      throw ValidationError("config: unknown key '" + key + "' in section '" +
                            std::string(section) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

json bounds_to_json(const DomainBounds& b) {
  json j;
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    j[std::string(kControllableNames[i])] = {b.lower[i], b.upper[i]};
  }
  j["voltage"] = {b.voltage_lower, b.voltage_upper};
  return j;
}

DomainBounds bounds_from_json(const json& j, DomainBounds b) {
  std::initializer_list<std::string_view> keys = {
      kControllableNames[0], kControllableNames[1], kControllableNames[2],
      kControllableNames[3], kControllableNames[4], kControllableNames[5],
      "voltage"};
  check_keys(j, "domain_bounds", keys);
  auto pair = [&](const std::string& key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ValidationError("config: domain_bounds." + key + " must be [min, max]");
    }
    lo = v[0].get<double>();
    hi = v[1].get<double>();
  };
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    pair(std::string(kControllableNames[i]), b.lower[i], b.upper[i]);
  }
  pair("voltage", b.voltage_lower, b.voltage_upper);
  try {
    b.validate();
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return b;
}

json constraints_to_json(const ConstraintSpec& spec) {
  json arr = json::array();
  for (const auto& band : spec.bands) {
    arr.push_back({{"output", std::string(to_string(band.output))},
                   {"lower", band.lower},
                   {"upper", band.upper}});
  }
  return arr;
}

ConstraintSpec constraints_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("config: constraints must be an array");
  ConstraintSpec spec;
  for (const auto& item : j) {
    check_keys(item, "constraints[]", {"output", "lower", "upper"});
    ConstraintBand band;
    try {
      band.output = quality_output_from_string(item.at("output").get<std::string>());
      band.lower = item.at("lower").get<double>();
      band.upper = item.at("upper").get<double>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config: bad constraint: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw ValidationError(std::string("config: bad constraint: ") + e.what());
    }
    spec.bands.push_back(band);
  }
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return spec;
}

json cost_to_json(const CostConfig& c) {
  return {{"version", c.version},
          {"current_ref", c.current_ref},
          {"primary_gas_ref", c.primary_gas_ref},
          {"secondary_gas_ref", c.secondary_gas_ref},
          {"current_weight", c.current_weight},
          {"primary_gas_weight", c.primary_gas_weight},
          {"secondary_gas_weight", c.secondary_gas_weight}};
}

CostConfig cost_from_json(const json& j, CostConfig c) {
  check_keys(j, "cost", {"version", "current_ref", "primary_gas_ref", "secondary_gas_ref",
                         "current_weight", "primary_gas_weight", "secondary_gas_weight"});
  read(j, "version", c.version);
  read(j, "current_ref", c.current_ref);
  read(j, "primary_gas_ref", c.primary_gas_ref);
  read(j, "secondary_gas_ref", c.secondary_gas_ref);
  read(j, "current_weight", c.current_weight);
  read(j, "primary_gas_weight", c.primary_gas_weight);
  read(j, "secondary_gas_weight", c.secondary_gas_weight);
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

json optimizer_to_json(const SimulationSetup& s) {
  const auto& o = s.optimizer;
  const auto& m = s.models;
  const auto& c = s.candidates;
  return {
      {"batch_size", o.batch_size},
      {"pi", o.pi},
      {"epsilon", o.epsilon},
      {"max_batches", o.max_batches},
      {"fantasy", o.fantasy == FantasyMode::kMean ? "mean" : "sample"},
      {"refit_on_virtual", o.refit_on_virtual},
      {"hfi_requires_threshold", o.hfi_requires_threshold},
      {"powder", std::string(to_string(s.powder))},
      {"ignition_repeats", s.ignition_repeats},
      {"candidates",
       {{"count", c.count},
        {"seed", c.seed},
        {"scheme", c.scheme == CandidateScheme::kSobol ? "sobol" : "level-grid"},
        {"levels", c.levels}}},
      {"model",
       {{"restarts", m.restarts},
        {"max_iterations", m.max_iterations},
        {"hybrid_microhardness", m.hybrid_microhardness},
        {"lengthscales", std::vector<double>(m.init.lengthscales.begin(),
                                             m.init.lengthscales.end())},
        {"signal_variance", m.init.signal_variance},
        {"noise_variance", m.init.noise_variance}}}};
}

void optimizer_from_json(const json& j, SimulationSetup& s) {
  check_keys(j, "optimizer",
             {"batch_size", "pi", "epsilon", "max_batches", "fantasy", "refit_on_virtual",
              "hfi_requires_threshold", "powder", "ignition_repeats", "candidates", "model"});
  auto& o = s.optimizer;
  read(j, "batch_size", o.batch_size);
  read(j, "pi", o.pi);
  read(j, "epsilon", o.epsilon);
  read(j, "max_batches", o.max_batches);
  read(j, "refit_on_virtual", o.refit_on_virtual);
  read(j, "hfi_requires_threshold", o.hfi_requires_threshold);
  read(j, "ignition_repeats", s.ignition_repeats);
  if (j.contains("fantasy")) {
    std::string f;
    read(j, "fantasy", f);
    if (f == "mean") {
      o.fantasy = FantasyMode::kMean;
    } else if (f == "sample") {
      o.fantasy = FantasyMode::kSample;
    } else {
      throw ValidationError("config: optimizer.fantasy must be 'mean' or 'sample'");
    }
  }
  if (j.contains("powder")) {
    std::string p;
    read(j, "powder", p);
    try {
      s.powder = powder_from_string(p);
    } catch (const InvalidArgument& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
  }
  if (j.contains("candidates")) {
    const auto& c = j.at("candidates");
    check_keys(c, "optimizer.candidates", {"count", "seed", "scheme", "levels"});
    read(c, "count", s.candidates.count);
    read(c, "seed", s.candidates.seed);
    read(c, "levels", s.candidates.levels);
    if (c.contains("scheme")) {
      std::string scheme;
      read(c, "scheme", scheme);
      if (scheme == "sobol") {
        s.candidates.scheme = CandidateScheme::kSobol;
      } else if (scheme == "level-grid") {
        s.candidates.scheme = CandidateScheme::kLevelGrid;
      } else {
        throw ValidationError("config: candidates.scheme must be 'sobol' or 'level-grid'");
      }
    }
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, "optimizer.model",
               {"restarts", "max_iterations", "hybrid_microhardness", "lengthscales",
                "signal_variance", "noise_variance"});
    read(m, "restarts", s.models.restarts);
    read(m, "max_iterations", s.models.max_iterations);
    read(m, "hybrid_microhardness", s.models.hybrid_microhardness);
    read(m, "signal_variance", s.models.init.signal_variance);
    read(m, "noise_variance", s.models.init.noise_variance);
    if (m.contains("lengthscales")) {
      std::vector<double> ls;
      read(m, "lengthscales", ls);
      if (ls.size() != kModelInputDim) {
        throw ValidationError("config: optimizer.model.lengthscales needs 8 entries");
      }
      s.models.init.lengthscales = Eigen::Map<const gp::Vector>(ls.data(), 8);
    }
    if (s.models.restarts < 1) throw ValidationError("config: model.restarts must be >= 1");
  }
  try {
    o.validate();
    s.models.init.validate();
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

std::filesystem::path existing_or(const char* preferred, const char* fallback) {
  std::error_code ec;
  if (std::filesystem::is_directory(preferred, ec)) return preferred;
  return fallback;
}

}  // namespace

std::filesystem::path default_data_dir() {
  return existing_or(APSBO_SOURCE_DATA_DIR, APSBO_INSTALL_DATA_DIR);
}

AppConfig default_config() {
  AppConfig c;
  const auto dir = default_data_dir();
  c.paths.weights = dir / "oracle_weights.json";
  c.paths.design = dir / "init_design_86.csv";
  return c;
}

json setup_to_json(const SimulationSetup& setup) {
  return {{"domain_bounds", bounds_to_json(setup.bounds)},
          {"constraints", constraints_to_json(setup.constraints)},
          {"cost", cost_to_json(setup.cost)},
          {"optimizer", optimizer_to_json(setup)}};
}

SimulationSetup setup_from_json(const json& doc) {
  SimulationSetup s;
  if (doc.contains("domain_bounds")) {
    s.bounds = bounds_from_json(doc.at("domain_bounds"), s.bounds);
  }
  s.models.bounds = s.bounds;
  if (doc.contains("constraints")) s.constraints = constraints_from_json(doc.at("constraints"));
  if (doc.contains("cost")) s.cost = cost_from_json(doc.at("cost"), s.cost);
  if (doc.contains("optimizer")) optimizer_from_json(doc.at("optimizer"), s);
  return s;
}

AppConfig config_from_json(const json& doc) {
  check_keys(doc, "<root>",
             {"schema_version", "domain_bounds", "constraints", "cost", "optimizer",
              "oracle", "paths"});
  int version = kConfigSchemaVersion;
  read(doc, "schema_version", version);
  if (version > kConfigSchemaVersion) {
    throw MigrationRequired("config schema_version " + std::to_string(version) +
                            " is newer than supported version " +
                            std::to_string(kConfigSchemaVersion));
  }
  if (version < 1) throw ValidationError("config: schema_version must be >= 1");
  AppConfig c = default_config();
  c.setup = setup_from_json(doc);
  if (doc.contains("oracle")) {
    const auto& o = doc.at("oracle");
    check_keys(o, "oracle", {"microhardness_sd", "porosity_sd", "voltage_offset", "voltage_sd"});
    read(o, "microhardness_sd", c.oracle.noise.microhardness_sd);
    read(o, "porosity_sd", c.oracle.noise.porosity_sd);
    read(o, "voltage_offset", c.oracle.voltage_offset);
    read(o, "voltage_sd", c.oracle.voltage_sd);
    if (c.oracle.voltage_sd < 0) throw ValidationError("config: oracle.voltage_sd must be >= 0");
    try {
      c.oracle.noise.validate();
    } catch (const InvalidArgument& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
  }
  if (doc.contains("paths")) {
    const auto& p = doc.at("paths");
    check_keys(p, "paths", {"weights", "design", "campaign_dir"});
    std::string s;
    if (p.contains("weights")) { read(p, "weights", s); c.paths.weights = s; }
    if (p.contains("design")) { read(p, "design", s); c.paths.design = s; }
    if (p.contains("campaign_dir")) { read(p, "campaign_dir", s); c.paths.campaign_dir = s; }
  }
  return c;
}

json to_json(const AppConfig& config) {
  json j = setup_to_json(config.setup);
  j["schema_version"] = kConfigSchemaVersion;
  j["oracle"] = {{"microhardness_sd", config.oracle.noise.microhardness_sd},
                 {"porosity_sd", config.oracle.noise.porosity_sd},
                 {"voltage_offset", config.oracle.voltage_offset},
                 {"voltage_sd", config.oracle.voltage_sd}};
  j["paths"] = {{"weights", config.paths.weights.string()},
                {"design", config.paths.design.string()},
                {"campaign_dir", config.paths.campaign_dir.string()}};
  return j;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void apply_env_overrides(PathsConfig& paths) {
  if (const char* v = std::getenv("APSBO_WEIGHTS"); v && *v) paths.weights = v;
  if (const char* v = std::getenv("APSBO_DESIGN"); v && *v) paths.design = v;
  if (const char* v = std::getenv("APSBO_CAMPAIGN_DIR"); v && *v) paths.campaign_dir = v;
}

}  // namespace apsbo
