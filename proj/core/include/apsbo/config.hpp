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

#ifndef APSBO_CONFIG_HPP_
#define APSBO_CONFIG_HPP_

#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "apsbo/optimizer.hpp"
#include "apsbo/oracle.hpp"

namespace apsbo {

inline constexpr int kConfigSchemaVersion = 1;

struct OracleConfig {
  oracle::NoiseSpec noise;
  // Equipment state of the simulated sessions after the initialization runs.
  double voltage_offset = 2.0;
  double voltage_sd = 0.2;
};

struct PathsConfig {
  std::filesystem::path weights;
  std::filesystem::path design;
  std::filesystem::path campaign_dir = "campaigns";
};

// Sections: domain_bounds, constraints, cost, optimizer, oracle, paths.
struct AppConfig {
  SimulationSetup setup;
  OracleConfig oracle;
  PathsConfig paths;
};

// Directory holding the shipped weight file and design: the source tree when
// it is still present, otherwise the install location.
std::filesystem::path default_data_dir();
AppConfig default_config();

// Missing keys keep their defaults; unknown keys and a newer schema_version
// are rejected.
AppConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const AppConfig& config);
AppConfig load_config(const std::filesystem::path& path);

// APSBO_WEIGHTS, APSBO_DESIGN, APSBO_CAMPAIGN_DIR.
void apply_env_overrides(PathsConfig& paths);

nlohmann::json setup_to_json(const SimulationSetup& setup);
SimulationSetup setup_from_json(const nlohmann::json& doc);

}  // namespace apsbo

#endif  // APSBO_CONFIG_HPP_
