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

#ifndef APSBO_SIMULATION_HPP_
#define APSBO_SIMULATION_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "apsbo/config.hpp"
#include "apsbo/optimizer.hpp"
#include "apsbo/oracle.hpp"

namespace apsbo {

// The closed-loop scenario: the first n_init design points are measured in
// a baseline session, then the optimizer runs against the drifted oracle.
struct ScenarioResult {
  std::vector<EvaluatedExperiment> initial;
  CampaignTrace trace;
};

ScenarioResult run_scenario(const AppConfig& config, const oracle::OracleData& data,
                            std::span<const oracle::DesignPoint> design, std::size_t n_init,
                            std::uint64_t seed);

nlohmann::json scenario_json(const ScenarioResult& result, std::size_t n_init);

struct SweepRow {
  std::size_t n_init = 0;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  double final_cost = 0.0;
  bool feasible_found = false;
  std::optional<std::size_t> stopping_batch;
  std::size_t batches = 0;
  std::size_t evaluations = 0;
};

struct SweepCell {
  std::size_t n_init = 0;
  std::size_t batch_size = 0;
  std::size_t runs = 0;
  double median_cost = 0.0;
  // Runs that hit max_batches count as max_batches.
  double median_stopping_batch = 0.0;
  double median_evaluations = 0.0;
};

SweepRow sweep_row(const ScenarioResult& r, std::size_t n_init, std::size_t batch_size,
                   std::uint64_t seed);
std::vector<SweepCell> summarize(std::span<const SweepRow> rows);

void write_sweep_rows_csv(std::ostream& os, std::span<const SweepRow> rows);
void write_sweep_cells_csv(std::ostream& os, std::span<const SweepCell> cells);

double median(std::vector<double> values);

}  // namespace apsbo

#endif  // APSBO_SIMULATION_HPP_
