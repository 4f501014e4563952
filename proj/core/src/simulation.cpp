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

#include "apsbo/simulation.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "apsbo/csv.hpp"
#include "apsbo/error.hpp"

namespace apsbo {

ScenarioResult run_scenario(const AppConfig& config, const oracle::OracleData& data,
                            std::span<const oracle::DesignPoint> design, std::size_t n_init,
                            std::uint64_t seed) {
  if (n_init < 2 || n_init > design.size()) {
    throw InvalidArgument("n_init must lie in [2, " + std::to_string(design.size()) + "]");
  }
  const auto& setup = config.setup;
  const oracle::SimulatedProcess baseline(data, config.oracle.noise,
                                          {0.0, config.oracle.voltage_sd}, setup.constraints,
                                          setup.cost);
  ScenarioResult r;
  r.initial = oracle::generate_initialization(baseline, design.first(n_init),
                                              mix_seed(seed, 0x1217));
  const auto drifted =
      baseline.with_state({config.oracle.voltage_offset, config.oracle.voltage_sd});
  r.trace = run_simulated_campaign(r.initial, drifted, setup, seed);
  return r;
}

nlohmann::json scenario_json(const ScenarioResult& result, std::size_t n_init) {
  nlohmann::json j = to_json(result.trace);
  j["n_init"] = n_init;
  nlohmann::json init = nlohmann::json::array();
  for (const auto& e : result.initial) init.push_back(to_json(e));
  j["initial"] = init;
  return j;
}

SweepRow sweep_row(const ScenarioResult& r, std::size_t n_init, std::size_t batch_size,
                   std::uint64_t seed) {
  SweepRow row;
  row.n_init = n_init;
  row.batch_size = batch_size;
  row.seed = seed;
  row.final_cost = r.trace.final_incumbent.cost;
  row.feasible_found = r.trace.final_incumbent.point.has_value();
  row.stopping_batch = r.trace.stopping_batch;
  row.batches = r.trace.batches.size();
  row.evaluations = r.trace.evaluations();
  return row;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<SweepCell> summarize(std::span<const SweepRow> rows) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const SweepRow*>> groups;
  for (const auto& r : rows) groups[{r.n_init, r.batch_size}].push_back(&r);
  std::vector<SweepCell> out;
  for (const auto& [key, members] : groups) {
    std::vector<double> cost, stop, evals;
    for (const auto* m : members) {
      cost.push_back(m->final_cost);
      stop.push_back(static_cast<double>(m->stopping_batch.value_or(m->batches)));
      evals.push_back(static_cast<double>(m->evaluations));
    }
    out.push_back({key.first, key.second, members.size(), median(cost), median(stop),
                   median(evals)});
  }
  return out;
}

void write_sweep_rows_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "n_init,batch_size,seed,final_cost,feasible_found,stopping_batch,batches,evaluations\n";
  for (const auto& r : rows) {
    os << r.n_init << ',' << r.batch_size << ',' << r.seed << ','
       << csv::format_double(r.final_cost) << ',' << (r.feasible_found ? 1 : 0) << ','
       << (r.stopping_batch ? std::to_string(*r.stopping_batch) : std::string()) << ','
       << r.batches << ',' << r.evaluations << '\n';
  }
}

void write_sweep_cells_csv(std::ostream& os, std::span<const SweepCell> cells) {
  os << "n_init,batch_size,runs,median_final_cost,median_stopping_batch,median_evaluations\n";
  for (const auto& c : cells) {
    os << c.n_init << ',' << c.batch_size << ',' << c.runs << ','
       << csv::format_double(c.median_cost) << ',' << csv::format_double(c.median_stopping_batch)
       << ',' << csv::format_double(c.median_evaluations) << '\n';
  }
}

}  // namespace apsbo
