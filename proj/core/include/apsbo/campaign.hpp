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

#ifndef APSBO_CAMPAIGN_HPP_
#define APSBO_CAMPAIGN_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "apsbo/optimizer.hpp"

namespace apsbo {

enum class Phase { kNeedsIgnition, kReadyToPropose, kAwaitingResults, kTerminated };

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view s);

struct SessionRecord {
  std::string session_id;
  ControllableInputs ignition_inputs;
  Powder ignition_powder = Powder::kA;
  std::vector<double> ignition_voltages;
  double delta_b = 0.0;
};

struct PendingBatch {
  std::size_t batch_id = 0;  // 1-based
  std::string session_id;
  BatchProposal proposal;
  // Per candidate: the ingested experiment, or empty while outstanding.
  std::vector<std::optional<EvaluatedExperiment>> results;
  std::vector<bool> dropped;

  bool complete() const;
};

// One finished batch. `results` holds the experiments in candidate order with
// dropped candidates left empty.
struct BatchSummary {
  std::size_t batch_id = 0;
  std::string session_id;
  double delta_b = 0.0;
  BatchProposal proposal;
  std::vector<std::optional<EvaluatedExperiment>> results;
  std::vector<bool> dropped;
  double incumbent_cost = 0.0;
  bool termination_met = false;
  bool abandoned = false;
};

struct CampaignState {
  std::string id;
  std::uint64_t revision = 0;
  std::uint64_t seed = 0;
  SimulationSetup config;
  std::vector<EvaluatedExperiment> history;
  std::optional<PendingBatch> pending;
  std::optional<SessionRecord> session;
  // Offset estimate per session id; initialization sessions are 0.
  std::map<std::string, double> session_offsets;
  std::size_t session_count = 0;
  std::size_t next_batch_id = 1;
  Phase phase = Phase::kNeedsIgnition;
  bool finished_by_operator = false;
  std::vector<BatchSummary> trace;
};

// One results row as submitted, before validation against the pending batch.
// Numeric fields are kept as text so that malformed values are reported per
// row instead of failing the whole submission.
struct ResultRow {
  std::size_t line = 0;
  std::string batch_id;
  std::string candidate_index;
  std::string microhardness;
  std::string porosity;
  std::string application_rate;
  std::string deposition_efficiency;
  std::string measured_voltage;
  std::string dropped;
  // Optional echo of the candidate's controllable inputs.
  std::array<std::string, kControllableDim> inputs;
};

enum class RowStatus { kAccepted, kDropped, kDuplicate, kRejected };
std::string_view to_string(RowStatus status);

struct RowReport {
  std::size_t line = 0;
  RowStatus status = RowStatus::kRejected;
  std::optional<std::size_t> candidate_index;
  std::string message;
};

struct IngestReport {
  std::vector<RowReport> rows;
  bool batch_complete = false;
  bool terminated = false;
  std::size_t accepted() const;
  std::size_t rejected() const;
};

// Columns: batch_id, candidate_index, microhardness_HV, porosity_pct,
// application_rate, deposition_efficiency_pct, measured_voltage_V,
// dropped_flag; the six controllable input columns may be added to match a
// candidate by value.
std::vector<ResultRow> parse_results_csv(std::istream& is);
std::vector<ResultRow> parse_results_csv(std::string_view text);
std::vector<ResultRow> results_from_json(const nlohmann::json& rows);

inline constexpr int kCampaignFormatVersion = 1;

// Grid fallback used when nothing feasible is known: max S over the
// candidate set plus one.
double fallback_cost(const SimulationSetup& setup);
Incumbent current_incumbent(const CampaignState& state);

CampaignState create_campaign(std::string id, const SimulationSetup& config,
                              std::vector<EvaluatedExperiment> initial,
                              std::uint64_t seed);

// Operations below give the strong guarantee: on error the state is untouched.
// Each successful mutation increments the revision.

// Ignition at x_c_b (must be an evaluated input) with one or more voltage
// readings; fits M_V and stores delta_b for the new session.
double start_session(CampaignState& state, const ControllableInputs& ignition_inputs,
                     std::span<const double> ignition_voltages);
// ReadyToPropose -> NeedsIgnition.
void new_session(CampaignState& state);
// Proposes the next batch and returns it, or nullptr when the campaign
// terminated instead.
const PendingBatch* propose(CampaignState& state);
void drop_candidate(CampaignState& state, std::size_t candidate_index);
IngestReport ingest_results(CampaignState& state, std::span<const ResultRow> rows);
// Operator stop; abandons a pending batch. Returns the final incumbent.
Incumbent finish(CampaignState& state);

struct WhatIfResult {
  IngestReport report;
  Incumbent incumbent;
  Phase phase = Phase::kNeedsIgnition;
  std::optional<BatchProposal> next_batch;
};

// Applies hypothetical results to a copy of the state and previews the next
// batch when the copy is ready to propose. `state` is not modified.
WhatIfResult what_if(const CampaignState& state, std::span<const ResultRow> rows);

nlohmann::json to_json(const CampaignState& state);
CampaignState campaign_from_json(const nlohmann::json& doc);
std::string serialize(const CampaignState& state);
CampaignState deserialize(std::string_view text);
// Atomic replace via a temporary file in the same directory.
void save_campaign(const CampaignState& state, const std::filesystem::path& path);
CampaignState load_campaign(const std::filesystem::path& path);

// candidate_index, six inputs, predicted_voltage_V, fp, improvement, alpha,
// acquisition_used.
void write_proposal_csv(std::ostream& os, const PendingBatch& batch);

nlohmann::json to_json(const PendingBatch& batch, const ConstraintSpec& spec);
nlohmann::json to_json(const IngestReport& report);

}  // namespace apsbo

#endif  // APSBO_CAMPAIGN_HPP_
