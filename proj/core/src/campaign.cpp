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

#include "apsbo/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "apsbo/config.hpp"
#include "apsbo/csv.hpp"
#include "apsbo/error.hpp"

namespace apsbo {

using nlohmann::json;

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kNeedsIgnition: return "NeedsIgnition";
    case Phase::kReadyToPropose: return "ReadyToPropose";
    case Phase::kAwaitingResults: return "AwaitingResults";
    case Phase::kTerminated: return "Terminated";
  }
  return "?";
}

Phase phase_from_string(std::string_view s) {
  for (Phase p : {Phase::kNeedsIgnition, Phase::kReadyToPropose, Phase::kAwaitingResults,
                  Phase::kTerminated}) {
    if (to_string(p) == s) return p;
  }
  throw ValidationError("unknown phase '" + std::string(s) + "'");
}

std::string_view to_string(RowStatus status) {
  switch (status) {
    case RowStatus::kAccepted: return "accepted";
    case RowStatus::kDropped: return "dropped";
    case RowStatus::kDuplicate: return "duplicate";
    case RowStatus::kRejected: return "rejected";
  }
  return "?";
}

bool PendingBatch::complete() const {
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i] && !dropped[i]) return false;
  }
  return true;
}

std::size_t IngestReport::accepted() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) {
    return r.status == RowStatus::kAccepted || r.status == RowStatus::kDropped;
  }));
}

std::size_t IngestReport::rejected() const {
  return static_cast<std::size_t>(std::count_if(
      rows.begin(), rows.end(), [](const auto& r) { return r.status == RowStatus::kRejected; }));
}

// ---------------------------------------------------------------------------
// Results rows

namespace {

constexpr std::string_view kResultColumns[] = {
    "batch_id",         "candidate_index",         "microhardness_HV",
    "porosity_pct",     "application_rate",        "deposition_efficiency_pct",
    "measured_voltage_V", "dropped_flag"};

std::string json_field(const json& row, std::string_view key) {
  const std::string k(key);
  if (!row.contains(k) || row.at(k).is_null()) return {};
  const auto& v = row.at(k);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return csv::format_double(v.get<double>());
  return v.dump();
}

}  // namespace

std::vector<ResultRow> parse_results_csv(std::istream& is) {
  const csv::Table t = csv::read(is);
  std::array<std::optional<std::size_t>, 8> cols;
  for (std::size_t i = 0; i < 8; ++i) cols[i] = t.find(kResultColumns[i]);
  if (!cols[0]) throw ValidationError("results csv: missing column 'batch_id'");
  std::array<std::optional<std::size_t>, kControllableDim> input_cols;
  for (std::size_t i = 0; i < kControllableDim; ++i) input_cols[i] = t.find(kControllableNames[i]);

  std::vector<ResultRow> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto get = [&](const std::optional<std::size_t>& c) {
      return c && *c < row.size() ? row[*c] : std::string();
    };
    ResultRow rr;
    rr.line = t.line_numbers[r];
    rr.batch_id = get(cols[0]);
    rr.candidate_index = get(cols[1]);
    rr.microhardness = get(cols[2]);
    rr.porosity = get(cols[3]);
    rr.application_rate = get(cols[4]);
    rr.deposition_efficiency = get(cols[5]);
    rr.measured_voltage = get(cols[6]);
    rr.dropped = get(cols[7]);
    for (std::size_t i = 0; i < kControllableDim; ++i) rr.inputs[i] = get(input_cols[i]);
    out.push_back(std::move(rr));
  }
  return out;
}

std::vector<ResultRow> parse_results_csv(std::string_view text) {
  std::istringstream is{std::string(text)};
  return parse_results_csv(is);
}

std::vector<ResultRow> results_from_json(const json& rows) {
  if (!rows.is_array()) throw ValidationError("results: expected an array of rows");
  std::vector<ResultRow> out;
  std::size_t line = 0;
  for (const auto& row : rows) {
    ++line;
    if (!row.is_object()) throw ValidationError("results: row " + std::to_string(line) + " is not an object");
    ResultRow rr;
    rr.line = line;
    rr.batch_id = json_field(row, kResultColumns[0]);
    rr.candidate_index = json_field(row, kResultColumns[1]);
    rr.microhardness = json_field(row, kResultColumns[2]);
    rr.porosity = json_field(row, kResultColumns[3]);
    rr.application_rate = json_field(row, kResultColumns[4]);
    rr.deposition_efficiency = json_field(row, kResultColumns[5]);
    rr.measured_voltage = json_field(row, kResultColumns[6]);
    rr.dropped = json_field(row, kResultColumns[7]);
    for (std::size_t i = 0; i < kControllableDim; ++i) {
      rr.inputs[i] = json_field(row, kControllableNames[i]);
    }
    out.push_back(std::move(rr));
  }
  return out;
}

// ---------------------------------------------------------------------------

double fallback_cost(const SimulationSetup& setup) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& c : generate_candidates(setup.bounds, setup.candidates)) {
    m = std::max(m, stress_index_unchecked(c, setup.cost));
  }
  return m + 1.0;
}

Incumbent current_incumbent(const CampaignState& state) {
  return best_feasible(state.history, fallback_cost(state.config));
}

CampaignState create_campaign(std::string id, const SimulationSetup& config,
                              std::vector<EvaluatedExperiment> initial,
                              std::uint64_t seed) {
  config.bounds.validate();
  config.constraints.validate();
  config.cost.validate();
  config.optimizer.validate();
  if (initial.empty()) throw InvalidArgument("campaign needs an initialization set");
  for (const auto& band : config.constraints.bands) {
    if (constraint_dataset(initial, band.output).size() < 2) {
      throw InvalidArgument("initialization set needs at least 2 measurements of " +
                            std::string(to_string(band.output)));
    }
  }
  CampaignState s;
  s.id = std::move(id);
  s.seed = seed;
  s.config = config;
  s.config.models.bounds = config.bounds;
  for (auto& e : initial) {
    if (e.session_id.empty()) e.session_id = "baseline";
    s.session_offsets.emplace(e.session_id, 0.0);
  }
  s.history = std::move(initial);
  return s;
}

namespace {

void require_phase(const CampaignState& s, std::initializer_list<Phase> allowed,
                   std::string_view op) {
  for (Phase p : allowed) {
    if (s.phase == p) return;
  }
  throw PhaseViolation(std::string(op) + " is not allowed in phase " +
                       std::string(to_string(s.phase)));
}

VoltageModel session_voltage_model(const CampaignState& s, std::uint64_t salt) {
  VoltageFitOptions vfo;
  vfo.restarts = 1;
  vfo.seed = mix_seed(s.seed, salt, 0x56);
  return fit_voltage_model(baseline_voltages(s.history, s.session_offsets), s.config.bounds,
                           vfo);
}

// Moves a complete pending batch into history and the trace.
void finalize(CampaignState& s) {
  PendingBatch& p = *s.pending;
  BatchSummary summary;
  summary.batch_id = p.batch_id;
  summary.session_id = p.session_id;
  summary.delta_b = s.session_offsets.at(p.session_id);
  summary.proposal = p.proposal;
  summary.results = p.results;
  summary.dropped = p.dropped;
  for (const auto& r : p.results) {
    if (r) s.history.push_back(*r);
  }
  summary.termination_met = check_termination(p.proposal, s.config.optimizer);
  summary.incumbent_cost = current_incumbent(s).cost;
  s.trace.push_back(std::move(summary));
  s.pending.reset();
  s.phase = s.trace.back().termination_met ? Phase::kTerminated : Phase::kReadyToPropose;
}

struct Resolved {
  std::optional<std::size_t> index;
  std::string error;
};

Resolved resolve_index(const ResultRow& row, const BatchProposal& proposal) {
  const std::size_t n = proposal.candidates.size();
  std::optional<std::size_t> by_index;
  if (!row.candidate_index.empty()) {
    const auto v = csv::parse_int(row.candidate_index);
    if (!v) return {std::nullopt, "malformed candidate_index '" + row.candidate_index + "'"};
    if (*v < 0 || static_cast<std::size_t>(*v) >= n) {
      return {std::nullopt, "candidate_index " + row.candidate_index + " is not in the batch"};
    }
    by_index = static_cast<std::size_t>(*v);
  }
  const bool echoed = std::any_of(row.inputs.begin(), row.inputs.end(),
                                  [](const std::string& f) { return !f.empty(); });
  std::optional<std::size_t> by_value;
  if (echoed) {
    std::array<double, kControllableDim> a{};
    for (std::size_t i = 0; i < kControllableDim; ++i) {
      const auto v = csv::parse_double(row.inputs[i]);
      if (!v) {
        return {std::nullopt, "malformed value for " + std::string(kControllableNames[i])};
      }
      a[i] = *v;
    }
    const auto x = ControllableInputs::from_array(a);
    for (std::size_t i = 0; i < n; ++i) {
      if (proposal.candidates[i].controllable == x) {
        by_value = i;
        break;
      }
    }
    if (!by_value) return {std::nullopt, "echoed inputs match no pending candidate"};
  }
  if (by_index && by_value && *by_index != *by_value) {
    return {std::nullopt, "candidate_index disagrees with the echoed inputs"};
  }
  if (!by_index && !by_value) return {std::nullopt, "row names no candidate"};
  return {by_index ? by_index : by_value, {}};
}

std::optional<bool> parse_flag(const std::string& f) {
  if (f.empty() || f == "0" || f == "false" || f == "FALSE" || f == "no") return false;
  if (f == "1" || f == "true" || f == "TRUE" || f == "yes") return true;
  return std::nullopt;
}

struct Parsed {
  std::optional<EvaluatedExperiment> experiment;
  std::string error;
};

Parsed build_experiment(const ResultRow& row, const InputVector& candidate,
                        const CampaignState& s, const std::string& session_id) {
  EvaluatedExperiment e;
  e.x = candidate;
  auto field = [&](const std::string& text, const char* name,
                   std::optional<double>& out) -> std::string {
    if (text.empty()) return {};
    const auto v = csv::parse_double(text);
    if (!v) return std::string("malformed ") + name + " '" + text + "'";
    out = v;
    return {};
  };
  std::string err;
  if (err = field(row.microhardness, "microhardness_HV", e.measurements.microhardness);
      !err.empty()) return {std::nullopt, err};
  if (err = field(row.porosity, "porosity_pct", e.measurements.porosity); !err.empty())
    return {std::nullopt, err};
  if (err = field(row.application_rate, "application_rate", e.measurements.application_rate);
      !err.empty()) return {std::nullopt, err};
  if (err = field(row.deposition_efficiency, "deposition_efficiency_pct",
                  e.measurements.deposition_efficiency);
      !err.empty()) return {std::nullopt, err};
  std::optional<double> voltage;
  if (err = field(row.measured_voltage, "measured_voltage_V", voltage); !err.empty())
    return {std::nullopt, err};
  if (voltage) e.x.voltage = *voltage;
  for (const auto& band : s.config.constraints.bands) {
    if (!e.measurements.value(band.output)) {
      return {std::nullopt, "missing constrained measurement " +
                                std::string(to_string(band.output))};
    }
  }
  e.feasible = s.config.constraints.satisfied(e.measurements);
  e.cost = stress_index_unchecked(e.x.controllable, s.config.cost);
  e.session_id = session_id;
  return {e, {}};
}

bool same_measurement(const EvaluatedExperiment& a, const EvaluatedExperiment& b) {
  return a.x == b.x && a.measurements == b.measurements;
}

// Replay of a row against an already finalized batch.
RowReport replay(const ResultRow& row, const BatchSummary& b, const CampaignState& s) {
  RowReport rep;
  rep.line = row.line;
  const Resolved r = resolve_index(row, b.proposal);
  if (!r.index) {
    rep.message = r.error;
    return rep;
  }
  rep.candidate_index = r.index;
  const auto flag = parse_flag(row.dropped);
  if (!flag) {
    rep.message = "malformed dropped_flag '" + row.dropped + "'";
    return rep;
  }
  const std::size_t i = *r.index;
  if (*flag) {
    if (b.dropped[i]) {
      rep.status = RowStatus::kDuplicate;
      rep.message = "already dropped";
    } else {
      rep.message = "batch " + std::to_string(b.batch_id) + " is already finalized";
    }
    return rep;
  }
  const Parsed p = build_experiment(row, b.proposal.candidates[i], s, b.session_id);
  if (!p.experiment) {
    rep.message = p.error;
    return rep;
  }
  if (b.results[i] && same_measurement(*b.results[i], *p.experiment)) {
    rep.status = RowStatus::kDuplicate;
    rep.message = "already ingested";
  } else {
    rep.message = "batch " + std::to_string(b.batch_id) + " is already finalized";
  }
  return rep;
}

}  // namespace

double start_session(CampaignState& state, const ControllableInputs& ignition_inputs,
                     std::span<const double> ignition_voltages) {
  require_phase(state, {Phase::kNeedsIgnition, Phase::kReadyToPropose}, "start_session");
  if (ignition_voltages.empty()) throw InvalidArgument("ignition needs at least one voltage");
  for (double v : ignition_voltages) {
    if (!std::isfinite(v)) throw InvalidArgument("ignition voltage must be finite");
  }
  const auto it = std::find_if(state.history.begin(), state.history.end(), [&](const auto& e) {
    return e.x.controllable == ignition_inputs;
  });
  if (it == state.history.end()) {
    throw InvalidArgument("ignition settings must be an already evaluated input");
  }
  CampaignState s = state;
  const std::size_t k = s.session_count + 1;
  const VoltageModel model = session_voltage_model(s, k);
  SessionRecord rec;
  rec.session_id = "session-" + std::to_string(k);
  rec.ignition_inputs = ignition_inputs;
  rec.ignition_powder = it->x.powder;
  rec.ignition_voltages.assign(ignition_voltages.begin(), ignition_voltages.end());
  rec.delta_b = estimate_offset(model, ignition_inputs, rec.ignition_powder, ignition_voltages);
  s.session_offsets[rec.session_id] = rec.delta_b;
  s.session_count = k;
  s.session = rec;
  s.phase = Phase::kReadyToPropose;
  ++s.revision;
  state = std::move(s);
  return rec.delta_b;
}

void new_session(CampaignState& state) {
  require_phase(state, {Phase::kReadyToPropose}, "new_session");
  state.session.reset();
  state.phase = Phase::kNeedsIgnition;
  ++state.revision;
}

const PendingBatch* propose(CampaignState& state) {
  require_phase(state, {Phase::kReadyToPropose}, "propose");
  CampaignState s = state;
  if (!s.trace.empty() && s.trace.back().termination_met) {
    s.phase = Phase::kTerminated;
    ++s.revision;
    state = std::move(s);
    return nullptr;
  }
  const SessionRecord& session = *s.session;
  const std::size_t batch_id = s.next_batch_id;
  const VoltageModel model = session_voltage_model(s, 0x1000 + batch_id);

  std::set<std::array<double, kControllableDim>> seen;
  for (const auto& e : s.history) seen.insert(e.x.controllable.to_array());
  std::vector<ControllableInputs> open;
  for (const auto& c : generate_candidates(s.config.bounds, s.config.candidates)) {
    if (!seen.count(c.to_array())) open.push_back(c);
  }
  CandidatePool pool = CandidatePool::from_inputs(
      expand_candidates(open, s.config.powder, model, session.delta_b), s.config.cost);

  PendingBatch p;
  p.batch_id = batch_id;
  p.session_id = session.session_id;
  p.proposal = propose_batch(s.history, pool, s.config.constraints, s.config.optimizer,
                             s.config.models, mix_seed(s.seed, batch_id, 0xB7));
  p.results.resize(p.proposal.candidates.size());
  p.dropped.assign(p.proposal.candidates.size(), false);
  s.pending = std::move(p);
  s.next_batch_id = batch_id + 1;
  s.phase = Phase::kAwaitingResults;
  ++s.revision;
  state = std::move(s);
  return &*state.pending;
}

void drop_candidate(CampaignState& state, std::size_t candidate_index) {
  require_phase(state, {Phase::kAwaitingResults}, "drop_candidate");
  PendingBatch& p = *state.pending;
  if (candidate_index >= p.results.size()) {
    throw InvalidArgument("candidate " + std::to_string(candidate_index) +
                          " is not in the pending batch");
  }
  if (p.results[candidate_index]) {
    throw ValidationError("candidate " + std::to_string(candidate_index) +
                          " already has results");
  }
  if (p.dropped[candidate_index]) return;
  CampaignState s = state;
  s.pending->dropped[candidate_index] = true;
  if (s.pending->complete()) finalize(s);
  ++s.revision;
  state = std::move(s);
}

IngestReport ingest_results(CampaignState& state, std::span<const ResultRow> rows) {
  IngestReport report;
  CampaignState s = state;
  bool changed = false;
  for (const ResultRow& row : rows) {
    RowReport rep;
    rep.line = row.line;
    const auto batch = csv::parse_int(row.batch_id);
    if (!batch || *batch < 1) {
      rep.message = "malformed batch_id '" + row.batch_id + "'";
      report.rows.push_back(rep);
      continue;
    }
    const auto batch_id = static_cast<std::size_t>(*batch);
    if (!s.pending || s.pending->batch_id != batch_id) {
      const auto it = std::find_if(s.trace.begin(), s.trace.end(),
                                   [&](const auto& b) { return b.batch_id == batch_id; });
      if (it != s.trace.end() && !it->abandoned) {
        report.rows.push_back(replay(row, *it, s));
      } else {
        rep.message = "batch " + row.batch_id + " is not pending";
        report.rows.push_back(rep);
      }
      continue;
    }
    PendingBatch& p = *s.pending;
    const Resolved r = resolve_index(row, p.proposal);
    if (!r.index) {
      rep.message = r.error;
      report.rows.push_back(rep);
      continue;
    }
    const std::size_t i = *r.index;
    rep.candidate_index = i;
    const auto flag = parse_flag(row.dropped);
    if (!flag) {
      rep.message = "malformed dropped_flag '" + row.dropped + "'";
    } else if (*flag) {
      if (p.dropped[i]) {
        rep.status = RowStatus::kDuplicate;
        rep.message = "already dropped";
      } else if (p.results[i]) {
        rep.message = "candidate already has results";
      } else {
        p.dropped[i] = true;
        rep.status = RowStatus::kDropped;
        changed = true;
      }
    } else if (p.dropped[i]) {
      rep.message = "candidate was dropped";
    } else {
      const Parsed parsed = build_experiment(row, p.proposal.candidates[i], s, p.session_id);
      if (!parsed.experiment) {
        rep.message = parsed.error;
      } else if (p.results[i]) {
        if (same_measurement(*p.results[i], *parsed.experiment)) {
          rep.status = RowStatus::kDuplicate;
          rep.message = "already ingested";
        } else {
          rep.message = "conflicting resubmission for candidate " + std::to_string(i);
        }
      } else {
        p.results[i] = parsed.experiment;
        rep.status = RowStatus::kAccepted;
        changed = true;
      }
    }
    report.rows.push_back(rep);
  }

  const bool all_duplicates =
      !report.rows.empty() &&
      std::all_of(report.rows.begin(), report.rows.end(),
                  [](const auto& r) { return r.status == RowStatus::kDuplicate; });
  if (state.phase != Phase::kAwaitingResults && !all_duplicates) {
    throw PhaseViolation("ingest_results is not allowed in phase " +
                         std::string(to_string(state.phase)));
  }
  if (!changed) return report;
  if (s.pending->complete()) {
    finalize(s);
    report.batch_complete = true;
    report.terminated = s.phase == Phase::kTerminated;
  }
  ++s.revision;
  state = std::move(s);
  return report;
}

Incumbent finish(CampaignState& state) {
  if (state.phase != Phase::kTerminated) {
    CampaignState s = state;
    if (s.pending) {
      BatchSummary summary;
      summary.batch_id = s.pending->batch_id;
      summary.session_id = s.pending->session_id;
      summary.delta_b = s.session_offsets.at(s.pending->session_id);
      summary.proposal = s.pending->proposal;
      summary.results.resize(summary.proposal.candidates.size());
      summary.dropped = s.pending->dropped;
      summary.abandoned = true;
      summary.incumbent_cost = current_incumbent(s).cost;
      s.trace.push_back(std::move(summary));
      s.pending.reset();
    }
    s.phase = Phase::kTerminated;
    s.finished_by_operator = true;
    ++s.revision;
    state = std::move(s);
  }
  return current_incumbent(state);
}

WhatIfResult what_if(const CampaignState& state, std::span<const ResultRow> rows) {
  CampaignState copy = state;
  WhatIfResult out;
  out.report = ingest_results(copy, rows);
  out.incumbent = current_incumbent(copy);
  out.phase = copy.phase;
  if (copy.phase == Phase::kReadyToPropose) {
    if (const PendingBatch* next = propose(copy)) out.next_batch = next->proposal;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json results_json(const std::vector<std::optional<EvaluatedExperiment>>& results) {
  json arr = json::array();
  for (const auto& r : results) arr.push_back(r ? to_json(*r) : json(nullptr));
  return arr;
}

std::vector<std::optional<EvaluatedExperiment>> results_from(const json& arr) {
  std::vector<std::optional<EvaluatedExperiment>> out;
  for (const auto& r : arr) {
    if (r.is_null()) {
      out.emplace_back();
    } else {
      out.emplace_back(experiment_from_json(r));
    }
  }
  return out;
}

json inputs_json(const ControllableInputs& x) {
  json j;
  const auto a = x.to_array();
  for (std::size_t i = 0; i < kControllableDim; ++i) j[std::string(kControllableNames[i])] = a[i];
  return j;
}

ControllableInputs inputs_from(const json& j) {
  std::array<double, kControllableDim> a{};
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    a[i] = j.at(std::string(kControllableNames[i])).get<double>();
  }
  return ControllableInputs::from_array(a);
}

}  // namespace

json to_json(const PendingBatch& batch, const ConstraintSpec& spec) {
  return {{"batch_id", batch.batch_id},
          {"session_id", batch.session_id},
          {"proposal", to_json(batch.proposal, spec)},
          {"results", results_json(batch.results)},
          {"dropped", batch.dropped}};
}

json to_json(const IngestReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"line", r.line},
                    {"status", std::string(to_string(r.status))},
                    {"candidate_index", r.candidate_index ? json(*r.candidate_index) : json(nullptr)},
                    {"message", r.message}});
  }
  return {{"rows", rows},
          {"accepted", report.accepted()},
          {"rejected", report.rejected()},
          {"batch_complete", report.batch_complete},
          {"terminated", report.terminated}};
}

json to_json(const CampaignState& s) {
  json j;
  j["format_version"] = kCampaignFormatVersion;
  j["id"] = s.id;
  j["revision"] = s.revision;
  j["seed"] = s.seed;
  j["config"] = setup_to_json(s.config);
  json history = json::array();
  for (const auto& e : s.history) history.push_back(to_json(e));
  j["history"] = history;
  j["pending"] = s.pending ? to_json(*s.pending, s.config.constraints) : json(nullptr);
  if (s.session) {
    j["session"] = {{"session_id", s.session->session_id},
                    {"ignition_inputs", inputs_json(s.session->ignition_inputs)},
                    {"ignition_powder", std::string(to_string(s.session->ignition_powder))},
                    {"ignition_voltages", s.session->ignition_voltages},
                    {"delta_b", s.session->delta_b}};
  } else {
    j["session"] = nullptr;
  }
  j["session_offsets"] = s.session_offsets;
  j["session_count"] = s.session_count;
  j["next_batch_id"] = s.next_batch_id;
  j["phase"] = std::string(to_string(s.phase));
  j["finished_by_operator"] = s.finished_by_operator;
  json trace = json::array();
  for (const auto& b : s.trace) {
    trace.push_back({{"batch_id", b.batch_id},
                     {"session_id", b.session_id},
                     {"delta_b", b.delta_b},
                     {"proposal", to_json(b.proposal, s.config.constraints)},
                     {"results", results_json(b.results)},
                     {"dropped", b.dropped},
                     {"incumbent_cost", b.incumbent_cost},
                     {"termination_met", b.termination_met},
                     {"abandoned", b.abandoned}});
  }
  j["trace"] = trace;
  return j;
}

CampaignState campaign_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("format_version")) {
    throw ValidationError("campaign file: missing format_version");
  }
  const int version = doc.at("format_version").get<int>();
  if (version > kCampaignFormatVersion) {
    throw MigrationRequired("campaign format_version " + std::to_string(version) +
                            " is newer than supported version " +
                            std::to_string(kCampaignFormatVersion));
  }
  if (version < 1) throw ValidationError("campaign file: bad format_version");
  try {
    CampaignState s;
    s.id = doc.at("id").get<std::string>();
    s.revision = doc.at("revision").get<std::uint64_t>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.config = setup_from_json(doc.at("config"));
    for (const auto& e : doc.at("history")) s.history.push_back(experiment_from_json(e));
    if (!doc.at("pending").is_null()) {
      const auto& p = doc.at("pending");
      PendingBatch pb;
      pb.batch_id = p.at("batch_id").get<std::size_t>();
      pb.session_id = p.at("session_id").get<std::string>();
      pb.proposal = proposal_from_json(p.at("proposal"));
      pb.results = results_from(p.at("results"));
      pb.dropped = p.at("dropped").get<std::vector<bool>>();
      if (pb.results.size() != pb.proposal.candidates.size() ||
          pb.dropped.size() != pb.results.size()) {
        throw ValidationError("campaign file: pending batch arrays differ in length");
      }
      s.pending = std::move(pb);
    }
    if (!doc.at("session").is_null()) {
      const auto& r = doc.at("session");
      SessionRecord rec;
      rec.session_id = r.at("session_id").get<std::string>();
      rec.ignition_inputs = inputs_from(r.at("ignition_inputs"));
      rec.ignition_powder = powder_from_string(r.at("ignition_powder").get<std::string>());
      rec.ignition_voltages = r.at("ignition_voltages").get<std::vector<double>>();
      rec.delta_b = r.at("delta_b").get<double>();
      s.session = rec;
    }
    s.session_offsets = doc.at("session_offsets").get<std::map<std::string, double>>();
    s.session_count = doc.at("session_count").get<std::size_t>();
    s.next_batch_id = doc.at("next_batch_id").get<std::size_t>();
    s.phase = phase_from_string(doc.at("phase").get<std::string>());
    s.finished_by_operator = doc.at("finished_by_operator").get<bool>();
    for (const auto& b : doc.at("trace")) {
      BatchSummary sum;
      sum.batch_id = b.at("batch_id").get<std::size_t>();
      sum.session_id = b.at("session_id").get<std::string>();
      sum.delta_b = b.at("delta_b").get<double>();
      sum.proposal = proposal_from_json(b.at("proposal"));
      sum.results = results_from(b.at("results"));
      sum.dropped = b.at("dropped").get<std::vector<bool>>();
      sum.incumbent_cost = b.at("incumbent_cost").get<double>();
      sum.termination_met = b.at("termination_met").get<bool>();
      sum.abandoned = b.at("abandoned").get<bool>();
      s.trace.push_back(std::move(sum));
    }
    if ((s.phase == Phase::kAwaitingResults) != s.pending.has_value()) {
      throw ValidationError("campaign file: pending batch inconsistent with phase");
    }
    if (s.phase == Phase::kReadyToPropose && !s.session) {
      throw ValidationError("campaign file: ReadyToPropose without a session");
    }
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("campaign file: ") + e.what());
  }
}

std::string serialize(const CampaignState& state) { return to_json(state).dump(2) + "\n"; }

CampaignState deserialize(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("campaign file: ") + e.what());
  }
  return campaign_from_json(doc);
}

void save_campaign(const CampaignState& state, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp);
    os << serialize(state);
    if (!os) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

CampaignState load_campaign(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFound("no campaign file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

void write_proposal_csv(std::ostream& os, const PendingBatch& batch) {
  os << "candidate_index";
  for (const auto& n : kControllableNames) os << ',' << n;
  os << ",predicted_voltage_V,fp,improvement,alpha,acquisition_used\n";
  using csv::format_double;
  for (std::size_t i = 0; i < batch.proposal.diagnostics.size(); ++i) {
    const auto& d = batch.proposal.diagnostics[i];
    os << i;
    for (double v : d.x.controllable.to_array()) os << ',' << format_double(v);
    os << ',' << format_double(d.x.voltage) << ',' << format_double(d.fp) << ','
       << format_double(d.improvement) << ',' << format_double(d.alpha) << ','
       << to_string(d.acquisition) << '\n';
  }
}

}  // namespace apsbo
