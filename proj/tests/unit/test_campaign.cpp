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

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "apsbo/campaign.hpp"
#include "apsbo/config.hpp"
#include "apsbo/csv.hpp"
#include "apsbo/error.hpp"

namespace apsbo {
namespace {

struct Fixture {
  oracle::OracleData data = oracle::load_oracle(default_config().paths.weights);
  std::vector<oracle::DesignPoint> design = oracle::read_design_csv(default_config().paths.design);
  SimulationSetup setup = [] {
    SimulationSetup s;
    s.candidates.count = 1500;
    s.models.restarts = 1;
    s.models.max_iterations = 60;
    return s;
  }();
  oracle::SimulatedProcess drifted{data, {}, {2.0, 0.2}, setup.constraints, setup.cost};

  CampaignState fresh(std::uint64_t seed = 1) const {
    return create_campaign("t", setup, oracle::generate_initialization(drifted, design, seed),
                           seed);
  }
  double ignition(const CampaignState& s, std::uint64_t seed = 2) const {
    std::mt19937_64 rng(seed);
    return drifted.ignite(s.history.front().x.controllable, s.history.front().x.powder, rng);
  }
  void ignite(CampaignState& s) const {
    const std::vector<double> v{ignition(s)};
    start_session(s, s.history.front().x.controllable, v);
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

constexpr const char* kHeader =
    "batch_id,candidate_index,microhardness_HV,porosity_pct,measured_voltage_V,dropped_flag\n";

// Results CSV for the pending batch measured on the drifted oracle.
std::string measured_rows(const CampaignState& s, std::uint64_t seed,
                          const std::vector<std::size_t>& skip = {}) {
  std::ostringstream os;
  os << kHeader;
  std::mt19937_64 rng(seed);
  const auto& p = *s.pending;
  for (std::size_t i = 0; i < p.proposal.candidates.size(); ++i) {
    if (std::find(skip.begin(), skip.end(), i) != skip.end()) continue;
    const auto& c = p.proposal.candidates[i];
    const auto e = fx().drifted.measure(c.controllable, c.powder, rng, "x");
    os << p.batch_id << ',' << i << ',' << csv::format_double(*e.measurements.microhardness)
       << ',' << csv::format_double(*e.measurements.porosity) << ','
       << csv::format_double(e.x.voltage) << ",0\n";
  }
  return os.str();
}

CampaignState ready_with_batch(std::uint64_t seed = 1) {
  CampaignState s = fx().fresh(seed);
  fx().ignite(s);
  EXPECT_NE(propose(s), nullptr);
  return s;
}

TEST(Campaign, CreateStartsInNeedsIgnition) {
  const CampaignState s = fx().fresh();
  EXPECT_EQ(s.phase, Phase::kNeedsIgnition);
  EXPECT_EQ(s.revision, 0u);
  EXPECT_EQ(s.history.size(), 86u);
  EXPECT_FALSE(current_incumbent(s).point.has_value());
  EXPECT_DOUBLE_EQ(current_incumbent(s).cost, fallback_cost(s.config));
  EXPECT_THROW(create_campaign("x", fx().setup, {}, 0), InvalidArgument);
}

TEST(Campaign, IgnitionRequiresEvaluatedInput) {
  CampaignState s = fx().fresh();
  auto x = s.history.front().x.controllable;
  x.gun_current += 1.0;
  const std::vector<double> v{63.0};
  EXPECT_THROW(start_session(s, x, v), InvalidArgument);
  EXPECT_THROW(start_session(s, s.history.front().x.controllable, std::vector<double>{}),
               InvalidArgument);
  EXPECT_EQ(s.phase, Phase::kNeedsIgnition);
  EXPECT_EQ(s.revision, 0u);
}

TEST(Campaign, IgnitionAtPredictionGivesZeroOffset) {
  CampaignState s = fx().fresh();
  const auto x = s.history.front().x.controllable;
  const double v = fx().ignition(s);
  const double d1 = start_session(s, x, std::vector<double>{v});
  EXPECT_NEAR(d1, 2.0, 0.6);
  // The reading minus its own offset is the model prediction.
  new_session(s);
  const double d2 = start_session(s, x, std::vector<double>{v - d1});
  EXPECT_NEAR(d2, 0.0, 0.05);
  EXPECT_EQ(s.session->session_id, "session-2");
  EXPECT_EQ(s.session_offsets.size(), 3u);
}

TEST(Campaign, SecondSessionReplacesOffset) {
  CampaignState s = fx().fresh();
  const auto x = s.history.front().x.controllable;
  const double v = fx().ignition(s);
  const double d1 = start_session(s, x, std::vector<double>{v});
  const double d2 = start_session(s, x, std::vector<double>{v + 1.0});
  EXPECT_NEAR(d2 - d1, 1.0, 0.05);
  EXPECT_DOUBLE_EQ(s.session->delta_b, d2);
  const PendingBatch* b = propose(s);
  ASSERT_NE(b, nullptr);
  EXPECT_EQ(b->session_id, "session-2");
}

TEST(Campaign, FirstBatchIsFipOnInfeasibleHistory) {
  const CampaignState s = ready_with_batch();
  EXPECT_EQ(s.phase, Phase::kAwaitingResults);
  ASSERT_EQ(s.pending->proposal.candidates.size(), 5u);
  for (const auto& d : s.pending->proposal.diagnostics) {
    EXPECT_EQ(d.acquisition, AcquisitionKind::kFip);
  }
  // Proposals are never already evaluated settings.
  for (const auto& c : s.pending->proposal.candidates) {
    for (const auto& e : s.history) EXPECT_NE(c.controllable, e.x.controllable);
  }
}

TEST(Campaign, ProposeWhileAwaitingRejected) {
  CampaignState s = ready_with_batch();
  const auto before = serialize(s);
  EXPECT_THROW(propose(s), PhaseViolation);
  EXPECT_EQ(serialize(s), before);
}

TEST(Campaign, IngestFullBatch) {
  CampaignState s = ready_with_batch();
  const auto rev = s.revision;
  const auto rows = parse_results_csv(measured_rows(s, 5));
  const IngestReport r = ingest_results(s, rows);
  EXPECT_EQ(r.accepted(), 5u);
  EXPECT_TRUE(r.batch_complete);
  EXPECT_EQ(s.history.size(), 91u);
  EXPECT_FALSE(s.pending.has_value());
  EXPECT_TRUE(s.phase == Phase::kReadyToPropose || s.phase == Phase::kTerminated);
  EXPECT_EQ(s.revision, rev + 1);
  for (std::size_t i = 86; i < 91; ++i) EXPECT_EQ(s.history[i].session_id, "session-1");
  ASSERT_EQ(s.trace.size(), 1u);
  EXPECT_EQ(s.trace[0].termination_met, s.phase == Phase::kTerminated);
}

TEST(Campaign, IncumbentIsCheapestFeasible) {
  CampaignState s = ready_with_batch();
  std::ostringstream os;
  os << kHeader;
  const std::vector<bool> feasible{true, false, true, true, false};
  for (std::size_t i = 0; i < 5; ++i) {
    os << s.pending->batch_id << ',' << i << ',' << (feasible[i] ? 650 : 700) << ",7,,0\n";
  }
  double cheapest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 5; ++i) {
    if (feasible[i]) cheapest = std::min(cheapest, s.pending->proposal.diagnostics[i].cost);
  }
  ingest_results(s, parse_results_csv(os.str()));
  const Incumbent inc = current_incumbent(s);
  ASSERT_TRUE(inc.point.has_value());
  EXPECT_DOUBLE_EQ(inc.cost, cheapest);
}

TEST(Campaign, MalformedRowRejectedWithLine) {
  CampaignState s = ready_with_batch();
  std::string text = measured_rows(s, 6);
  // Corrupt the microhardness of the third data row (file line 4).
  std::istringstream is(text);
  std::ostringstream os;
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    if (n == 4) {
      auto parts = csv::split_line(line);
      parts[2] = "6a0";
      line.clear();
      for (std::size_t i = 0; i < parts.size(); ++i) line += (i ? "," : "") + parts[i];
    }
    os << line << '\n';
  }
  const IngestReport r = ingest_results(s, parse_results_csv(os.str()));
  EXPECT_EQ(r.accepted(), 4u);
  EXPECT_EQ(r.rejected(), 1u);
  const auto bad = std::find_if(r.rows.begin(), r.rows.end(),
                                [](const auto& x) { return x.status == RowStatus::kRejected; });
  EXPECT_EQ(bad->line, 4u);
  EXPECT_NE(bad->message.find("microhardness"), std::string::npos);
  EXPECT_EQ(s.phase, Phase::kAwaitingResults);
  EXPECT_FALSE(s.pending->results[2].has_value());
  // The corrected row completes the batch.
  ingest_results(s, parse_results_csv(measured_rows(s, 6)));
  EXPECT_FALSE(s.pending.has_value());
}

TEST(Campaign, DropThenIngestFour) {
  CampaignState s = ready_with_batch();
  drop_candidate(s, 2);
  const IngestReport r = ingest_results(s, parse_results_csv(measured_rows(s, 7, {2})));
  EXPECT_EQ(r.accepted(), 4u);
  EXPECT_TRUE(r.batch_complete);
  EXPECT_EQ(s.history.size(), 90u);
  EXPECT_TRUE(s.trace.back().dropped[2]);
  EXPECT_THROW(drop_candidate(s, 0), PhaseViolation);
}

TEST(Campaign, DroppedFlagInCsv) {
  CampaignState s = ready_with_batch();
  std::string text = measured_rows(s, 8, {4});
  text += std::to_string(s.pending->batch_id) + ",4,,,,1\n";
  const IngestReport r = ingest_results(s, parse_results_csv(text));
  EXPECT_EQ(r.accepted(), 5u);  // Dropped rows count as applied.
  EXPECT_EQ(r.rows.back().status, RowStatus::kDropped);
  EXPECT_TRUE(r.batch_complete);
}

TEST(Campaign, ReplayIsIdempotent) {
  CampaignState s = ready_with_batch();
  const std::string text = measured_rows(s, 9);
  ingest_results(s, parse_results_csv(text));
  const auto snapshot = serialize(s);
  const IngestReport again = ingest_results(s, parse_results_csv(text));
  for (const auto& row : again.rows) EXPECT_EQ(row.status, RowStatus::kDuplicate);
  EXPECT_EQ(serialize(s), snapshot);
}

TEST(Campaign, ConflictingResubmissionRejected) {
  CampaignState s = ready_with_batch();
  ingest_results(s, parse_results_csv(measured_rows(s, 10, {4})));
  const std::string other = measured_rows(s, 11, {4});
  const auto snapshot = serialize(s);
  const IngestReport r = ingest_results(s, parse_results_csv(other));
  EXPECT_EQ(r.rejected(), 4u);
  EXPECT_EQ(serialize(s), snapshot);
}

TEST(Campaign, RowsMatchedByEchoedInputs) {
  CampaignState s = ready_with_batch();
  std::ostringstream os;
  os << "batch_id,microhardness_HV,porosity_pct";
  for (auto n : kControllableNames) os << ',' << n;
  os << '\n';
  const auto& c = s.pending->proposal.candidates[3].controllable.to_array();
  os << s.pending->batch_id << ",640,7";
  for (double v : c) os << ',' << csv::format_double(v);
  os << '\n';
  os << s.pending->batch_id << ",640,7,1,2,3,4,5,6\n";
  const IngestReport r = ingest_results(s, parse_results_csv(os.str()));
  EXPECT_EQ(r.rows[0].status, RowStatus::kAccepted);
  EXPECT_EQ(r.rows[0].candidate_index, 3u);
  EXPECT_EQ(r.rows[1].status, RowStatus::kRejected);
}

TEST(Campaign, UnknownBatchRejected) {
  CampaignState s = ready_with_batch();
  const IngestReport r = ingest_results(s, parse_results_csv(std::string(kHeader) + "7,0,650,7,,0\n"));
  EXPECT_EQ(r.rejected(), 1u);
}

TEST(Campaign, IngestOutsideAwaitingRejected) {
  CampaignState s = fx().fresh();
  fx().ignite(s);
  EXPECT_THROW(ingest_results(s, parse_results_csv(std::string(kHeader) + "1,0,650,7,,0\n")),
               PhaseViolation);
}

TEST(Campaign, FinishIsAbsorbing) {
  CampaignState s = ready_with_batch();
  const Incumbent inc = finish(s);
  EXPECT_EQ(s.phase, Phase::kTerminated);
  EXPECT_TRUE(s.finished_by_operator);
  EXPECT_FALSE(s.pending.has_value());
  EXPECT_TRUE(s.trace.back().abandoned);
  EXPECT_EQ(inc.cost, current_incumbent(s).cost);
  EXPECT_THROW(propose(s), PhaseViolation);
  EXPECT_THROW(start_session(s, s.history.front().x.controllable, std::vector<double>{63.0}),
               PhaseViolation);
  EXPECT_THROW(new_session(s), PhaseViolation);
  const auto rev = s.revision;
  finish(s);
  EXPECT_EQ(s.revision, rev);
}

// Every operation in every phase: allowed edges only.
TEST(Campaign, PhaseMachineEdges) {
  const CampaignState needs = fx().fresh();
  CampaignState ready = needs;
  fx().ignite(ready);
  const CampaignState awaiting = ready_with_batch();
  CampaignState terminated = needs;
  finish(terminated);

  const auto x = needs.history.front().x.controllable;
  const std::vector<double> v{63.0};
  struct Op {
    const char* name;
    std::function<void(CampaignState&)> run;
  };
  const std::vector<Op> ops{
      {"ignite", [&](CampaignState& s) { start_session(s, x, v); }},
      {"new_session", [](CampaignState& s) { new_session(s); }},
      {"propose", [](CampaignState& s) { propose(s); }},
      {"drop", [](CampaignState& s) { drop_candidate(s, 0); }},
  };
  const std::map<std::string, std::set<Phase>> allowed{
      {"ignite", {Phase::kNeedsIgnition, Phase::kReadyToPropose}},
      {"new_session", {Phase::kReadyToPropose}},
      {"propose", {Phase::kReadyToPropose}},
      {"drop", {Phase::kAwaitingResults}},
  };
  for (const CampaignState* base : std::vector<const CampaignState*>{&needs, &ready, &awaiting, &terminated}) {
    for (const auto& op : ops) {
      CampaignState s = *base;
      if (allowed.at(op.name).count(base->phase)) {
        EXPECT_NO_THROW(op.run(s)) << op.name << " in " << to_string(base->phase);
        EXPECT_EQ(s.revision, base->revision + 1);
      } else {
        EXPECT_THROW(op.run(s), PhaseViolation) << op.name << " in " << to_string(base->phase);
        EXPECT_EQ(serialize(s), serialize(*base));
      }
    }
  }
  CampaignState s = ready;
  new_session(s);
  EXPECT_EQ(s.phase, Phase::kNeedsIgnition);
  EXPECT_FALSE(s.session.has_value());
}

TEST(Campaign, RunsToTermination) {
  CampaignState s = fx().fresh(3);
  fx().ignite(s);
  std::size_t batches = 0;
  double last = current_incumbent(s).cost;
  while (s.phase != Phase::kTerminated && batches < 20) {
    if (!propose(s)) break;
    ingest_results(s, parse_results_csv(measured_rows(s, 100 + batches)));
    ++batches;
    EXPECT_LE(current_incumbent(s).cost, last);
    last = current_incumbent(s).cost;
  }
  EXPECT_EQ(s.phase, Phase::kTerminated);
  EXPECT_FALSE(s.finished_by_operator);
  // Terminated is absorbing.
  EXPECT_THROW(propose(s), PhaseViolation);
}

TEST(Persistence, RoundTripIsByteIdentical) {
  CampaignState s = ready_with_batch();
  ingest_results(s, parse_results_csv(measured_rows(s, 12, {1, 3})));
  const std::string text = serialize(s);
  EXPECT_EQ(serialize(deserialize(text)), text);
}

TEST(Persistence, FutureVersionNeedsMigration) {
  auto doc = to_json(fx().fresh());
  doc["format_version"] = kCampaignFormatVersion + 1;
  EXPECT_THROW(campaign_from_json(doc), MigrationRequired);
  EXPECT_THROW(deserialize("{not json"), ValidationError);
}

TEST(Persistence, SaveLoadAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "apsbo_campaign_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const CampaignState s = ready_with_batch();
  save_campaign(s, dir / "c.json");
  EXPECT_EQ(serialize(load_campaign(dir / "c.json")), serialize(s));
  EXPECT_THROW(load_campaign(dir / "missing.json"), NotFound);
  std::filesystem::remove_all(dir);
}

TEST(Persistence, ResumeGivesIdenticalNextBatch) {
  CampaignState a = ready_with_batch(4);
  ingest_results(a, parse_results_csv(measured_rows(a, 13)));
  ASSERT_EQ(a.phase, Phase::kReadyToPropose);
  CampaignState b = deserialize(serialize(a));
  const PendingBatch* pa = propose(a);
  const PendingBatch* pb = propose(b);
  ASSERT_TRUE(pa && pb);
  EXPECT_EQ(pa->proposal.candidates, pb->proposal.candidates);
  EXPECT_EQ(serialize(a), serialize(b));
}

TEST(WhatIf, DoesNotMutate) {
  const CampaignState s = ready_with_batch();
  const std::string before = serialize(s);
  std::ostringstream os;
  os << kHeader;
  for (std::size_t i = 0; i < 5; ++i) os << s.pending->batch_id << ',' << i << ",650,7,,0\n";
  const WhatIfResult w = what_if(s, parse_results_csv(os.str()));
  EXPECT_EQ(serialize(s), before);
  EXPECT_LE(w.incumbent.cost, current_incumbent(s).cost);
  EXPECT_TRUE(w.incumbent.point.has_value());
  EXPECT_EQ(w.report.accepted(), 5u);
  if (w.phase == Phase::kReadyToPropose) EXPECT_TRUE(w.next_batch.has_value());
}

TEST(ProposalCsv, Columns) {
  const CampaignState s = ready_with_batch();
  std::ostringstream os;
  write_proposal_csv(os, *s.pending);
  const auto t = csv::read_string(os.str());
  EXPECT_EQ(t.rows.size(), 5u);
  for (const char* c : {"candidate_index", "gun_current", "predicted_voltage_V", "fp",
                        "improvement", "alpha", "acquisition_used"}) {
    EXPECT_TRUE(t.find(c).has_value()) << c;
  }
}

TEST(ResultsParsing, JsonRows) {
  const nlohmann::json rows = nlohmann::json::array(
      {{{"batch_id", 1}, {"candidate_index", 0}, {"microhardness_HV", 650.5},
        {"porosity_pct", 7}, {"dropped_flag", false}}});
  const auto r = results_from_json(rows);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].batch_id, "1");
  EXPECT_EQ(r[0].microhardness, "650.5");
  EXPECT_EQ(r[0].dropped, "0");
  EXPECT_THROW(parse_results_csv(std::string("candidate_index\n0\n")), ValidationError);
}

}  // namespace
}  // namespace apsbo
