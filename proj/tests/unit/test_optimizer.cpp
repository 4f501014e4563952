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

#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "apsbo/config.hpp"
#include "apsbo/error.hpp"
#include "apsbo/optimizer.hpp"
#include "support/oracles.hpp"

namespace apsbo {
namespace {

const oracle::OracleData& shipped() {
  static const oracle::OracleData data = oracle::load_oracle(default_config().paths.weights);
  return data;
}

ControllableInputs random_inputs(std::mt19937_64& rng, const DomainBounds& b) {
  std::array<double, kControllableDim> a{};
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    a[i] = std::uniform_real_distribution<double>(b.lower[i], b.upper[i])(rng);
  }
  return ControllableInputs::from_array(a);
}

// History of noisy oracle measurements at random settings.
std::vector<EvaluatedExperiment> random_history(std::uint64_t seed, std::size_t n,
                                                double offset = 0.0) {
  const SimulationSetup setup;
  const oracle::SimulatedProcess p(shipped(), {}, {offset, 0.0}, setup.constraints, setup.cost);
  std::mt19937_64 rng(seed);
  std::vector<EvaluatedExperiment> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(p.measure(random_inputs(rng, setup.bounds), Powder::kA, rng, "baseline"));
  }
  return out;
}

CandidatePool random_pool(std::uint64_t seed, std::size_t n, double offset = 2.0) {
  const SimulationSetup setup;
  std::mt19937_64 rng(seed);
  std::vector<InputVector> xs;
  for (std::size_t i = 0; i < n; ++i) {
    const ControllableInputs c = random_inputs(rng, setup.bounds);
    xs.push_back({c, Powder::kA, shipped().voltage.evaluate(c, Powder::kA) + offset});
  }
  return CandidatePool::from_inputs(std::move(xs), setup.cost);
}

ModelConfig fast_models() {
  ModelConfig m;
  m.restarts = 1;
  m.max_iterations = 60;
  return m;
}

TEST(Termination, HalfOfBatchRule) {
  OptimizerConfig cfg;
  BatchProposal p;
  p.fip_values = {0.04, 0.3, 0.02, 0.01, 0.5};
  EXPECT_TRUE(check_termination(p, cfg));
  p.fip_values = {0.5, 0.5, 0.5, 0.5, 0.5};
  EXPECT_FALSE(check_termination(p, cfg));
  p.fip_values = {0.01, 0.5, 0.02, 0.5};
  EXPECT_TRUE(check_termination(p, cfg));
  p.fip_values = {0.01, 0.5, 0.5, 0.5};
  EXPECT_FALSE(check_termination(p, cfg));
  p.fip_values = {0.04, 0.3, 0.02, 0.5, 0.5};
  EXPECT_FALSE(check_termination(p, cfg));
  // Exactly epsilon is not below it.
  p.fip_values = {0.05, 0.05};
  EXPECT_FALSE(check_termination(p, cfg));
}

EvaluatedExperiment with_cost(double cost, bool feasible) {
  EvaluatedExperiment e;
  e.cost = cost;
  e.feasible = feasible;
  return e;
}

TEST(Incumbent, CheapestFeasible) {
  const std::vector<EvaluatedExperiment> h{with_cost(120.3, true), with_cost(90, false),
                                           with_cost(104, true)};
  const Incumbent inc = best_feasible(h, 151.0);
  EXPECT_DOUBLE_EQ(inc.cost, 104.0);
  EXPECT_EQ(inc.history_index, 2u);
}

TEST(Incumbent, FallbackWhenNothingFeasible) {
  const std::vector<EvaluatedExperiment> h{with_cost(120.3, false)};
  const Incumbent inc = best_feasible(h, 150.0 + 1.0);
  EXPECT_DOUBLE_EQ(inc.cost, 151.0);
  EXPECT_FALSE(inc.point.has_value());
}

TEST(Incumbent, EarliestOfEqualCost) {
  const std::vector<EvaluatedExperiment> h{with_cost(110, true), with_cost(100, true),
                                           with_cost(100, true)};
  EXPECT_EQ(best_feasible(h, 151.0).history_index, 1u);
}

TEST(MixSeed, DeterministicAndSpread) {
  EXPECT_EQ(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
  EXPECT_NE(mix_seed(1, 2, 3), mix_seed(1, 3, 2));
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 2));
}

TEST(ConstraintDataset, SkipsMissingMeasurements) {
  auto h = random_history(1, 4);
  h[2].measurements.porosity.reset();
  EXPECT_EQ(constraint_dataset(h, QualityOutput::kPorosity).size(), 3);
  EXPECT_EQ(constraint_dataset(h, QualityOutput::kMicrohardness).size(), 4);
}

TEST(ProposeBatch, BatchOfOneIsSingleSelection) {
  const auto h = random_history(2, 30);
  const auto pool = random_pool(3, 40);
  const SimulationSetup setup;
  OptimizerConfig cfg;
  cfg.batch_size = 1;
  const auto models = fit_constraint_models(h, setup.constraints, fast_models(), 7);
  const BatchProposal p =
      propose_batch_with_models(h, pool, setup.constraints, cfg, fast_models(), models, 0);
  ASSERT_EQ(p.candidates.size(), 1u);

  std::vector<ScoredCandidate> scored;
  const double fallback = *std::max_element(pool.costs.begin(), pool.costs.end()) + 1.0;
  const Incumbent inc = best_feasible(h, fallback);
  for (std::size_t j = 0; j < pool.size(); ++j) {
    std::vector<gp::PosteriorPrediction> preds;
    for (const auto& m : models) preds.push_back(gp::posterior(m, pool.inputs[j].flatten()));
    scored.push_back(score_candidate(j, pool.costs[j],
                                     feasibility_probability(preds, setup.constraints),
                                     inc.cost, cfg.pi));
  }
  const Selection s = select_candidate(scored, inc.point.has_value(), cfg.pi);
  EXPECT_EQ(p.diagnostics[0].pool_index, scored[s.position].pool_index);
}

TEST(ProposeBatch, NoFeasibleHistoryIsAllFip) {
  auto h = random_history(4, 30);
  for (auto& e : h) e.feasible = false;
  const auto pool = random_pool(5, 60);
  const SimulationSetup setup;
  const BatchProposal p =
      propose_batch(h, pool, setup.constraints, OptimizerConfig{}, fast_models(), 0);
  ASSERT_EQ(p.candidates.size(), 5u);
  for (const auto& d : p.diagnostics) EXPECT_EQ(d.acquisition, AcquisitionKind::kFip);
  // Distinct picks.
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = a + 1; b < 5; ++b) {
      EXPECT_NE(p.diagnostics[a].pool_index, p.diagnostics[b].pool_index);
    }
  }
}

TEST(ProposeBatch, MatchesDenseStepByStepOracle) {
  const SimulationSetup setup;
  for (std::uint64_t s = 0; s < 6; ++s) {
    const auto h = random_history(10 + s, 25);
    const std::size_t pool_size = 4 + s % 7;
    const auto pool = random_pool(20 + s, pool_size);
    OptimizerConfig cfg;
    cfg.batch_size = 1 + s % 3;
    const auto models = fit_constraint_models(h, setup.constraints, fast_models(), s);
    const BatchProposal p =
        propose_batch_with_models(h, pool, setup.constraints, cfg, fast_models(), models, s);

    const double fallback = *std::max_element(pool.costs.begin(), pool.costs.end()) + 1.0;
    const Incumbent inc = best_feasible(h, fallback);
    std::vector<Eigen::VectorXd> xs;
    for (const auto& x : pool.inputs) xs.push_back(x.flatten());
    std::vector<test::OracleBand> bands;
    for (const auto& b : setup.constraints.bands) bands.push_back({b.lower, b.upper});
    const auto expected =
        test::oracle_batch({&models[0], &models[1]}, xs, pool.costs, bands,
                           inc.point.has_value(), inc.cost, cfg.batch_size, cfg.pi);
    ASSERT_EQ(p.diagnostics.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      EXPECT_EQ(p.diagnostics[i].pool_index, expected[i]) << "seed " << s << " step " << i;
    }
  }
}

TEST(ProposeBatch, VirtualPointShrinksVarianceAtWinner) {
  const auto h = random_history(30, 20);
  const auto pool = random_pool(31, 3);
  const SimulationSetup setup;
  OptimizerConfig cfg;
  cfg.batch_size = 2;
  auto models = fit_constraint_models(h, setup.constraints, fast_models(), 1);
  // Sharpen the microhardness model: short lengthscales, little noise.
  gp::KernelParams k = models[0].kernel();
  k.lengthscales *= 0.2;
  k.noise_variance = 1e-4;
  models[0] = gp::GPModel(k, models[0].mean(), models[0].data(), models[0].standardization());
  const BatchProposal p =
      propose_batch_with_models(h, pool, setup.constraints, cfg, fast_models(), models, 0);
  ASSERT_EQ(p.diagnostics.size(), 2u);
  EXPECT_NE(p.diagnostics[0].pool_index, p.diagnostics[1].pool_index);
  const auto& winner = pool.inputs[p.diagnostics[0].pool_index];
  const double before = gp::posterior(models[0], winner.flatten()).variance;
  const double after = test::dense_posterior(models[0], winner.flatten(), {winner.flatten()},
                                             {p.diagnostics[0].predictions[0].mean})
                           .variance;
  EXPECT_LE(after, before);
}

TEST(ProposeBatch, RefitOnVirtualAndSampleFantasyRun) {
  const auto h = random_history(40, 20);
  const auto pool = random_pool(41, 30);
  const SimulationSetup setup;
  OptimizerConfig cfg;
  cfg.batch_size = 3;
  cfg.refit_on_virtual = true;
  cfg.fantasy = FantasyMode::kSample;
  const BatchProposal a = propose_batch(h, pool, setup.constraints, cfg, fast_models(), 9);
  const BatchProposal b = propose_batch(h, pool, setup.constraints, cfg, fast_models(), 9);
  ASSERT_EQ(a.candidates.size(), 3u);
  EXPECT_EQ(a.candidates, b.candidates);
}

TEST(ProposeBatch, Errors) {
  const auto h = random_history(50, 10);
  const SimulationSetup setup;
  OptimizerConfig cfg;
  EXPECT_THROW(propose_batch(h, random_pool(51, 3), setup.constraints, cfg, fast_models(), 0),
               InvalidArgument);
  EXPECT_THROW(propose_batch(h, CandidatePool{}, setup.constraints, cfg, fast_models(), 0),
               InvalidArgument);
  cfg.pi = 1.5;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(ProposeBatch, HistoryIsNotModified) {
  const auto h = random_history(60, 15);
  const auto copy = h;
  const SimulationSetup setup;
  propose_batch(h, random_pool(61, 20), setup.constraints, OptimizerConfig{}, fast_models(), 0);
  EXPECT_EQ(h, copy);
}

TEST(Simulation, ZeroBatchesReturnsInitialIncumbent) {
  SimulationSetup setup;
  setup.optimizer.max_batches = 0;
  setup.candidates.count = 500;
  const auto h = random_history(70, 10);
  const oracle::SimulatedProcess p(shipped(), {}, {2.0, 0.2}, setup.constraints, setup.cost);
  const CampaignTrace t = run_simulated_campaign(h, p, setup, 1);
  EXPECT_TRUE(t.batches.empty());
  EXPECT_FALSE(t.terminated);
  EXPECT_EQ(t.final_incumbent.cost, t.initial_incumbent.cost);
}

TEST(Simulation, SmallRunIsDeterministicAndMonotone) {
  SimulationSetup setup;
  setup.optimizer.max_batches = 3;
  setup.candidates.count = 2000;
  setup.models = fast_models();
  const auto h = random_history(80, 30);
  const oracle::SimulatedProcess p(shipped(), {}, {2.0, 0.2}, setup.constraints, setup.cost);
  const CampaignTrace a = run_simulated_campaign(h, p, setup, 5);
  const CampaignTrace b = run_simulated_campaign(h, p, setup, 5);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  double last = a.initial_incumbent.cost;
  for (const auto& rec : a.batches) {
    EXPECT_LE(rec.incumbent.cost, last);
    last = rec.incumbent.cost;
    EXPECT_NEAR(rec.delta_b, 2.0, 0.6);
  }
}

TEST(ExperimentsCsv, RoundTrip) {
  const auto h = random_history(90, 6);
  std::ostringstream os;
  write_experiments_csv(os, h);
  std::istringstream is(os.str());
  const SimulationSetup setup;
  const auto back = parse_experiments_csv(is, setup.constraints, setup.cost);
  ASSERT_EQ(back.size(), h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    EXPECT_EQ(back[i].x, h[i].x);
    EXPECT_EQ(back[i].measurements, h[i].measurements);
    EXPECT_EQ(back[i].feasible, h[i].feasible);
    EXPECT_DOUBLE_EQ(back[i].cost, h[i].cost);
  }
}

TEST(ExperimentsCsv, BadNumberRejectedWithLine) {
  std::istringstream is(
      "session_id,primary_gas_flow,secondary_gas_flow,gun_current,carrier_gas_flow,"
      "powder_feed_rate,standoff_distance,powder,voltage_V,microhardness_HV,porosity_pct\n"
      "s,45,9,550,4,40,130,A,63,6x0,7\n");
  const SimulationSetup setup;
  try {
    parse_experiments_csv(is, setup.constraints, setup.cost);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(TraceJson, ProposalRoundTrip) {
  const auto h = random_history(95, 15);
  const SimulationSetup setup;
  const BatchProposal p =
      propose_batch(h, random_pool(96, 20), setup.constraints, OptimizerConfig{}, fast_models(), 0);
  const BatchProposal back = proposal_from_json(to_json(p, setup.constraints));
  EXPECT_EQ(to_json(back, setup.constraints).dump(), to_json(p, setup.constraints).dump());
}

}  // namespace
}  // namespace apsbo
