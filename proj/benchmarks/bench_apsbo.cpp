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
#include <vector>

#include <benchmark/benchmark.h>

#include "apsbo/acquisition.hpp"
#include "apsbo/config.hpp"
#include "apsbo/gp.hpp"
#include "apsbo/optimizer.hpp"
#include "apsbo/oracle.hpp"
#include "apsbo/process.hpp"

namespace apsbo {
namespace {

const oracle::OracleData& shipped() {
  static const oracle::OracleData data = oracle::load_oracle(default_config().paths.weights);
  return data;
}

const std::vector<EvaluatedExperiment>& history() {
  static const auto h = [] {
    const SimulationSetup s;
    const oracle::SimulatedProcess p(shipped(), {}, {0.0, 0.2}, s.constraints, s.cost);
    return oracle::generate_initialization(
        p, oracle::read_design_csv(default_config().paths.design), 1);
  }();
  return h;
}

gp::GPModel random_model(Eigen::Index p) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(p));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  gp::Dataset d;
  d.inputs = gp::Matrix(p, 8);
  d.targets = gp::Vector(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < 8; ++j) d.inputs(i, j) = u(rng);
    d.targets[i] = u(rng);
  }
  return gp::GPModel(gp::KernelParams::uniform(8, 0.4, 1.0, 0.05), std::nullopt, d);
}

void BM_GPFactorize(benchmark::State& state) {
  const gp::GPModel m = random_model(state.range(0));
  for (auto _ : state) {
    gp::GPModel copy(m.kernel(), std::nullopt, m.data());
    benchmark::DoNotOptimize(copy);
  }
}
BENCHMARK(BM_GPFactorize)->Arg(20)->Arg(86)->Arg(200);

void BM_Posterior(benchmark::State& state) {
  const gp::GPModel m = random_model(state.range(0));
  const gp::Vector q = gp::Vector::Constant(8, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(gp::posterior(m, q));
}
BENCHMARK(BM_Posterior)->Arg(20)->Arg(86)->Arg(200);

void BM_BatchPosteriorCondition(benchmark::State& state) {
  const gp::GPModel m = random_model(86);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  gp::Matrix q(state.range(0), 8);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < 8; ++j) q(i, j) = u(rng);
  }
  for (auto _ : state) {
    gp::BatchPosterior bp(m, q);
    for (Eigen::Index j = 0; j < 5; ++j) bp.condition_on_query(j, bp.at(j).mean);
    benchmark::DoNotOptimize(bp.at(0));
  }
}
BENCHMARK(BM_BatchPosteriorCondition)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_FitConstraintModels(benchmark::State& state) {
  const SimulationSetup s;
  ModelConfig m = s.models;
  m.restarts = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_constraint_models(history(), s.constraints, m, 0));
  }
}
BENCHMARK(BM_FitConstraintModels)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_FeasibilityProbability(benchmark::State& state) {
  const ConstraintSpec spec = ConstraintSpec::aps_default();
  const std::vector<gp::PosteriorPrediction> p{{650.0, 100.0}, {7.0, 0.5}};
  for (auto _ : state) benchmark::DoNotOptimize(feasibility_probability(p, spec));
}
BENCHMARK(BM_FeasibilityProbability);

void BM_GenerateCandidates(benchmark::State& state) {
  CandidateOptions o;
  o.count = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_candidates(DomainBounds::aps_default(), o));
  }
}
BENCHMARK(BM_GenerateCandidates)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_ProposeBatch(benchmark::State& state) {
  const SimulationSetup s;
  CandidateOptions o;
  o.count = static_cast<std::size_t>(state.range(0));
  const auto models = fit_constraint_models(history(), s.constraints, s.models, 0);
  std::vector<InputVector> xs;
  for (const auto& c : generate_candidates(s.bounds, o)) {
    xs.push_back({c, Powder::kA, shipped().voltage.evaluate(c, Powder::kA) + 2.0});
  }
  const auto pool = CandidatePool::from_inputs(std::move(xs), s.cost);
  for (auto _ : state) {
    benchmark::DoNotOptimize(propose_batch_with_models(history(), pool, s.constraints,
                                                       s.optimizer, s.models, models, 0));
  }
}
BENCHMARK(BM_ProposeBatch)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_OracleMeasure(benchmark::State& state) {
  const SimulationSetup s;
  const oracle::SimulatedProcess p(shipped(), {}, {}, s.constraints, s.cost);
  const auto x = s.bounds.midpoint();
  std::mt19937_64 rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(p.measure(x, Powder::kA, rng, "b"));
}
BENCHMARK(BM_OracleMeasure);

}  // namespace
}  // namespace apsbo

BENCHMARK_MAIN();
