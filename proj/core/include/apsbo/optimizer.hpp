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

#ifndef APSBO_OPTIMIZER_HPP_
#define APSBO_OPTIMIZER_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "apsbo/acquisition.hpp"
#include "apsbo/gp.hpp"
#include "apsbo/oracle.hpp"
#include "apsbo/process.hpp"
#include "apsbo/types.hpp"

namespace apsbo {

enum class FantasyMode { kMean, kSample };

struct OptimizerConfig {
  std::size_t batch_size = 5;
  double pi = 0.4;
  double epsilon = 0.05;
  std::size_t max_batches = 20;
  FantasyMode fantasy = FantasyMode::kMean;
  // Refit hyperparameters on the virtual data set at every inner step
  // instead of once per batch on the true history.
  bool refit_on_virtual = false;
  bool hfi_requires_threshold = false;

  void validate() const;
};

// How the constraint GPs are built from history.
struct ModelConfig {
  DomainBounds bounds = DomainBounds::aps_default();
  gp::KernelParams init = gp::KernelParams::uniform(8, 0.5, 1.0, 0.1);
  int restarts = 2;
  int max_iterations = 150;
  // Sign-constrained linear mean on the microhardness model.
  bool hybrid_microhardness = true;

  std::optional<gp::LinearMeanParams> mean_for(QualityOutput output) const;
  // gamma <= 0 on secondary gas flow, >= 0 on voltage, zero elsewhere.
  static gp::LinearMeanParams microhardness_mean();
};

struct CandidatePool {
  std::vector<InputVector> inputs;
  std::vector<double> costs;

  std::size_t size() const { return inputs.size(); }
  static CandidatePool from_inputs(std::vector<InputVector> inputs,
                                   const CostConfig& cost);
};

struct CandidateDiagnostics {
  std::size_t pool_index = 0;
  InputVector x;
  double cost = 0.0;
  double improvement = 0.0;
  double fp = 0.0;
  double alpha_fip = 0.0;
  double alpha_hfi = 0.0;
  double alpha = 0.0;
  AcquisitionKind acquisition = AcquisitionKind::kFip;
  std::vector<gp::PosteriorPrediction> predictions;  // one per constraint
};

struct BatchProposal {
  std::vector<InputVector> candidates;
  std::vector<CandidateDiagnostics> diagnostics;
  std::vector<double> fip_values;
  double incumbent_cost = 0.0;
};

// splitmix64 of (seed, a, b); used to give every batch and model its own
// reproducible stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

gp::Dataset constraint_dataset(std::span<const EvaluatedExperiment> history,
                               QualityOutput output);

// One GP per constraint band, hyperparameters fitted on `history`.
std::vector<gp::GPModel> fit_constraint_models(
    std::span<const EvaluatedExperiment> history, const ConstraintSpec& spec,
    const ModelConfig& models, std::uint64_t seed);

Incumbent best_feasible(std::span<const EvaluatedExperiment> history,
                        double fallback_cost);

// Sequential batch selection with virtual data-set expansion. `history` is
// never modified; fantasy observations live in a private copy.
BatchProposal propose_batch(std::span<const EvaluatedExperiment> history,
                            const CandidatePool& pool, const ConstraintSpec& spec,
                            const OptimizerConfig& config,
                            const ModelConfig& models, std::uint64_t seed);

// Same, reusing already fitted constraint models.
BatchProposal propose_batch_with_models(
    std::span<const EvaluatedExperiment> history, const CandidatePool& pool,
    const ConstraintSpec& spec, const OptimizerConfig& config,
    const ModelConfig& models, std::vector<gp::GPModel> fitted,
    std::uint64_t seed);

// True when at least ceil(n/2) selected candidates have alpha_FIP < epsilon.
bool check_termination(const BatchProposal& proposal, const OptimizerConfig& config);

// Voltage-model training rows; each voltage is shifted back to the baseline
// session by subtracting the offset recorded for its session.
std::vector<VoltageObservation> baseline_voltages(
    std::span<const EvaluatedExperiment> history,
    const std::map<std::string, double>& session_offsets);

// ---------------------------------------------------------------------------
// Closed-loop simulation against the oracle

struct SimulationSetup {
  DomainBounds bounds = DomainBounds::aps_default();
  CostConfig cost;
  ConstraintSpec constraints = ConstraintSpec::aps_default();
  OptimizerConfig optimizer;
  ModelConfig models;
  CandidateOptions candidates;
  Powder powder = Powder::kA;
  std::size_t ignition_repeats = 1;
};

struct BatchRecord {
  std::size_t batch = 0;  // 1-based
  std::string session_id;
  double ignition_voltage = 0.0;
  double delta_b = 0.0;
  BatchProposal proposal;
  std::vector<EvaluatedExperiment> results;
  Incumbent incumbent;
  bool terminated = false;
};

struct CampaignTrace {
  std::uint64_t seed = 0;
  Incumbent initial_incumbent;
  std::vector<BatchRecord> batches;
  bool terminated = false;
  std::optional<std::size_t> stopping_batch;
  Incumbent final_incumbent;
  std::size_t evaluations() const;
  // Batch index (1-based) of the first feasible result, if any.
  std::optional<std::size_t> first_feasible_batch() const;
};

CampaignTrace run_simulated_campaign(std::span<const EvaluatedExperiment> initial,
                                     const oracle::SimulatedProcess& process,
                                     const SimulationSetup& setup,
                                     std::uint64_t seed);

inline constexpr int kTraceFormatVersion = 1;

nlohmann::json to_json(const CampaignTrace& trace);
nlohmann::json to_json(const BatchProposal& proposal, const ConstraintSpec& spec);
BatchProposal proposal_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Incumbent& incumbent);
Incumbent incumbent_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const EvaluatedExperiment& e);
EvaluatedExperiment experiment_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const InputVector& x);
InputVector input_from_json(const nlohmann::json& doc);

// Per-candidate rows for acquisition / prediction plots.
void write_batch_csv(std::ostream& os, const CampaignTrace& trace,
                     const ConstraintSpec& spec);
// One row per evaluated experiment.
void write_experiments_csv(std::ostream& os,
                           std::span<const EvaluatedExperiment> experiments);
std::vector<EvaluatedExperiment> parse_experiments_csv(
    std::istream& is, const ConstraintSpec& spec, const CostConfig& cost);

}  // namespace apsbo

#endif  // APSBO_OPTIMIZER_HPP_
