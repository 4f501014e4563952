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

#ifndef APSBO_ORACLE_HPP_
#define APSBO_ORACLE_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "apsbo/acquisition.hpp"
#include "apsbo/gp.hpp"
#include "apsbo/process.hpp"
#include "apsbo/types.hpp"

namespace apsbo::oracle {

// 8 -> 7 (tanh) -> 2 regressor returning (microhardness HV, porosity %).
struct SurrogateNet {
  gp::Matrix hidden_weights;  // hidden x input
  gp::Vector hidden_bias;
  gp::Matrix output_weights;  // output x hidden
  gp::Vector output_bias;

  void validate() const;
  static SurrogateNet zeros(Eigen::Index inputs, Eigen::Index hidden,
                            Eigen::Index outputs);
};

struct NetOutputs {
  double microhardness = 0.0;
  double porosity = 0.0;
};

gp::Vector forward(const SurrogateNet& net, const gp::VectorRef& x);
NetOutputs forward(const SurrogateNet& net, const InputVector& x);

// Ground-truth gun voltage of an unchanged machine:
//   V = intercept + sum_i slope_i x_c,i + powder_slope * [powder == B]
struct VoltageTruth {
  double intercept = 0.0;
  std::array<double, kControllableDim> slopes{};
  double powder_slope = 0.0;

  double evaluate(const ControllableInputs& x, Powder powder) const;
};

struct NoiseSpec {
  double microhardness_sd = 8.45;
  double porosity_sd = 0.54;
  void validate() const;
};

// Constant within one simulated session.
struct EquipmentState {
  double voltage_offset = 0.0;
  // Run-to-run fluctuation of the gun voltage, also seen by ignition reads.
  double voltage_sd = 0.0;
};

struct SelfTest {
  InputVector input;
  NetOutputs output;
};

struct Reachability {
  double voltage_offset = 0.0;
  std::size_t candidate_count = 0;
  std::uint64_t candidate_seed = 0;
  std::size_t feasible_count = 0;
  double min_feasible_cost = 0.0;
};

// Contents of the versioned weight file.
struct OracleData {
  SurrogateNet net;
  VoltageTruth voltage;
  SelfTest self_test;
  Reachability reachability;
  std::string description;
};

inline constexpr int kWeightFormatVersion = 1;

nlohmann::json to_json(const OracleData& data);
OracleData oracle_from_json(const nlohmann::json& doc);
OracleData load_oracle(const std::filesystem::path& path);
void save_oracle(const OracleData& data, const std::filesystem::path& path);
// Max absolute deviation of forward(self_test.input) from the stored output.
double self_test_error(const OracleData& data);

struct DesignPoint {
  ControllableInputs controllable;
  Powder powder = Powder::kA;
};

std::vector<DesignPoint> read_design_csv(const std::filesystem::path& path);
std::vector<DesignPoint> parse_design_csv(std::istream& is);
void write_design_csv(std::ostream& os, std::span<const DesignPoint> design);

// The simulated machine: voltage response, network outputs, noise, and the
// bookkeeping that turns a measurement into an EvaluatedExperiment.
class SimulatedProcess {
 public:
  SimulatedProcess(OracleData data, NoiseSpec noise, EquipmentState state,
                   ConstraintSpec constraints, CostConfig cost);

  const OracleData& data() const { return data_; }
  const NoiseSpec& noise() const { return noise_; }
  const EquipmentState& state() const { return state_; }
  const ConstraintSpec& constraints() const { return constraints_; }
  const CostConfig& cost() const { return cost_; }

  SimulatedProcess with_state(EquipmentState state) const;
  SimulatedProcess with_noise(NoiseSpec noise) const;

  // Voltage of the current session without fluctuation.
  double session_voltage(const ControllableInputs& x, Powder powder) const;
  double ignite(const ControllableInputs& x, Powder powder,
                std::mt19937_64& rng) const;
  NetOutputs noiseless(const InputVector& x) const;

  EvaluatedExperiment measure(const ControllableInputs& x, Powder powder,
                              std::mt19937_64& rng,
                              const std::string& session_id) const;
  EvaluatedExperiment measure(const ControllableInputs& x, Powder powder,
                              std::uint64_t seed,
                              const std::string& session_id) const;

 private:
  OracleData data_;
  NoiseSpec noise_;
  EquipmentState state_;
  ConstraintSpec constraints_;
  CostConfig cost_;
};

// Measures every design point in a baseline session (offset 0).
std::vector<EvaluatedExperiment> generate_initialization(
    const SimulatedProcess& process, std::span<const DesignPoint> design,
    std::uint64_t seed, const std::string& session_id = "baseline");

}  // namespace apsbo::oracle

#endif  // APSBO_ORACLE_HPP_
