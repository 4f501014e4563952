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

#ifndef APSBO_PROCESS_HPP_
#define APSBO_PROCESS_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "apsbo/gp.hpp"
#include "apsbo/types.hpp"

namespace apsbo {

// The controllable domain X_c plus the voltage range used to scale the
// voltage input of the quality models.
struct DomainBounds {
  std::array<double, kControllableDim> lower{};
  std::array<double, kControllableDim> upper{};
  double voltage_lower = 0.0;
  double voltage_upper = 1.0;

  void validate() const;
  bool contains(const ControllableInputs& x) const;
  ControllableInputs midpoint() const;

  // Bounds of the 8-dimensional model input (powder spans [0, 1]).
  gp::Vector model_lower() const;
  gp::Vector model_upper() const;
  // Bounds of the 7-dimensional voltage-model input.
  gp::Vector voltage_model_lower() const;
  gp::Vector voltage_model_upper() const;

  // Placeholder limits; the real process limits are site-specific.
  static DomainBounds aps_default();
};

// Stress-index surrogate
//   S = w_I (I / I_ref)^2 + w_p (Qp_ref / Qp) + w_s (Qs_ref / Qs)
// rising with gun current and falling with both plasma gas flows.
struct CostConfig {
  std::string version = "stress-surrogate-1";
  double current_ref = 520.0;
  double primary_gas_ref = 45.0;
  double secondary_gas_ref = 9.0;
  double current_weight = 60.0;
  double primary_gas_weight = 25.0;
  double secondary_gas_weight = 15.0;

  void validate() const;
};

double stress_index(const ControllableInputs& x, const CostConfig& cfg,
                    const DomainBounds& bounds);
// Same formula without the domain check.
double stress_index_unchecked(const ControllableInputs& x, const CostConfig& cfg);

enum class CandidateScheme { kSobol, kLevelGrid };

struct CandidateOptions {
  std::size_t count = 20000;
  std::uint64_t seed = 0;
  CandidateScheme scheme = CandidateScheme::kSobol;
  // Levels per dimension for kLevelGrid (evenly spaced, endpoints included).
  std::array<std::size_t, kControllableDim> levels{4, 4, 4, 4, 4, 4};
};

// Space-filling candidate set inside `bounds`. The Sobol scheme applies a
// seed-derived digital shift (seed 0 leaves the sequence unshifted). The
// level grid returns the Cartesian product, subsampled without replacement
// when it holds more than `count` points.
std::vector<ControllableInputs> generate_candidates(const DomainBounds& bounds,
                                                    const CandidateOptions& options);

void write_candidates_csv(std::ostream& os,
                          std::span<const ControllableInputs> candidates);

struct VoltageObservation {
  ControllableInputs controllable;
  Powder powder = Powder::kA;
  double voltage = 0.0;
};

// M_V: zero-mean SE-ARD GP from (x_c, powder) to gun voltage.
class VoltageModel {
 public:
  explicit VoltageModel(gp::GPModel model) : model_(std::move(model)) {}

  double predict(const ControllableInputs& x, Powder powder) const;
  gp::PosteriorPrediction predict_full(const ControllableInputs& x,
                                       Powder powder) const;
  const gp::GPModel& model() const { return model_; }

  static gp::Vector encode(const ControllableInputs& x, Powder powder);

 private:
  gp::GPModel model_;
};

struct VoltageFitOptions {
  int restarts = 2;
  std::uint64_t seed = 0;
};

VoltageModel fit_voltage_model(std::span<const VoltageObservation> history,
                               const DomainBounds& bounds,
                               const VoltageFitOptions& options = {});

// delta_b = mean(V_b) - M_V(x_c_b). Several readings are averaged.
double estimate_offset(const VoltageModel& model,
                       const ControllableInputs& ignition_inputs, Powder powder,
                       std::span<const double> ignition_voltages);
double estimate_offset(const VoltageModel& model,
                       const ControllableInputs& ignition_inputs, Powder powder,
                       double ignition_voltage);

// U: each candidate with voltage M_V(x_c) + delta_b and the campaign powder.
std::vector<InputVector> expand_candidates(
    std::span<const ControllableInputs> candidates, Powder powder,
    const VoltageModel& model, double delta_b);

}  // namespace apsbo

#endif  // APSBO_PROCESS_HPP_
