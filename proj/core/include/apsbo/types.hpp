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

#ifndef APSBO_TYPES_HPP_
#define APSBO_TYPES_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace apsbo {

inline constexpr std::size_t kControllableDim = 6;
inline constexpr std::size_t kModelInputDim = 8;

// Column order used everywhere: CSV files, flattened model inputs, bounds.
inline constexpr std::array<std::string_view, kControllableDim>
    kControllableNames = {"primary_gas_flow",  "secondary_gas_flow",
                          "gun_current",       "carrier_gas_flow",
                          "powder_feed_rate",  "standoff_distance"};

inline constexpr std::size_t kSecondaryGasIndex = 1;
inline constexpr std::size_t kCurrentIndex = 2;
inline constexpr std::size_t kPowderIndex = 6;
inline constexpr std::size_t kVoltageIndex = 7;

struct ControllableInputs {
  double primary_gas_flow = 0.0;
  double secondary_gas_flow = 0.0;
  double gun_current = 0.0;
  double carrier_gas_flow = 0.0;
  double powder_feed_rate = 0.0;
  double standoff_distance = 0.0;

  std::array<double, kControllableDim> to_array() const {
    return {primary_gas_flow, secondary_gas_flow, gun_current,
            carrier_gas_flow, powder_feed_rate,   standoff_distance};
  }
  static ControllableInputs from_array(
      const std::array<double, kControllableDim>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
  bool operator==(const ControllableInputs&) const = default;
};

enum class Powder { kA = 0, kB = 1 };

std::string_view to_string(Powder powder);
Powder powder_from_string(std::string_view s);

// Full model input x = (x_c, powder, voltage).
struct InputVector {
  ControllableInputs controllable;
  Powder powder = Powder::kA;
  double voltage = 0.0;

  Eigen::VectorXd flatten() const;
  static InputVector from_flat(const Eigen::Ref<const Eigen::VectorXd>& v);
  bool operator==(const InputVector&) const = default;
};

enum class QualityOutput {
  kApplicationRate,
  kMicrohardness,
  kPorosity,
  kDepositionEfficiency,
};

std::string_view to_string(QualityOutput output);
QualityOutput quality_output_from_string(std::string_view s);

struct Measurements {
  std::optional<double> application_rate;
  std::optional<double> microhardness;  // HV
  std::optional<double> porosity;       // percent
  std::optional<double> deposition_efficiency;  // percent

  std::optional<double> value(QualityOutput output) const;
  bool operator==(const Measurements&) const = default;
};

struct EvaluatedExperiment {
  InputVector x;
  Measurements measurements;
  bool feasible = false;
  double cost = 0.0;
  std::string session_id;
  bool operator==(const EvaluatedExperiment&) const = default;
};

}  // namespace apsbo

#endif  // APSBO_TYPES_HPP_
