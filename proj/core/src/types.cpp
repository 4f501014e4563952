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

#include "apsbo/types.hpp"

#include <string>

#include "apsbo/error.hpp"

namespace apsbo {

std::string_view to_string(Powder powder) {
  return powder == Powder::kA ? "A" : "B";
}

Powder powder_from_string(std::string_view s) {
  if (s == "A" || s == "0") return Powder::kA;
  if (s == "B" || s == "1") return Powder::kB;
  throw InvalidArgument("unknown powder '" + std::string(s) + "'");
}

Eigen::VectorXd InputVector::flatten() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(kModelInputDim));
  const auto c = controllable.to_array();
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    v[static_cast<Eigen::Index>(i)] = c[i];
  }
  v[kPowderIndex] = static_cast<double>(powder);
  v[kVoltageIndex] = voltage;
  return v;
}

InputVector InputVector::from_flat(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != static_cast<Eigen::Index>(kModelInputDim)) {
    throw InvalidArgument("input vector must have 8 entries");
  }
  InputVector x;
  std::array<double, kControllableDim> c{};
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    c[i] = v[static_cast<Eigen::Index>(i)];
  }
  x.controllable = ControllableInputs::from_array(c);
  x.powder = v[kPowderIndex] > 0.5 ? Powder::kB : Powder::kA;
  x.voltage = v[kVoltageIndex];
  return x;
}

std::string_view to_string(QualityOutput output) {
  switch (output) {
    case QualityOutput::kApplicationRate: return "application_rate";
    case QualityOutput::kMicrohardness: return "microhardness";
    case QualityOutput::kPorosity: return "porosity";
    case QualityOutput::kDepositionEfficiency: return "deposition_efficiency";
  }
  return "unknown";
}

QualityOutput quality_output_from_string(std::string_view s) {
  if (s == "application_rate") return QualityOutput::kApplicationRate;
  if (s == "microhardness") return QualityOutput::kMicrohardness;
  if (s == "porosity") return QualityOutput::kPorosity;
  if (s == "deposition_efficiency") return QualityOutput::kDepositionEfficiency;
  throw InvalidArgument("unknown quality output '" + std::string(s) + "'");
}

std::optional<double> Measurements::value(QualityOutput output) const {
  switch (output) {
    case QualityOutput::kApplicationRate: return application_rate;
    case QualityOutput::kMicrohardness: return microhardness;
    case QualityOutput::kPorosity: return porosity;
    case QualityOutput::kDepositionEfficiency: return deposition_efficiency;
  }
  return std::nullopt;
}

}  // namespace apsbo
