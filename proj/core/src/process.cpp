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

#include "apsbo/process.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <boost/random/sobol.hpp>

#include "apsbo/error.hpp"

namespace apsbo {

void DomainBounds::validate() const {
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    if (!(lower[i] < upper[i]) || !std::isfinite(lower[i]) ||
        !std::isfinite(upper[i])) {
      throw InvalidArgument("domain bounds for " +
                            std::string(kControllableNames[i]) +
                            " must satisfy min < max");
    }
  }
  if (!(voltage_lower < voltage_upper)) {
    throw InvalidArgument("voltage bounds must satisfy min < max");
  }
}

bool DomainBounds::contains(const ControllableInputs& x) const {
  const auto a = x.to_array();
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    if (!(a[i] >= lower[i] && a[i] <= upper[i])) return false;
  }
  return true;
}

ControllableInputs DomainBounds::midpoint() const {
  std::array<double, kControllableDim> m{};
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    m[i] = 0.5 * (lower[i] + upper[i]);
  }
  return ControllableInputs::from_array(m);
}

gp::Vector DomainBounds::model_lower() const {
  gp::Vector v(static_cast<Eigen::Index>(kModelInputDim));
  for (std::size_t i = 0; i < kControllableDim; ++i) v[static_cast<Eigen::Index>(i)] = lower[i];
  v[kPowderIndex] = 0.0;
  v[kVoltageIndex] = voltage_lower;
  return v;
}

gp::Vector DomainBounds::model_upper() const {
  gp::Vector v(static_cast<Eigen::Index>(kModelInputDim));
  for (std::size_t i = 0; i < kControllableDim; ++i) v[static_cast<Eigen::Index>(i)] = upper[i];
  v[kPowderIndex] = 1.0;
  v[kVoltageIndex] = voltage_upper;
  return v;
}

gp::Vector DomainBounds::voltage_model_lower() const {
  return model_lower().head(kControllableDim + 1);
}

gp::Vector DomainBounds::voltage_model_upper() const {
  return model_upper().head(kControllableDim + 1);
}

DomainBounds DomainBounds::aps_default() {
  DomainBounds b;
  // primary gas [SLPM], secondary gas [SLPM], current [A], carrier gas
  // [SLPM], feed rate [g/min], stand-off [mm]
  b.lower = {38.0, 6.0, 500.0, 2.0, 20.0, 100.0};
  b.upper = {55.0, 12.0, 650.0, 6.0, 60.0, 160.0};
  b.voltage_lower = 52.0;
  b.voltage_upper = 76.0;
  return b;
}

void CostConfig::validate() const {
  if (current_weight < 0 || primary_gas_weight < 0 || secondary_gas_weight < 0) {
    throw InvalidArgument("cost weights must be non-negative");
  }
  if (!(current_ref > 0) || !(primary_gas_ref > 0) || !(secondary_gas_ref > 0)) {
    throw InvalidArgument("cost reference values must be positive");
  }
}

double stress_index_unchecked(const ControllableInputs& x, const CostConfig& cfg) {
  const double i = x.gun_current / cfg.current_ref;
  return cfg.current_weight * i * i +
         cfg.primary_gas_weight * (cfg.primary_gas_ref / x.primary_gas_flow) +
         cfg.secondary_gas_weight * (cfg.secondary_gas_ref / x.secondary_gas_flow);
}

double stress_index(const ControllableInputs& x, const CostConfig& cfg,
                    const DomainBounds& bounds) {
  if (!bounds.contains(x)) {
    throw InvalidArgument("stress_index: input outside the domain bounds");
  }
  return stress_index_unchecked(x, cfg);
}

namespace {

std::vector<ControllableInputs> sobol_candidates(const DomainBounds& bounds,
                                                 const CandidateOptions& options) {
  boost::random::sobol engine(kControllableDim);
  std::array<std::uint64_t, kControllableDim> shift{};
  if (options.seed != 0) {
    std::mt19937_64 rng(options.seed);
    for (auto& s : shift) s = rng();
  }
  constexpr double kTwoPowMinus53 = 1.0 / 9007199254740992.0;
  std::vector<ControllableInputs> out;
  out.reserve(options.count);
  for (std::size_t n = 0; n < options.count; ++n) {
    std::array<double, kControllableDim> a{};
    for (std::size_t d = 0; d < kControllableDim; ++d) {
      const std::uint64_t bits = static_cast<std::uint64_t>(engine()) ^ shift[d];
      const double u = static_cast<double>(bits >> 11) * kTwoPowMinus53;
      a[d] = bounds.lower[d] + u * (bounds.upper[d] - bounds.lower[d]);
    }
    out.push_back(ControllableInputs::from_array(a));
  }
  return out;
}

std::vector<ControllableInputs> level_candidates(const DomainBounds& bounds,
                                                 const CandidateOptions& options) {
  std::size_t total = 1;
  for (auto l : options.levels) {
    if (l == 0) throw InvalidArgument("level grid: every dimension needs >= 1 level");
    total *= l;
  }
  std::vector<std::size_t> chosen(total);
  std::iota(chosen.begin(), chosen.end(), 0);
  if (total > options.count) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(options.count);
    std::sort(chosen.begin(), chosen.end());
  }
  std::vector<ControllableInputs> out;
  out.reserve(chosen.size());
  for (std::size_t flat : chosen) {
    std::array<double, kControllableDim> a{};
    for (std::size_t d = 0; d < kControllableDim; ++d) {
      const std::size_t levels = options.levels[d];
      const std::size_t k = flat % levels;
      flat /= levels;
      const double t = levels == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(levels - 1);
      a[d] = bounds.lower[d] + t * (bounds.upper[d] - bounds.lower[d]);
    }
    out.push_back(ControllableInputs::from_array(a));
  }
  return out;
}

}  // namespace

std::vector<ControllableInputs> generate_candidates(const DomainBounds& bounds,
                                                    const CandidateOptions& options) {
  bounds.validate();
  if (options.count == 0) throw InvalidArgument("generate_candidates: count must be >= 1");
  if (options.count == 1) return {bounds.midpoint()};
  return options.scheme == CandidateScheme::kSobol
             ? sobol_candidates(bounds, options)
             : level_candidates(bounds, options);
}

void write_candidates_csv(std::ostream& os,
                          std::span<const ControllableInputs> candidates) {
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    os << (i ? "," : "") << kControllableNames[i];
  }
  os << '\n';
  const auto old = os.precision(17);
  for (const auto& c : candidates) {
    const auto a = c.to_array();
    for (std::size_t i = 0; i < kControllableDim; ++i) {
      os << (i ? "," : "") << a[i];
    }
    os << '\n';
  }
  os.precision(old);
}

gp::Vector VoltageModel::encode(const ControllableInputs& x, Powder powder) {
  gp::Vector v(static_cast<Eigen::Index>(kControllableDim + 1));
  const auto a = x.to_array();
  for (std::size_t i = 0; i < kControllableDim; ++i) v[static_cast<Eigen::Index>(i)] = a[i];
  v[kControllableDim] = static_cast<double>(powder);
  return v;
}

double VoltageModel::predict(const ControllableInputs& x, Powder powder) const {
  return model_.predict_mean(encode(x, powder));
}

gp::PosteriorPrediction VoltageModel::predict_full(const ControllableInputs& x,
                                                   Powder powder) const {
  return model_.predict(encode(x, powder));
}

VoltageModel fit_voltage_model(std::span<const VoltageObservation> history,
                               const DomainBounds& bounds,
                               const VoltageFitOptions& options) {
  if (history.size() < 2) {
    throw InvalidArgument("fit_voltage_model: need at least 2 observations");
  }
  gp::Dataset data;
  data.inputs.resize(static_cast<Eigen::Index>(history.size()),
                     static_cast<Eigen::Index>(kControllableDim + 1));
  data.targets.resize(static_cast<Eigen::Index>(history.size()));
  for (std::size_t i = 0; i < history.size(); ++i) {
    data.inputs.row(static_cast<Eigen::Index>(i)) =
        VoltageModel::encode(history[i].controllable, history[i].powder).transpose();
    data.targets[static_cast<Eigen::Index>(i)] = history[i].voltage;
  }
  gp::FitOptions fo;
  fo.restarts = options.restarts;
  fo.seed = options.seed;
  fo.input_lower = bounds.voltage_model_lower();
  fo.input_upper = bounds.voltage_model_upper();
  const auto init = gp::KernelParams::uniform(data.dim(), 1.0, 1.0, 0.01);
  return VoltageModel(gp::fit(data, std::nullopt, init, fo));
}

double estimate_offset(const VoltageModel& model,
                       const ControllableInputs& ignition_inputs, Powder powder,
                       std::span<const double> ignition_voltages) {
  if (ignition_voltages.empty()) {
    throw InvalidArgument("estimate_offset: no ignition voltage");
  }
  const double mean =
      std::accumulate(ignition_voltages.begin(), ignition_voltages.end(), 0.0) /
      static_cast<double>(ignition_voltages.size());
  return mean - model.predict(ignition_inputs, powder);
}

double estimate_offset(const VoltageModel& model,
                       const ControllableInputs& ignition_inputs, Powder powder,
                       double ignition_voltage) {
  return estimate_offset(model, ignition_inputs, powder,
                         std::span<const double>(&ignition_voltage, 1));
}

std::vector<InputVector> expand_candidates(
    std::span<const ControllableInputs> candidates, Powder powder,
    const VoltageModel& model, double delta_b) {
  std::vector<InputVector> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    out.push_back({c, powder, model.predict(c, powder) + delta_b});
  }
  return out;
}

}  // namespace apsbo
