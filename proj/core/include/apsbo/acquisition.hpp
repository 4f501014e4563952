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

#ifndef APSBO_ACQUISITION_HPP_
#define APSBO_ACQUISITION_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "apsbo/gp.hpp"
#include "apsbo/types.hpp"

namespace apsbo {

struct ConstraintBand {
  QualityOutput output = QualityOutput::kMicrohardness;
  double lower = 0.0;
  double upper = 0.0;
};

// Feasibility is lower <= c_k(x) <= upper for every band.
struct ConstraintSpec {
  std::vector<ConstraintBand> bands;

  void validate() const;
  std::size_t size() const { return bands.size(); }
  // False when any constrained measurement is missing or out of band.
  bool satisfied(const Measurements& m) const;

  // Microhardness 635-675 HV, porosity 6-8.2 %.
  static ConstraintSpec aps_default();
};

// Cheapest feasible point found so far. When none is known the cost holds
// the fallback max_grid S(x) + 1 and `point` is empty.
struct Incumbent {
  std::optional<InputVector> point;
  double cost = 0.0;
  std::optional<std::size_t> history_index;
};

struct ScoredCandidate {
  std::size_t pool_index = 0;
  double cost = 0.0;
  double improvement = 0.0;
  double fp = 0.0;
  double alpha_fip = 0.0;
  double alpha_hfi = 0.0;
};

enum class AcquisitionKind { kFip, kHfi };

std::string_view to_string(AcquisitionKind kind);

// I(x) = max{0, S(x+) - S(x)}
double improvement(double cost, const Incumbent& incumbent);
double improvement(double cost, double incumbent_cost);

// Product over constraints of Phi((hi - mu)/sigma) - Phi((lo - mu)/sigma).
// A zero-variance prediction contributes the band indicator of its mean.
double feasibility_probability(std::span<const gp::PosteriorPrediction> predictions,
                               const ConstraintSpec& spec);
double band_probability(const gp::PosteriorPrediction& prediction,
                        double lower, double upper);

// FP * sgn(I), with sgn(0) = 0.
double alpha_fip(double fp, double improvement);
// (FP - pi) * I
double alpha_hfi(double fp, double improvement, double pi);

ScoredCandidate score_candidate(std::size_t pool_index, double cost, double fp,
                                double incumbent_cost, double pi);

struct SelectionOptions {
  double pi = 0.4;
  // Restrict the HFI argmax to candidates whose fp exceeds pi.
  bool hfi_requires_threshold = false;
};

struct Selection {
  std::size_t position = 0;  // index into the scored span
  AcquisitionKind acquisition = AcquisitionKind::kFip;
  double alpha = 0.0;
};

// Candidate selection policy: FIP while nothing feasible is known, HFI once a
// feasible point exists and some candidate has alpha_FIP > pi, FIP otherwise.
// Ties: higher fp, then lower cost, then lower position.
Selection select_candidate(std::span<const ScoredCandidate> pool,
                           bool any_feasible_known,
                           const SelectionOptions& options);
Selection select_candidate(std::span<const ScoredCandidate> pool,
                           bool any_feasible_known, double pi);

}  // namespace apsbo

#endif  // APSBO_ACQUISITION_HPP_
