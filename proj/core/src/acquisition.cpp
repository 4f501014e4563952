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

#include "apsbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "apsbo/error.hpp"

namespace apsbo {
namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// True when a beats b under the documented tie-break order.
bool better(double alpha_a, const ScoredCandidate& a, double alpha_b,
            const ScoredCandidate& b) {
  if (alpha_a != alpha_b) return alpha_a > alpha_b;
  if (a.fp != b.fp) return a.fp > b.fp;
  return a.cost < b.cost;
}

}  // namespace

void ConstraintSpec::validate() const {
  if (bands.empty()) throw InvalidArgument("constraint spec has no bands");
  for (const auto& b : bands) {
    if (!(b.lower < b.upper)) {
      throw InvalidArgument("constraint band for " +
                            std::string(to_string(b.output)) +
                            " must satisfy lower < upper");
    }
  }
}

bool ConstraintSpec::satisfied(const Measurements& m) const {
  for (const auto& b : bands) {
    const auto v = m.value(b.output);
    if (!v || *v < b.lower || *v > b.upper) return false;
  }
  return true;
}

ConstraintSpec ConstraintSpec::aps_default() {
  return {{{QualityOutput::kMicrohardness, 635.0, 675.0},
           {QualityOutput::kPorosity, 6.0, 8.2}}};
}

std::string_view to_string(AcquisitionKind kind) {
  return kind == AcquisitionKind::kFip ? "FIP" : "HFI";
}

double improvement(double cost, double incumbent_cost) {
  return std::max(0.0, incumbent_cost - cost);
}

double improvement(double cost, const Incumbent& incumbent) {
  return improvement(cost, incumbent.cost);
}

double band_probability(const gp::PosteriorPrediction& prediction,
                        double lower, double upper) {
  if (!std::isfinite(prediction.mean) || !std::isfinite(prediction.variance)) {
    throw NumericalFailure("band_probability: non-finite prediction");
  }
  const double sd = std::sqrt(std::max(prediction.variance, 0.0));
  if (sd == 0.0) {
    return (prediction.mean >= lower && prediction.mean <= upper) ? 1.0 : 0.0;
  }
  const double p = normal_cdf((upper - prediction.mean) / sd) -
                   normal_cdf((lower - prediction.mean) / sd);
  return std::clamp(p, 0.0, 1.0);
}

double feasibility_probability(std::span<const gp::PosteriorPrediction> predictions,
                               const ConstraintSpec& spec) {
  if (predictions.empty()) {
    throw InvalidArgument("feasibility_probability: no predictions");
  }
  if (predictions.size() != spec.size()) {
    throw InvalidArgument("feasibility_probability: need one prediction per constraint");
  }
  double fp = 1.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    fp *= band_probability(predictions[k], spec.bands[k].lower,
                           spec.bands[k].upper);
  }
  return fp;
}

double alpha_fip(double fp, double improvement) {
  return improvement > 0.0 ? fp : 0.0;
}

double alpha_hfi(double fp, double improvement, double pi) {
  return (fp - pi) * improvement;
}

ScoredCandidate score_candidate(std::size_t pool_index, double cost, double fp,
                                double incumbent_cost, double pi) {
  ScoredCandidate c;
  c.pool_index = pool_index;
  c.cost = cost;
  c.fp = fp;
  c.improvement = improvement(cost, incumbent_cost);
  c.alpha_fip = alpha_fip(fp, c.improvement);
  c.alpha_hfi = alpha_hfi(fp, c.improvement, pi);
  return c;
}

Selection select_candidate(std::span<const ScoredCandidate> pool,
                           bool any_feasible_known,
                           const SelectionOptions& options) {
  if (pool.empty()) throw InvalidArgument("select_candidate: empty pool");

  AcquisitionKind kind = AcquisitionKind::kFip;
  if (any_feasible_known) {
    const bool gate = std::any_of(pool.begin(), pool.end(), [&](const auto& c) {
      return c.alpha_fip > options.pi;
    });
    if (gate) kind = AcquisitionKind::kHfi;
  }

  auto active = [&](const ScoredCandidate& c) {
    return kind == AcquisitionKind::kFip ? c.alpha_fip : c.alpha_hfi;
  };
  auto eligible = [&](const ScoredCandidate& c) {
    return kind == AcquisitionKind::kFip || !options.hfi_requires_threshold ||
           c.fp > options.pi;
  };

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!eligible(pool[i])) continue;
    if (!best || better(active(pool[i]), pool[i], active(pool[*best]), pool[*best])) {
      best = i;
    }
  }
  // The gate guarantees an eligible candidate exists in the restricted mode.
  return {*best, kind, active(pool[*best])};
}

Selection select_candidate(std::span<const ScoredCandidate> pool,
                           bool any_feasible_known, double pi) {
  return select_candidate(pool, any_feasible_known, SelectionOptions{pi, false});
}

}  // namespace apsbo
