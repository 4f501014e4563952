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

// Generates the shipped oracle data: surrogate-net weights fitted to an
// analytic ground truth, and the 86-run initialization design.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "CLI11.hpp"
#include "apsbo/acquisition.hpp"
#include "apsbo/error.hpp"
#include "apsbo/oracle.hpp"
#include "apsbo/process.hpp"

namespace {

using apsbo::ControllableInputs;
using apsbo::InputVector;
using apsbo::Powder;
using apsbo::gp::Matrix;
using apsbo::gp::Vector;

constexpr Eigen::Index kHidden = 7;
constexpr Eigen::Index kInputs = 8;
constexpr Eigen::Index kOutputs = 2;

apsbo::oracle::VoltageTruth voltage_truth() {
  apsbo::oracle::VoltageTruth v;
  // V = 58 + 0.35 (Qp - 38) + 1.2 (Qs - 6) - 0.01 (I - 500) + 0.8 [powder B]
  v.slopes = {0.35, 1.2, -0.01, 0.0, 0.0, 0.0};
  v.intercept = 58.0 - 0.35 * 38.0 - 1.2 * 6.0 + 0.01 * 500.0;
  v.powder_slope = 0.8;
  return v;
}

// Ground truth as a function of the full model input. Gun power P = V I drives
// hardness up and porosity down; secondary gas lowers hardness at fixed power.
std::array<double, 2> truth(const InputVector& x) {
  const auto& c = x.controllable;
  const double p = x.voltage * c.gun_current / 1000.0;
  const double b = x.powder == Powder::kB ? 1.0 : 0.0;
  const double mh = 590.0 + 160.0 * std::tanh((p - 36.0) / 7.0) -
                    6.0 * (c.secondary_gas_flow - 9.0) -
                    0.8 * (c.standoff_distance - 130.0) -
                    0.6 * (c.powder_feed_rate - 40.0) + 20.0 * b;
  const double por = 8.2 - 0.22 * (p - 36.0) + 0.035 * (c.powder_feed_rate - 40.0) +
                     0.025 * (c.standoff_distance - 130.0) +
                     0.3 * (c.carrier_gas_flow - 4.0) -
                     0.04 * (c.primary_gas_flow - 46.0) + 0.5 * b;
  return {mh, por};
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct Training {
  Matrix x;  // N x 8, scaled to [-1, 1]
  Matrix y;  // N x 2, standardized
};

struct Scaling {
  Vector in_lo, in_hi;
  Vector out_mean, out_sd;
};

// Packed parameter layout: W1 (7x8), b1 (7), W2 (2x7), b2 (2).
constexpr std::size_t kParams = kHidden * kInputs + kHidden + kOutputs * kHidden + kOutputs;

apsbo::oracle::SurrogateNet unpack(const double* p) {
  auto net = apsbo::oracle::SurrogateNet::zeros(kInputs, kHidden, kOutputs);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < kHidden; ++i)
    for (Eigen::Index j = 0; j < kInputs; ++j) net.hidden_weights(i, j) = p[k++];
  for (Eigen::Index i = 0; i < kHidden; ++i) net.hidden_bias[i] = p[k++];
  for (Eigen::Index i = 0; i < kOutputs; ++i)
    for (Eigen::Index j = 0; j < kHidden; ++j) net.output_weights(i, j) = p[k++];
  for (Eigen::Index i = 0; i < kOutputs; ++i) net.output_bias[i] = p[k++];
  return net;
}

double loss_and_grad(const Training& t, const double* p, double* grad) {
  const auto net = unpack(p);
  const auto n = static_cast<double>(t.x.rows());
  Matrix z = t.x * net.hidden_weights.transpose();
  z.rowwise() += net.hidden_bias.transpose();
  const Matrix h = z.array().tanh().matrix();
  Matrix out = h * net.output_weights.transpose();
  out.rowwise() += net.output_bias.transpose();
  const Matrix r = out - t.y;
  const double loss = r.squaredNorm() / n;
  if (grad == nullptr) return loss;
  const Matrix dy = 2.0 * r / n;
  const Matrix dw2 = dy.transpose() * h;
  const Vector db2 = dy.colwise().sum().transpose();
  const Matrix dz = ((dy * net.output_weights).array() * (1.0 - h.array().square())).matrix();
  const Matrix dw1 = dz.transpose() * t.x;
  const Vector db1 = dz.colwise().sum().transpose();
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < kHidden; ++i)
    for (Eigen::Index j = 0; j < kInputs; ++j) grad[k++] = dw1(i, j);
  for (Eigen::Index i = 0; i < kHidden; ++i) grad[k++] = db1[i];
  for (Eigen::Index i = 0; i < kOutputs; ++i)
    for (Eigen::Index j = 0; j < kHidden; ++j) grad[k++] = dw2(i, j);
  for (Eigen::Index i = 0; i < kOutputs; ++i) grad[k++] = db2[i];
  return loss;
}

double f_cb(const gsl_vector* v, void* params) {
  return loss_and_grad(*static_cast<const Training*>(params), v->data, nullptr);
}
void fdf_cb(const gsl_vector* v, void* params, double* f, gsl_vector* g) {
  *f = loss_and_grad(*static_cast<const Training*>(params), v->data, g->data);
}
void df_cb(const gsl_vector* v, void* params, gsl_vector* g) {
  double f;
  fdf_cb(v, params, &f, g);
}

std::vector<double> train(const Training& t, std::uint64_t seed, int restarts,
                          int iterations) {
  gsl_set_error_handler_off();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<double> best;
  double best_loss = std::numeric_limits<double>::infinity();
  gsl_multimin_function_fdf fn{&f_cb, &df_cb, &fdf_cb, kParams,
                               const_cast<Training*>(&t)};
  for (int r = 0; r < restarts; ++r) {
    gsl_vector* x = gsl_vector_alloc(kParams);
    for (std::size_t i = 0; i < kParams; ++i) gsl_vector_set(x, i, normal(rng));
    auto* m = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, kParams);
    // Restart the line-search state periodically; bfgs2 stalls on long runs.
    for (int round = 0; round < iterations / 500; ++round) {
      gsl_multimin_fdfminimizer_set(m, &fn, x, 0.01, 0.1);
      for (int it = 0; it < 500; ++it) {
        if (gsl_multimin_fdfminimizer_iterate(m) != GSL_SUCCESS) break;
        if (gsl_multimin_test_gradient(m->gradient, 1e-9) == GSL_SUCCESS) break;
      }
      gsl_vector_memcpy(x, m->x);
    }
    const double loss = loss_and_grad(t, x->data, nullptr);
    std::cerr << "restart " << r << ": mse " << loss << '\n';
    if (loss < best_loss) {
      best_loss = loss;
      best.assign(x->data, x->data + kParams);
    }
    gsl_multimin_fdfminimizer_free(m);
    gsl_vector_free(x);
  }
  return best;
}

// Folds input and output scaling into the weights so the net runs on raw units.
apsbo::oracle::SurrogateNet fold(apsbo::oracle::SurrogateNet net, const Scaling& s) {
  const Vector half = (s.in_hi - s.in_lo) / 2.0;
  const Vector centre = (s.in_hi + s.in_lo) / 2.0;
  // u = (x - centre) / half
  const Matrix w1 = net.hidden_weights * half.cwiseInverse().asDiagonal();
  net.hidden_bias -= w1 * centre;
  net.hidden_weights = w1;
  net.output_weights = s.out_sd.asDiagonal() * net.output_weights;
  net.output_bias = s.out_sd.cwiseProduct(net.output_bias) + s.out_mean;
  return net;
}

InputVector random_input(std::mt19937_64& rng, const apsbo::DomainBounds& b,
                         const apsbo::oracle::VoltageTruth& vt, bool near_truth) {
  std::array<double, apsbo::kControllableDim> a{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = b.lower[i] + (b.upper[i] - b.lower[i]) * uniform01(rng);
  }
  InputVector x;
  x.controllable = ControllableInputs::from_array(a);
  x.powder = uniform01(rng) < 0.5 ? Powder::kA : Powder::kB;
  if (near_truth) {
    x.voltage = vt.evaluate(x.controllable, x.powder) - 5.0 + 10.0 * uniform01(rng);
  } else {
    x.voltage = b.voltage_lower + (b.voltage_upper - b.voltage_lower) * uniform01(rng);
  }
  return x;
}

bool clearly_infeasible(const apsbo::oracle::NetOutputs& y, const apsbo::ConstraintSpec& spec,
                        double mh_margin, double por_margin) {
  for (const auto& band : spec.bands) {
    const double v = band.output == apsbo::QualityOutput::kMicrohardness ? y.microhardness
                                                                        : y.porosity;
    const double m = band.output == apsbo::QualityOutput::kMicrohardness ? mh_margin
                                                                        : por_margin;
    if (v < band.lower - m || v > band.upper + m) return true;
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the shipped oracle weights and initialization design"};
  std::filesystem::path out_dir = "core/data";
  std::uint64_t seed = 20260301;
  std::size_t samples = 4000;
  int restarts = 4;
  int iterations = 6000;
  std::size_t design_points = 73;
  std::size_t baseline_repeats = 13;
  std::filesystem::path reuse_weights;
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--samples", samples, "Training samples");
  app.add_option("--restarts", restarts, "Training restarts");
  app.add_option("--iterations", iterations, "BFGS iterations per restart");
  app.add_option("--reuse-weights", reuse_weights,
                 "Skip training and rebuild the design from an existing weight file");
  CLI11_PARSE(app, argc, argv);

  try {
    const apsbo::DomainBounds bounds = apsbo::DomainBounds::aps_default();
    const apsbo::ConstraintSpec spec = apsbo::ConstraintSpec::aps_default();
    const apsbo::CostConfig cost;
    const auto vt = voltage_truth();

    Scaling s;
    s.in_lo = bounds.model_lower();
    s.in_hi = bounds.model_upper();
    s.in_lo[apsbo::kVoltageIndex] = bounds.voltage_lower;
    s.in_hi[apsbo::kVoltageIndex] = bounds.voltage_upper;

    std::mt19937_64 rng(seed);
    Training t;
    t.x.resize(static_cast<Eigen::Index>(samples), kInputs);
    t.y.resize(static_cast<Eigen::Index>(samples), kOutputs);
    for (std::size_t i = 0; i < samples; ++i) {
      const InputVector x = random_input(rng, bounds, vt, i % 4 != 0);
      const auto y = truth(x);
      const auto r = static_cast<Eigen::Index>(i);
      t.x.row(r) = x.flatten().transpose();
      t.y(r, 0) = y[0];
      t.y(r, 1) = y[1];
    }
    s.out_mean = t.y.colwise().mean().transpose();
    s.out_sd = ((t.y.rowwise() - s.out_mean.transpose()).array().square().colwise().sum() /
                static_cast<double>(samples - 1))
                   .sqrt()
                   .matrix()
                   .transpose();
    const Vector half = (s.in_hi - s.in_lo) / 2.0;
    const Vector centre = (s.in_hi + s.in_lo) / 2.0;
    Training scaled;
    scaled.x = (t.x.rowwise() - centre.transpose()) * half.cwiseInverse().asDiagonal();
    scaled.y = (t.y.rowwise() - s.out_mean.transpose()) * s.out_sd.cwiseInverse().asDiagonal();

    apsbo::oracle::OracleData data;
    if (reuse_weights.empty()) {
      const auto params = train(scaled, seed + 1, restarts, iterations);
      data.net = fold(unpack(params.data()), s);
    } else {
      data.net = apsbo::oracle::load_oracle(reuse_weights).net;
    }
    data.voltage = vt;

    // Fit quality against the truth on fresh near-truth inputs.
    double se_mh = 0.0, se_por = 0.0;
    const int checks = 2000;
    for (int i = 0; i < checks; ++i) {
      const InputVector x = random_input(rng, bounds, vt, true);
      const auto y = truth(x);
      const auto f = apsbo::oracle::forward(data.net, x);
      se_mh += (f.microhardness - y[0]) * (f.microhardness - y[0]);
      se_por += (f.porosity - y[1]) * (f.porosity - y[1]);
    }
    std::cerr << "rmse vs truth: microhardness " << std::sqrt(se_mh / checks)
              << " HV, porosity " << std::sqrt(se_por / checks) << " pp\n";

    // Plausibility over the whole input box, voltage range included.
    double mh_lo = 1e300, mh_hi = -1e300, por_lo = 1e300, por_hi = -1e300;
    for (int i = 0; i < 200000; ++i) {
      const auto f = apsbo::oracle::forward(data.net, random_input(rng, bounds, vt, false));
      mh_lo = std::min(mh_lo, f.microhardness);
      mh_hi = std::max(mh_hi, f.microhardness);
      por_lo = std::min(por_lo, f.porosity);
      por_hi = std::max(por_hi, f.porosity);
    }
    std::cerr << "box range: microhardness [" << mh_lo << ", " << mh_hi << "], porosity ["
              << por_lo << ", " << por_hi << "]\n";
    if (mh_lo < 300 || mh_hi > 900 || por_lo < 2 || por_hi > 14) {
      throw apsbo::ValidationError("oracle outputs leave the plausible range");
    }

    // Reachability under the +2 V scenario on the default candidate set.
    apsbo::oracle::Reachability reach;
    reach.voltage_offset = 2.0;
    reach.candidate_count = 20000;
    reach.candidate_seed = 0;
    reach.min_feasible_cost = std::numeric_limits<double>::infinity();
    apsbo::CandidateOptions copt;
    copt.count = reach.candidate_count;
    copt.seed = reach.candidate_seed;
    for (const auto& c : apsbo::generate_candidates(bounds, copt)) {
      const InputVector x{c, Powder::kA, vt.evaluate(c, Powder::kA) + reach.voltage_offset};
      const auto f = apsbo::oracle::forward(data.net, x);
      apsbo::Measurements m;
      m.microhardness = f.microhardness;
      m.porosity = f.porosity;
      if (spec.satisfied(m)) {
        ++reach.feasible_count;
        reach.min_feasible_cost =
            std::min(reach.min_feasible_cost, apsbo::stress_index(c, cost, bounds));
      }
    }
    std::cerr << "reachability: " << reach.feasible_count << " feasible, min cost "
              << reach.min_feasible_cost << '\n';
    if (reach.feasible_count == 0) {
      throw apsbo::ValidationError("no feasible candidate under the +2 V scenario");
    }
    data.reachability = reach;

    const ControllableInputs mid = bounds.midpoint();
    data.self_test.input = {mid, Powder::kA, vt.evaluate(mid, Powder::kA)};
    data.self_test.output = apsbo::oracle::forward(data.net, data.self_test.input);
    data.description =
        "8-7-2 tanh regressor fitted to an analytic plasma-spray ground truth "
        "(hardness rising with gun power, porosity falling with it)";

    // Initialization design: clearly infeasible level-grid points, grouped by
    // which side of the bands they miss and dealt round-robin so that every
    // prefix of the design brackets the feasible region, plus evenly spaced
    // repeats of a baseline run.
    apsbo::CandidateOptions gopt;
    gopt.scheme = apsbo::CandidateScheme::kLevelGrid;
    gopt.levels = {3, 3, 4, 2, 3, 3};
    gopt.count = 100000;
    std::array<std::vector<apsbo::oracle::DesignPoint>, 3> groups;
    const auto& mh_band = spec.bands[0];
    for (const auto& c : apsbo::generate_candidates(bounds, gopt)) {
      const InputVector x{c, Powder::kA, vt.evaluate(c, Powder::kA)};
      const auto f = apsbo::oracle::forward(data.net, x);
      if (!clearly_infeasible(f, spec, 35.0, 2.2)) continue;
      const std::size_t g = f.microhardness < mh_band.lower - 35.0   ? 0
                            : f.microhardness > mh_band.upper + 35.0 ? 1
                                                                     : 2;
      groups[g].push_back({c, Powder::kA});
    }
    // Baseline run: the domain midpoint with the current at the lower third.
    ControllableInputs baseline = mid;
    baseline.gun_current = bounds.lower[apsbo::kCurrentIndex] +
                           (bounds.upper[apsbo::kCurrentIndex] - bounds.lower[apsbo::kCurrentIndex]) / 3.0;
    const InputVector baseline_x{baseline, Powder::kA, vt.evaluate(baseline, Powder::kA)};
    if (!clearly_infeasible(apsbo::oracle::forward(data.net, baseline_x), spec, 35.0, 2.2)) {
      throw apsbo::ValidationError("baseline point is not clearly infeasible");
    }
    std::cerr << "eligible design points: low " << groups[0].size() << ", high "
              << groups[1].size() << ", porosity only " << groups[2].size() << '\n';
    for (auto& g : groups) std::shuffle(g.begin(), g.end(), rng);
    std::vector<apsbo::oracle::DesignPoint> picked;
    for (std::size_t i = 0; picked.size() < design_points; ++i) {
      bool any = false;
      for (const auto& g : groups) {
        if (i < g.size() && picked.size() < design_points) {
          picked.push_back(g[i]);
          any = true;
        }
      }
      if (!any) throw apsbo::ValidationError("not enough clearly infeasible design points");
    }
    std::vector<apsbo::oracle::DesignPoint> design;
    const std::size_t total = design_points + baseline_repeats;
    std::vector<char> repeat_at(total, 0);
    for (std::size_t k = 0; k < baseline_repeats; ++k) {
      repeat_at[(2 * k + 1) * total / (2 * baseline_repeats)] = 1;
    }
    std::size_t next = 0;
    for (std::size_t i = 0; i < total; ++i) {
      if (repeat_at[i]) {
        design.push_back({baseline, Powder::kA});
      } else {
        design.push_back(picked[next++]);
      }
    }

    std::filesystem::create_directories(out_dir);
    apsbo::oracle::save_oracle(data, out_dir / "oracle_weights.json");
    std::ofstream os(out_dir / "init_design_86.csv");
    apsbo::oracle::write_design_csv(os, design);
    std::cerr << "wrote " << (out_dir / "oracle_weights.json") << " and "
              << (out_dir / "init_design_86.csv") << '\n';
  } catch (const apsbo::Error& e) {
    std::cerr << "error: " << apsbo::to_string(e.category()) << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
