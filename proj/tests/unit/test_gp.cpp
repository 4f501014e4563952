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

#include <chrono>
#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "apsbo/error.hpp"
#include "apsbo/gp.hpp"
#include "support/oracles.hpp"

namespace apsbo::gp {
namespace {

using test::dense_posterior;
using test::naive_se_ard;

Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

KernelParams random_kernel(std::mt19937_64& rng, Eigen::Index d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  KernelParams k;
  k.lengthscales = random_vector(rng, d, 0.3, 3.0);
  k.signal_variance = 0.5 + 1.5 * u(rng);
  k.noise_variance = std::pow(10.0, -3.0 + 2.5 * u(rng));
  return k;
}

Dataset random_dataset(std::mt19937_64& rng, Eigen::Index p, Eigen::Index d) {
  Dataset data;
  data.inputs = Matrix(p, d);
  for (Eigen::Index i = 0; i < p; ++i) {
    data.inputs.row(i) = random_vector(rng, d, -0.5, 0.5).transpose();
  }
  data.targets = random_vector(rng, p, -1.0, 1.0);
  return data;
}

TEST(Kernel, ZeroDistanceGivesSignalVariance) {
  const KernelParams k = KernelParams::uniform(8, 0.7, 2.5, 0.0);
  const Vector a = Vector::LinSpaced(8, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(kernel_eval(a, a, k), 2.5);
}

TEST(Kernel, UnitDistanceInOneDimension) {
  const KernelParams k = KernelParams::uniform(8, 1.0, 1.0, 0.0);
  Vector a = Vector::Zero(8), b = Vector::Zero(8);
  a[0] = 1.0;
  EXPECT_NEAR(kernel_eval(a, b, k), std::exp(-0.5), 1e-15);
}

TEST(Kernel, MatchesNaiveLoop) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const KernelParams k = random_kernel(rng, 8);
    const Vector a = random_vector(rng, 8, -2, 2), b = random_vector(rng, 8, -2, 2);
    EXPECT_NEAR(kernel_eval(a, b, k), naive_se_ard(a, b, k.lengthscales, k.signal_variance),
                1e-12);
  }
}

TEST(Kernel, DimensionMismatchThrows) {
  const KernelParams k = KernelParams::uniform(8, 1.0, 1.0, 0.0);
  EXPECT_THROW(kernel_eval(Vector::Zero(7), Vector::Zero(8), k), InvalidArgument);
}

TEST(LinearMean, ZeroCoefficients) {
  const auto m = LinearMeanParams::zeros(std::vector<SignConstraint>(8, SignConstraint::kFree));
  EXPECT_EQ(mean_eval(Vector::Constant(8, 3.0), m), 0.0);
}

TEST(LinearMean, MicrohardnessShape) {
  std::vector<SignConstraint> mask(8, SignConstraint::kZero);
  mask[1] = SignConstraint::kNegative;
  mask[7] = SignConstraint::kPositive;
  LinearMeanParams m{Vector::Zero(8), mask};
  m.coefficients[1] = -2.0;
  m.coefficients[7] = 1.0;
  Vector x = Vector::Zero(8);
  x[1] = 3.0;
  x[7] = 60.0;
  EXPECT_DOUBLE_EQ(mean_eval(x, m), 54.0);
}

TEST(LinearMean, MatchesNaiveSum) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 100; ++t) {
    const LinearMeanParams m{random_vector(rng, 8, -5, 5),
                             std::vector<SignConstraint>(8, SignConstraint::kFree)};
    const Vector x = random_vector(rng, 8, -5, 5);
    EXPECT_NEAR(mean_eval(x, m), test::naive_dot(m.coefficients, x), 1e-12);
  }
}

TEST(LinearMean, SignViolationRejected) {
  std::vector<SignConstraint> mask(8, SignConstraint::kZero);
  mask[1] = SignConstraint::kNegative;
  LinearMeanParams m{Vector::Zero(8), mask};
  m.coefficients[1] = 0.5;
  EXPECT_THROW(m.validate(), InvalidArgument);
  EXPECT_THROW(mean_eval(Vector::Zero(7), LinearMeanParams{Vector::Zero(8), mask}),
               InvalidArgument);
}

TEST(Posterior, EmptyDatasetIsPrior) {
  Dataset empty;
  empty.inputs = Matrix(0, 8);
  empty.targets = Vector(0);
  const GPModel m(KernelParams::uniform(8, 0.5, 1.0, 0.1), std::nullopt, empty);
  const auto p = posterior(m, Vector::Constant(8, 0.2));
  EXPECT_DOUBLE_EQ(p.mean, 0.0);
  EXPECT_DOUBLE_EQ(p.variance, 1.0);
}

TEST(Posterior, NoiselessInterpolation) {
  Dataset d;
  d.inputs = Matrix::Constant(1, 8, 0.3);
  d.targets = Vector::Constant(1, 1.7);
  const GPModel m(KernelParams::uniform(8, 0.5, 1.0, 0.0), std::nullopt, d);
  const auto p = posterior(m, d.inputs.row(0).transpose());
  EXPECT_NEAR(p.mean, 1.7, 1e-8);
  EXPECT_NEAR(p.variance, 0.0, 1e-8);
}

TEST(Posterior, MatchesDenseInverseOnSixPoints) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    const GPModel m(random_kernel(rng, 8), std::nullopt, random_dataset(rng, 6, 8));
    const Vector q = random_vector(rng, 8, -0.5, 0.5);
    const auto a = posterior(m, q);
    const auto b = dense_posterior(m, q);
    EXPECT_NEAR(a.mean, b.mean, 1e-8);
    EXPECT_NEAR(a.variance, b.variance, 1e-8);
    EXPECT_NEAR(m.predict_mean(q), b.mean, 1e-8);
  }
}

TEST(Posterior, StandardizedWithMeanMatchesDense) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 20; ++t) {
    Dataset d = random_dataset(rng, 10, 8);
    d.inputs = d.inputs * 20.0 + Matrix::Constant(10, 8, 50.0);
    d.targets = d.targets * 30.0 + Vector::Constant(10, 600.0);
    const LinearMeanParams mean{random_vector(rng, 8, -1, 1),
                                std::vector<SignConstraint>(8, SignConstraint::kFree)};
    const auto st = Standardization::from_bounds(Vector::Constant(8, 35.0),
                                                 Vector::Constant(8, 65.0), d.targets);
    const GPModel m(random_kernel(rng, 8), mean, d, st);
    const Vector q = random_vector(rng, 8, 40, 60);
    const auto a = posterior(m, q);
    const auto b = dense_posterior(m, q);
    EXPECT_NEAR(a.mean, b.mean, 1e-8 * 30.0);
    EXPECT_NEAR(a.variance, b.variance, 1e-8 * 900.0);
  }
}

TEST(Posterior, DuplicateRowsWithoutNoiseNeedJitter) {
  Dataset d;
  d.inputs = Matrix::Constant(3, 8, 0.1);
  d.targets = Vector::Constant(3, 1.0);
  const GPModel m(KernelParams::uniform(8, 0.5, 1.0, 0.0), std::nullopt, d);
  EXPECT_GT(m.jitter(), 0.0);
  EXPECT_NEAR(posterior(m, d.inputs.row(0).transpose()).mean, 1.0, 1e-4);
}

TEST(Posterior, NonFiniteInputsRejected) {
  Dataset d;
  d.inputs = Matrix::Constant(2, 8, 0.1);
  d.inputs(1, 0) = std::numeric_limits<double>::quiet_NaN();
  d.targets = Vector::Constant(2, 1.0);
  EXPECT_THROW(GPModel(KernelParams::uniform(8, 0.5, 1.0, 0.1), std::nullopt, d), Error);
}

TEST(BatchPosterior, ConditioningMatchesDenseRefit) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 20; ++t) {
    const GPModel m(random_kernel(rng, 8), std::nullopt, random_dataset(rng, 8, 8));
    Matrix q(6, 8);
    for (int j = 0; j < 6; ++j) q.row(j) = random_vector(rng, 8, -0.5, 0.5).transpose();
    BatchPosterior bp(m, q);
    std::vector<Vector> ex;
    std::vector<double> ey;
    for (int step = 0; step < 3; ++step) {
      const Eigen::Index j = step * 2;
      const double y = bp.at(j).mean + 0.3;
      bp.condition_on_query(j, y);
      ex.push_back(q.row(j).transpose());
      ey.push_back(y);
      for (Eigen::Index r = 0; r < q.rows(); ++r) {
        const auto b = dense_posterior(m, q.row(r).transpose(), ex, ey);
        EXPECT_NEAR(bp.at(r).mean, b.mean, 1e-8);
        EXPECT_NEAR(bp.at(r).variance, b.variance, 1e-8);
      }
    }
  }
}

TEST(LogLikelihood, StandardNormalAtZero) {
  Dataset d;
  d.inputs = Matrix::Zero(1, 8);
  d.targets = Vector::Zero(1);
  const GPModel m(KernelParams::uniform(8, 1.0, 1.0, 0.0), std::nullopt, d);
  // The default diagonal jitter (1e-10 relative) shifts the value slightly.
  EXPECT_NEAR(log_marginal_likelihood(m), -0.5 * std::log(2.0 * std::numbers::pi), 1e-9);
}

TEST(LogLikelihood, MatchesDenseMvnLogPdf) {
  std::mt19937_64 rng(16);
  for (int t = 0; t < 20; ++t) {
    const KernelParams k = random_kernel(rng, 8);
    const Dataset d = random_dataset(rng, 5, 8);
    const GPModel m(k, std::nullopt, d);
    Matrix cov(5, 5);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        cov(i, j) = naive_se_ard(d.inputs.row(i).transpose(), d.inputs.row(j).transpose(),
                                 k.lengthscales, k.signal_variance);
      }
      cov(i, i) += k.noise_variance + m.jitter();
    }
    EXPECT_NEAR(log_marginal_likelihood(m), test::mvn_logpdf(d.targets, Vector::Zero(5), cov),
                1e-8);
  }
}

TEST(LogLikelihood, EmptyDataRejected) {
  Dataset d;
  d.inputs = Matrix(0, 8);
  d.targets = Vector(0);
  const GPModel m(KernelParams::uniform(8, 1.0, 1.0, 0.0), std::nullopt, d);
  EXPECT_THROW(log_marginal_likelihood(m), InvalidArgument);
}

// Draws from a zero-mean GP with unit lengthscales and small noise.
Dataset sample_gp(std::mt19937_64& rng, Eigen::Index p, Eigen::Index d, double noise) {
  Dataset data;
  data.inputs = Matrix(p, d);
  for (Eigen::Index i = 0; i < p; ++i) {
    data.inputs.row(i) = random_vector(rng, d, -1.5, 1.5).transpose();
  }
  Matrix cov(p, p);
  const Vector ls = Vector::Ones(d);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      cov(i, j) = naive_se_ard(data.inputs.row(i).transpose(), data.inputs.row(j).transpose(),
                               ls, 1.0);
    }
    cov(i, i) += noise + 1e-10;
  }
  const Matrix l = cov.llt().matrixL();
  std::normal_distribution<double> n(0.0, 1.0);
  Vector z(p);
  for (auto& v : z) v = n(rng);
  data.targets = l * z;
  return data;
}

TEST(Fit, RecoversLengthscalesOfKnownGP) {
  int good_seeds = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::mt19937_64 rng(100 + s);
    const Dataset d = sample_gp(rng, 200, 8, 1e-2);
    FitOptions fo;
    fo.restarts = 1;
    fo.seed = s;
    fo.input_lower = Vector::Constant(8, -1.5);
    fo.input_upper = Vector::Constant(8, 1.5);
    fo.standardize_targets = false;
    // Lengthscales are fitted in the unit frame; convert back to raw units.
    const GPModel m = fit(d, std::nullopt, KernelParams::uniform(8, 0.5, 1.0, 0.1), fo);
    int within = 0;
    for (Eigen::Index i = 0; i < 8; ++i) {
      const double raw = m.kernel().lengthscales[i] * 3.0;
      within += (raw >= 0.5 && raw <= 2.0) ? 1 : 0;
    }
    good_seeds += within >= 6 ? 1 : 0;
  }
  EXPECT_EQ(good_seeds, 10);
}

TEST(Fit, SignConstraintsAlwaysHold) {
  std::vector<SignConstraint> mask(8, SignConstraint::kZero);
  mask[1] = SignConstraint::kNegative;
  mask[7] = SignConstraint::kPositive;
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(200 + s);
    Dataset d = random_dataset(rng, 30, 8);
    // Targets that pull against both signs.
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      d.targets[i] = 3.0 * d.inputs(i, 1) - 2.0 * d.inputs(i, 7) + 0.1 * d.targets[i];
    }
    FitOptions fo;
    fo.seed = s;
    const GPModel m = fit(d, LinearMeanParams::zeros(mask),
                          KernelParams::uniform(8, 0.5, 1.0, 0.1), fo);
    ASSERT_TRUE(m.mean().has_value());
    EXPECT_LE(m.mean()->coefficients[1], 0.0);
    EXPECT_GE(m.mean()->coefficients[7], 0.0);
    for (Eigen::Index i : {0, 2, 3, 4, 5, 6}) EXPECT_EQ(m.mean()->coefficients[i], 0.0);
  }
}

TEST(Fit, FindsPositiveSlopeFromZeroStart) {
  std::vector<SignConstraint> mask(8, SignConstraint::kZero);
  mask[7] = SignConstraint::kPositive;
  std::mt19937_64 rng(300);
  Dataset d = random_dataset(rng, 40, 8);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    d.targets[i] = 5.0 * d.inputs(i, 7) + 0.05 * d.targets[i];
  }
  FitOptions fo;
  fo.restarts = 3;
  fo.input_lower = Vector::Constant(8, -0.5);
  fo.input_upper = Vector::Constant(8, 0.5);
  const GPModel m = fit(d, LinearMeanParams::zeros(mask), KernelParams::uniform(8, 0.5, 1.0, 0.1),
                        fo);
  EXPECT_GT(m.mean()->coefficients[7], 0.5);
}

TEST(Fit, DuplicateRowsComplete) {
  std::mt19937_64 rng(17);
  const Dataset half = random_dataset(rng, 10, 8);
  Dataset d;
  d.inputs = Matrix(20, 8);
  d.inputs << half.inputs, half.inputs;
  d.targets = Vector(20);
  d.targets << half.targets, half.targets;
  FitOptions fo;
  fo.bounds.noise_variance_min = 1e-6;
  EXPECT_NO_THROW(fit(d, std::nullopt, KernelParams::uniform(8, 0.5, 1.0, 0.1), fo));
}

TEST(Fit, ReportsDiagnosticsPerRestart) {
  std::mt19937_64 rng(18);
  const Dataset d = random_dataset(rng, 12, 8);
  FitOptions fo;
  fo.restarts = 3;
  std::vector<RestartDiagnostic> diag;
  fit(d, std::nullopt, KernelParams::uniform(8, 0.5, 1.0, 0.1), fo, &diag);
  ASSERT_EQ(diag.size(), 3u);
  for (const auto& r : diag) EXPECT_TRUE(r.ok);
}

TEST(Fit, EmptyDataRejected) {
  Dataset d;
  d.inputs = Matrix(0, 8);
  d.targets = Vector(0);
  EXPECT_THROW(fit(d, std::nullopt, KernelParams::uniform(8, 0.5, 1.0, 0.1), FitOptions{}),
               Error);
}

TEST(Serialization, RoundTripPreservesPredictions) {
  std::mt19937_64 rng(19);
  std::vector<SignConstraint> mask(8, SignConstraint::kZero);
  mask[1] = SignConstraint::kNegative;
  LinearMeanParams mean{Vector::Zero(8), mask};
  mean.coefficients[1] = -0.4;
  const Dataset d = random_dataset(rng, 7, 8);
  const GPModel m(random_kernel(rng, 8), mean, d,
                  Standardization::from_bounds(Vector::Constant(8, -1), Vector::Constant(8, 1),
                                               d.targets));
  const GPModel back = model_from_json(to_json(m));
  const Vector q = random_vector(rng, 8, -0.5, 0.5);
  EXPECT_EQ(posterior(m, q).mean, posterior(back, q).mean);
  EXPECT_EQ(posterior(m, q).variance, posterior(back, q).variance);
  EXPECT_EQ(to_json(m).dump(), to_json(back).dump());
}

}  // namespace
}  // namespace apsbo::gp
