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

#ifndef APSBO_GP_HPP_
#define APSBO_GP_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace apsbo::gp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

// Squared-exponential ARD kernel hyperparameters.
struct KernelParams {
  Vector lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 0.0;

  Eigen::Index dim() const { return lengthscales.size(); }
  void validate() const;

  static KernelParams uniform(Eigen::Index dim, double lengthscale,
                              double signal_variance, double noise_variance);
};

enum class SignConstraint { kFree, kNegative, kPositive, kZero };

// Linear mean mu(x) = sum_i gamma_i x_i with a per-coefficient sign mask.
struct LinearMeanParams {
  Vector coefficients;
  std::vector<SignConstraint> sign_mask;

  Eigen::Index dim() const { return coefficients.size(); }
  // Throws InvalidArgument if a coefficient violates its mask.
  void validate() const;
  bool satisfies_mask() const;

  static LinearMeanParams zeros(std::vector<SignConstraint> mask);
};

struct Dataset {
  Matrix inputs;  // one row per observation
  Vector targets;

  Eigen::Index size() const { return targets.size(); }
  Eigen::Index dim() const { return inputs.cols(); }
  void validate() const;
  void append(const VectorRef& x, double y);
};

// Affine maps between raw units and the frame the GP works in. Inputs are
// mapped onto [-0.5, 0.5] by per-dimension bounds, so the linear mean passes
// through the box centre; targets are centred and scaled.
struct Standardization {
  Vector input_lower;
  Vector input_upper;
  double target_mean = 0.0;
  double target_scale = 1.0;

  static Standardization identity(Eigen::Index dim);
  // Bounds drive the input map; targets supply mean and standard deviation.
  static Standardization from_bounds(const Vector& lower, const Vector& upper,
                                     const Vector& targets);

  Vector scale_input(const VectorRef& x) const;
  Matrix scale_inputs(const Matrix& rows) const;
  double scale_target(double y) const {
    return (y - target_mean) / target_scale;
  }
  double unscale_target(double z) const {
    return target_mean + target_scale * z;
  }
};

struct PosteriorPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

double kernel_eval(const VectorRef& a, const VectorRef& b,
                   const KernelParams& params);
double mean_eval(const VectorRef& x, const LinearMeanParams& mean);

// Exact-inference GP with a cached Cholesky factor of K + (noise + jitter) I.
// Immutable after construction; every accessor is safe to call concurrently.
class GPModel {
 public:
  GPModel(KernelParams kernel, std::optional<LinearMeanParams> mean,
          Dataset data, Standardization standardization);
  GPModel(KernelParams kernel, std::optional<LinearMeanParams> mean,
          Dataset data);

  const KernelParams& kernel() const { return kernel_; }
  const std::optional<LinearMeanParams>& mean() const { return mean_; }
  const Dataset& data() const { return data_; }
  const Standardization& standardization() const { return standardization_; }
  double jitter() const { return jitter_; }
  Eigen::Index dim() const { return kernel_.dim(); }

  PosteriorPrediction predict(const VectorRef& x) const;
  // Posterior mean only; O(p) instead of O(p^2).
  double predict_mean(const VectorRef& x) const;
  double log_marginal_likelihood() const;

  // Same hyperparameters and standardization, different data.
  GPModel with_data(Dataset data) const;

  // Internal-frame pieces used by BatchPosterior.
  const Matrix& scaled_inputs() const { return scaled_inputs_; }
  const Matrix& lower_factor() const { return lower_; }
  const Vector& whitened_residual() const { return whitened_residual_; }
  double prior_mean_scaled(const VectorRef& u) const;

 private:
  void factorize();

  KernelParams kernel_;
  std::optional<LinearMeanParams> mean_;
  Dataset data_;
  Standardization standardization_;

  Matrix scaled_inputs_;
  Matrix lower_;
  Vector residual_;           // y - mu(X), internal frame
  Vector whitened_residual_;  // L^-1 (y - mu(X))
  Vector alpha_;              // (K + s I)^-1 (y - mu(X))
  double jitter_ = 0.0;
};

PosteriorPrediction posterior(const GPModel& model, const VectorRef& query);
double log_marginal_likelihood(const GPModel& model);

// Posterior over a fixed set of query points that can be conditioned on
// further observations without refactorising. Used for batch selection with
// fantasy points, where hyperparameters stay fixed.
class BatchPosterior {
 public:
  BatchPosterior(const GPModel& model, const Matrix& queries);

  Eigen::Index size() const { return mean_.size(); }
  PosteriorPrediction at(Eigen::Index j) const;

  // Append observation y (raw units) at query point j.
  void condition_on_query(Eigen::Index j, double y);

 private:
  KernelParams kernel_;
  Standardization standardization_;
  double diagonal_shift_;
  Matrix scaled_queries_;          // m x d
  std::vector<Vector> cross_;      // rows of L^-1 K(X, Q), each of length m
  std::vector<double> whitened_;    // L^-1 (y - mu(X))
  Vector prior_mean_;
  Vector mean_;
  Vector variance_;
};

struct BoxBounds {
  double lengthscale_min = 1e-3;
  double lengthscale_max = 1e3;
  double signal_variance_min = 1e-4;
  double signal_variance_max = 1e4;
  double noise_variance_min = 1e-8;
  double noise_variance_max = 1e1;
  double mean_magnitude_min = 1e-8;
  double mean_magnitude_max = 1e3;
};

struct FitOptions {
  int restarts = 3;
  std::uint64_t seed = 0;
  int max_iterations = 150;
  BoxBounds bounds;
  // Input bounds for the centred unit map. When empty, the data range is used.
  Vector input_lower;
  Vector input_upper;
  bool standardize_targets = true;
};

struct RestartDiagnostic {
  int restart = 0;
  bool ok = false;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::string message;
};

// Maximises the log marginal likelihood over log-lengthscales, log signal
// and noise variances and the mean coefficients. Sign-constrained
// coefficients are parameterised as +-exp(theta) so the mask holds throughout.
GPModel fit(const Dataset& data,
            const std::optional<LinearMeanParams>& mean_config,
            const KernelParams& init, const FitOptions& options,
            std::vector<RestartDiagnostic>* diagnostics = nullptr);

nlohmann::json to_json(const GPModel& model);
GPModel model_from_json(const nlohmann::json& doc);

inline constexpr int kModelFormatVersion = 1;

}  // namespace apsbo::gp

#endif  // APSBO_GP_HPP_
