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

#include "apsbo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <nlohmann/json.hpp>

#include "apsbo/error.hpp"

namespace apsbo::gp {
namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << got << " vs " << want << ")";
    throw InvalidArgument(os.str());
  }
}

double se_ard(const VectorRef& a, const VectorRef& b, const Vector& ls,
              double sf2) {
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double z = (a[d] - b[d]) / ls[d];
    r2 += z * z;
  }
  return sf2 * std::exp(-0.5 * r2);
}

Matrix gram(const Matrix& x, const KernelParams& k) {
  const Eigen::Index p = x.rows();
  Matrix out(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    out(i, i) = k.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      out(i, j) = out(j, i) =
          se_ard(x.row(i).transpose(), x.row(j).transpose(), k.lengthscales,
                 k.signal_variance);
    }
  }
  return out;
}

// Cholesky of `cov` with escalating diagonal jitter. Returns the jitter used.
double robust_cholesky(const Matrix& cov, double signal_variance,
                       Matrix& lower, const char* name) {
  for (double rel = kJitterStart; rel <= kJitterMax * 1.0000001; rel *= 10.0) {
    const double jitter = rel * signal_variance;
    Matrix shifted = cov;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
      lower = llt.matrixL();
      if ((lower.diagonal().array() > 0.0).all() &&
          lower.allFinite()) {
        return jitter;
      }
    }
  }
  throw NumericalFailure(std::string("covariance matrix '") + name +
                         "' is not positive definite after maximum jitter");
}

}  // namespace

void KernelParams::validate() const {
  if (lengthscales.size() == 0) {
    throw InvalidArgument("kernel: no lengthscales");
  }
  if (!(lengthscales.array() > 0.0).all() || !lengthscales.allFinite()) {
    throw InvalidArgument("kernel: lengthscales must be positive");
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw InvalidArgument("kernel: signal variance must be positive");
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw InvalidArgument("kernel: noise variance must be non-negative");
  }
}

KernelParams KernelParams::uniform(Eigen::Index dim, double lengthscale,
                                   double signal_variance,
                                   double noise_variance) {
  KernelParams k;
  k.lengthscales = Vector::Constant(dim, lengthscale);
  k.signal_variance = signal_variance;
  k.noise_variance = noise_variance;
  return k;
}

bool LinearMeanParams::satisfies_mask() const {
  if (static_cast<Eigen::Index>(sign_mask.size()) != coefficients.size()) {
    return false;
  }
  for (Eigen::Index i = 0; i < coefficients.size(); ++i) {
    const double g = coefficients[i];
    switch (sign_mask[i]) {
      case SignConstraint::kNegative:
        if (g > 0.0) return false;
        break;
      case SignConstraint::kPositive:
        if (g < 0.0) return false;
        break;
      case SignConstraint::kZero:
        if (g != 0.0) return false;
        break;
      case SignConstraint::kFree:
        break;
    }
  }
  return true;
}

void LinearMeanParams::validate() const {
  if (!satisfies_mask()) {
    throw InvalidArgument("linear mean: coefficients violate sign mask");
  }
}

LinearMeanParams LinearMeanParams::zeros(std::vector<SignConstraint> mask) {
  LinearMeanParams m;
  m.coefficients = Vector::Zero(static_cast<Eigen::Index>(mask.size()));
  m.sign_mask = std::move(mask);
  return m;
}

void Dataset::validate() const {
  if (inputs.rows() != targets.size()) {
    throw InvalidArgument("dataset: inputs and targets differ in length");
  }
}

void Dataset::append(const VectorRef& x, double y) {
  if (inputs.rows() > 0) require_dim(x.size(), inputs.cols(), "dataset");
  const Eigen::Index p = inputs.rows();
  inputs.conservativeResize(p + 1, x.size());
  inputs.row(p) = x.transpose();
  targets.conservativeResize(p + 1);
  targets[p] = y;
}

Standardization Standardization::identity(Eigen::Index dim) {
  Standardization s;
  s.input_lower = Vector::Constant(dim, -0.5);
  s.input_upper = Vector::Constant(dim, 0.5);
  return s;
}

Standardization Standardization::from_bounds(const Vector& lower,
                                             const Vector& upper,
                                             const Vector& targets) {
  require_dim(upper.size(), lower.size(), "standardization");
  Standardization s;
  s.input_lower = lower;
  s.input_upper = upper;
  if (targets.size() > 0) {
    s.target_mean = targets.mean();
    const double var =
        targets.size() > 1
            ? (targets.array() - s.target_mean).square().sum() /
                  static_cast<double>(targets.size() - 1)
            : 0.0;
    s.target_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Vector Standardization::scale_input(const VectorRef& x) const {
  require_dim(x.size(), input_lower.size(), "standardization");
  Vector u(x.size());
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double range = input_upper[d] - input_lower[d];
    const double mid = 0.5 * (input_lower[d] + input_upper[d]);
    u[d] = (x[d] - mid) / (range > 0.0 ? range : 1.0);
  }
  return u;
}

Matrix Standardization::scale_inputs(const Matrix& rows) const {
  Matrix out(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.row(i) = scale_input(rows.row(i).transpose()).transpose();
  }
  return out;
}

double kernel_eval(const VectorRef& a, const VectorRef& b,
                   const KernelParams& params) {
  require_dim(a.size(), params.dim(), "kernel_eval");
  require_dim(b.size(), params.dim(), "kernel_eval");
  return se_ard(a, b, params.lengthscales, params.signal_variance);
}

double mean_eval(const VectorRef& x, const LinearMeanParams& mean) {
  require_dim(x.size(), mean.dim(), "mean_eval");
  return mean.coefficients.dot(x);
}

GPModel::GPModel(KernelParams kernel, std::optional<LinearMeanParams> mean,
                 Dataset data, Standardization standardization)
    : kernel_(std::move(kernel)),
      mean_(std::move(mean)),
      data_(std::move(data)),
      standardization_(std::move(standardization)) {
  kernel_.validate();
  data_.validate();
  if (mean_) {
    require_dim(mean_->dim(), kernel_.dim(), "GPModel mean");
    mean_->validate();
  }
  if (data_.size() > 0) require_dim(data_.dim(), kernel_.dim(), "GPModel data");
  require_dim(standardization_.input_lower.size(), kernel_.dim(),
              "GPModel standardization");
  if (!(standardization_.target_scale > 0.0)) {
    throw InvalidArgument("GPModel: target scale must be positive");
  }
  factorize();
}

GPModel::GPModel(KernelParams kernel, std::optional<LinearMeanParams> mean,
                 Dataset data)
    : GPModel(kernel, std::move(mean), std::move(data),
              Standardization::identity(kernel.dim())) {}

double GPModel::prior_mean_scaled(const VectorRef& u) const {
  return mean_ ? mean_->coefficients.dot(u) : 0.0;
}

void GPModel::factorize() {
  const Eigen::Index p = data_.size();
  scaled_inputs_ = standardization_.scale_inputs(data_.inputs);
  residual_.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    residual_[i] = standardization_.scale_target(data_.targets[i]) -
                   prior_mean_scaled(scaled_inputs_.row(i).transpose());
  }
  if (p == 0) {
    lower_.resize(0, 0);
    whitened_residual_.resize(0);
    alpha_.resize(0);
    jitter_ = kJitterStart * kernel_.signal_variance;
    return;
  }
  Matrix cov = gram(scaled_inputs_, kernel_);
  cov.diagonal().array() += kernel_.noise_variance;
  jitter_ = robust_cholesky(cov, kernel_.signal_variance, lower_,
                            "K(X,X) + noise I");
  whitened_residual_ =
      lower_.triangularView<Eigen::Lower>().solve(residual_);
  alpha_ = lower_.transpose().triangularView<Eigen::Upper>().solve(
      whitened_residual_);
}

PosteriorPrediction GPModel::predict(const VectorRef& x) const {
  const Vector u = standardization_.scale_input(x);
  const Eigen::Index p = data_.size();
  double mean = prior_mean_scaled(u);
  double var = kernel_.signal_variance;
  if (p > 0) {
    Vector kx(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      kx[i] = se_ard(scaled_inputs_.row(i).transpose(), u,
                     kernel_.lengthscales, kernel_.signal_variance);
    }
    const Vector v = lower_.triangularView<Eigen::Lower>().solve(kx);
    mean += v.dot(whitened_residual_);
    var -= v.squaredNorm();
  }
  const double s = standardization_.target_scale;
  return {standardization_.unscale_target(mean), std::max(var, 0.0) * s * s};
}

double GPModel::predict_mean(const VectorRef& x) const {
  const Vector u = standardization_.scale_input(x);
  double mean = prior_mean_scaled(u);
  for (Eigen::Index i = 0; i < data_.size(); ++i) {
    mean += alpha_[i] * se_ard(scaled_inputs_.row(i).transpose(), u,
                               kernel_.lengthscales, kernel_.signal_variance);
  }
  return standardization_.unscale_target(mean);
}

double GPModel::log_marginal_likelihood() const {
  const Eigen::Index p = data_.size();
  if (p == 0) throw InvalidArgument("log marginal likelihood needs data");
  const double quad = whitened_residual_.squaredNorm();
  const double logdet = lower_.diagonal().array().log().sum();
  return -0.5 * quad - logdet -
         0.5 * static_cast<double>(p) * std::log(2.0 * std::numbers::pi) -
         static_cast<double>(p) * std::log(standardization_.target_scale);
}

GPModel GPModel::with_data(Dataset data) const {
  return GPModel(kernel_, mean_, std::move(data), standardization_);
}

PosteriorPrediction posterior(const GPModel& model, const VectorRef& query) {
  return model.predict(query);
}

double log_marginal_likelihood(const GPModel& model) {
  return model.log_marginal_likelihood();
}

// ---------------------------------------------------------------------------

BatchPosterior::BatchPosterior(const GPModel& model, const Matrix& queries)
    : kernel_(model.kernel()),
      standardization_(model.standardization()),
      diagonal_shift_(model.kernel().noise_variance + model.jitter()) {
  require_dim(queries.cols(), model.dim(), "BatchPosterior");
  scaled_queries_ = standardization_.scale_inputs(queries);
  const Eigen::Index m = queries.rows();
  const Eigen::Index p = model.data().size();
  const Matrix& x = model.scaled_inputs();
  const Matrix& lower = model.lower_factor();

  prior_mean_.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    prior_mean_[j] = model.prior_mean_scaled(scaled_queries_.row(j).transpose());
  }
  mean_ = prior_mean_;
  variance_ = Vector::Constant(m, kernel_.signal_variance);

  if (p > 0) {
    Matrix cross(p, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < p; ++i) {
        cross(i, j) = se_ard(x.row(i).transpose(),
                             scaled_queries_.row(j).transpose(),
                             kernel_.lengthscales, kernel_.signal_variance);
      }
    }
    lower.triangularView<Eigen::Lower>().solveInPlace(cross);
    const Vector& w = model.whitened_residual();
    mean_ += cross.transpose() * w;
    variance_ -= cross.colwise().squaredNorm().transpose();
    cross_.reserve(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) {
      cross_.emplace_back(cross.row(i).transpose());
      whitened_.push_back(w[i]);
    }
  }
}

PosteriorPrediction BatchPosterior::at(Eigen::Index j) const {
  const double s = standardization_.target_scale;
  return {standardization_.unscale_target(mean_[j]),
          std::max(variance_[j], 0.0) * s * s};
}

void BatchPosterior::condition_on_query(Eigen::Index j, double y) {
  if (j < 0 || j >= size()) {
    throw InvalidArgument("BatchPosterior: query index out of range");
  }
  const std::size_t p = cross_.size();
  const Eigen::Index m = size();
  const Vector u = scaled_queries_.row(j).transpose();

  // New factor row: l = L^-1 k(X, x_j), which is column j of the cross term.
  Vector l(static_cast<Eigen::Index>(p) + 1);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    l[static_cast<Eigen::Index>(i)] = cross_[i][j];
    norm2 += cross_[i][j] * cross_[i][j];
  }
  const double d2 = kernel_.signal_variance + diagonal_shift_ - norm2;
  if (!(d2 > 0.0)) {
    throw NumericalFailure(
        "covariance matrix 'virtual K(X,X) + noise I' lost positive "
        "definiteness while conditioning");
  }
  const double diag = std::sqrt(d2);
  l[static_cast<Eigen::Index>(p)] = diag;

  const double r = standardization_.scale_target(y) - prior_mean_[j];
  double lw = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    lw += l[static_cast<Eigen::Index>(i)] * whitened_[i];
  }
  const double w_new = (r - lw) / diag;

  Vector row(m);
  for (Eigen::Index q = 0; q < m; ++q) {
    row[q] = se_ard(u, scaled_queries_.row(q).transpose(),
                    kernel_.lengthscales, kernel_.signal_variance);
  }
  for (std::size_t i = 0; i < p; ++i) {
    row.noalias() -= l[static_cast<Eigen::Index>(i)] * cross_[i];
  }
  row /= diag;

  mean_ += w_new * row;
  variance_ -= row.cwiseAbs2();
  cross_.push_back(std::move(row));
  whitened_.push_back(w_new);
}

// ---------------------------------------------------------------------------
// Hyperparameter fitting

namespace {

struct ParamLayout {
  Eigen::Index dim = 0;
  std::vector<Eigen::Index> mean_index;  // coefficient index per mean param
  std::vector<SignConstraint> mean_kind;
  Eigen::Index size() const {
    return dim + 2 + static_cast<Eigen::Index>(mean_index.size());
  }
};

// theta = lo + (hi - lo) * logistic(z)
struct Box {
  double lo;
  double hi;
  double to_theta(double z) const { return lo + (hi - lo) / (1.0 + std::exp(-z)); }
  double dtheta_dz(double z) const {
    const double s = 1.0 / (1.0 + std::exp(-z));
    return (hi - lo) * s * (1.0 - s);
  }
  double to_z(double theta) const {
    const double margin = 1e-6 * (hi - lo);
    theta = std::clamp(theta, lo + margin, hi - margin);
    const double f = (theta - lo) / (hi - lo);
    return std::log(f / (1.0 - f));
  }
};

struct Objective {
  const Matrix* x;  // scaled inputs
  Vector y;         // scaled targets
  ParamLayout layout;
  std::vector<Box> boxes;
  int evaluations = 0;
  // Best point seen over every evaluation, so a failing line search never
  // loses the incumbent.
  double best_value = std::numeric_limits<double>::infinity();
  Vector best_z;

  Vector theta(const Vector& z) const {
    Vector t(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      t[i] = boxes[static_cast<std::size_t>(i)].to_theta(z[i]);
    }
    return t;
  }

  KernelParams kernel(const Vector& t) const {
    KernelParams k;
    k.lengthscales = t.head(layout.dim).array().exp();
    k.signal_variance = std::exp(t[layout.dim]);
    k.noise_variance = std::exp(t[layout.dim + 1]);
    return k;
  }

  Vector mean_coefficients(const Vector& t) const {
    Vector g = Vector::Zero(layout.dim);
    for (std::size_t i = 0; i < layout.mean_index.size(); ++i) {
      const double v = t[layout.dim + 2 + static_cast<Eigen::Index>(i)];
      switch (layout.mean_kind[i]) {
        case SignConstraint::kNegative:
          g[layout.mean_index[i]] = -std::exp(v);
          break;
        case SignConstraint::kPositive:
          g[layout.mean_index[i]] = std::exp(v);
          break;
        default:
          g[layout.mean_index[i]] = v;
      }
    }
    return g;
  }

  // Negative log marginal likelihood (internal frame) and its gradient in z.
  double evaluate(const Vector& z, Vector* grad) {
    ++evaluations;
    const Vector t = theta(z);
    const KernelParams k = kernel(t);
    const Vector g = mean_coefficients(t);
    const Eigen::Index p = x->rows();
    const Eigen::Index d = layout.dim;

    const Matrix kf = gram(*x, k);
    Matrix cov = kf;
    cov.diagonal().array() += k.noise_variance;
    Matrix lower;
    robust_cholesky(cov, k.signal_variance, lower, "K(X,X) + noise I");
    const Vector r = y - (*x) * g;
    const auto tri = lower.triangularView<Eigen::Lower>();
    const Vector w = tri.solve(r);
    const double value = 0.5 * w.squaredNorm() +
                         lower.diagonal().array().log().sum() +
                         0.5 * static_cast<double>(p) *
                             std::log(2.0 * std::numbers::pi);
    if (!std::isfinite(value)) {
      throw NumericalFailure("non-finite marginal likelihood");
    }
    if (value < best_value) {
      best_value = value;
      best_z = z;
    }
    if (grad == nullptr) return value;

    const Vector alpha = lower.transpose().triangularView<Eigen::Upper>().solve(w);
    Matrix kinv = Matrix::Identity(p, p);
    tri.solveInPlace(kinv);
    kinv = lower.transpose().triangularView<Eigen::Upper>().solve(kinv);
    // W = alpha alpha^T - K^-1; dL/dpsi = 0.5 tr(W dK/dpsi)
    Matrix wm = alpha * alpha.transpose() - kinv;

    Vector dtheta = Vector::Zero(z.size());
    for (Eigen::Index dd = 0; dd < d; ++dd) {
      const double inv_l2 = 1.0 / (k.lengthscales[dd] * k.lengthscales[dd]);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
          const double diff = (*x)(i, dd) - (*x)(j, dd);
          acc += wm(i, j) * kf(i, j) * diff * diff;
        }
      }
      dtheta[dd] = acc * inv_l2;  // symmetric pairs, the 0.5 cancels
    }
    dtheta[d] = 0.5 * (wm.cwiseProduct(kf)).sum();
    dtheta[d + 1] = 0.5 * k.noise_variance * wm.trace();
    for (std::size_t i = 0; i < layout.mean_index.size(); ++i) {
      const Eigen::Index c = layout.mean_index[i];
      const double dl_dg = alpha.dot(x->col(c));
      const double dg_dt = layout.mean_kind[i] == SignConstraint::kFree
                               ? 1.0
                               : g[c];
      dtheta[d + 2 + static_cast<Eigen::Index>(i)] = dl_dg * dg_dt;
    }
    grad->resize(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      (*grad)[i] = -dtheta[i] * boxes[static_cast<std::size_t>(i)].dtheta_dz(z[i]);
    }
    return value;
  }
};

constexpr double kFailedValue = 1e30;

Vector to_eigen(const gsl_vector* v) {
  Vector out(static_cast<Eigen::Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) {
    out[static_cast<Eigen::Index>(i)] = gsl_vector_get(v, i);
  }
  return out;
}

double gsl_f(const gsl_vector* v, void* params) {
  auto* obj = static_cast<Objective*>(params);
  try {
    return obj->evaluate(to_eigen(v), nullptr);
  } catch (const NumericalFailure&) {
    return kFailedValue;
  }
}

void gsl_df(const gsl_vector* v, void* params, gsl_vector* df);

void gsl_fdf(const gsl_vector* v, void* params, double* f, gsl_vector* df) {
  auto* obj = static_cast<Objective*>(params);
  Vector grad;
  try {
    *f = obj->evaluate(to_eigen(v), &grad);
  } catch (const NumericalFailure&) {
    *f = kFailedValue;
    grad = Vector::Zero(static_cast<Eigen::Index>(v->size));
  }
  for (std::size_t i = 0; i < v->size; ++i) {
    gsl_vector_set(df, i, grad[static_cast<Eigen::Index>(i)]);
  }
}

void gsl_df(const gsl_vector* v, void* params, gsl_vector* df) {
  double f = 0.0;
  gsl_fdf(v, params, &f, df);
}

struct GslVector {
  gsl_vector* ptr;
  explicit GslVector(std::size_t n) : ptr(gsl_vector_alloc(n)) {}
  ~GslVector() { gsl_vector_free(ptr); }
  GslVector(const GslVector&) = delete;
  GslVector& operator=(const GslVector&) = delete;
};

struct GslMinimizer {
  gsl_multimin_fdfminimizer* ptr;
  explicit GslMinimizer(std::size_t n)
      : ptr(gsl_multimin_fdfminimizer_alloc(
            gsl_multimin_fdfminimizer_vector_bfgs2, n)) {}
  ~GslMinimizer() { gsl_multimin_fdfminimizer_free(ptr); }
  GslMinimizer(const GslMinimizer&) = delete;
  GslMinimizer& operator=(const GslMinimizer&) = delete;
};

int run_bfgs(Objective& obj, const Vector& z0, int max_iterations) {
  const std::size_t n = static_cast<std::size_t>(z0.size());
  gsl_multimin_function_fdf fn;
  fn.n = n;
  fn.f = &gsl_f;
  fn.df = &gsl_df;
  fn.fdf = &gsl_fdf;
  fn.params = &obj;
  GslVector start(n);
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(start.ptr, i, z0[static_cast<Eigen::Index>(i)]);
  }
  GslMinimizer minimizer(n);
  gsl_multimin_fdfminimizer_set(minimizer.ptr, &fn, start.ptr, 0.1, 0.1);
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    if (gsl_multimin_fdfminimizer_iterate(minimizer.ptr) != GSL_SUCCESS) break;
    if (gsl_multimin_test_gradient(minimizer.ptr->gradient, 1e-5) ==
        GSL_SUCCESS) {
      break;
    }
  }
  return iter;
}

}  // namespace

GPModel fit(const Dataset& data,
            const std::optional<LinearMeanParams>& mean_config,
            const KernelParams& init, const FitOptions& options,
            std::vector<RestartDiagnostic>* diagnostics) {
  data.validate();
  if (data.size() < 2) throw InvalidArgument("fit: need at least 2 points");
  if (options.restarts < 1) throw InvalidArgument("fit: restarts must be >= 1");
  init.validate();
  require_dim(data.dim(), init.dim(), "fit");
  if (mean_config) {
    require_dim(mean_config->dim(), init.dim(), "fit mean");
    mean_config->validate();
  }
  gsl_set_error_handler_off();

  const Eigen::Index d = data.dim();
  Vector lower = options.input_lower;
  Vector upper = options.input_upper;
  if (lower.size() == 0) {
    lower = data.inputs.colwise().minCoeff().transpose();
    upper = data.inputs.colwise().maxCoeff().transpose();
  }
  Standardization standardization =
      Standardization::from_bounds(lower, upper, data.targets);
  if (!options.standardize_targets) {
    standardization.target_mean = 0.0;
    standardization.target_scale = 1.0;
  }

  const Matrix x = standardization.scale_inputs(data.inputs);
  Vector y(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    y[i] = standardization.scale_target(data.targets[i]);
  }

  const BoxBounds& b = options.bounds;
  Objective obj;
  obj.x = &x;
  obj.y = y;
  obj.layout.dim = d;
  for (Eigen::Index i = 0; i < d; ++i) {
    obj.boxes.push_back({std::log(b.lengthscale_min), std::log(b.lengthscale_max)});
  }
  obj.boxes.push_back({std::log(b.signal_variance_min), std::log(b.signal_variance_max)});
  obj.boxes.push_back({std::log(b.noise_variance_min), std::log(b.noise_variance_max)});
  if (mean_config) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const SignConstraint kind = mean_config->sign_mask[static_cast<std::size_t>(i)];
      if (kind == SignConstraint::kZero) continue;
      obj.layout.mean_index.push_back(i);
      obj.layout.mean_kind.push_back(kind);
      if (kind == SignConstraint::kFree) {
        obj.boxes.push_back({-b.mean_magnitude_max, b.mean_magnitude_max});
      } else {
        obj.boxes.push_back({std::log(b.mean_magnitude_min), std::log(b.mean_magnitude_max)});
      }
    }
  }

  // Starting point in theta space. Sign-constrained coefficients that start
  // at zero begin at a small magnitude, which is zero for practical purposes
  // in standardized units.
  Vector theta0(obj.layout.size());
  theta0.head(d) = init.lengthscales.array().log();
  theta0[d] = std::log(init.signal_variance);
  theta0[d + 1] = std::log(std::max(init.noise_variance, b.noise_variance_min));
  for (std::size_t i = 0; i < obj.layout.mean_index.size(); ++i) {
    const double g = mean_config->coefficients[obj.layout.mean_index[i]];
    const Eigen::Index slot = d + 2 + static_cast<Eigen::Index>(i);
    if (obj.layout.mean_kind[i] == SignConstraint::kFree) {
      theta0[slot] = g;
    } else {
      theta0[slot] = std::log(std::max(std::abs(g), 1e-3));
    }
  }
  Vector z0(theta0.size());
  for (Eigen::Index i = 0; i < z0.size(); ++i) {
    z0[i] = obj.boxes[static_cast<std::size_t>(i)].to_z(theta0[i]);
  }

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<RestartDiagnostic> diag;
  double best = std::numeric_limits<double>::infinity();
  Vector best_z;
  for (int r = 0; r < options.restarts; ++r) {
    Vector theta = theta0;
    if (r > 0) {
      for (Eigen::Index i = 0; i < d + 2; ++i) theta[i] += normal(rng);
      // exp(theta) has a vanishing gradient near zero magnitude, so later
      // restarts move sign-constrained coefficients to order-one values.
      for (std::size_t i = 0; i < obj.layout.mean_index.size(); ++i) {
        const Eigen::Index slot = d + 2 + static_cast<Eigen::Index>(i);
        if (obj.layout.mean_kind[i] == SignConstraint::kFree) {
          theta[slot] += normal(rng);
        } else {
          theta[slot] = std::log(0.3) + normal(rng);
        }
      }
    }
    Vector z(theta.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z[i] = obj.boxes[static_cast<std::size_t>(i)].to_z(theta[i]);
    }
    RestartDiagnostic rd;
    rd.restart = r;
    obj.best_value = std::numeric_limits<double>::infinity();
    obj.best_z.resize(0);
    try {
      obj.evaluate(z, nullptr);
    } catch (const NumericalFailure& e) {
      rd.message = std::string("start point: ") + e.what();
    }
    rd.iterations = run_bfgs(obj, z, options.max_iterations);
    if (obj.best_z.size() > 0) {
      rd.ok = true;
      rd.log_likelihood = -obj.best_value;
      if (obj.best_value < best) {
        best = obj.best_value;
        best_z = obj.best_z;
      }
    } else if (rd.message.empty()) {
      rd.message = "no finite likelihood evaluation";
    }
    diag.push_back(rd);
  }
  if (diagnostics) *diagnostics = diag;
  if (best_z.size() == 0) {
    std::ostringstream os;
    os << "all " << options.restarts << " restarts failed:";
    for (const auto& rd : diag) os << " [" << rd.restart << ": " << rd.message << "]";
    throw FittingFailure(os.str());
  }

  const Vector t = obj.theta(best_z);
  KernelParams k = obj.kernel(t);
  std::optional<LinearMeanParams> mean;
  if (mean_config) {
    mean = LinearMeanParams{obj.mean_coefficients(t), mean_config->sign_mask};
  }
  return GPModel(std::move(k), std::move(mean), data, std::move(standardization));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const char* mask_name(SignConstraint c) {
  switch (c) {
    case SignConstraint::kNegative: return "negative";
    case SignConstraint::kPositive: return "positive";
    case SignConstraint::kZero: return "zero";
    case SignConstraint::kFree: return "free";
  }
  return "free";
}

SignConstraint mask_from_name(const std::string& s) {
  if (s == "negative") return SignConstraint::kNegative;
  if (s == "positive") return SignConstraint::kPositive;
  if (s == "zero") return SignConstraint::kZero;
  if (s == "free") return SignConstraint::kFree;
  throw InvalidArgument("unknown sign constraint '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const GPModel& model) {
  nlohmann::json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["kernel"] = {
      {"type", "se_ard"},
      {"lengthscales", to_std(model.kernel().lengthscales)},
      {"signal_variance", model.kernel().signal_variance},
      {"noise_variance", model.kernel().noise_variance},
  };
  if (model.mean()) {
    std::vector<std::string> mask;
    for (auto c : model.mean()->sign_mask) mask.emplace_back(mask_name(c));
    doc["mean"] = {{"type", "linear"},
                   {"coefficients", to_std(model.mean()->coefficients)},
                   {"sign_mask", mask}};
  } else {
    doc["mean"] = {{"type", "zero"}};
  }
  const Standardization& s = model.standardization();
  doc["standardization"] = {{"input_lower", to_std(s.input_lower)},
                            {"input_upper", to_std(s.input_upper)},
                            {"target_mean", s.target_mean},
                            {"target_scale", s.target_scale}};
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.data().size(); ++i) {
    rows.push_back(to_std(model.data().inputs.row(i).transpose()));
  }
  doc["data"] = {{"inputs", rows}, {"targets", to_std(model.data().targets)}};
  return doc;
}

GPModel model_from_json(const nlohmann::json& doc) {
  const int version = doc.at("format_version").get<int>();
  if (version > kModelFormatVersion) {
    throw MigrationRequired("GP model format version " +
                            std::to_string(version) + " is newer than " +
                            std::to_string(kModelFormatVersion));
  }
  KernelParams k;
  k.lengthscales = from_std(doc.at("kernel").at("lengthscales").get<std::vector<double>>());
  k.signal_variance = doc.at("kernel").at("signal_variance").get<double>();
  k.noise_variance = doc.at("kernel").at("noise_variance").get<double>();
  std::optional<LinearMeanParams> mean;
  if (doc.at("mean").at("type") == "linear") {
    LinearMeanParams m;
    m.coefficients = from_std(doc.at("mean").at("coefficients").get<std::vector<double>>());
    for (const auto& s : doc.at("mean").at("sign_mask")) {
      m.sign_mask.push_back(mask_from_name(s.get<std::string>()));
    }
    mean = std::move(m);
  }
  Standardization s;
  const auto& sj = doc.at("standardization");
  s.input_lower = from_std(sj.at("input_lower").get<std::vector<double>>());
  s.input_upper = from_std(sj.at("input_upper").get<std::vector<double>>());
  s.target_mean = sj.at("target_mean").get<double>();
  s.target_scale = sj.at("target_scale").get<double>();
  Dataset data;
  const auto& rows = doc.at("data").at("inputs");
  data.inputs.resize(static_cast<Eigen::Index>(rows.size()), k.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i].get<std::vector<double>>();
    require_dim(static_cast<Eigen::Index>(r.size()), k.dim(), "model data");
    data.inputs.row(static_cast<Eigen::Index>(i)) = from_std(r).transpose();
  }
  data.targets = from_std(doc.at("data").at("targets").get<std::vector<double>>());
  return GPModel(std::move(k), std::move(mean), std::move(data), std::move(s));
}

}  // namespace apsbo::gp
