#include "csm/fields/gaussian_field.hpp"

#include <cmath>
#include <numbers>

#include "csm/ad/scalars.hpp"

namespace csm {

namespace {

Matrix lower_factor(const Matrix& cov, const char* what) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw InputError(std::string(what) + ": covariance is not positive definite");
  }
  return llt.matrixL();
}

bool is_diagonal(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (i != j && m(i, j) != 0.0) return false;
    }
  }
  return true;
}

}  // namespace

GaussianField::GaussianField(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size() || mean_.size() == 0) {
    throw InputError("GaussianField: mean/covariance shape mismatch");
  }
  if (!cov_.isApprox(cov_.transpose(), 1e-12)) throw InputError("GaussianField: covariance not symmetric");
  factor_ = lower_factor(cov_, "GaussianField");
  joint_factor_ = factor_;
  has_joint_ = true;
  diagonal_ = is_diagonal(factor_);
  cond_var_.resize(mean_.size());
  for (Eigen::Index d = 0; d < mean_.size(); ++d) {
    cond_var_[d] = factor_(d, d) * factor_(d, d);
    log_det_half_ += std::log(factor_(d, d));
  }
  params_.seal();
}

GaussianField GaussianField::isotropic(std::size_t dim, double sigma) {
  return GaussianField(Vector::Zero(static_cast<Eigen::Index>(dim)),
                       Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)) *
                           (sigma * sigma));
}

GaussianField GaussianField::perturbed(double sigma_context, double sigma_head) const {
  if (!(sigma_context >= 0.0) || !(sigma_head >= 0.0)) {
    throw InputError("GaussianField::perturbed: negative noise level");
  }
  GaussianField out;
  out.mean_ = mean_;
  const Eigen::Index n = mean_.size();
  out.cov_ = cov_ + Matrix::Identity(n, n) * (sigma_context * sigma_context);
  out.factor_ = lower_factor(out.cov_, "GaussianField::perturbed");
  out.diagonal_ = is_diagonal(out.factor_);
  out.cond_var_.resize(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    double v = cov_(d, d) + sigma_head * sigma_head;
    for (Eigen::Index j = 0; j < d; ++j) v -= out.factor_(d, j) * out.factor_(d, j);
    out.cond_var_[d] = v;
  }
  if (sigma_context == sigma_head) {
    out.joint_factor_ = out.factor_;
    out.has_joint_ = true;
    for (Eigen::Index d = 0; d < n; ++d) out.log_det_half_ += std::log(out.factor_(d, d));
  }
  out.params_.seal();
  return out;
}

template <class T>
void GaussianField::eval(std::span<const T>, std::span<const T> context_x,
                         std::span<const T> head_x, std::span<T> out) const {
  const std::size_t n = dim();
  const bool diag = diagonal_;
  std::vector<T> z;
  if (!diag) z.reserve(n);
  for (std::size_t d = 0; d < n; ++d) {
    T r = head_x[d] - mean_(d);
    if (!diag) {
      for (std::size_t j = 0; j < d; ++j) r = r - factor_(d, j) * z[j];
      T zd = context_x[d] - mean_(d);
      for (std::size_t j = 0; j < d; ++j) zd = zd - factor_(d, j) * z[j];
      z.push_back(zd / factor_(d, d));
    }
    out[d] = r * (-1.0 / cond_var_[d]);
  }
}

double GaussianField::conditional_mean(std::span<const double> x, std::size_t d) const {
  std::vector<double> z(d);
  double m = mean_(d);
  for (std::size_t j = 0; j < d; ++j) {
    double r = x[j] - mean_(j);
    for (std::size_t k = 0; k < j; ++k) r -= factor_(j, k) * z[k];
    z[j] = r / factor_(j, j);
    m += factor_(d, j) * z[j];
  }
  return m;
}

ConditionalScore GaussianField::conditional(std::span<const double> prefix, std::size_t d) const {
  // Same arithmetic as eval(): r = x_d - mean_d - sum_j L_dj z_j.
  std::vector<double> z(d);
  for (std::size_t j = 0; j < d; ++j) {
    double r = prefix[j] - mean_(j);
    for (std::size_t k = 0; k < j; ++k) r = r - factor_(j, k) * z[k];
    z[j] = r / factor_(j, j);
  }
  std::vector<double> l(d);
  for (std::size_t j = 0; j < d; ++j) l[j] = factor_(d, j);
  const double mu = mean_(d);
  const double scale = -1.0 / cond_var_[d];
  return [z = std::move(z), l = std::move(l), mu, scale](double x) {
    double r = x - mu;
    for (std::size_t j = 0; j < z.size(); ++j) r = r - l[j] * z[j];
    return r * scale;
  };
}

template <class T>
T GaussianField::log_density_t(std::span<const T> x) const {
  if (!has_joint_) throw ContractError("GaussianField: joint density undefined for unequal perturbations");
  const std::size_t n = dim();
  std::vector<T> z;
  z.reserve(n);
  for (std::size_t d = 0; d < n; ++d) {
    T r = x[d] - mean_(d);
    if (!diagonal_) {
      for (std::size_t j = 0; j < d; ++j) r = r - joint_factor_(d, j) * z[j];
    }
    z.push_back(r / joint_factor_(d, d));
  }
  T acc = ad::square(z[0]);
  for (std::size_t d = 1; d < n; ++d) acc = acc + ad::square(z[d]);
  return acc * -0.5 - (log_det_half_ + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
}

double GaussianField::log_density(std::span<const double> x) const { return log_density_t<double>(x); }
ad::Dual2 GaussianField::log_density(std::span<const ad::Dual2> x) const {
  return log_density_t<ad::Dual2>(x);
}
V2 GaussianField::log_density(std::span<const V2>, std::span<const V2> x) const {
  return log_density_t<V2>(x);
}
V0 GaussianField::log_density(std::span<const V0>, std::span<const V0> x) const {
  return log_density_t<V0>(x);
}

Vector GaussianField::joint_score(std::span<const double> x) const {
  Vector diff = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())) - mean_;
  return -cov_.ldlt().solve(diff);
}

// ---------------------------------------------------------------------------

DiagGaussianFamily::DiagGaussianFamily(std::size_t dim, double init_scale, bool train_mean,
                                       std::vector<double> fixed_mean)
    : dim_(dim), train_mean_(train_mean), fixed_mean_(std::move(fixed_mean)) {
  if (dim == 0 || !(init_scale > 0.0)) throw InputError("DiagGaussianFamily: invalid arguments");
  if (fixed_mean_.empty()) fixed_mean_.assign(dim, 0.0);
  if (fixed_mean_.size() != dim) throw InputError("DiagGaussianFamily: mean length mismatch");
  if (train_mean_) {
    mean_offset_ = params_.add("mean", {dim});
    for (std::size_t d = 0; d < dim; ++d) params_.flat()[mean_offset_ + d] = fixed_mean_[d];
  }
  log_scale_offset_ = params_.add("log_scale", {dim});
  for (std::size_t d = 0; d < dim; ++d) params_.flat()[log_scale_offset_ + d] = std::log(init_scale);
  params_.seal();
}

double DiagGaussianFamily::scale(std::size_t d) const {
  return std::exp(params_.flat()[log_scale_offset_ + d]);
}
double DiagGaussianFamily::mean(std::size_t d) const {
  return train_mean_ ? params_.flat()[mean_offset_ + d] : fixed_mean_[d];
}

template <class T>
void DiagGaussianFamily::eval(std::span<const T> theta, std::span<const T>,
                              std::span<const T> head_x, std::span<T> out) const {
  for (std::size_t d = 0; d < dim_; ++d) {
    const T inv_var = ad::exp(theta[log_scale_offset_ + d] * -2.0);
    T r = train_mean_ ? head_x[d] - theta[mean_offset_ + d] : head_x[d] - fixed_mean_[d];
    out[d] = -(r * inv_var);
  }
}

template <class T>
T DiagGaussianFamily::log_density_t(std::span<const T> theta, std::span<const T> x) const {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  T acc{};
  for (std::size_t d = 0; d < dim_; ++d) {
    const T& ls = theta[log_scale_offset_ + d];
    T r = train_mean_ ? x[d] - theta[mean_offset_ + d] : x[d] - fixed_mean_[d];
    T term = ad::square(r * ad::exp(-ls)) * -0.5 - ls - half_log_2pi;
    acc = d == 0 ? term : acc + term;
  }
  return acc;
}

ConditionalScore DiagGaussianFamily::conditional(std::span<const double>, std::size_t d) const {
  const double mu = mean(d);
  const double inv_var = std::exp(params_.flat()[log_scale_offset_ + d] * -2.0);
  return [mu, inv_var](double x) { return -((x - mu) * inv_var); };
}

double DiagGaussianFamily::log_density(std::span<const double> x) const {
  return log_density_t<double>(params_.flat(), x);
}
ad::Dual2 DiagGaussianFamily::log_density(std::span<const ad::Dual2> x) const {
  const auto theta = ad::lift<ad::Dual2>(params_.flat());
  return log_density_t<ad::Dual2>(theta, x);
}
V2 DiagGaussianFamily::log_density(std::span<const V2> theta,
                              std::span<const V2> x) const {
  return log_density_t<V2>(theta, x);
}
V0 DiagGaussianFamily::log_density(std::span<const V0> theta,
                              std::span<const V0> x) const {
  return log_density_t<V0>(theta, x);
}

#define CSM_INSTANTIATE(T)                                                                  \
  template void GaussianField::eval<T>(std::span<const T>, std::span<const T>,             \
                                       std::span<const T>, std::span<T>) const;            \
  template void DiagGaussianFamily::eval<T>(std::span<const T>, std::span<const T>,        \
                                            std::span<const T>, std::span<T>) const;
CSM_FOR_EACH_SCALAR(CSM_INSTANTIATE)
#undef CSM_INSTANTIATE

}  // namespace csm
