#pragma once

#include <span>
#include <vector>

#include "csm/core/types.hpp"
#include "csm/fields/score_field.hpp"

namespace csm {

/// Analytic Gaussian N(mean, cov) exposed through its exact conditionals.
///
/// Conditionals come from a lower-triangular factor L of the covariance:
/// with x = mean + L z, the conditional of x_d given x_<d has mean
/// mean_d + sum_{j<d} L_dj z_j and variance L_dd^2. A perturbed copy
/// (see perturbed()) gives the conditionals of x_d + sigma_head * e given
/// x_<d + sigma_context * e', which is what a noise-annealed model learns.
class GaussianField final : public ScoreFieldAdapter<GaussianField>,
                            public TrainableLogDensity {
 public:
  GaussianField(Vector mean, Matrix cov);

  /// N(0, sigma^2 I) in `dim` dimensions.
  static GaussianField isotropic(std::size_t dim, double sigma);

  GaussianField perturbed(double sigma_context, double sigma_head) const;

  std::size_t dim() const override { return static_cast<std::size_t>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  /// Conditional variance of x_d given x_<d.
  double conditional_variance(std::size_t d) const { return cond_var_[d]; }
  double conditional_mean(std::span<const double> x, std::size_t d) const;
  bool has_joint() const { return has_joint_; }

  ad::ParamStore& params() override { return params_; }
  const ad::ParamStore& params() const override { return params_; }

  ConditionalScore conditional(std::span<const double> prefix, std::size_t d) const override;

  double log_density(std::span<const double> x) const override;
  ad::Dual2 log_density(std::span<const ad::Dual2> x) const override;
  V2 log_density(std::span<const V2> theta, std::span<const V2> x) const override;
  V0 log_density(std::span<const V0> theta, std::span<const V0> x) const override;

  /// Analytic joint score -cov^{-1} (x - mean).
  Vector joint_score(std::span<const double> x) const;

  template <class T>
  void eval(std::span<const T> theta, std::span<const T> context_x, std::span<const T> head_x,
            std::span<T> out) const;

  template <class T>
  T log_density_t(std::span<const T> x) const;

 private:
  GaussianField() = default;

  Vector mean_;
  Matrix cov_;
  Matrix factor_;                 // lower-triangular factor for conditional means
  std::vector<double> cond_var_;  // conditional variances
  Matrix joint_factor_;           // chol(cov) when the joint density is defined
  double log_det_half_ = 0.0;     // sum_d log joint_factor_dd
  bool has_joint_ = false;
  bool diagonal_ = false;
  ad::ParamStore params_;
};

/// N(mean, diag(exp(2 log_scale))) with trainable log-scales and optionally
/// trainable means. With dim = 1 and fixed mean this is the one-parameter
/// family used for consistency checks of the objectives.
class DiagGaussianFamily final : public ScoreFieldAdapter<DiagGaussianFamily>,
                                 public TrainableLogDensity {
 public:
  DiagGaussianFamily(std::size_t dim, double init_scale, bool train_mean,
                     std::vector<double> fixed_mean = {});

  std::size_t dim() const override { return dim_; }
  double scale(std::size_t d) const;
  double mean(std::size_t d) const;

  ad::ParamStore& params() override { return params_; }
  const ad::ParamStore& params() const override { return params_; }

  ConditionalScore conditional(std::span<const double> prefix, std::size_t d) const override;

  double log_density(std::span<const double> x) const override;
  ad::Dual2 log_density(std::span<const ad::Dual2> x) const override;
  V2 log_density(std::span<const V2> theta, std::span<const V2> x) const override;
  V0 log_density(std::span<const V0> theta, std::span<const V0> x) const override;

  template <class T>
  void eval(std::span<const T> theta, std::span<const T> context_x, std::span<const T> head_x,
            std::span<T> out) const;
  template <class T>
  T log_density_t(std::span<const T> theta, std::span<const T> x) const;

 private:
  std::size_t dim_;
  bool train_mean_;
  std::vector<double> fixed_mean_;
  std::size_t mean_offset_ = 0;
  std::size_t log_scale_offset_ = 0;
  ad::ParamStore params_;
};

/// s_d == 0 everywhere.
class ZeroField final : public ScoreFieldAdapter<ZeroField> {
 public:
  explicit ZeroField(std::size_t dim) : dim_(dim) { params_.seal(); }
  std::size_t dim() const override { return dim_; }
  ad::ParamStore& params() override { return params_; }
  const ad::ParamStore& params() const override { return params_; }
  ConditionalScore conditional(std::span<const double>, std::size_t) const override {
    return [](double) { return 0.0; };
  }
  template <class T>
  void eval(std::span<const T>, std::span<const T>, std::span<const T> head_x,
            std::span<T> out) const {
    for (std::size_t d = 0; d < dim_; ++d) out[d] = head_x[d] * 0.0;
  }

 private:
  std::size_t dim_;
  ad::ParamStore params_;
};

}  // namespace csm
