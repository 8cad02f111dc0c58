#pragma once

#include <span>
#include <vector>

#include "csm/core/types.hpp"
#include "csm/data/rng.hpp"
#include "csm/fields/score_field.hpp"
#include "csm/nn/made.hpp"
#include "csm/nn/mlp.hpp"

namespace csm {

struct TractableArOptions {
  std::size_t dim = 2;
  std::vector<std::size_t> made_hidden{32};
  /// 1: Gaussian conditionals; K > 1: mixture of K logistic components.
  std::size_t components = 1;
  nn::Activation activation = nn::Activation::kElu;
  bool direct = true;
};

/// Normalised autoregressive density (MADE-style) with closed-form
/// conditionals, so its exact log-likelihood can be evaluated.
///
/// It is also a score field (the conditional scores are analytic derivatives
/// of the conditional log-densities) and a joint log-density model, which lets
/// every score-matching objective and maximum likelihood train the same
/// architecture.
class TractableArModel final : public ScoreFieldAdapter<TractableArModel>,
                               public TrainableLogDensity {
 public:
  TractableArModel(TractableArOptions opts, Rng& init_rng);

  const TractableArOptions& options() const { return opts_; }
  std::size_t dim() const override { return opts_.dim; }

  ad::ParamStore& params() override { return params_; }
  const ad::ParamStore& params() const override { return params_; }

  ConditionalScore conditional(std::span<const double> prefix, std::size_t d) const override;

  double log_density(std::span<const double> x) const override;
  ad::Dual2 log_density(std::span<const ad::Dual2> x) const override;
  V2 log_density(std::span<const V2> theta, std::span<const V2> x) const override;
  V0 log_density(std::span<const V0> theta, std::span<const V0> x) const override;

  /// Mean negative log-likelihood over the rows of `data`.
  double nll(const Batch& data) const;

  /// Exact ancestral samples.
  Batch sample(std::size_t n, Rng& rng) const;

  /// Fixes every conditional to N(0, 1) (all weights zero); used as an
  /// analytic reference configuration.
  void set_standard_normal();

  template <class T>
  void eval(std::span<const T> theta, std::span<const T> context_x, std::span<const T> head_x,
            std::span<T> out) const;
  template <class T>
  T log_density_t(std::span<const T> theta, std::span<const T> x) const;

  /// log q(x_d | x_<d); entries of x after d are ignored.
  template <class T>
  T log_conditional(std::span<const T> theta, std::span<const T> x, std::size_t d) const;

 private:
  template <class T>
  T conditional_log_density(std::span<const T> p, const T& x) const;
  template <class T>
  T conditional_score_t(std::span<const T> p, const T& x) const;

  TractableArOptions opts_;
  std::size_t width_ = 2;
  ad::ParamStore params_;
  nn::Made made_;
};

/// Unnormalised joint density log q(x) = f_theta(x) with f a fully connected
/// network; the baseline model for exact score matching.
class EnergyMlp final : public TrainableLogDensity {
 public:
  EnergyMlp(std::size_t dim, std::vector<std::size_t> hidden, nn::Activation act, Rng& init_rng);

  std::size_t dim() const override { return dim_; }
  ad::ParamStore& params() override { return params_; }
  const ad::ParamStore& params() const override { return params_; }

  double log_density(std::span<const double> x) const override;
  ad::Dual2 log_density(std::span<const ad::Dual2> x) const override;
  V2 log_density(std::span<const V2> theta, std::span<const V2> x) const override;
  V0 log_density(std::span<const V0> theta, std::span<const V0> x) const override;

 private:
  std::size_t dim_;
  ad::ParamStore params_;
  nn::Mlp net_;
};

}  // namespace csm
