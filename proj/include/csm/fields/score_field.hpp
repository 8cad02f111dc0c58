#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "csm/ad/dual.hpp"
#include "csm/ad/param_store.hpp"
#include "csm/ad/tape.hpp"
#include "csm/core/types.hpp"

namespace csm {

// Tape scalars: plain reverse mode, reverse over one tangent, reverse over two.
using V0 = ad::Var<double>;
using V1 = ad::Var<ad::Dual1>;
using V2 = ad::Var<ad::Dual2>;

/// A one-dimensional conditional score x_d -> s_d(x_<d, x_d) with x_<d fixed.
using ConditionalScore = std::function<double(double)>;

/// D conditional score functions s_d(x_<d, x_d), indexed d = 0..D-1.
///
/// The context input (x_<d) and the head input (x_d) are passed separately so
/// that noise-annealed training can feed them different perturbations; plain
/// evaluation passes the same vector twice. s_d may depend on head_x only
/// through head_x[d] and on context_x only through context_x[j], j < d.
class ScoreField {
 public:
  virtual ~ScoreField() = default;

  virtual std::size_t dim() const = 0;

  /// Scores for all d.
  virtual void scores(std::span<const double> context_x, std::span<const double> head_x,
                      std::span<double> s) const = 0;

  /// Scores and their derivatives with respect to head_x[d], for all d.
  virtual void scores_with_deriv(std::span<const double> context_x,
                                 std::span<const double> head_x, std::span<double> s,
                                 std::span<double> ds) const = 0;

  /// The d-th conditional score as a function of x_d alone; entries of
  /// `prefix` at index >= d are ignored.
  virtual ConditionalScore conditional(std::span<const double> prefix, std::size_t d) const = 0;

  /// ordering()[k] is the dimension sampled k-th; "x_<d" means the dimensions
  /// that precede d in this order. Identity unless a model was built with a
  /// permuted order.
  virtual std::vector<std::size_t> ordering() const;
};

/// Anything with a flat parameter vector an optimiser can update.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual ad::ParamStore& params() = 0;
  virtual const ad::ParamStore& params() const = 0;
};

/// Score field whose scores can be recorded on a tape as functions of theta.
class TrainableScoreField : public ScoreField, public virtual Trainable {
 public:
  virtual void scores(std::span<const V1> theta, std::span<const V1> context_x,
                      std::span<const V1> head_x, std::span<V1> s) const = 0;
  virtual void scores(std::span<const V0> theta, std::span<const V0> context_x,
                      std::span<const V0> head_x, std::span<V0> s) const = 0;
  using ScoreField::scores;
};

/// Model with an (unnormalised) joint log-density log q(x), used by the
/// exact and sliced score-matching objectives which need the joint score.
class LogDensityModel {
 public:
  virtual ~LogDensityModel() = default;
  virtual std::size_t dim() const = 0;
  virtual double log_density(std::span<const double> x) const = 0;
  /// Evaluation with two forward-mode tangent directions, current parameters.
  virtual ad::Dual2 log_density(std::span<const ad::Dual2> x) const = 0;
};

class TrainableLogDensity : public LogDensityModel, public virtual Trainable {
 public:
  virtual V2 log_density(std::span<const V2> theta, std::span<const V2> x) const = 0;
  virtual V0 log_density(std::span<const V0> theta, std::span<const V0> x) const = 0;
  using LogDensityModel::log_density;
};

/// Checked single-dimension score s_d(x_<d, x_d) (0-based d).
double conditional_score(const ScoreField& field, std::span<const double> x, std::size_t d);

struct ScoreAll {
  std::vector<double> score;
  std::vector<double> deriv;
};

/// All conditional scores and their x_d-derivatives at x.
ScoreAll score_all(const ScoreField& field, std::span<const double> x);

/// h(x) = sum_d s_d(x), the out-of-distribution statistic.
double ood_statistic(const ScoreField& field, std::span<const double> x);

/// Glue for models written as one template `eval<T>(theta, ctx, head, out)`:
/// supplies every virtual evaluation entry point of TrainableScoreField.
template <class Derived>
class ScoreFieldAdapter : public TrainableScoreField {
 public:
  void scores(std::span<const double> context_x, std::span<const double> head_x,
              std::span<double> s) const override {
    self().template eval<double>(self().params().flat(), context_x, head_x, s);
  }

  void scores_with_deriv(std::span<const double> context_x, std::span<const double> head_x,
                         std::span<double> s, std::span<double> ds) const override {
    const auto theta = ad::lift<ad::Dual1>(self().params().flat());
    const auto ctx = ad::lift<ad::Dual1>(context_x);
    std::vector<ad::Dual1> head(head_x.size());
    for (std::size_t j = 0; j < head_x.size(); ++j) head[j] = ad::Dual1(head_x[j], 1.0);
    std::vector<ad::Dual1> out(head_x.size());
    self().template eval<ad::Dual1>(theta, ctx, head, out);
    for (std::size_t j = 0; j < out.size(); ++j) {
      s[j] = out[j].v;
      ds[j] = out[j].t;
    }
  }

  void scores(std::span<const V1> theta, std::span<const V1> context_x,
              std::span<const V1> head_x, std::span<V1> s) const override {
    self().template eval<V1>(theta, context_x, head_x, s);
  }
  void scores(std::span<const V0> theta, std::span<const V0> context_x,
              std::span<const V0> head_x, std::span<V0> s) const override {
    self().template eval<V0>(theta, context_x, head_x, s);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

}  // namespace csm
