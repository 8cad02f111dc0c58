#pragma once

#include <span>
#include <vector>

#include "csm/data/rng.hpp"
#include "csm/fields/score_field.hpp"
#include "csm/nn/made.hpp"
#include "csm/nn/mlp.hpp"

namespace csm {

struct ArCsmOptions {
  std::size_t dim = 2;
  std::size_t cond_dim = 0;  // extra inputs visible to every context vector
  std::size_t context_width = 64;
  std::vector<std::size_t> made_hidden{64};
  std::vector<std::size_t> head_hidden{64, 64};
  nn::Activation activation = nn::Activation::kElu;
  bool direct = true;
  std::vector<std::size_t> order;  // empty: natural order
};

/// Autoregressive conditional score model.
///
/// A masked autoregressive network maps x to one context vector c_d per
/// dimension (c_d sees only the dimensions before d in the model's order);
/// a single score head, shared by all dimensions, maps [c_d, x_d] to the
/// unnormalised conditional score s_d. The score's x_d-derivative is obtained
/// by forward mode through the head.
class ArCsmModel final : public ScoreFieldAdapter<ArCsmModel> {
 public:
  ArCsmModel(ArCsmOptions opts, Rng& init_rng);

  const ArCsmOptions& options() const { return opts_; }
  std::size_t dim() const override { return opts_.dim; }
  std::vector<std::size_t> ordering() const override { return order_; }
  std::size_t head_param_count() const { return head_.param_count(); }
  std::size_t context_param_count() const { return made_.param_count(); }

  ad::ParamStore& params() override { return params_; }
  const ad::ParamStore& params() const override { return params_; }

  ConditionalScore conditional(std::span<const double> prefix, std::size_t d) const override;
  /// Conditional score with conditioning inputs `cond` (cond_dim of them).
  ConditionalScore conditional_given(std::span<const double> cond, std::span<const double> prefix,
                                     std::size_t d) const;

  /// Requires cond_dim == 0.
  template <class T>
  void eval(std::span<const T> theta, std::span<const T> context_x, std::span<const T> head_x,
            std::span<T> out) const;

  template <class T>
  void eval_conditioned(std::span<const T> theta, std::span<const T> cond,
                        std::span<const T> context_x, std::span<const T> head_x,
                        std::span<T> out) const;

  /// Context vectors in original dimension order: out[d * width + k].
  template <class T>
  void contexts(std::span<const T> theta, std::span<const T> cond, std::span<const T> x,
                std::span<T> out) const;

 private:
  ArCsmOptions opts_;
  std::vector<std::size_t> order_;     // position -> dimension
  std::vector<std::size_t> position_;  // dimension -> position
  ad::ParamStore params_;
  nn::Made made_;
  nn::Mlp head_;
};

}  // namespace csm
