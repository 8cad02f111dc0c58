#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csm/ad/param_store.hpp"
#include "csm/data/rng.hpp"
#include "csm/nn/activation.hpp"

namespace csm::nn {

/// Masked autoregressive network over D inputs with optional conditioning.
///
/// Produces `width` outputs per dimension. The outputs for dimension d depend
/// only on x_j with j < d (0-based) and on the conditioning inputs, enforced by
/// degree-labelled connectivity: input x_j has degree j + 1, conditioning
/// inputs degree 0, and a hidden unit of degree m sees units of degree <= m.
/// Only permitted connections carry parameters.
class Made {
 public:
  struct Options {
    std::size_t dim = 1;
    std::size_t cond_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t width = 1;  // outputs per dimension
    Activation activation = Activation::kElu;
    bool direct = true;  // masked input -> output skip connections
  };

  Made() = default;
  Made(ad::ParamStore& store, const std::string& prefix, Options opts);

  const Options& options() const { return opts_; }
  std::size_t dim() const { return opts_.dim; }
  std::size_t width() const { return opts_.width; }
  std::size_t param_count() const { return param_count_; }
  const std::vector<int>& hidden_degrees(std::size_t layer) const { return degrees_[layer]; }

  void init(std::span<double> theta, Rng& rng, double output_scale = 1.0) const;

  /// All outputs: out[d * width + k].
  template <class T>
  void forward(std::span<const T> theta, std::span<const T> x, std::span<const T> cond,
               std::span<T> out) const;

  /// Outputs for one dimension only: out[k], k < width.
  template <class T>
  void forward_dim(std::span<const T> theta, std::span<const T> x, std::span<const T> cond,
                   std::size_t d, std::span<T> out) const;

 private:
  struct Unit {
    std::vector<std::uint32_t> inputs;
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;
  };

  template <class T>
  void hidden_pass(std::span<const T> theta, std::span<const T> x, std::span<const T> cond,
                   std::vector<T>& source) const;
  template <class T>
  T unit_output(std::span<const T> theta, const Unit& u, std::span<const T> source) const;

  Options opts_;
  std::vector<std::vector<Unit>> hidden_units_;
  std::vector<std::vector<int>> degrees_;
  std::vector<Unit> output_units_;  // dim * width, indices into [last hidden, inputs]
  std::size_t param_count_ = 0;
};

}  // namespace csm::nn
