#pragma once

#include <span>
#include <string>
#include <vector>

#include "csm/ad/param_store.hpp"
#include "csm/data/rng.hpp"
#include "csm/nn/activation.hpp"

namespace csm::nn {

/// Fully connected network with a linear output layer.
///
/// Parameters are registered in a shared ParamStore under `prefix`; forward
/// takes the store's whole flat vector (as any scalar type) and reads its own
/// slices by offset.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ad::ParamStore& store, const std::string& prefix, std::size_t in,
      std::vector<std::size_t> hidden, std::size_t out, Activation act);

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  std::size_t param_count() const { return param_count_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }

  void init(std::span<double> theta, Rng& rng, double output_scale = 1.0) const;

  template <class T>
  void forward(std::span<const T> theta, std::span<const T> in, std::span<T> out) const;

 private:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;
  };
  std::vector<Layer> layers_;
  std::vector<std::size_t> hidden_;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::size_t param_count_ = 0;
  Activation act_ = Activation::kElu;
};

}  // namespace csm::nn
