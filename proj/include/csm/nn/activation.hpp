#pragma once

#include <string>

#include "csm/ad/dual.hpp"
#include "csm/ad/tape.hpp"

namespace csm::nn {

/// Smooth activations only: score heads need continuous x-derivatives.
enum class Activation { kElu, kTanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

template <class T>
T activate(Activation a, const T& x) {
  using ad::elu;
  using ad::tanh;
  return a == Activation::kElu ? elu(x) : tanh(x);
}

}  // namespace csm::nn
