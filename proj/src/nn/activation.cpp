#include "csm/nn/activation.hpp"

#include <stdexcept>

namespace csm::nn {

Activation parse_activation(const std::string& name) {
  if (name == "elu") return Activation::kElu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + name + "' (expected elu or tanh)");
}

std::string to_string(Activation a) { return a == Activation::kElu ? "elu" : "tanh"; }

}  // namespace csm::nn
