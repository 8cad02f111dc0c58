#include "csm/nn/mlp.hpp"

#include <cmath>

#include "csm/ad/ops.hpp"
#include "csm/ad/scalars.hpp"

namespace csm::nn {

Mlp::Mlp(ad::ParamStore& store, const std::string& prefix, std::size_t in,
         std::vector<std::size_t> hidden, std::size_t out, Activation act)
    : hidden_(std::move(hidden)), in_(in), out_(out), act_(act) {
  std::size_t prev = in;
  std::vector<std::size_t> widths = hidden_;
  widths.push_back(out);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    Layer layer;
    layer.in = prev;
    layer.out = widths[l];
    const std::string tag = prefix + ".l" + std::to_string(l);
    layer.w_offset = store.add(tag + ".w", {layer.out, layer.in});
    layer.b_offset = store.add(tag + ".b", {layer.out});
    param_count_ += layer.out * (layer.in + 1);
    layers_.push_back(layer);
    prev = widths[l];
  }
}

void Mlp::init(std::span<double> theta, Rng& rng, double output_scale) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const double scale = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(layer.in, 1))) *
                         (l + 1 == layers_.size() ? output_scale : 1.0);
    for (std::size_t k = 0; k < layer.in * layer.out; ++k) {
      theta[layer.w_offset + k] = scale * rng.normal();
    }
    for (std::size_t k = 0; k < layer.out; ++k) theta[layer.b_offset + k] = 0.0;
  }
}

template <class T>
void Mlp::forward(std::span<const T> theta, std::span<const T> in, std::span<T> out) const {
  std::vector<T> cur(in.begin(), in.end());
  std::vector<T> next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const bool last = l + 1 == layers_.size();
    next.clear();
    next.reserve(layer.out);
    for (std::size_t j = 0; j < layer.out; ++j) {
      T z = ad::affine(theta.subspan(layer.w_offset + j * layer.in, layer.in),
                       std::span<const T>(cur), theta[layer.b_offset + j]);
      next.push_back(last ? z : activate(act_, z));
    }
    cur.swap(next);
  }
  for (std::size_t j = 0; j < out_; ++j) out[j] = cur[j];
}

#define CSM_INSTANTIATE(T)                                                        \
  template void Mlp::forward<T>(std::span<const T>, std::span<const T>, std::span<T>) \
      const;
CSM_FOR_EACH_SCALAR(CSM_INSTANTIATE)
#undef CSM_INSTANTIATE

}  // namespace csm::nn
