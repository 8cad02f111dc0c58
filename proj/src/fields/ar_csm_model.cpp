#include "csm/fields/ar_csm_model.hpp"

#include <algorithm>
#include <numeric>

#include "csm/ad/scalars.hpp"

namespace csm {

ArCsmModel::ArCsmModel(ArCsmOptions opts, Rng& init_rng) : opts_(std::move(opts)) {
  if (opts_.dim == 0 || opts_.context_width == 0) throw InputError("ArCsmModel: empty dimensions");
  order_ = opts_.order;
  if (order_.empty()) {
    order_.resize(opts_.dim);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }
  std::vector<std::size_t> check = order_;
  std::sort(check.begin(), check.end());
  for (std::size_t k = 0; k < check.size(); ++k) {
    if (check.size() != opts_.dim || check[k] != k) throw InputError("ArCsmModel: order is not a permutation");
  }
  position_.resize(opts_.dim);
  for (std::size_t k = 0; k < opts_.dim; ++k) position_[order_[k]] = k;

  nn::Made::Options m;
  m.dim = opts_.dim;
  m.cond_dim = opts_.cond_dim;
  m.hidden = opts_.made_hidden;
  m.width = opts_.context_width;
  m.activation = opts_.activation;
  m.direct = opts_.direct;
  made_ = nn::Made(params_, "context", m);
  head_ = nn::Mlp(params_, "head", opts_.context_width + 1, opts_.head_hidden, 1, opts_.activation);
  params_.seal();

  made_.init(params_.flat(), init_rng);
  head_.init(params_.flat(), init_rng);
}

template <class T>
void ArCsmModel::contexts(std::span<const T> theta, std::span<const T> cond, std::span<const T> x,
                          std::span<T> out) const {
  const std::size_t c = opts_.context_width;
  std::vector<T> xp(opts_.dim);
  for (std::size_t k = 0; k < opts_.dim; ++k) xp[k] = x[order_[k]];
  std::vector<T> ctx(opts_.dim * c);
  made_.forward<T>(theta, xp, cond, ctx);
  for (std::size_t k = 0; k < opts_.dim; ++k) {
    std::copy(ctx.begin() + static_cast<std::ptrdiff_t>(k * c),
              ctx.begin() + static_cast<std::ptrdiff_t>((k + 1) * c),
              out.begin() + static_cast<std::ptrdiff_t>(order_[k] * c));
  }
}

template <class T>
void ArCsmModel::eval_conditioned(std::span<const T> theta, std::span<const T> cond,
                                  std::span<const T> context_x, std::span<const T> head_x,
                                  std::span<T> out) const {
  const std::size_t c = opts_.context_width;
  std::vector<T> xp(opts_.dim);
  for (std::size_t k = 0; k < opts_.dim; ++k) xp[k] = context_x[order_[k]];
  std::vector<T> ctx(opts_.dim * c);
  made_.forward<T>(theta, xp, cond, ctx);
  std::vector<T> h(c + 1);
  T s[1];
  for (std::size_t k = 0; k < opts_.dim; ++k) {
    std::copy(ctx.begin() + static_cast<std::ptrdiff_t>(k * c),
              ctx.begin() + static_cast<std::ptrdiff_t>((k + 1) * c), h.begin());
    h[c] = head_x[order_[k]];
    head_.forward<T>(theta, h, s);
    out[order_[k]] = s[0];
  }
}

template <class T>
void ArCsmModel::eval(std::span<const T> theta, std::span<const T> context_x,
                      std::span<const T> head_x, std::span<T> out) const {
  if (opts_.cond_dim != 0) throw ContractError("ArCsmModel::eval: model expects conditioning inputs");
  eval_conditioned<T>(theta, {}, context_x, head_x, out);
}

ConditionalScore ArCsmModel::conditional_given(std::span<const double> cond,
                                               std::span<const double> prefix,
                                               std::size_t d) const {
  if (d >= opts_.dim) throw std::out_of_range("ArCsmModel::conditional: dimension index");
  const std::size_t c = opts_.context_width;
  const std::size_t k = position_[d];
  std::vector<double> xp(opts_.dim, 0.0);
  for (std::size_t j = 0; j < k; ++j) xp[j] = prefix[order_[j]];
  std::vector<double> ctx(c);
  made_.forward_dim<double>(params_.flat(), xp, cond, k, ctx);
  return [this, ctx = std::move(ctx)](double x) {
    std::vector<double> h(ctx.size() + 1);
    std::copy(ctx.begin(), ctx.end(), h.begin());
    h.back() = x;
    double s[1];
    head_.forward<double>(params_.flat(), h, s);
    return s[0];
  };
}

ConditionalScore ArCsmModel::conditional(std::span<const double> prefix, std::size_t d) const {
  if (opts_.cond_dim != 0) throw ContractError("ArCsmModel::conditional: model expects conditioning inputs");
  return conditional_given({}, prefix, d);
}

#define CSM_INSTANTIATE(T)                                                                      \
  template void ArCsmModel::eval<T>(std::span<const T>, std::span<const T>, std::span<const T>, \
                                    std::span<T>) const;                                        \
  template void ArCsmModel::eval_conditioned<T>(std::span<const T>, std::span<const T>,         \
                                                std::span<const T>, std::span<const T>,         \
                                                std::span<T>) const;                            \
  template void ArCsmModel::contexts<T>(std::span<const T>, std::span<const T>,                 \
                                        std::span<const T>, std::span<T>) const;
CSM_FOR_EACH_SCALAR(CSM_INSTANTIATE)
#undef CSM_INSTANTIATE

}  // namespace csm
