#include "csm/nn/made.hpp"

#include <cmath>
#include <stdexcept>

#include "csm/ad/ops.hpp"
#include "csm/ad/scalars.hpp"

namespace csm::nn {

namespace {

int hidden_degree(std::size_t k, std::size_t dim, std::size_t cond_dim) {
  if (cond_dim > 0) return static_cast<int>(k % dim);
  if (dim <= 1) return 0;
  return 1 + static_cast<int>(k % (dim - 1));
}

}  // namespace

Made::Made(ad::ParamStore& store, const std::string& prefix, Options opts)
    : opts_(std::move(opts)) {
  if (opts_.dim == 0 || opts_.width == 0) throw std::invalid_argument("Made: empty dimension");
  std::vector<int> in_deg;
  for (std::size_t j = 0; j < opts_.dim; ++j) in_deg.push_back(static_cast<int>(j) + 1);
  for (std::size_t j = 0; j < opts_.cond_dim; ++j) in_deg.push_back(0);

  std::vector<int> prev_deg = in_deg;
  for (std::size_t l = 0; l < opts_.hidden.size(); ++l) {
    std::vector<int> deg(opts_.hidden[l]);
    std::vector<Unit> units(opts_.hidden[l]);
    std::size_t n_w = 0;
    for (std::size_t k = 0; k < deg.size(); ++k) {
      deg[k] = hidden_degree(k, opts_.dim, opts_.cond_dim);
      for (std::size_t j = 0; j < prev_deg.size(); ++j) {
        if (prev_deg[j] <= deg[k]) units[k].inputs.push_back(static_cast<std::uint32_t>(j));
      }
      n_w += units[k].inputs.size();
    }
    const std::string tag = prefix + ".l" + std::to_string(l);
    std::size_t w = store.add(tag + ".w", {n_w});
    const std::size_t b = store.add(tag + ".b", {deg.size()});
    for (std::size_t k = 0; k < units.size(); ++k) {
      units[k].w_offset = w;
      units[k].b_offset = b + k;
      w += units[k].inputs.size();
    }
    param_count_ += n_w + deg.size();
    hidden_units_.push_back(std::move(units));
    degrees_.push_back(deg);
    prev_deg = std::move(deg);
  }

  // Output source layout: [last hidden (if any), x, cond].
  std::vector<int> src_deg;
  if (!opts_.hidden.empty()) src_deg = prev_deg;
  const std::size_t input_base = src_deg.size();
  src_deg.insert(src_deg.end(), in_deg.begin(), in_deg.end());

  output_units_.resize(opts_.dim * opts_.width);
  std::size_t n_w = 0;
  for (std::size_t d = 0; d < opts_.dim; ++d) {
    std::vector<std::uint32_t> inputs;
    for (std::size_t j = 0; j < src_deg.size(); ++j) {
      const bool is_input = j >= input_base;
      if (is_input && !opts_.direct && !opts_.hidden.empty()) continue;
      if (src_deg[j] < static_cast<int>(d) + 1) inputs.push_back(static_cast<std::uint32_t>(j));
    }
    for (std::size_t k = 0; k < opts_.width; ++k) {
      output_units_[d * opts_.width + k].inputs = inputs;
      n_w += inputs.size();
    }
  }
  std::size_t w = store.add(prefix + ".out.w", {n_w});
  const std::size_t b = store.add(prefix + ".out.b", {output_units_.size()});
  for (std::size_t u = 0; u < output_units_.size(); ++u) {
    output_units_[u].w_offset = w;
    output_units_[u].b_offset = b + u;
    w += output_units_[u].inputs.size();
  }
  param_count_ += n_w + output_units_.size();
}

void Made::init(std::span<double> theta, Rng& rng, double output_scale) const {
  auto init_unit = [&](const Unit& u, double extra) {
    const double scale =
        extra / std::sqrt(static_cast<double>(std::max<std::size_t>(u.inputs.size(), 1)));
    for (std::size_t k = 0; k < u.inputs.size(); ++k) theta[u.w_offset + k] = scale * rng.normal();
    theta[u.b_offset] = 0.0;
  };
  for (const auto& layer : hidden_units_) {
    for (const Unit& u : layer) init_unit(u, 1.0);
  }
  for (const Unit& u : output_units_) init_unit(u, output_scale);
}

template <class T>
T Made::unit_output(std::span<const T> theta, const Unit& u, std::span<const T> source) const {
  return ad::affine(theta.subspan(u.w_offset, u.inputs.size()), source,
                    std::span<const std::uint32_t>(u.inputs), theta[u.b_offset]);
}

template <class T>
void Made::hidden_pass(std::span<const T> theta, std::span<const T> x, std::span<const T> cond,
                       std::vector<T>& source) const {
  if (x.size() != opts_.dim || cond.size() != opts_.cond_dim) {
    throw std::invalid_argument("Made: input size mismatch");
  }
  std::vector<T> inputs;
  inputs.reserve(opts_.dim + opts_.cond_dim);
  inputs.insert(inputs.end(), x.begin(), x.end());
  inputs.insert(inputs.end(), cond.begin(), cond.end());

  std::vector<T> cur = inputs;
  std::vector<T> next;
  for (const auto& layer : hidden_units_) {
    next.clear();
    next.reserve(layer.size());
    for (const Unit& u : layer) {
      next.push_back(activate(opts_.activation, unit_output(theta, u, std::span<const T>(cur))));
    }
    cur.swap(next);
  }
  source.clear();
  if (!hidden_units_.empty()) source = std::move(cur);
  source.insert(source.end(), inputs.begin(), inputs.end());
}

template <class T>
void Made::forward(std::span<const T> theta, std::span<const T> x, std::span<const T> cond,
                   std::span<T> out) const {
  std::vector<T> source;
  hidden_pass(theta, x, cond, source);
  for (std::size_t u = 0; u < output_units_.size(); ++u) {
    out[u] = unit_output(theta, output_units_[u], std::span<const T>(source));
  }
}

template <class T>
void Made::forward_dim(std::span<const T> theta, std::span<const T> x, std::span<const T> cond,
                       std::size_t d, std::span<T> out) const {
  std::vector<T> source;
  hidden_pass(theta, x, cond, source);
  for (std::size_t k = 0; k < opts_.width; ++k) {
    out[k] = unit_output(theta, output_units_[d * opts_.width + k], std::span<const T>(source));
  }
}

#define CSM_INSTANTIATE(T)                                                                    \
  template void Made::forward<T>(std::span<const T>, std::span<const T>, std::span<const T>,  \
                                 std::span<T>) const;                                         \
  template void Made::forward_dim<T>(std::span<const T>, std::span<const T>,                  \
                                     std::span<const T>, std::size_t, std::span<T>) const;
CSM_FOR_EACH_SCALAR(CSM_INSTANTIATE)
#undef CSM_INSTANTIATE

}  // namespace csm::nn
