#include "csm/fields/tractable_ar_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "csm/ad/ops.hpp"
#include "csm/ad/scalars.hpp"

namespace csm {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

template <class T>
T log_sum_exp(std::span<const T> a) {
  double m = ad::value_of(a[0]);
  for (const T& v : a) m = std::max(m, ad::value_of(v));
  T acc = ad::exp(a[0] - m);
  for (std::size_t k = 1; k < a.size(); ++k) acc = acc + ad::exp(a[k] - m);
  return ad::log(acc) + m;
}

}  // namespace

TractableArModel::TractableArModel(TractableArOptions opts, Rng& init_rng) : opts_(std::move(opts)) {
  if (opts_.dim == 0 || opts_.components == 0) throw InputError("TractableArModel: empty dimensions");
  width_ = opts_.components == 1 ? 2 : 3 * opts_.components;
  nn::Made::Options m;
  m.dim = opts_.dim;
  m.hidden = opts_.made_hidden;
  m.width = width_;
  m.activation = opts_.activation;
  m.direct = opts_.direct;
  made_ = nn::Made(params_, "made", m);
  params_.seal();
  made_.init(params_.flat(), init_rng, 0.1);
  if (opts_.components > 1) {
    // Spread the initial component locations so they do not start identical.
    auto b = params_.view("made.out.b");
    const std::size_t k = opts_.components;
    for (std::size_t d = 0; d < opts_.dim; ++d) {
      for (std::size_t c = 0; c < k; ++c) {
        b[d * width_ + k + c] = -2.0 + 4.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(k);
      }
    }
  }
}

void TractableArModel::set_standard_normal() {
  for (double& v : params_.flat()) v = 0.0;
}

template <class T>
T TractableArModel::conditional_log_density(std::span<const T> p, const T& x) const {
  if (opts_.components == 1) {
    const T& mu = p[0];
    const T& ls = p[1];
    return ad::square((x - mu) * ad::exp(-ls)) * -0.5 - ls - kHalfLog2Pi;
  }
  const std::size_t k = opts_.components;
  std::vector<T> joint(k);
  for (std::size_t c = 0; c < k; ++c) {
    const T& ls = p[2 * k + c];
    const T z = (x - p[k + c]) * ad::exp(-ls);
    joint[c] = p[c] - z - ls - 2.0 * ad::softplus(-z);
  }
  return log_sum_exp<T>(joint) - log_sum_exp<T>(p.subspan(0, k));
}

template <class T>
T TractableArModel::conditional_score_t(std::span<const T> p, const T& x) const {
  if (opts_.components == 1) {
    const T& mu = p[0];
    const T& ls = p[1];
    return -((x - mu) * ad::exp(ls * -2.0));
  }
  const std::size_t k = opts_.components;
  std::vector<T> joint(k);
  std::vector<T> g(k);
  for (std::size_t c = 0; c < k; ++c) {
    const T& ls = p[2 * k + c];
    const T inv_scale = ad::exp(-ls);
    const T z = (x - p[k + c]) * inv_scale;
    joint[c] = p[c] - z - ls - 2.0 * ad::softplus(-z);
    g[c] = -(inv_scale * ad::tanh(z * 0.5));
  }
  const T lse = log_sum_exp<T>(joint);
  T s = ad::exp(joint[0] - lse) * g[0];
  for (std::size_t c = 1; c < k; ++c) s = s + ad::exp(joint[c] - lse) * g[c];
  return s;
}

template <class T>
void TractableArModel::eval(std::span<const T> theta, std::span<const T> context_x,
                            std::span<const T> head_x, std::span<T> out) const {
  std::vector<T> p(opts_.dim * width_);
  made_.forward<T>(theta, context_x, {}, p);
  for (std::size_t d = 0; d < opts_.dim; ++d) {
    out[d] = conditional_score_t<T>(std::span<const T>(p).subspan(d * width_, width_), head_x[d]);
  }
}

template <class T>
T TractableArModel::log_density_t(std::span<const T> theta, std::span<const T> x) const {
  std::vector<T> p(opts_.dim * width_);
  made_.forward<T>(theta, x, {}, p);
  T acc = conditional_log_density<T>(std::span<const T>(p).subspan(0, width_), x[0]);
  for (std::size_t d = 1; d < opts_.dim; ++d) {
    acc = acc + conditional_log_density<T>(std::span<const T>(p).subspan(d * width_, width_), x[d]);
  }
  return acc;
}

template <class T>
T TractableArModel::log_conditional(std::span<const T> theta, std::span<const T> x,
                                    std::size_t d) const {
  if (d >= opts_.dim) throw std::out_of_range("TractableArModel::log_conditional: dimension index");
  std::vector<T> p(width_);
  made_.forward_dim<T>(theta, x, {}, d, p);
  return conditional_log_density<T>(p, x[d]);
}

ConditionalScore TractableArModel::conditional(std::span<const double> prefix, std::size_t d) const {
  if (d >= opts_.dim) throw std::out_of_range("TractableArModel::conditional: dimension index");
  std::vector<double> xp(opts_.dim, 0.0);
  std::copy(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(d), xp.begin());
  std::vector<double> p(width_);
  made_.forward_dim<double>(params_.flat(), xp, {}, d, p);
  return [this, p = std::move(p)](double x) { return conditional_score_t<double>(p, x); };
}

double TractableArModel::log_density(std::span<const double> x) const {
  return log_density_t<double>(params_.flat(), x);
}
ad::Dual2 TractableArModel::log_density(std::span<const ad::Dual2> x) const {
  const auto theta = ad::lift<ad::Dual2>(params_.flat());
  return log_density_t<ad::Dual2>(theta, x);
}
V2 TractableArModel::log_density(std::span<const V2> theta,
                              std::span<const V2> x) const {
  return log_density_t<V2>(theta, x);
}
V0 TractableArModel::log_density(std::span<const V0> theta,
                              std::span<const V0> x) const {
  return log_density_t<V0>(theta, x);
}

double TractableArModel::nll(const Batch& data) const {
  if (data.rows() == 0) throw InputError("nll: empty batch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) acc -= log_density(row(data, i));
  return acc / static_cast<double>(data.rows());
}

Batch TractableArModel::sample(std::size_t n, Rng& rng) const {
  Batch out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(opts_.dim));
  std::vector<double> x(opts_.dim);
  std::vector<double> p(width_);
  const std::size_t k = opts_.components;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t d = 0; d < opts_.dim; ++d) {
      made_.forward_dim<double>(params_.flat(), x, {}, d, p);
      if (k == 1) {
        x[d] = p[0] + std::exp(p[1]) * rng.normal();
      } else {
        const double lse = log_sum_exp<double>(std::span<const double>(p).subspan(0, k));
        double u = rng.uniform();
        std::size_t c = 0;
        for (; c + 1 < k; ++c) {
          u -= std::exp(p[c] - lse);
          if (u < 0.0) break;
        }
        double v = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
        x[d] = p[k + c] + std::exp(p[2 * k + c]) * std::log(v / (1.0 - v));
      }
    }
    for (std::size_t d = 0; d < opts_.dim; ++d) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = x[d];
  }
  return out;
}

#define CSM_INSTANTIATE(T)                                                                     \
  template void TractableArModel::eval<T>(std::span<const T>, std::span<const T>,             \
                                          std::span<const T>, std::span<T>) const;            \
  template T TractableArModel::log_density_t<T>(std::span<const T>, std::span<const T>) const; \
  template T TractableArModel::log_conditional<T>(std::span<const T>, std::span<const T>,      \
                                                  std::size_t) const;
CSM_FOR_EACH_SCALAR(CSM_INSTANTIATE)
#undef CSM_INSTANTIATE

// ---------------------------------------------------------------------------

EnergyMlp::EnergyMlp(std::size_t dim, std::vector<std::size_t> hidden, nn::Activation act,
                     Rng& init_rng)
    : dim_(dim) {
  net_ = nn::Mlp(params_, "energy", dim, std::move(hidden), 1, act);
  params_.seal();
  net_.init(params_.flat(), init_rng);
}

double EnergyMlp::log_density(std::span<const double> x) const {
  double out[1];
  net_.forward<double>(params_.flat(), x, out);
  return out[0];
}
ad::Dual2 EnergyMlp::log_density(std::span<const ad::Dual2> x) const {
  const auto theta = ad::lift<ad::Dual2>(params_.flat());
  ad::Dual2 out[1];
  net_.forward<ad::Dual2>(theta, x, out);
  return out[0];
}
V2 EnergyMlp::log_density(std::span<const V2> theta, std::span<const V2> x) const {
  V2 out[1];
  net_.forward<V2>(theta, x, out);
  return out[0];
}
V0 EnergyMlp::log_density(std::span<const V0> theta, std::span<const V0> x) const {
  V0 out[1];
  net_.forward<V0>(theta, x, out);
  return out[0];
}

}  // namespace csm
