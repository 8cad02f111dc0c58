#include "csm/vae/implicit_vae.hpp"

#include <cmath>
#include <numbers>

#include "csm/ad/ops.hpp"
#include "csm/ad/scalars.hpp"
#include "csm/data/datasets.hpp"
#include "csm/objectives/objectives.hpp"

namespace csm::vae {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

template <class T>
std::vector<T> lift_as(const T& like, std::span<const double> v) {
  std::vector<T> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(ad::constant_like(like, x));
  return out;
}

std::vector<double> draw_normal(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

Batch pick_rows(const Batch& data, std::size_t n, Rng& rng) {
  Batch out(static_cast<Eigen::Index>(n), data.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = data.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(data.rows()))));
  }
  return out;
}

}  // namespace

// ---- encoder --------------------------------------------------------------

ImplicitEncoder::ImplicitEncoder(EncoderOptions opts, Rng& init_rng) : opts_(std::move(opts)) {
  const std::size_t L = opts_.latent_dim;
  const std::size_t O = opts_.obs_dim;
  if (L == 0) throw InputError("ImplicitEncoder: latent dimension must be positive");
  if (!(opts_.init_scale > 0.0)) throw InputError("ImplicitEncoder: init_scale must be positive");
  a_offset_ = params_.add("A", {L, O});
  b_offset_ = params_.add("b", {L});
  l_offset_ = params_.add("L", {L * (L + 1) / 2});
  has_residual_ = !opts_.residual_hidden.empty();
  if (has_residual_) {
    nn::Made::Options m;
    m.dim = L;
    m.cond_dim = O;
    m.hidden = opts_.residual_hidden;
    m.width = 1;
    m.activation = opts_.activation;
    m.direct = false;
    residual_ = nn::Made(params_, "residual", m);
  }
  params_.seal();
  auto theta = params_.flat();
  const double a_scale = O > 0 ? 0.1 / std::sqrt(static_cast<double>(O)) : 0.0;
  for (std::size_t k = 0; k < L * O; ++k) theta[a_offset_ + k] = a_scale * init_rng.normal();
  for (std::size_t d = 0; d < L; ++d) theta[lower_index(d, d)] = opts_.init_scale;
  if (has_residual_) residual_.init(theta, init_rng, 0.1);
}

std::size_t ImplicitEncoder::lower_index(std::size_t i, std::size_t j) const {
  if (j > i || i >= opts_.latent_dim) throw std::out_of_range("ImplicitEncoder: not a lower-triangular entry");
  return l_offset_ + i * (i + 1) / 2 + j;
}

std::size_t ImplicitEncoder::bias_index(std::size_t d) const {
  if (d >= opts_.latent_dim) throw std::out_of_range("ImplicitEncoder: latent index");
  return b_offset_ + d;
}

template <class T>
void ImplicitEncoder::sample(std::span<const T> theta, std::span<const double> x, std::span<const double> eps,
                             std::span<T> z) const {
  const std::size_t L = opts_.latent_dim;
  const std::size_t O = opts_.obs_dim;
  std::vector<T> r;
  if (has_residual_) {
    const auto eps_t = lift_as(theta[0], eps);
    const auto x_t = lift_as(theta[0], x);
    r.resize(L);
    residual_.forward<T>(theta, eps_t, x_t, r);
  }
  for (std::size_t d = 0; d < L; ++d) {
    T acc = theta[b_offset_ + d];
    for (std::size_t j = 0; j < O; ++j) acc = acc + theta[a_offset_ + d * O + j] * x[j];
    const std::size_t row = l_offset_ + d * (d + 1) / 2;
    for (std::size_t j = 0; j <= d; ++j) acc = acc + theta[row + j] * eps[j];
    if (has_residual_) acc = acc + r[d];
    z[d] = acc;
  }
}

void ImplicitEncoder::sample(std::span<const double> x, std::span<const double> eps, std::span<double> z) const {
  if (x.size() != opts_.obs_dim || eps.size() != opts_.latent_dim || z.size() != opts_.latent_dim) {
    throw ContractError("ImplicitEncoder::sample: size mismatch");
  }
  sample<double>(params_.flat(), x, eps, z);
}

double ImplicitEncoder::entropy() const {
  double h = static_cast<double>(opts_.latent_dim) * (kHalfLog2Pi + 0.5);
  for (std::size_t d = 0; d < opts_.latent_dim; ++d) h += std::log(std::abs(params_.flat()[lower_index(d, d)]));
  return h;
}

std::vector<double> ImplicitEncoder::entropy_gradient() const {
  std::vector<double> g(params_.size(), 0.0);
  for (std::size_t d = 0; d < opts_.latent_dim; ++d) {
    const std::size_t k = lower_index(d, d);
    g[k] = 1.0 / params_.flat()[k];
  }
  return g;
}

// ---- decoder --------------------------------------------------------------

Decoder::Decoder(std::size_t latent_dim, std::size_t obs_dim, std::vector<std::size_t> hidden, nn::Activation act,
                 Rng& init_rng)
    : latent_(latent_dim), obs_(obs_dim) {
  if (latent_dim == 0 || obs_dim == 0) throw InputError("Decoder: dimensions must be positive");
  net_ = nn::Mlp(params_, "decoder", latent_dim, std::move(hidden), obs_dim, act);
  noise_offset_ = params_.add("log_noise", {1});
  params_.seal();
  net_.init(params_.flat(), init_rng);
}

double Decoder::noise_std() const { return std::exp(params_.flat()[noise_offset_]); }

template <class T>
void Decoder::mean(std::span<const T> theta, std::span<const T> z, std::span<T> out) const {
  net_.forward<T>(theta, z, out);
}

void Decoder::mean(std::span<const double> z, std::span<double> out) const {
  net_.forward<double>(params_.flat(), z, out);
}

template <class T>
T Decoder::log_joint(std::span<const T> theta, std::span<const double> x, std::span<const T> z) const {
  std::vector<T> mu(obs_);
  net_.forward<T>(theta, z, mu);
  const T& log_noise = theta[noise_offset_];
  T sq = ad::square(mu[0] - x[0]);
  for (std::size_t j = 1; j < obs_; ++j) sq = sq + ad::square(mu[j] - x[j]);
  T prior = ad::square(z[0]);
  for (std::size_t d = 1; d < latent_; ++d) prior = prior + ad::square(z[d]);
  const double n_obs = static_cast<double>(obs_);
  const double consts = (n_obs + static_cast<double>(latent_)) * kHalfLog2Pi;
  return sq * ad::exp(log_noise * -2.0) * -0.5 - log_noise * n_obs - prior * 0.5 - consts;
}

// ---- score model ----------------------------------------------------------

namespace {

ArCsmOptions conditioned(ArCsmOptions o, std::size_t latent, std::size_t obs) {
  o.dim = latent;
  o.cond_dim = obs;
  o.order.clear();
  return o;
}

}  // namespace

EncoderScoreModel::EncoderScoreModel(std::size_t latent_dim, std::size_t obs_dim, const ArCsmOptions& net,
                                     Rng& init_rng)
    : latent_(latent_dim), obs_(obs_dim), net_(conditioned(net, latent_dim, obs_dim), init_rng) {}

template <class T>
void EncoderScoreModel::eval(std::span<const T> theta, std::span<const T> context_x, std::span<const T> head_x,
                             std::span<T> out) const {
  for (std::size_t k = 0; k < obs_; ++k) out[k] = head_x[k] * 0.0;
  net_.eval_conditioned<T>(theta, context_x.first(obs_), context_x.subspan(obs_), head_x.subspan(obs_),
                           out.subspan(obs_));
}

ConditionalScore EncoderScoreModel::conditional(std::span<const double> prefix, std::size_t d) const {
  if (d >= dim()) throw std::out_of_range("EncoderScoreModel::conditional: dimension index");
  if (d < obs_) return [](double) { return 0.0; };
  return net_.conditional_given(prefix.first(obs_), prefix.subspan(obs_), d - obs_);
}

// ---- entropy gradient -----------------------------------------------------

Batch encoder_rows(const ImplicitEncoder& encoder, const Batch& x, Rng& rng) {
  const std::size_t O = encoder.obs_dim();
  const std::size_t L = encoder.latent_dim();
  if (static_cast<std::size_t>(x.cols()) != O) throw ContractError("encoder_rows: observation width mismatch");
  Batch u(x.rows(), static_cast<Eigen::Index>(O + L));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto xi = row(x, i);
    const auto eps = draw_normal(L, rng);
    auto ui = row(u, i);
    std::copy(xi.begin(), xi.end(), ui.begin());
    encoder.sample(xi, eps, ui.subspan(O));
  }
  return u;
}

EntropyGradient entropy_grad(const ImplicitEncoder& encoder, const ScoreField& score, const Batch& x,
                             std::size_t n_mc, Rng& rng) {
  const std::size_t O = encoder.obs_dim();
  const std::size_t L = encoder.latent_dim();
  if (score.dim() != O + L) throw ContractError("entropy_grad: score model must cover [x ; z]");
  if (static_cast<std::size_t>(x.cols()) != O) throw ContractError("entropy_grad: observation width mismatch");
  if (x.rows() == 0 || n_mc == 0) throw InputError("entropy_grad: needs at least one row and one draw");
  require_finite(x, "entropy_grad");

  const auto phi = encoder.params().flat();
  const std::size_t P = phi.size();
  ad::Tape<double> tape;
  const auto bound = ad::bind<double>(tape, phi);
  const std::size_t mark = tape.size();
  std::vector<V0> z(L);
  std::vector<double> u(O + L), s(O + L), seeds(L), sum(P, 0.0), sum_sq(P, 0.0);
  std::vector<ad::NodeId> roots(L);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto xi = row(x, i);
    for (std::size_t m = 0; m < n_mc; ++m) {
      tape.truncate(mark);
      const auto eps = draw_normal(L, rng);
      encoder.sample<V0>(bound.span(), xi, eps, z);
      std::copy(xi.begin(), xi.end(), u.begin());
      for (std::size_t d = 0; d < L; ++d) u[O + d] = z[d].value();
      score.scores(u, u, s);  // plain doubles: the score is held constant
      for (std::size_t d = 0; d < L; ++d) {
        roots[d] = z[d].id();
        seeds[d] = -s[O + d];
      }
      const auto adj = tape.backward(roots, seeds);
      for (std::size_t p = 0; p < P; ++p) {
        const double g = adj[bound.first + p];
        sum[p] += g;
        sum_sq[p] += g * g;
      }
    }
  }
  const double n = static_cast<double>(x.rows()) * static_cast<double>(n_mc);
  EntropyGradient out{std::vector<double>(P), std::vector<double>(P)};
  for (std::size_t p = 0; p < P; ++p) {
    out.grad[p] = sum[p] / n;
    const double var = n > 1.0 ? std::max(0.0, (sum_sq[p] - n * out.grad[p] * out.grad[p]) / (n - 1.0)) : 0.0;
    out.std_error[p] = std::sqrt(var / n);
  }
  return out;
}

EntropyGradient entropy_grad(const ImplicitEncoder& encoder, const EncoderScoreModel& score, const Batch& x,
                             std::size_t n_mc, Rng& rng) {
  if (score.stale()) throw ContractError("entropy_grad: score model is stale; refit it to the current encoder");
  if (score.latent_dim() != encoder.latent_dim() || score.obs_dim() != encoder.obs_dim()) {
    throw ContractError("entropy_grad: score model and encoder dimensions differ");
  }
  return entropy_grad(encoder, static_cast<const ScoreField&>(score), x, n_mc, rng);
}

// ---- training -------------------------------------------------------------

namespace {

struct ReconGrad {
  double value = 0.0;  // mean log p(x|z) + log p(z)
  std::vector<double> enc_grad;
  std::vector<double> dec_grad;
};

ReconGrad log_joint_grad(const ImplicitEncoder& encoder, const Decoder& decoder, const Batch& x, Rng& rng) {
  const std::size_t L = encoder.latent_dim();
  const auto phi = encoder.params().flat();
  const auto theta = decoder.params().flat();
  ad::Tape<double> tape;
  const auto bphi = ad::bind<double>(tape, phi);
  const auto btheta = ad::bind<double>(tape, theta);
  const std::size_t mark = tape.size();
  ReconGrad out{0.0, std::vector<double>(phi.size(), 0.0), std::vector<double>(theta.size(), 0.0)};
  std::vector<V0> z(L);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    tape.truncate(mark);
    const auto xi = row(x, i);
    const auto eps = draw_normal(L, rng);
    encoder.sample<V0>(bphi.span(), xi, eps, z);
    const V0 lj = decoder.log_joint<V0>(btheta.span(), xi, z);
    out.value += lj.value();
    const auto adj = tape.backward(lj.id());
    for (std::size_t p = 0; p < phi.size(); ++p) out.enc_grad[p] += adj[bphi.first + p];
    for (std::size_t p = 0; p < theta.size(); ++p) out.dec_grad[p] += adj[btheta.first + p];
  }
  const double inv = 1.0 / static_cast<double>(x.rows());
  out.value *= inv;
  for (double& g : out.enc_grad) g *= inv;
  for (double& g : out.dec_grad) g *= inv;
  return out;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

VaeTrainResult train_vae(ImplicitEncoder& encoder, Decoder& decoder, EncoderScoreModel& score, const Batch& data,
                         const VaeTrainConfig& config, Rng& rng) {
  if (encoder.latent_dim() > 8) throw InputError("train_vae: latent dimension above 8");
  if (decoder.latent_dim() != encoder.latent_dim() || decoder.obs_dim() != encoder.obs_dim() ||
      score.latent_dim() != encoder.latent_dim() || score.obs_dim() != encoder.obs_dim()) {
    throw ContractError("train_vae: encoder, decoder and score model dimensions differ");
  }
  if (static_cast<std::size_t>(data.cols()) != encoder.obs_dim()) throw ContractError("train_vae: data width mismatch");
  if (data.rows() == 0 || config.batch_size == 0) throw InputError("train_vae: empty data or batch");
  require_finite(data, "train_vae");

  OptimConfig model_opt;
  model_opt.lr = config.lr;
  OptimConfig score_opt;
  score_opt.lr = config.score_lr;
  AdamState enc_state, dec_state, score_state;
  Rng batch_rng = rng.split(1);
  Rng eps_rng = rng.split(2);
  Rng score_rng = rng.split(3);
  VaeTrainResult result;
  score.mark_stale();

  for (std::size_t it = 1; it <= config.iters; ++it) {
    if (!config.explicit_entropy) {
      for (std::size_t k = 0; k < config.score_steps; ++k) {
        const Batch u = encoder_rows(encoder, pick_rows(data, config.batch_size, batch_rng), score_rng);
        LossGrad lg = csm_loss_grad(score, u);
        if (!std::isfinite(lg.loss) || !all_finite(lg.grad)) {
          throw TrainingDivergence("score model diverged at iteration " + std::to_string(it), result.trace);
        }
        clip_global_norm(lg.grad, score_opt.clip_norm);
        adam_step(score.params().flat(), lg.grad, score_state, score_opt);
        if (k + 1 == config.score_steps) result.score_loss.push_back(lg.loss);
      }
      if (config.score_steps > 0) score.mark_fresh();
    }

    const Batch x = pick_rows(data, config.batch_size, batch_rng);
    ReconGrad rg = log_joint_grad(encoder, decoder, x, eps_rng);
    const std::vector<double> h_grad = config.explicit_entropy
                                           ? encoder.entropy_gradient()
                                           : entropy_grad(encoder, score, x, config.n_mc, eps_rng).grad;
    // Minimise -ELBO.
    std::vector<double> enc_grad(rg.enc_grad.size());
    for (std::size_t p = 0; p < enc_grad.size(); ++p) enc_grad[p] = -(rg.enc_grad[p] + h_grad[p]);
    for (double& g : rg.dec_grad) g = -g;
    const double loss = -(rg.value + encoder.entropy());
    result.trace.rows.push_back({1, it, it, loss, 0.0});
    if (!std::isfinite(loss) || !all_finite(enc_grad) || !all_finite(rg.dec_grad)) {
      throw TrainingDivergence("VAE training diverged at iteration " + std::to_string(it), result.trace);
    }
    clip_global_norm(enc_grad, model_opt.clip_norm);
    clip_global_norm(rg.dec_grad, model_opt.clip_norm);
    adam_step(encoder.params().flat(), enc_grad, enc_state, model_opt);
    adam_step(decoder.params().flat(), rg.dec_grad, dec_state, model_opt);
    score.mark_stale();
  }
  return result;
}

double elbo(const ImplicitEncoder& encoder, const Decoder& decoder, const Batch& data, std::size_t n_samples,
            Rng& rng) {
  if (data.rows() == 0 || n_samples == 0) throw InputError("elbo: needs data and samples");
  const std::size_t L = encoder.latent_dim();
  std::vector<double> z(L);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const auto xi = row(data, i);
    for (std::size_t m = 0; m < n_samples; ++m) {
      const auto eps = draw_normal(L, rng);
      encoder.sample(xi, eps, z);
      acc += decoder.log_joint<double>(decoder.params().flat(), xi, z);
    }
  }
  return acc / (static_cast<double>(data.rows()) * static_cast<double>(n_samples)) + encoder.entropy();
}

double reconstruction_mse(const ImplicitEncoder& encoder, const Decoder& decoder, const Batch& data, Rng& rng) {
  const std::size_t L = encoder.latent_dim();
  std::vector<double> z(L), mu(encoder.obs_dim());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const auto xi = row(data, i);
    encoder.sample(xi, draw_normal(L, rng), z);
    decoder.mean(z, mu);
    for (std::size_t j = 0; j < mu.size(); ++j) acc += (xi[j] - mu[j]) * (xi[j] - mu[j]);
  }
  return acc / static_cast<double>(data.rows());
}

double ppca_log_likelihood(const Batch& data, std::size_t latent) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n < 2 || latent == 0 || static_cast<Eigen::Index>(latent) >= d) {
    throw InputError("ppca_log_likelihood: needs 0 < latent < dim and two rows");
  }
  const Eigen::RowVectorXd mu = data.colwise().mean();
  const Matrix centred = data.rowwise() - mu;
  const Matrix s = centred.transpose() * centred / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  const Vector lambda = eig.eigenvalues().reverse();  // descending
  const Eigen::Index q = static_cast<Eigen::Index>(latent);
  const double sigma2 = lambda.tail(d - q).mean();
  // C has eigenvalues lambda_1..lambda_q and sigma2 elsewhere; tr(C^-1 S) = d.
  double log_det = static_cast<double>(d - q) * std::log(sigma2);
  for (Eigen::Index k = 0; k < q; ++k) log_det += std::log(lambda(k));
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det + static_cast<double>(d));
}

Batch linear_gaussian_data(std::size_t obs_dim, std::size_t latent_dim, std::size_t n, double noise_std, Rng& rng) {
  Matrix w(static_cast<Eigen::Index>(obs_dim), static_cast<Eigen::Index>(latent_dim));
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = rng.normal();
  Batch x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(obs_dim));
  Vector z(static_cast<Eigen::Index>(latent_dim));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
    const Vector xi = w * z;
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = xi(j) + noise_std * rng.normal();
  }
  return x;
}

#define CSM_INSTANTIATE(T)                                                                              \
  template void ImplicitEncoder::sample<T>(std::span<const T>, std::span<const double>,                \
                                           std::span<const double>, std::span<T>) const;               \
  template void Decoder::mean<T>(std::span<const T>, std::span<const T>, std::span<T>) const;          \
  template T Decoder::log_joint<T>(std::span<const T>, std::span<const double>, std::span<const T>) const;
CSM_INSTANTIATE(double)
CSM_INSTANTIATE(V0)
#undef CSM_INSTANTIATE

#define CSM_INSTANTIATE(T)                                                                              \
  template void EncoderScoreModel::eval<T>(std::span<const T>, std::span<const T>, std::span<const T>, \
                                           std::span<T>) const;
CSM_FOR_EACH_SCALAR(CSM_INSTANTIATE)
#undef CSM_INSTANTIATE

}  // namespace csm::vae
