#pragma once

#include <span>
#include <vector>

#include "csm/ad/param_store.hpp"
#include "csm/core/types.hpp"
#include "csm/data/rng.hpp"
#include "csm/fields/ar_csm_model.hpp"
#include "csm/fields/score_field.hpp"
#include "csm/nn/made.hpp"
#include "csm/nn/mlp.hpp"
#include "csm/training/train.hpp"

namespace csm::vae {

struct EncoderOptions {
  std::size_t latent_dim = 2;
  std::size_t obs_dim = 2;
  std::vector<std::size_t> residual_hidden;  // empty: purely linear encoder
  nn::Activation activation = nn::Activation::kElu;
  double init_scale = 1.0;                   // initial diagonal of L
};

/// Implicit encoder z = A x + b + L eps + r(eps, x), eps ~ N(0, I), with L
/// lower triangular and r a masked network whose d-th output sees eps_<d and
/// x only. So z_d depends on eps_<=d and x.
///
/// Parameters: "A" (latent x obs), "b" (latent), "L" (packed lower triangle,
/// row by row), "residual" (optional).
class ImplicitEncoder {
 public:
  ImplicitEncoder(EncoderOptions opts, Rng& init_rng);

  const EncoderOptions& options() const { return opts_; }
  std::size_t latent_dim() const { return opts_.latent_dim; }
  std::size_t obs_dim() const { return opts_.obs_dim; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  /// Flat index of L(i, j), j <= i.
  std::size_t lower_index(std::size_t i, std::size_t j) const;
  std::size_t bias_index(std::size_t d) const;

  /// z = g(eps, x) under parameters theta.
  template <class T>
  void sample(std::span<const T> theta, std::span<const double> x, std::span<const double> eps,
              std::span<T> z) const;
  void sample(std::span<const double> x, std::span<const double> eps, std::span<double> z) const;

  /// Given z_<d, z_d is Gaussian with standard deviation |L_dd|, so the
  /// entropy is sum_d log |L_dd| + (D/2) log(2 pi e) for every x. Used for
  /// evaluation and for the explicit-encoder baseline only.
  double entropy() const;
  /// Gradient of entropy() with respect to the parameters.
  std::vector<double> entropy_gradient() const;

 private:
  EncoderOptions opts_;
  ad::ParamStore params_;
  std::size_t a_offset_ = 0;
  std::size_t b_offset_ = 0;
  std::size_t l_offset_ = 0;
  bool has_residual_ = false;
  nn::Made residual_;
};

/// Gaussian decoder p(x | z) = N(f(z), exp(2 log_noise) I) with f an MLP and
/// a learned scalar log_noise; the prior is N(0, I).
class Decoder {
 public:
  Decoder(std::size_t latent_dim, std::size_t obs_dim, std::vector<std::size_t> hidden, nn::Activation act,
          Rng& init_rng);

  std::size_t latent_dim() const { return latent_; }
  std::size_t obs_dim() const { return obs_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  double noise_std() const;

  template <class T>
  void mean(std::span<const T> theta, std::span<const T> z, std::span<T> out) const;
  void mean(std::span<const double> z, std::span<double> out) const;

  /// log p(x | z) + log p(z).
  template <class T>
  T log_joint(std::span<const T> theta, std::span<const double> x, std::span<const T> z) const;

 private:
  std::size_t latent_;
  std::size_t obs_;
  ad::ParamStore params_;
  nn::Mlp net_;
  std::size_t noise_offset_ = 0;
};

/// AR-CSM score model for the encoder's conditionals, written as a score
/// field over u = [x ; z]: the x coordinates come first and get score 0, the
/// z_d conditional score sees x and z_<d. CSM on rows [x ; z] therefore fits
/// the conditional scores of z given x.
class EncoderScoreModel final : public ScoreFieldAdapter<EncoderScoreModel> {
 public:
  EncoderScoreModel(std::size_t latent_dim, std::size_t obs_dim, const ArCsmOptions& net, Rng& init_rng);

  std::size_t dim() const override { return obs_ + latent_; }
  std::size_t latent_dim() const { return latent_; }
  std::size_t obs_dim() const { return obs_; }
  ad::ParamStore& params() override { return net_.params(); }
  const ad::ParamStore& params() const override { return net_.params(); }

  ConditionalScore conditional(std::span<const double> prefix, std::size_t d) const override;

  template <class T>
  void eval(std::span<const T> theta, std::span<const T> context_x, std::span<const T> head_x,
            std::span<T> out) const;

  /// Set whenever the encoder moves; cleared by a fit.
  bool stale() const { return stale_; }
  void mark_stale() { stale_ = true; }
  void mark_fresh() { stale_ = false; }

 private:
  std::size_t latent_;
  std::size_t obs_;
  ArCsmModel net_;
  bool stale_ = true;
};

/// Rows [x ; g(eps, x)] for fresh eps.
Batch encoder_rows(const ImplicitEncoder& encoder, const Batch& x, Rng& rng);

struct EntropyGradient {
  std::vector<double> grad;       // estimate of d H / d phi
  std::vector<double> std_error;  // Monte Carlo standard error per component
};

/// -mean over rows of x and n_mc draws of eps of sum_d s_d(x, z) d g_d / d phi,
/// with the score s taken as a constant. `score` is a field over [x ; z].
EntropyGradient entropy_grad(const ImplicitEncoder& encoder, const ScoreField& score, const Batch& x,
                             std::size_t n_mc, Rng& rng);
/// Same with the learned score model; ContractError if it is stale.
EntropyGradient entropy_grad(const ImplicitEncoder& encoder, const EncoderScoreModel& score, const Batch& x,
                             std::size_t n_mc, Rng& rng);

struct VaeTrainConfig {
  std::size_t iters = 3000;
  std::size_t batch_size = 64;
  std::size_t score_steps = 5;  // K
  std::size_t n_mc = 1;
  double lr = 3e-3;
  double score_lr = 3e-3;
  /// Use the encoder's closed-form entropy gradient instead of the score model.
  bool explicit_entropy = false;
};

struct VaeTrainResult {
  LossTrace trace;                 // loss = -(batch ELBO estimate)
  std::vector<double> score_loss;  // CSM loss after each fit
};

/// Alternates K CSM updates of the score model on fresh encoder samples with
/// one Adam update of encoder and decoder on the ELBO.
VaeTrainResult train_vae(ImplicitEncoder& encoder, Decoder& decoder, EncoderScoreModel& score, const Batch& data,
                         const VaeTrainConfig& config, Rng& rng);

/// Mean ELBO over the rows of data: Monte Carlo reconstruction and prior terms
/// with n_samples draws per row, closed-form entropy.
double elbo(const ImplicitEncoder& encoder, const Decoder& decoder, const Batch& data, std::size_t n_samples,
            Rng& rng);

/// Mean squared distance between x and the decoder mean at one encoder draw.
double reconstruction_mse(const ImplicitEncoder& encoder, const Decoder& decoder, const Batch& data, Rng& rng);

/// Maximum mean log-likelihood of probabilistic PCA with `latent` factors on
/// the rows of data: the best ELBO a linear-Gaussian VAE can reach.
double ppca_log_likelihood(const Batch& data, std::size_t latent);

/// x = W z + noise_std * e with z ~ N(0, I) and W drawn once from N(0, 1).
Batch linear_gaussian_data(std::size_t obs_dim, std::size_t latent_dim, std::size_t n, double noise_std,
                           Rng& rng);

}  // namespace csm::vae
