#pragma once

#include <span>
#include <vector>

#include "csm/core/types.hpp"
#include "csm/data/rng.hpp"
#include "csm/fields/score_field.hpp"
#include "csm/objectives/noise_schedule.hpp"

namespace csm {

/// Batch-mean loss and its gradient with respect to the model's flat parameters.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// ---- composite score matching -------------------------------------------

/// (1/N) sum_i sum_d [ s_d(x)^2 / 2 + ds_d/dx_d(x) ].
double csm_loss(const ScoreField& field, const Batch& batch);
LossGrad csm_loss_grad(const TrainableScoreField& field, const Batch& batch);

/// Monte Carlo estimate (1/2N) sum_i sum_d (s^p_d - s^q_d)^2 for a batch drawn from p.
double l_csm_divergence(const ScoreField& model, const ScoreField& data, const Batch& batch);

/// Noise-annealed CSM at one stage: the context sees x + sigma_L * e_ctx, the
/// head sees x_d + sigma_i * e_d. The noise draws come from `rng`.
double annealed_csm_loss(const ScoreField& field, const Batch& batch, const StageView& stage,
                         Rng& rng);
LossGrad annealed_csm_loss_grad(const TrainableScoreField& field, const Batch& batch,
                                const StageView& stage, Rng& rng);

/// Same with explicit standard-normal draws (N x D each).
double annealed_csm_loss(const ScoreField& field, const Batch& batch, const StageView& stage,
                         const Batch& context_noise, const Batch& head_noise);
LossGrad annealed_csm_loss_grad(const TrainableScoreField& field, const Batch& batch,
                                const StageView& stage, const Batch& context_noise,
                                const Batch& head_noise);

/// Checked stage lookup for annealed CSM.
double annealed_csm_loss(const ScoreField& field, const Batch& batch, std::size_t stage,
                         const NoiseSchedule& schedule, Rng& rng);

// ---- exact and sliced score matching --------------------------------------

/// (1/N) sum_i [ |grad log q|^2 / 2 + tr Hess log q ], the trace taken with D
/// directional passes.
double sm_loss(const LogDensityModel& model, const Batch& batch);
LossGrad sm_loss_grad(const TrainableLogDensity& model, const Batch& batch);

/// (1/NM) sum [ v^T Hess v + (v^T grad)^2 / 2 ] with M Rademacher v per sample.
double ssm_loss(const LogDensityModel& model, const Batch& batch, std::size_t n_proj, Rng& rng);
LossGrad ssm_loss_grad(const TrainableLogDensity& model, const Batch& batch, std::size_t n_proj,
                       Rng& rng);
/// Explicit projections: rows of `projections` are used round-robin, n_proj per sample.
double ssm_loss(const LogDensityModel& model, const Batch& batch, const Batch& projections);

// ---- denoising score matching ---------------------------------------------

/// (1/N) sum_i sum_d (s_d(x~) - (x_d - x~_d) / sigma^2)^2 / 2, x~ = x + sigma e,
/// applied per conditional.
double dsm_loss(const ScoreField& field, const Batch& batch, double sigma, Rng& rng);
LossGrad dsm_loss_grad(const TrainableScoreField& field, const Batch& batch, double sigma,
                       Rng& rng);
/// Explicit perturbed batch x~.
double dsm_loss(const ScoreField& field, const Batch& batch, double sigma, const Batch& perturbed);
LossGrad dsm_loss_grad(const TrainableScoreField& field, const Batch& batch, double sigma,
                       const Batch& perturbed);

// ---- maximum likelihood ---------------------------------------------------

/// Mean negative log-density; only meaningful for normalised models.
LossGrad nll_loss_grad(const TrainableLogDensity& model, const Batch& batch);

}  // namespace csm
