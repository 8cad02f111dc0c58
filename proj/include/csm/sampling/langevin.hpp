#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "csm/core/types.hpp"
#include "csm/data/rng.hpp"
#include "csm/fields/score_field.hpp"
#include "csm/objectives/noise_schedule.hpp"

namespace csm {

struct LangevinConfig {
  double eps0 = 1e-3;          // step size at the final noise level
  std::size_t steps = 100;     // T, iterations per stage
  NoiseSchedule schedule;
  double divergence_bound = 1e6;
};

/// One model per noise stage, stage 1 first. The fields must share dimension
/// and ordering.
using StagedField = std::vector<const ScoreField*>;

/// The same field at every stage of `schedule`.
StagedField repeat_stages(const ScoreField& field, std::size_t stages);

/// Source of standard normal draws for the Langevin noise. Defaults to the rng.
using NoiseSource = std::function<double()>;

/// T iterations of x <- x + (eps / 2) score(x) + sqrt(eps) z.
double langevin_1d(const ConditionalScore& score, double x0, double eps, std::size_t steps,
                   Rng& rng);
double langevin_1d(const ConditionalScore& score, double x0, double eps, std::size_t steps,
                   const NoiseSource& noise, double divergence_bound = 1e6);

/// eps_i = eps0 * sigma_i^2 / sigma_L^2.
double annealed_step_size(const LangevinConfig& config, std::size_t stage);

/// Samples x_d given the prefix, sweeping the stages from the N(0, 1) prior.
double annealed_langevin_dim(const StagedField& stages, std::span<const double> prefix,
                             std::size_t d, const LangevinConfig& config, Rng& rng);
/// Same, starting the first stage at x_init instead of a prior draw.
double annealed_langevin_dim_from(const StagedField& stages, std::span<const double> prefix,
                                  std::size_t d, double x_init, const LangevinConfig& config,
                                  Rng& rng);

/// n samples by sampling each dimension in turn; chain i uses rng.split(i).
/// `threads` > 1 runs chains concurrently with identical results.
Batch sample_joint(const StagedField& stages, const LangevinConfig& config, std::size_t n,
                   const Rng& rng, std::size_t threads = 1);

/// x^ = x~ + sigma^2 s(x~), all dimensions at once.
Batch single_step_denoise(const ScoreField& field, const Batch& noisy, double sigma);

/// Annealed per-dimension Langevin initialised at the noisy input.
Batch langevin_restore(const StagedField& stages, const Batch& noisy, const LangevinConfig& config,
                       const Rng& rng, std::size_t threads = 1);

}  // namespace csm
