#pragma once

#include <memory>
#include <vector>

#include "csm/data/rng.hpp"
#include "csm/experiments/config.hpp"
#include "csm/fields/score_field.hpp"
#include "csm/sampling/langevin.hpp"
#include "csm/training/checkpoint.hpp"

namespace csm::exp {

std::unique_ptr<Trainable> build_model(const ModelConfig& config, std::size_t dim, Rng& init_rng);

/// The model as a score field; ContractError if it is not one.
const ScoreField& as_field(const Trainable& model);

/// One model instance per trained stage, plus what is needed to sample it.
struct StagedModel {
  ModelConfig config;
  std::size_t dim = 0;
  std::vector<std::unique_ptr<Trainable>> stages;
  NoiseSchedule schedule;
  LangevinConfig sampler;

  /// Stage fields for the sampler; a single trained stage is reused at every level.
  StagedField fields() const;
  const ScoreField& final_field() const { return as_field(*stages.back()); }
};

/// Copies of `model` holding each stage's parameters.
StagedModel staged_from(const ModelConfig& config, std::size_t dim,
                        const std::vector<std::vector<double>>& stage_params,
                        const NoiseSchedule& schedule, const LangevinConfig& sampler);

Checkpoint make_checkpoint(const StagedModel& model, std::uint64_t seed);
StagedModel load_staged(const Checkpoint& checkpoint);

}  // namespace csm::exp
