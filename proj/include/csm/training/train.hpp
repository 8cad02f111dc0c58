#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csm/core/types.hpp"
#include "csm/data/rng.hpp"
#include "csm/fields/score_field.hpp"
#include "csm/objectives/noise_schedule.hpp"
#include "csm/objectives/objectives.hpp"

namespace csm {

struct OptimConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;  // per stage
  std::size_t max_iters = 0;     // per stage, 0 = no cap
  std::size_t min_iters = 0;     // per stage, before convergence is checked
  std::size_t window = 50;       // convergence window, in iterations
  double tolerance = 1e-4;       // relative improvement between windows; < 0 never stops early
  double clip_norm = 100.0;      // global gradient norm cap, <= 0 disables

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

/// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const OptimConfig& config);

/// Scales `grads` so its Euclidean norm is at most max_norm; returns the original norm.
double clip_global_norm(std::span<double> grads, double max_norm);

struct TraceRow {
  std::size_t stage = 1;
  std::size_t epoch = 0;
  std::size_t iteration = 0;  // global, strictly increasing
  double loss = 0.0;
  double seconds = 0.0;  // wall time since training started
};

struct LossTrace {
  std::vector<TraceRow> rows;
  /// Wall time is left out unless asked for, so traces are reproducible.
  void write_csv(const std::filesystem::path& path, bool with_time = false) const;
};

class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, LossTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const LossTrace& trace() const { return trace_; }

 private:
  LossTrace trace_;
};

enum class ObjectiveKind { kCsm, kAnnealedCsm, kSm, kSsm, kDsm, kMle };

ObjectiveKind parse_objective(const std::string& name);
std::string to_string(ObjectiveKind kind);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kCsm;
  double dsm_sigma = 0.1;
  std::size_t n_proj = 1;
};

using LossFn = std::function<LossGrad(const Batch&, const StageView&, Rng&)>;

/// Binds an objective to a model; throws ContractError when the model lacks
/// what the objective needs (conditional scores, a joint log-density).
LossFn make_objective(const ObjectiveSpec& spec, const Trainable& model);

struct TrainResult {
  LossTrace trace;
  std::vector<std::vector<double>> stage_params;  // snapshot after each stage
  std::vector<bool> converged;                    // per stage
};

/// Called after every epoch with (stage, epoch); epochs count from 1 per stage.
using EpochHook = std::function<void(std::size_t, std::size_t)>;

/// Trains in place. Annealed CSM runs every stage of `schedule` in turn, the
/// other objectives a single stage. A stage ends at convergence (relative
/// improvement of the windowed mean loss below the tolerance) or at its caps.
TrainResult train(Trainable& model, const Batch& data, const ObjectiveSpec& objective,
                  const NoiseSchedule& schedule, const OptimConfig& config, Rng& rng,
                  const EpochHook& on_epoch = {});

/// Same loop with a caller-supplied loss. `annealed` selects one stage per
/// schedule level; otherwise a single stage sees StageView{1, 0, 0}.
TrainResult train(Trainable& model, const Batch& data, const LossFn& loss, bool annealed,
                  const NoiseSchedule& schedule, const OptimConfig& config, Rng& rng,
                  const EpochHook& on_epoch = {});

}  // namespace csm
