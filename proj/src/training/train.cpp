#include "csm/training/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "csm/data/csv.hpp"
#include "csm/data/datasets.hpp"

namespace csm {

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw InputError("optimizer: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InputError("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw InputError("optimizer: eps must be positive");
  if (batch_size < 1 || window < 1) throw InputError("optimizer: batch size and window must be positive");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const OptimConfig& config) {
  if (params.size() != grads.size()) throw ContractError("adam_step: gradient length mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: state length mismatch");
  ++state.t;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
  }
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

void LossTrace::write_csv(const std::filesystem::path& path, bool with_time) const {
  std::vector<std::string> header{"stage", "epoch", "iteration", "loss"};
  if (with_time) header.push_back("seconds");
  std::vector<std::vector<std::string>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(r.stage), std::to_string(r.epoch),
                                   std::to_string(r.iteration), format_double(r.loss)};
    if (with_time) cells.push_back(format_double(r.seconds));
    out.push_back(std::move(cells));
  }
  write_table_csv(path, header, out);
}

ObjectiveKind parse_objective(const std::string& name) {
  if (name == "csm") return ObjectiveKind::kCsm;
  if (name == "annealed-csm") return ObjectiveKind::kAnnealedCsm;
  if (name == "sm") return ObjectiveKind::kSm;
  if (name == "ssm") return ObjectiveKind::kSsm;
  if (name == "dsm") return ObjectiveKind::kDsm;
  if (name == "mle") return ObjectiveKind::kMle;
  throw InputError("unknown objective: " + name);
}

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kCsm: return "csm";
    case ObjectiveKind::kAnnealedCsm: return "annealed-csm";
    case ObjectiveKind::kSm: return "sm";
    case ObjectiveKind::kSsm: return "ssm";
    case ObjectiveKind::kDsm: return "dsm";
    case ObjectiveKind::kMle: return "mle";
  }
  return "unknown";
}

LossFn make_objective(const ObjectiveSpec& spec, const Trainable& model) {
  const auto* field = dynamic_cast<const TrainableScoreField*>(&model);
  const auto* density = dynamic_cast<const TrainableLogDensity*>(&model);
  const bool needs_field = spec.kind == ObjectiveKind::kCsm || spec.kind == ObjectiveKind::kAnnealedCsm ||
                           spec.kind == ObjectiveKind::kDsm;
  if (needs_field && field == nullptr) {
    throw ContractError(to_string(spec.kind) + " needs a model with conditional scores");
  }
  if (!needs_field && density == nullptr) {
    throw ContractError(to_string(spec.kind) + " needs a model with a joint log-density");
  }
  switch (spec.kind) {
    case ObjectiveKind::kCsm:
      return [field](const Batch& b, const StageView&, Rng&) { return csm_loss_grad(*field, b); };
    case ObjectiveKind::kAnnealedCsm:
      return [field](const Batch& b, const StageView& st, Rng& rng) {
        return annealed_csm_loss_grad(*field, b, st, rng);
      };
    case ObjectiveKind::kDsm: {
      const double sigma = spec.dsm_sigma;
      if (!(sigma > 0.0)) throw InputError("dsm: sigma must be positive");
      return [field, sigma](const Batch& b, const StageView&, Rng& rng) {
        return dsm_loss_grad(*field, b, sigma, rng);
      };
    }
    case ObjectiveKind::kSm:
      return [density](const Batch& b, const StageView&, Rng&) { return sm_loss_grad(*density, b); };
    case ObjectiveKind::kSsm: {
      const std::size_t m = spec.n_proj;
      if (m < 1) throw InputError("ssm: n_proj must be at least 1");
      return [density, m](const Batch& b, const StageView&, Rng& rng) {
        return ssm_loss_grad(*density, b, m, rng);
      };
    }
    case ObjectiveKind::kMle:
      return [density](const Batch& b, const StageView&, Rng&) { return nll_loss_grad(*density, b); };
  }
  throw ContractError("unhandled objective");
}

namespace {

// Relative improvement of the last window's mean loss over the one before it.
bool window_converged(const std::vector<double>& losses, const OptimConfig& config) {
  const std::size_t w = config.window;
  if (config.tolerance < 0.0 || losses.size() < 2 * w) return false;
  double prev = 0.0, cur = 0.0;
  const std::size_t n = losses.size();
  for (std::size_t k = n - 2 * w; k < n - w; ++k) prev += losses[k];
  for (std::size_t k = n - w; k < n; ++k) cur += losses[k];
  prev /= static_cast<double>(w);
  cur /= static_cast<double>(w);
  return (prev - cur) / std::max(std::abs(prev), 1e-12) < config.tolerance;
}

}  // namespace

TrainResult train(Trainable& model, const Batch& data, const ObjectiveSpec& objective,
                  const NoiseSchedule& schedule, const OptimConfig& config, Rng& rng,
                  const EpochHook& on_epoch) {
  return train(model, data, make_objective(objective, model),
               objective.kind == ObjectiveKind::kAnnealedCsm, schedule, config, rng, on_epoch);
}

TrainResult train(Trainable& model, const Batch& data, const LossFn& loss, bool annealed,
                  const NoiseSchedule& schedule, const OptimConfig& config, Rng& rng,
                  const EpochHook& on_epoch) {
  config.validate();
  if (data.rows() == 0) throw InputError("train: empty dataset");
  require_finite(data, "train");
  if (annealed && schedule.size() == 0) throw InputError("train: annealed CSM needs a noise schedule");
  const std::size_t n_stages = annealed ? schedule.size() : 1;

  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  std::size_t iteration = 0;
  auto theta = model.params().flat();
  Rng batch_rng = rng.split(1);
  Rng noise_rng = rng.split(2);
  for (std::size_t stage = 1; stage <= n_stages; ++stage) {
    const StageView view = annealed ? stage_view(schedule, stage) : StageView{1, 0.0, 0.0};
    AdamState adam;
    std::vector<double> losses;
    bool done = false;
    bool converged = false;
    for (std::size_t epoch = 1; epoch <= config.max_epochs && !done; ++epoch) {
      for (const Batch& b : batches(data, config.batch_size, batch_rng)) {
        LossGrad lg = loss(b, view, noise_rng);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.trace.rows.push_back({stage, epoch, ++iteration, lg.loss, secs});
        bool finite = std::isfinite(lg.loss);
        for (double g : lg.grad) finite = finite && std::isfinite(g);
        if (!finite) {
          throw TrainingDivergence("training diverged at iteration " + std::to_string(iteration) +
                                       " (stage " + std::to_string(stage) + ")",
                                   result.trace);
        }
        clip_global_norm(lg.grad, config.clip_norm);
        adam_step(theta, lg.grad, adam, config);
        losses.push_back(lg.loss);
        if (losses.size() >= config.min_iters && window_converged(losses, config)) {
          converged = done = true;
          break;
        }
        if (config.max_iters > 0 && losses.size() >= config.max_iters) {
          done = true;
          break;
        }
      }
      if (on_epoch) on_epoch(stage, epoch);
    }
    result.stage_params.emplace_back(theta.begin(), theta.end());
    result.converged.push_back(converged);
  }
  return result;
}

}  // namespace csm
