#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csm/core/errors.hpp"
#include "csm/data/datasets.hpp"
#include "csm/nn/activation.hpp"
#include "csm/objectives/noise_schedule.hpp"
#include "csm/sampling/langevin.hpp"
#include "csm/training/train.hpp"

namespace csm::exp {

/// Bad config file, unknown key or malformed override.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

enum class ExperimentKind { kBenchTiming, kBenchVariance, kNll, kFit, kSample, kDenoise, kOod, kVae };
ExperimentKind parse_experiment(const std::string& name);
std::string to_string(ExperimentKind kind);

struct ModelConfig {
  std::string kind = "ar-csm";  // ar-csm | tractable-ar | energy-mlp
  std::size_t context_width = 16;
  std::vector<std::size_t> made_hidden{32};
  std::vector<std::size_t> head_hidden{32, 32};
  std::vector<std::size_t> hidden{64, 64};  // energy-mlp
  std::size_t components = 1;               // tractable-ar
  nn::Activation activation = nn::Activation::kElu;
};

struct ScheduleConfig {
  double sigma_first = 1.0;
  double sigma_last = 0.04;
  std::size_t levels = 10;
  NoiseSchedule build() const;
};

struct SamplerConfig {
  double eps0 = 1e-3;
  std::size_t steps = 100;
  std::size_t n_samples = 2000;
  double divergence_bound = 1e6;
  LangevinConfig build(const NoiseSchedule& schedule) const;
};

struct BenchConfig {
  std::vector<std::size_t> dims{10, 100};
  std::size_t batch_size = 16;
  std::size_t reps = 5;
  std::size_t param_budget = 20000;
  std::size_t csm_context_width = 4;
  std::vector<std::size_t> csm_head_hidden{8};
  // variance study
  std::size_t dim = 100;
  double data_std = 0.1;
  std::size_t n_trials = 1000;
  std::vector<std::size_t> n_proj{1, 10};
  std::string field = "analytic";  // analytic | tractable-ar
};

struct NllConfig {
  std::vector<double> dsm_sigmas{0.01, 0.1, 0.3};
  bool ssm = true;
  bool csm = true;
};

struct FitConfig {
  bool baseline = true;
  std::size_t grid = 25;
  double grid_min = -3.0;
  double grid_max = 3.0;
};

struct DenoiseConfig {
  double sigma = 0.6;
  std::size_t n = 1000;
  double outlier_fraction = 0.1;
  double outlier_value = 3.0;
};

struct OodConfig {
  std::size_t n_ood = 1000;
  double box = 4.0;
};

struct VaeConfig {
  std::string problem = "linear-gaussian";  // linear-gaussian | mixture (8-mode 2-D mixture from [data])
  std::size_t latent_dim = 2;
  std::size_t obs_dim = 4;
  std::size_t iters = 3000;
  std::size_t batch_size = 64;
  std::size_t score_steps = 5;  // K, score-model updates per ELBO update
  std::size_t n_mc = 1;
  double lr = 3e-3;
  double score_lr = 3e-3;
  std::vector<std::size_t> decoder_hidden{32, 32};
  std::vector<std::size_t> encoder_hidden{16};
  bool explicit_baseline = true;
  std::size_t eval_samples = 200;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kFit;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // sampler chains in parallel
  std::string output_dir = "out";
  bool write_outputs = true;

  DatasetSpec data;
  ModelConfig model;
  ObjectiveSpec objective;
  ScheduleConfig schedule;
  OptimConfig optim;
  SamplerConfig sampler;
  BenchConfig bench;
  NllConfig nll;
  FitConfig fit;
  DenoiseConfig denoise;
  OodConfig ood;
  VaeConfig vae;

  /// Dataset spec with its seed derived from the experiment seed.
  DatasetSpec dataset() const;
};

/// Defaults tuned per experiment.
ExperimentConfig default_config(ExperimentKind kind);

/// Applies a TOML document on top of `config`; unknown keys are errors.
void apply_toml(ExperimentConfig& config, const std::string& text, const std::string& origin);
void apply_file(ExperimentConfig& config, const std::filesystem::path& path);
/// "section.key=value" with a TOML value (bare words are taken as strings).
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Complete TOML snapshot; applying it to default_config(kind) reproduces `config`.
std::string to_toml(const ExperimentConfig& config);

}  // namespace csm::exp
