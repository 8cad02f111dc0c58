#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "csm/core/types.hpp"
#include "csm/experiments/config.hpp"
#include "csm/experiments/models.hpp"
#include "csm/training/train.hpp"

namespace csm::exp {

/// Output directory of one run: creates it and writes the config snapshot
/// (config.toml) and provenance.txt (version, seed, experiment). Inert when
/// the config disables outputs.
class OutputDir {
 public:
  explicit OutputDir(const ExperimentConfig& config);
  bool enabled() const { return enabled_; }
  std::filesystem::path file(const std::string& name) const { return dir_ / name; }
  void write_text(const std::string& name, const std::string& text) const;

 private:
  std::filesystem::path dir_;
  bool enabled_;
};

std::string version_string();

// ---- timing ---------------------------------------------------------------

struct TimingRow {
  std::size_t dim = 0;
  std::string method;
  std::size_t params = 0;
  std::string architecture;
  double mean_seconds = 0.0;
  double stddev_seconds = 0.0;
  double median_seconds = 0.0;
};

/// Seconds per loss-and-gradient evaluation of SM (energy network) and CSM
/// (AR-CSM) at each dimension, with parameter counts matched within 5%.
std::vector<TimingRow> bench_timing(const ExperimentConfig& config);

// ---- estimator variance ---------------------------------------------------

struct VarianceRow {
  std::string method;
  std::size_t n_proj = 0;
  double loss_mean = 0.0;
  double loss_variance = 0.0;
};

/// Re-evaluates each stochastic loss n_trials times on a fixed field; CSM
/// both across fresh batches and on one fixed batch.
std::vector<VarianceRow> bench_variance(const ExperimentConfig& config);

// ---- NLL comparison -------------------------------------------------------

struct NllPoint {
  std::string method;
  std::size_t epoch = 0;
  double nll = 0.0;
};

struct NllSummary {
  std::string method;
  double final_nll = 0.0;
  std::size_t settle_epoch = 0;  // first epoch after which NLL stays within 0.1 of final
};

struct NllResult {
  std::vector<NllPoint> curve;
  std::vector<NllSummary> summary;
  double entropy = 0.0;
  const NllSummary& get(const std::string& method) const;
};

/// Trains one tractable model per method from the same initialisation and
/// records the exact test NLL after every epoch.
NllResult run_nll_comparison(const ExperimentConfig& config);

// ---- density fitting ------------------------------------------------------

struct FitResult {
  StagedModel model;
  LossTrace trace;
  Batch samples;
  Batch baseline_samples;            // empty unless the baseline ran
  std::vector<double> coverage;      // mixture: per-mode share within 3 mode_std
  std::vector<double> baseline_coverage;
  double ring_share = 0.0;           // rings: share within 3 ring_width of a ring
  double baseline_ring_share = 0.0;
  std::size_t baseline_params = 0;
};

FitResult run_density_fit(const ExperimentConfig& config);

/// Samples from a checkpoint; n rows.
Batch run_sample(const ExperimentConfig& config, const std::filesystem::path& checkpoint, std::size_t n);

// ---- denoising ------------------------------------------------------------

struct DenoiseResult {
  double noisy_mse = 0.0;
  double denoised_mse = 0.0;
  // Median distance to the data manifold over rows that received an outlier.
  double corrupted_median = 0.0;
  double restored_median = 0.0;
  std::size_t corrupted_rows = 0;
};

DenoiseResult run_denoise(const ExperimentConfig& config);

// ---- out-of-distribution --------------------------------------------------

struct OodResult {
  std::vector<double> h_in;
  std::vector<double> h_out;
  double auroc = 0.0;            // in-distribution ranked above OOD by h
  double auroc_identical = 0.0;  // test set against itself
};

OodResult run_ood(const ExperimentConfig& config);

// ---- implicit-encoder VAE -------------------------------------------------

struct VaeSummary {
  double final_elbo = 0.0;     // implicit encoder, training data
  double optimal_elbo = 0.0;   // PPCA maximum likelihood; NaN unless linear-gaussian
  double explicit_elbo = 0.0;  // closed-form entropy baseline; NaN when disabled
  double mse_initial = 0.0;
  double mse_final = 0.0;
};

VaeSummary run_vae(const ExperimentConfig& config);

}  // namespace csm::exp
