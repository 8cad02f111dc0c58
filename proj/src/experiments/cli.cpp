#include "csm/experiments/cli.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "csm/experiments/experiments.hpp"

namespace csm::exp {

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<std::size_t> threads;
  // sample
  std::string checkpoint;
  std::size_t n = 1000;
};

ExperimentConfig resolve(ExperimentKind kind, const CommonFlags& f) {
  ExperimentConfig c = default_config(kind);
  if (!f.config_path.empty()) apply_file(c, f.config_path);
  if (c.experiment != kind) {
    throw ConfigError("config is for experiment '" + to_string(c.experiment) + "', not '" + to_string(kind) + "'");
  }
  for (const auto& o : f.overrides) apply_override(c, o);
  if (f.seed) c.seed = *f.seed;
  if (!f.out_dir.empty()) c.output_dir = f.out_dir;
  if (f.threads) c.threads = *f.threads;
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  return c;
}

void run(ExperimentKind kind, const CommonFlags& flags, std::ostream& out) {
  const ExperimentConfig c = resolve(kind, flags);
  switch (kind) {
    case ExperimentKind::kBenchTiming:
      for (const auto& r : bench_timing(c)) {
        out << "D=" << r.dim << " " << r.method << " params=" << r.params << " mean=" << r.mean_seconds
            << "s median=" << r.median_seconds << "s\n";
      }
      break;
    case ExperimentKind::kBenchVariance:
      for (const auto& r : bench_variance(c)) {
        out << r.method << (r.n_proj ? " n_proj=" + std::to_string(r.n_proj) : "") << " mean=" << r.loss_mean
            << " variance=" << r.loss_variance << "\n";
      }
      break;
    case ExperimentKind::kNll: {
      const NllResult r = run_nll_comparison(c);
      out << "entropy " << r.entropy << "\n";
      for (const auto& s : r.summary) {
        out << s.method << " final_nll=" << s.final_nll << " settle_epoch=" << s.settle_epoch << "\n";
      }
      break;
    }
    case ExperimentKind::kFit: {
      const FitResult r = run_density_fit(c);
      out << "iterations " << r.trace.rows.size() << ", " << r.samples.rows() << " samples\n";
      if (!r.coverage.empty()) {
        out << "min mode share " << *std::min_element(r.coverage.begin(), r.coverage.end()) << "\n";
      }
      break;
    }
    case ExperimentKind::kSample: {
      if (flags.checkpoint.empty()) throw ConfigError("sample: --checkpoint is required");
      const Batch s = run_sample(c, flags.checkpoint, flags.n);
      out << s.rows() << " samples of dimension " << s.cols() << "\n";
      break;
    }
    case ExperimentKind::kDenoise: {
      const DenoiseResult r = run_denoise(c);
      out << "mse noisy=" << r.noisy_mse << " denoised=" << r.denoised_mse << "\n"
          << "median distance corrupted=" << r.corrupted_median << " restored=" << r.restored_median << "\n";
      break;
    }
    case ExperimentKind::kOod: {
      const OodResult r = run_ood(c);
      out << "auroc " << r.auroc << " (identical sets " << r.auroc_identical << ")\n";
      break;
    }
    case ExperimentKind::kVae: {
      const VaeSummary r = run_vae(c);
      out << "final elbo " << r.final_elbo;
      if (!std::isnan(r.optimal_elbo)) out << ", optimum " << r.optimal_elbo;
      if (!std::isnan(r.explicit_elbo)) out << ", explicit encoder " << r.explicit_elbo;
      out << "\nreconstruction mse " << r.mse_initial << " -> " << r.mse_final << "\n";
      break;
    }
  }
  if (c.write_outputs) out << "outputs in " << c.output_dir << "\n";
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Composite score matching lab", "csm-lab"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  CommonFlags flags;
  const std::map<std::string, std::pair<ExperimentKind, std::string>> commands{
      {"bench-timing", {ExperimentKind::kBenchTiming, "Time per loss+gradient of SM and CSM across dimensions"}},
      {"bench-variance", {ExperimentKind::kBenchVariance, "Loss variance of CSM and sliced SM on a fixed field"}},
      {"nll", {ExperimentKind::kNll, "Test NLL curves of CSM, SSM and DSM on a tractable model"}},
      {"fit", {ExperimentKind::kFit, "Fit a 2-D density with annealed CSM and sample it"}},
      {"sample", {ExperimentKind::kSample, "Sample a saved checkpoint"}},
      {"denoise", {ExperimentKind::kDenoise, "Single-step denoising and Langevin restoration"}},
      {"ood", {ExperimentKind::kOod, "Out-of-distribution AUROC of the summed-score statistic"}},
      {"vae", {ExperimentKind::kVae, "Train a VAE with an implicit encoder"}},
  };
  std::map<CLI::App*, ExperimentKind> kinds;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.second);
    sub->add_option("-c,--config", flags.config_path, "TOML config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Experiment seed");
    sub->add_option("-o,--out", flags.out_dir, "Output directory");
    sub->add_option("--set", flags.overrides, "Config override section.key=value (repeatable)");
    sub->add_option("--parallel-chains", flags.threads, "Sampler chains run in parallel");
    if (entry.first == ExperimentKind::kSample) {
      sub->add_option("--checkpoint", flags.checkpoint, "Checkpoint written by fit")->required()->check(CLI::ExistingFile);
      sub->add_option("-n,--n", flags.n, "Number of samples")->check(CLI::PositiveNumber);
    }
    kinds[sub] = entry.first;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    run(kinds.at(chosen), flags, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n\n" << chosen->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace csm::exp
