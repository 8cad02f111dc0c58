#include "csm/experiments/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>

#include "csm/data/csv.hpp"
#include "csm/data/datasets.hpp"
#include "csm/experiments/metrics.hpp"
#include "csm/fields/ar_csm_model.hpp"
#include "csm/fields/gaussian_field.hpp"
#include "csm/fields/tractable_ar_model.hpp"
#include "csm/objectives/objectives.hpp"
#include "csm/sampling/langevin.hpp"
#include "csm/vae/implicit_vae.hpp"

#ifndef CSM_VERSION
#define CSM_VERSION "unknown"
#endif

namespace csm::exp {

namespace {

// Substreams of the experiment seed.
enum Stream : std::uint64_t {
  kInit = 1,
  kTrain = 2,
  kSample = 3,
  kBaselineInit = 4,
  kBaselineTrain = 5,
  kEval = 6,
  kNoise = 7,
  kAuxInit = 8,
  kAuxTrain = 9,
};

Rng stream(const ExperimentConfig& c, Stream s) { return Rng(c.seed).split(s); }

using Rows = std::vector<std::vector<std::string>>;
std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "-" : "") + std::to_string(v[i]);
  return out;
}

template <class F>
std::vector<double> time_calls(F&& f, std::size_t reps) {
  f();  // warm-up
  std::vector<double> secs;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return secs;
}

Batch normal_batch(std::size_t n, std::size_t d, double std, Rng& rng) {
  Batch b(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = std * rng.normal();
  return b;
}

Batch head_rows(const Batch& data, std::size_t n) {
  const Eigen::Index k = std::min<Eigen::Index>(static_cast<Eigen::Index>(n), data.rows());
  return data.topRows(k);
}

std::size_t ar_csm_params(const ArCsmOptions& o) {
  Rng rng(0);
  return ArCsmModel(o, rng).params().size();
}

// Width of a single hidden MADE layer giving roughly `budget` parameters.
std::size_t made_width_for_budget(ArCsmOptions o, std::size_t budget) {
  std::size_t lo = 1, hi = 1;
  auto count = [&](std::size_t h) {
    o.made_hidden = {h};
    return ar_csm_params(o);
  };
  while (count(hi) < budget && hi < (1u << 16)) hi *= 2;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (count(mid) < budget) lo = mid + 1; else hi = mid;
  }
  if (lo > 1 && budget - count(lo - 1) < count(lo) - budget) --lo;
  return lo;
}

std::size_t energy_params(std::size_t d, std::size_t h) { return d * h + h + h * h + h + h + 1; }

std::size_t energy_width_for(std::size_t d, std::size_t target) {
  std::size_t best = 1;
  for (std::size_t h = 1; h < 4096; ++h) {
    const auto diff = [&](std::size_t w) {
      const auto p = energy_params(d, w);
      return p > target ? p - target : target - p;
    };
    if (diff(h) < diff(best)) best = h;
    if (energy_params(d, h) > target) break;
  }
  return best;
}

std::size_t tractable_width_for(std::size_t d, std::size_t components, std::size_t target) {
  std::size_t best = 1, best_diff = static_cast<std::size_t>(-1);
  for (std::size_t h = 1; h < 4096; ++h) {
    TractableArOptions o;
    o.dim = d;
    o.made_hidden = {h};
    o.components = components;
    Rng rng(0);
    const std::size_t p = TractableArModel(o, rng).params().size();
    const std::size_t diff = p > target ? p - target : target - p;
    if (diff < best_diff) {
      best = h;
      best_diff = diff;
    }
    if (p > target) break;
  }
  return best;
}

void write_grid_scores(const OutputDir& out, const ScoreField& field, const FitConfig& fit) {
  Rows rows;
  const std::size_t g = std::max<std::size_t>(fit.grid, 2);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const double x = fit.grid_min + (fit.grid_max - fit.grid_min) * static_cast<double>(i) / (g - 1.0);
      const double y = fit.grid_min + (fit.grid_max - fit.grid_min) * static_cast<double>(j) / (g - 1.0);
      const std::vector<double> p{x, y};
      const ScoreAll s = score_all(field, p);
      rows.push_back({fmt(x), fmt(y), fmt(s.score[0]), fmt(s.score[1])});
    }
  }
  write_table_csv(out.file("grid_scores.csv"), {"x", "y", "s1", "s2"}, rows);
}

std::size_t iterations(const LossTrace& trace) { return trace.rows.size(); }

}  // namespace

// ---------------------------------------------------------------------------

std::string version_string() { return CSM_VERSION; }

OutputDir::OutputDir(const ExperimentConfig& config)
    : dir_(config.output_dir), enabled_(config.write_outputs) {
  if (!enabled_) return;
  std::filesystem::create_directories(dir_);
  write_text("config.toml", to_toml(config));
  write_text("provenance.txt", "version " + version_string() + "\nseed " + std::to_string(config.seed) +
                                   "\nexperiment " + to_string(config.experiment) + "\n");
}

void OutputDir::write_text(const std::string& name, const std::string& text) const {
  if (!enabled_) return;
  std::ofstream f(file(name), std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + file(name).string());
  f << text;
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  c.output_dir = "out/" + to_string(kind);
  switch (kind) {
    case ExperimentKind::kBenchTiming:
    case ExperimentKind::kBenchVariance:
      c.data.kind = DatasetKind::kGaussian;
      c.data.dim = c.bench.dim;
      c.data.std = c.bench.data_std;
      break;
    case ExperimentKind::kNll:
      c.data.kind = DatasetKind::kGaussianFullCov;
      c.data.dim = 2;
      c.data.cov = {0.1, 0.09, 0.09, 0.1};
      c.data.n_train = 5000;
      c.data.n_test = 5000;
      c.model.kind = "tractable-ar";
      c.model.made_hidden = {32};
      c.optim.lr = 3e-3;
      c.optim.batch_size = 128;
      c.optim.max_epochs = 40;
      c.optim.tolerance = -1.0;
      break;
    case ExperimentKind::kFit:
    case ExperimentKind::kSample:
      c.data.kind = DatasetKind::kMixture2d;
      c.data.n_train = 5000;
      c.data.n_test = 1000;
      c.objective.kind = ObjectiveKind::kAnnealedCsm;
      c.optim.lr = 1e-3;
      c.optim.batch_size = 64;
      c.optim.max_epochs = 1000;
      c.optim.max_iters = 1500;
      c.optim.tolerance = -1.0;
      c.sampler.n_samples = 2000;
      break;
    case ExperimentKind::kDenoise:
      c.data.kind = DatasetKind::kTwoRings2d;
      c.data.n_train = 5000;
      c.data.n_test = 1000;
      c.objective.kind = ObjectiveKind::kAnnealedCsm;
      c.optim.lr = 1e-3;
      c.optim.batch_size = 64;
      c.optim.max_epochs = 1000;
      c.optim.max_iters = 1500;
      c.optim.tolerance = -1.0;
      break;
    case ExperimentKind::kOod:
      c.data.kind = DatasetKind::kGaussian;
      c.data.dim = 2;
      c.data.std = 0.3;
      c.data.mean = {-3.5, -3.5};  // box corner, so h is one-sided on the box
      c.data.n_train = 4000;
      c.data.n_test = 1000;
      c.model.kind = "tractable-ar";  // Gaussian conditionals extrapolate with the right sign
      c.objective.kind = ObjectiveKind::kCsm;
      c.optim.lr = 5e-3;
      c.optim.batch_size = 64;
      c.optim.max_epochs = 1000;
      c.optim.max_iters = 4000;
      c.optim.tolerance = -1.0;
      break;
    case ExperimentKind::kVae:
      c.data.n_train = 2000;
      c.data.std = 0.5;  // observation noise of the linear-gaussian problem
      c.vae.decoder_hidden = {};
      c.vae.encoder_hidden = {};
      break;
  }
  return c;
}

// ---- timing ---------------------------------------------------------------

std::vector<TimingRow> bench_timing(const ExperimentConfig& config) {
  const auto& b = config.bench;
  if (!std::is_sorted(b.dims.begin(), b.dims.end())) throw InputError("bench-timing: dims must be ascending");
  if (b.reps < 1 || b.batch_size < 1) throw InputError("bench-timing: reps and batch_size must be positive");
  OutputDir out(config);
  std::vector<TimingRow> rows;
  for (std::size_t d : b.dims) {
    Rng init = stream(config, kInit).split(d);
    Rng data_rng = stream(config, kEval).split(d);
    const Batch batch = normal_batch(b.batch_size, d, b.data_std, data_rng);

    ArCsmOptions o;
    o.dim = d;
    o.context_width = b.csm_context_width;
    o.head_hidden = b.csm_head_hidden;
    o.made_hidden = {made_width_for_budget(o, b.param_budget)};
    const ArCsmModel csm(o, init);
    const std::size_t csm_params = csm.params().size();
    const std::size_t h = energy_width_for(d, csm_params);
    const EnergyMlp sm(d, {h, h}, nn::Activation::kElu, init);

    const auto t_csm = time_calls([&] { (void)csm_loss_grad(csm, batch); }, b.reps);
    const auto t_sm = time_calls([&] { (void)sm_loss_grad(sm, batch); }, b.reps);
    auto summarise = [&](const std::string& method, std::size_t params, const std::string& arch,
                         const std::vector<double>& t) {
      TimingRow r;
      r.dim = d;
      r.method = method;
      r.params = params;
      r.architecture = arch;
      r.mean_seconds = mean(t);
      r.stddev_seconds = t.size() > 1 ? std::sqrt(variance(t)) : 0.0;
      r.median_seconds = median(t);
      rows.push_back(r);
    };
    summarise("sm", sm.params().size(), "energy " + std::to_string(d) + "-" + join({h, h}) + "-1", t_sm);
    summarise("csm", csm_params,
              "made " + join(o.made_hidden) + " context " + std::to_string(o.context_width) + " head " +
                  join(o.head_hidden),
              t_csm);
  }
  if (out.enabled()) {
    Rows t;
    for (const auto& r : rows) {
      t.push_back({fmt(r.dim), r.method, fmt(r.params), r.architecture, fmt(r.mean_seconds),
                   fmt(r.stddev_seconds), fmt(r.median_seconds)});
    }
    write_table_csv(out.file("timing.csv"),
                    {"dim", "method", "params", "architecture", "mean_seconds", "stddev_seconds", "median_seconds"},
                    t);
    out.write_text("plot.gp",
                   "set datafile separator ','\nset key autotitle columnhead\nset logscale y\n"
                   "set xlabel 'dimension'\nset ylabel 'seconds per iteration'\n"
                   "plot 'timing.csv' using 1:(strcol(2) eq 'sm' ? $5 : 1/0) with linespoints title 'SM', \\\n"
                   "     'timing.csv' using 1:(strcol(2) eq 'csm' ? $5 : 1/0) with linespoints title 'CSM'\n");
  }
  return rows;
}

// ---- estimator variance ---------------------------------------------------

std::vector<VarianceRow> bench_variance(const ExperimentConfig& config) {
  const auto& b = config.bench;
  if (b.n_trials < 100) throw InputError("bench-variance: n_trials must be at least 100");
  OutputDir out(config);
  std::unique_ptr<ScoreField> owned;
  const ScoreField* field = nullptr;
  const LogDensityModel* density = nullptr;
  if (b.field == "analytic") {
    auto g = std::make_unique<GaussianField>(GaussianField::isotropic(b.dim, b.data_std));
    field = g.get();
    density = g.get();
    owned = std::move(g);
  } else if (b.field == "tractable-ar") {
    TractableArOptions o;
    o.dim = b.dim;
    o.made_hidden = config.model.made_hidden;
    Rng init = stream(config, kInit);
    auto m = std::make_unique<TractableArModel>(o, init);
    field = m.get();
    density = m.get();
    owned = std::move(m);
  } else {
    throw InputError("bench-variance: unknown field '" + b.field + "'");
  }

  auto summarise = [](std::string method, std::size_t n_proj, const std::vector<double>& v) {
    return VarianceRow{std::move(method), n_proj, mean(v), variance(v)};
  };
  std::vector<VarianceRow> rows;
  Rng data_rng = stream(config, kEval);
  Rng proj_rng = stream(config, kNoise);
  std::vector<double> v;
  for (std::size_t t = 0; t < b.n_trials; ++t) {
    v.push_back(csm_loss(*field, normal_batch(b.batch_size, b.dim, b.data_std, data_rng)));
  }
  rows.push_back(summarise("csm", 0, v));
  const Batch fixed = normal_batch(b.batch_size, b.dim, b.data_std, data_rng);
  v.clear();
  for (std::size_t t = 0; t < b.n_trials; ++t) v.push_back(csm_loss(*field, fixed));
  rows.push_back(summarise("csm-fixed-batch", 0, v));
  for (std::size_t m : b.n_proj) {
    v.clear();
    for (std::size_t t = 0; t < b.n_trials; ++t) {
      v.push_back(ssm_loss(*density, normal_batch(b.batch_size, b.dim, b.data_std, data_rng), m, proj_rng));
    }
    rows.push_back(summarise("ssm", m, v));
  }
  if (out.enabled()) {
    Rows t;
    for (const auto& r : rows) t.push_back({r.method, fmt(r.n_proj), fmt(r.loss_mean), fmt(r.loss_variance)});
    write_table_csv(out.file("variance.csv"), {"method", "n_proj", "loss_mean", "loss_variance"}, t);
    out.write_text("plot.gp",
                   "set datafile separator ','\nset style data histograms\nset style fill solid\n"
                   "set logscale y\nset ylabel 'loss variance'\n"
                   "plot 'variance.csv' every ::1 using 4:xtic(sprintf('%s/%s', strcol(1), strcol(2))) notitle\n");
  }
  return rows;
}

// ---- NLL comparison -------------------------------------------------------

const NllSummary& NllResult::get(const std::string& method) const {
  for (const auto& s : summary) {
    if (s.method == method) return s;
  }
  throw InputError("no NLL result for method '" + method + "'");
}

NllResult run_nll_comparison(const ExperimentConfig& config) {
  if (config.model.kind != "tractable-ar") throw InputError("nll: needs model.kind = \"tractable-ar\"");
  const DatasetSpec spec = config.dataset();
  if (spec.kind != DatasetKind::kGaussian && spec.kind != DatasetKind::kGaussianFullCov) {
    throw InputError("nll: needs a Gaussian dataset (the entropy is the reference)");
  }
  OutputDir out(config);
  const Dataset data = make_dataset(spec);
  const std::size_t dim = spec.data_dim();
  NllResult result;
  result.entropy = gaussian_entropy(dataset_cov(spec));

  std::vector<std::pair<std::string, ObjectiveSpec>> methods;
  if (config.nll.csm) methods.push_back({"csm", ObjectiveSpec{ObjectiveKind::kCsm}});
  if (config.nll.ssm) methods.push_back({"ssm", ObjectiveSpec{ObjectiveKind::kSsm, 0.1, config.objective.n_proj}});
  for (double s : config.nll.dsm_sigmas) {
    methods.push_back({"dsm-" + format_double(s), ObjectiveSpec{ObjectiveKind::kDsm, s}});
  }
  const NoiseSchedule none;
  for (const auto& [name, objective] : methods) {
    Rng init = stream(config, kInit);
    auto model = build_model(config.model, dim, init);
    const auto& tractable = dynamic_cast<const TractableArModel&>(*model);
    std::vector<double> curve;
    Rng rng = stream(config, kTrain);
    train(*model, data.train, objective, none, config.optim, rng, [&](std::size_t, std::size_t epoch) {
      const double nll = tractable.nll(data.test);
      curve.push_back(nll);
      result.curve.push_back({name, epoch, nll});
    });
    NllSummary s{name, curve.back(), curve.size()};
    for (std::size_t e = curve.size(); e-- > 0;) {
      if (std::abs(curve[e] - s.final_nll) > 0.1) break;
      s.settle_epoch = e + 1;
    }
    result.summary.push_back(s);
  }
  if (out.enabled()) {
    Rows t;
    for (const auto& p : result.curve) t.push_back({p.method, fmt(p.epoch), fmt(p.nll)});
    write_table_csv(out.file("nll.csv"), {"method", "epoch", "test_nll"}, t);
    Rows s;
    for (const auto& m : result.summary) s.push_back({m.method, fmt(m.final_nll), fmt(m.settle_epoch)});
    s.push_back({"entropy", fmt(result.entropy), "0"});
    write_table_csv(out.file("nll_summary.csv"), {"method", "final_nll", "settle_epoch"}, s);
    out.write_text("plot.gp",
                   "set datafile separator ','\nset xlabel 'epoch'\nset ylabel 'test NLL'\n"
                   "methods = system(\"tail -n +2 nll.csv | cut -d, -f1 | uniq\")\n"
                   "plot for [m in methods] 'nll.csv' using 2:(strcol(1) eq m ? $3 : 1/0) "
                   "with lines title m\n");
  }
  return result;
}

// ---- density fitting ------------------------------------------------------

FitResult run_density_fit(const ExperimentConfig& config) {
  const DatasetSpec spec = config.dataset();
  if (spec.data_dim() != 2) throw InputError("fit: needs a 2-D dataset");
  OutputDir out(config);
  const Dataset data = make_dataset(spec);
  const NoiseSchedule schedule = config.schedule.build();
  const LangevinConfig sampler = config.sampler.build(schedule);

  Rng init = stream(config, kInit);
  auto model = build_model(config.model, 2, init);
  Rng train_rng = stream(config, kTrain);
  TrainResult trained = train(*model, data.train, config.objective, schedule, config.optim, train_rng);

  FitResult r;
  r.trace = trained.trace;
  r.model = staged_from(config.model, 2, trained.stage_params, schedule, sampler);
  r.samples = sample_joint(r.model.fields(), sampler, config.sampler.n_samples, stream(config, kSample),
                           config.threads);

  if (config.fit.baseline) {
    const std::size_t params = model->params().size();
    TractableArOptions o;
    o.dim = 2;
    o.components = 1;
    o.made_hidden = {tractable_width_for(2, 1, params)};
    Rng binit = stream(config, kBaselineInit);
    TractableArModel baseline(o, binit);
    r.baseline_params = baseline.params().size();
    OptimConfig bopt = config.optim;
    bopt.max_iters = iterations(trained.trace);
    bopt.max_epochs = static_cast<std::size_t>(-1);
    bopt.tolerance = -1.0;
    Rng btrain = stream(config, kBaselineTrain);
    const TrainResult bt = train(baseline, data.train, ObjectiveSpec{ObjectiveKind::kMle}, NoiseSchedule(), bopt, btrain);
    Rng bsample = stream(config, kSample).split(1);
    r.baseline_samples = baseline.sample(config.sampler.n_samples, bsample);
    if (out.enabled()) bt.trace.write_csv(out.file("baseline_trace.csv"));
  }

  Rows summary;
  if (spec.kind == DatasetKind::kMixture2d) {
    const auto centers = mixture_centers(spec);
    r.coverage = mode_coverage(r.samples, centers, 3.0 * spec.mode_std);
    if (r.baseline_samples.rows() > 0) r.baseline_coverage = mode_coverage(r.baseline_samples, centers, 3.0 * spec.mode_std);
    Rows cov;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      cov.push_back({"ar-csm", fmt(k), fmt(centers[k][0]), fmt(centers[k][1]), fmt(r.coverage[k])});
      if (!r.baseline_coverage.empty()) {
        cov.push_back({"mle-gaussian", fmt(k), fmt(centers[k][0]), fmt(centers[k][1]), fmt(r.baseline_coverage[k])});
      }
    }
    if (out.enabled()) write_table_csv(out.file("coverage.csv"), {"method", "mode", "center_x", "center_y", "share"}, cov);
    summary.push_back({"ar-csm", "min_mode_share", fmt(*std::min_element(r.coverage.begin(), r.coverage.end()))});
    if (!r.baseline_coverage.empty()) {
      summary.push_back({"mle-gaussian", "min_mode_share",
                         fmt(*std::min_element(r.baseline_coverage.begin(), r.baseline_coverage.end()))});
    }
  }
  if (spec.kind == DatasetKind::kTwoRings2d) {
    r.ring_share = ring_share(spec, r.samples, 3.0 * spec.ring_width);
    summary.push_back({"ar-csm", "ring_share", fmt(r.ring_share)});
    if (r.baseline_samples.rows() > 0) {
      r.baseline_ring_share = ring_share(spec, r.baseline_samples, 3.0 * spec.ring_width);
      summary.push_back({"mle-gaussian", "ring_share", fmt(r.baseline_ring_share)});
    }
  }

  if (out.enabled()) {
    save_checkpoint(out.file("model.bin"), make_checkpoint(r.model, config.seed));
    r.trace.write_csv(out.file("trace.csv"));
    write_matrix_csv(out.file("samples.csv"), r.samples);
    write_matrix_csv(out.file("train.csv"), head_rows(data.train, config.sampler.n_samples));
    if (r.baseline_samples.rows() > 0) write_matrix_csv(out.file("baseline_samples.csv"), r.baseline_samples);
    write_grid_scores(out, r.model.final_field(), config.fit);
    write_table_csv(out.file("summary.csv"), {"method", "metric", "value"}, summary);
    out.write_text("plot.gp",
                   "set datafile separator ','\nset size square\nset multiplot layout 1,3\n"
                   "set title 'data'\nplot 'train.csv' using 1:2 with dots notitle\n"
                   "set title 'AR-CSM samples'\nplot 'samples.csv' using 1:2 with dots notitle\n"
                   "set title 'score field'\nplot 'grid_scores.csv' using 1:2:($3*0.02):($4*0.02) "
                   "every ::1 with vectors notitle\nunset multiplot\n");
  }
  return r;
}

Batch run_sample(const ExperimentConfig& config, const std::filesystem::path& checkpoint, std::size_t n) {
  const StagedModel model = load_staged(load_checkpoint(checkpoint));
  OutputDir out(config);
  const Batch samples = sample_joint(model.fields(), model.sampler, n, stream(config, kSample), config.threads);
  if (out.enabled()) write_matrix_csv(out.file("samples.csv"), samples);
  return samples;
}

// ---- denoising ------------------------------------------------------------

DenoiseResult run_denoise(const ExperimentConfig& config) {
  const DatasetSpec spec = config.dataset();
  const auto& dn = config.denoise;
  if (!(dn.sigma > 0.0)) throw InputError("denoise: sigma must be positive");
  OutputDir out(config);
  const Dataset data = make_dataset(spec);
  const std::size_t dim = spec.data_dim();
  const Batch clean = head_rows(data.test, dn.n);
  DenoiseResult r;

  // Single-step denoising with a field for the sigma-perturbed density.
  Rng aux_init = stream(config, kAuxInit);
  auto noisy_model = build_model(config.model, dim, aux_init);
  Rng aux_train = stream(config, kAuxTrain);
  train(*noisy_model, data.train, ObjectiveSpec{ObjectiveKind::kAnnealedCsm}, NoiseSchedule({dn.sigma}),
        config.optim, aux_train);
  Rng noise = stream(config, kNoise);
  Batch noisy = clean;
  for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += dn.sigma * noise.normal();
  const Batch denoised = single_step_denoise(as_field(*noisy_model), noisy, dn.sigma);
  r.noisy_mse = mean_squared_error(noisy, clean);
  r.denoised_mse = mean_squared_error(denoised, clean);

  // Restoration of outlier-corrupted coordinates by annealed Langevin.
  const NoiseSchedule schedule = config.schedule.build();
  const LangevinConfig sampler = config.sampler.build(schedule);
  Rng init = stream(config, kInit);
  auto model = build_model(config.model, dim, init);
  Rng train_rng = stream(config, kTrain);
  const TrainResult trained = train(*model, data.train, config.objective, schedule, config.optim, train_rng);
  const StagedModel staged = staged_from(config.model, dim, trained.stage_params, schedule, sampler);
  Batch corrupted = clean;
  std::vector<bool> hit(static_cast<std::size_t>(clean.rows()), false);
  for (Eigen::Index i = 0; i < corrupted.rows(); ++i) {
    for (Eigen::Index j = 0; j < corrupted.cols(); ++j) {
      if (noise.uniform() < dn.outlier_fraction) {
        corrupted(i, j) = noise.uniform() < 0.5 ? -dn.outlier_value : dn.outlier_value;
        hit[static_cast<std::size_t>(i)] = true;
      }
    }
  }
  const Batch restored = langevin_restore(staged.fields(), corrupted, sampler, stream(config, kSample), config.threads);
  auto distance = [&](const Batch& b, Eigen::Index i) {
    return spec.kind == DatasetKind::kTwoRings2d ? distance_to_rings(spec, row(b, i)) : (b.row(i) - clean.row(i)).norm();
  };
  // Medians over the rows that received at least one outlier.
  std::vector<double> d_corrupted, d_restored, d_all_corrupted, d_all_restored;
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    d_all_corrupted.push_back(distance(corrupted, i));
    d_all_restored.push_back(distance(restored, i));
    if (hit[static_cast<std::size_t>(i)]) {
      d_corrupted.push_back(d_all_corrupted.back());
      d_restored.push_back(d_all_restored.back());
    }
  }
  if (d_corrupted.empty()) throw InputError("denoise: no row received an outlier; raise outlier_fraction or n");
  r.corrupted_median = median(d_corrupted);
  r.restored_median = median(d_restored);
  r.corrupted_rows = d_corrupted.size();

  if (out.enabled()) {
    write_matrix_csv(out.file("clean.csv"), clean);
    write_matrix_csv(out.file("noisy.csv"), noisy);
    write_matrix_csv(out.file("denoised.csv"), denoised);
    write_matrix_csv(out.file("corrupted.csv"), corrupted);
    write_matrix_csv(out.file("restored.csv"), restored);
    trained.trace.write_csv(out.file("trace.csv"));
    write_table_csv(out.file("summary.csv"), {"metric", "value"},
                    {{"noisy_mse", fmt(r.noisy_mse)},
                     {"denoised_mse", fmt(r.denoised_mse)},
                     {"corrupted_median_distance", fmt(r.corrupted_median)},
                     {"restored_median_distance", fmt(r.restored_median)},
                     {"corrupted_rows", fmt(r.corrupted_rows)},
                     {"corrupted_median_distance_all_rows", fmt(median(d_all_corrupted))},
                     {"restored_median_distance_all_rows", fmt(median(d_all_restored))}});
    out.write_text("plot.gp",
                   "set datafile separator ','\nset size square\nset multiplot layout 1,2\n"
                   "set title 'single-step denoising'\nplot 'noisy.csv' with dots title 'noisy', "
                   "'denoised.csv' with dots title 'denoised'\n"
                   "set title 'Langevin restoration'\nplot 'corrupted.csv' with dots title 'corrupted', "
                   "'restored.csv' with dots title 'restored'\nunset multiplot\n");
  }
  return r;
}

// ---- out-of-distribution --------------------------------------------------

OodResult run_ood(const ExperimentConfig& config) {
  const DatasetSpec spec = config.dataset();
  if (!(config.ood.box > 0.0) || config.ood.n_ood == 0) throw InputError("ood: box and n_ood must be positive");
  OutputDir out(config);
  const Dataset data = make_dataset(spec);
  const std::size_t dim = spec.data_dim();
  Rng init = stream(config, kInit);
  auto model = build_model(config.model, dim, init);
  Rng train_rng = stream(config, kTrain);
  const TrainResult trained = train(*model, data.train, config.objective, config.schedule.build(), config.optim, train_rng);
  const ScoreField& field = as_field(*model);

  Rng box_rng = stream(config, kEval);
  Batch ood(static_cast<Eigen::Index>(config.ood.n_ood), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < ood.size(); ++i) ood.data()[i] = box_rng.uniform(-config.ood.box, config.ood.box);

  OodResult r;
  for (Eigen::Index i = 0; i < data.test.rows(); ++i) r.h_in.push_back(ood_statistic(field, row(data.test, i)));
  for (Eigen::Index i = 0; i < ood.rows(); ++i) r.h_out.push_back(ood_statistic(field, row(ood, i)));
  r.auroc = auroc(r.h_in, r.h_out);
  r.auroc_identical = auroc(r.h_in, r.h_in);

  if (out.enabled()) {
    Rows t;
    for (double h : r.h_in) t.push_back({"in", fmt(h)});
    for (double h : r.h_out) t.push_back({"ood", fmt(h)});
    write_table_csv(out.file("ood_stats.csv"), {"set", "h"}, t);
    write_table_csv(out.file("auroc.csv"), {"comparison", "auroc"},
                    {{"in-vs-uniform-box", fmt(r.auroc)}, {"in-vs-itself", fmt(r.auroc_identical)}});
    trained.trace.write_csv(out.file("trace.csv"));
    out.write_text("plot.gp",
                   "set datafile separator ','\nset style data histograms\nbinwidth = 1\n"
                   "bin(x) = binwidth * floor(x / binwidth)\nset xlabel 'h(x)'\n"
                   "plot 'ood_stats.csv' using (strcol(1) eq 'in' ? bin($2) : 1/0):(1) smooth freq "
                   "with boxes title 'in', 'ood_stats.csv' using (strcol(1) eq 'ood' ? bin($2) : 1/0):(1) "
                   "smooth freq with boxes title 'ood'\n");
  }
  return r;
}

// ---- implicit-encoder VAE -------------------------------------------------

namespace {

struct VaeRun {
  double elbo = 0.0;
  double mse_initial = 0.0;
  double mse_final = 0.0;
  LossTrace trace;
};

VaeRun train_one_vae(const ExperimentConfig& config, const Batch& data, bool explicit_entropy, Stream init_stream,
                     Stream train_stream) {
  const VaeConfig& v = config.vae;
  Rng init = stream(config, init_stream);
  vae::EncoderOptions eo;
  eo.latent_dim = v.latent_dim;
  eo.obs_dim = static_cast<std::size_t>(data.cols());
  eo.residual_hidden = v.encoder_hidden;
  eo.activation = config.model.activation;
  vae::ImplicitEncoder encoder(eo, init);
  vae::Decoder decoder(v.latent_dim, eo.obs_dim, v.decoder_hidden, config.model.activation, init);
  ArCsmOptions so;
  so.context_width = config.model.context_width;
  so.made_hidden = config.model.made_hidden;
  so.head_hidden = config.model.head_hidden;
  so.activation = config.model.activation;
  vae::EncoderScoreModel score(v.latent_dim, eo.obs_dim, so, init);

  vae::VaeTrainConfig tc;
  tc.iters = v.iters;
  tc.batch_size = v.batch_size;
  tc.score_steps = v.score_steps;
  tc.n_mc = v.n_mc;
  tc.lr = v.lr;
  tc.score_lr = v.score_lr;
  tc.explicit_entropy = explicit_entropy;

  VaeRun run;
  Rng eval = stream(config, kEval);
  run.mse_initial = vae::reconstruction_mse(encoder, decoder, data, eval);
  Rng train_rng = stream(config, train_stream);
  run.trace = vae::train_vae(encoder, decoder, score, data, tc, train_rng).trace;
  run.mse_final = vae::reconstruction_mse(encoder, decoder, data, eval);
  run.elbo = vae::elbo(encoder, decoder, data, v.eval_samples, eval);
  return run;
}

}  // namespace

VaeSummary run_vae(const ExperimentConfig& config) {
  const VaeConfig& v = config.vae;
  const bool linear = v.problem == "linear-gaussian";
  if (!linear && v.problem != "mixture") throw InputError("vae: unknown problem '" + v.problem + "'");
  if (v.eval_samples == 0) throw InputError("vae: eval_samples must be positive");
  OutputDir out(config);
  DatasetSpec spec = config.dataset();
  if (!linear) spec.kind = DatasetKind::kMixture2d;
  Batch data;
  if (linear) {
    Rng data_rng(spec.seed);
    data = vae::linear_gaussian_data(v.obs_dim, v.latent_dim, spec.n_train, spec.std, data_rng);
  } else {
    data = make_dataset(spec).train;
  }

  VaeSummary r;
  const VaeRun implicit_run = train_one_vae(config, data, false, kInit, kTrain);
  r.final_elbo = implicit_run.elbo;
  r.mse_initial = implicit_run.mse_initial;
  r.mse_final = implicit_run.mse_final;
  r.optimal_elbo = linear ? vae::ppca_log_likelihood(data, v.latent_dim) : std::nan("");
  r.explicit_elbo = std::nan("");
  VaeRun explicit_run;
  if (v.explicit_baseline) {
    explicit_run = train_one_vae(config, data, true, kBaselineInit, kBaselineTrain);
    r.explicit_elbo = explicit_run.elbo;
  }

  if (out.enabled()) {
    Rows t;
    for (const auto& tr : implicit_run.trace.rows) t.push_back({"implicit", fmt(tr.iteration), fmt(-tr.loss)});
    for (const auto& tr : explicit_run.trace.rows) t.push_back({"explicit", fmt(tr.iteration), fmt(-tr.loss)});
    write_table_csv(out.file("vae_trace.csv"), {"encoder", "iter", "batch_elbo"}, t);
    write_table_csv(out.file("summary.csv"), {"metric", "value"},
                    {{"final_elbo", fmt(r.final_elbo)},
                     {"optimal_elbo", fmt(r.optimal_elbo)},
                     {"explicit_elbo", fmt(r.explicit_elbo)},
                     {"mse_initial", fmt(r.mse_initial)},
                     {"mse_final", fmt(r.mse_final)}});
    out.write_text("plot.gp",
                   "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'iteration'\n"
                   "set ylabel 'batch ELBO'\nplot 'vae_trace.csv' using (strcol(1) eq 'implicit' ? $2 : 1/0):3 "
                   "with lines title 'implicit', '' using (strcol(1) eq 'explicit' ? $2 : 1/0):3 with lines "
                   "title 'explicit'\n");
  }
  return r;
}

}  // namespace csm::exp
