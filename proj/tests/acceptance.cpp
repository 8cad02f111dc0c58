// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "csm/ad/derivatives.hpp"
#include "csm/ad/ops.hpp"
#include "csm/experiments/cli.hpp"
#include "csm/experiments/experiments.hpp"
#include "csm/experiments/metrics.hpp"
#include "csm/fields/gaussian_field.hpp"
#include "csm/nn/mlp.hpp"
#include "csm/objectives/objectives.hpp"
#include "csm/sampling/langevin.hpp"
#include "csm/training/train.hpp"
#include "csm/vae/implicit_vae.hpp"
#include "fd.hpp"

using namespace csm;
using namespace csm::exp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

struct MeanSe {
  double mean, se;
};
MeanSe mean_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  s2 /= static_cast<double>(v.size() - 1);
  return {m, std::sqrt(s2 / static_cast<double>(v.size()))};
}

Batch normal_batch(Eigen::Index n, Eigen::Index d, double mean, double sd, Rng& rng) {
  Batch b(n, d);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = mean + sd * rng.normal();
  return b;
}

GaussianField gauss1(double mean, double var) {
  return GaussianField(Vector::Constant(1, mean), Matrix::Constant(1, 1, var));
}

double auroc_pairwise(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::uint64_t twice = 0;
  for (double a : pos) {
    for (double b : neg) twice += a > b ? 2 : (a == b ? 1 : 0);
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

ExperimentConfig quiet(ExperimentKind kind) {
  ExperimentConfig c = default_config(kind);
  c.write_outputs = false;
  return c;
}

// ---- 1 --------------------------------------------------------------------

void autodiff(Outcome& o) {
  Rng rng(101);
  ad::ParamStore store;
  nn::Mlp net(store, "net", 4, {8, 8}, 1, nn::Activation::kTanh);
  store.seal();
  int bad_grad = 0, bad_dir = 0, bad_god = 0;
  for (int trial = 0; trial < 100; ++trial) {
    net.init(store.flat(), rng);
    std::vector<double> x(4);
    for (double& v : x) v = rng.normal();
    const std::size_t d = rng.index(4);

    // grad: reverse mode over the parameters.
    ad::Tape<double> tape;
    auto p = ad::bind<double>(tape, store.flat());
    std::vector<V0> xv;
    for (double v : x) xv.push_back(ad::make_leaf(tape, v));
    V0 out[1];
    net.forward<V0>(p.span(), xv, out);
    const auto g = ad::grad(out[0], p);
    auto f = [&](std::span<const double> theta) {
      double y[1];
      net.forward<double>(theta, x, y);
      return y[0];
    };
    const auto ref = fd::gradient(f, store.flat());
    for (std::size_t i = 0; i < g.size(); ++i) bad_grad += !fd::close(g[i], ref[i], 1e-5, 1e-7);

    // directional_deriv: forward mode along x_d.
    const auto theta1 = ad::lift<ad::Dual1>(store.flat());
    auto fx = [&](std::span<const ad::Dual1> xs) {
      ad::Dual1 y[1];
      net.forward<ad::Dual1>(theta1, xs, y);
      return y[0];
    };
    auto plain_x = [&](std::span<const double> xs) {
      double y[1];
      net.forward<double>(store.flat(), xs, y);
      return y[0];
    };
    const auto dd = ad::directional_deriv(fx, x, d);
    bad_dir += !(dd.value == plain_x(x)) || !fd::close(dd.deriv, fd::partial(plain_x, x, d), 1e-5, 1e-7);

    // grad_of_directional: parameter gradient of df/dx_d against differences of forward mode.
    auto fv = [&](std::span<const V1> th, std::span<const V1> xs) {
      V1 y[1];
      net.forward<V1>(th, xs, y);
      return y[0];
    };
    const auto god = ad::grad_of_directional(fv, x, d, store.flat());
    auto inner = [&](std::span<const double> theta) {
      const auto th = ad::lift<ad::Dual1>(theta);
      std::vector<ad::Dual1> xs(x.begin(), x.end());
      xs[d].t = 1.0;
      ad::Dual1 y[1];
      net.forward<ad::Dual1>(th, xs, y);
      return y[0].t;
    };
    const auto ref2 = fd::gradient(inner, store.flat());
    for (std::size_t i = 0; i < ref2.size(); ++i) bad_god += !fd::close(god.grad_deriv[i], ref2[i], 1e-5, 1e-7);
  }
  o.detail << "mismatches grad=" << bad_grad << " directional=" << bad_dir << " grad_of_directional=" << bad_god;
  o.require(bad_grad == 0 && bad_dir == 0 && bad_god == 0, "finite-difference agreement at 1e-5");
}

// ---- 2 --------------------------------------------------------------------

void divergence_oracle(Outcome& o) {
  Rng rng(202);
  const auto p = gauss1(0.0, 1.0);
  const Batch x = normal_batch(100000, 1, 0.0, 1.0, rng);
  const double same = l_csm_divergence(p, p, x);
  const auto q = gauss1(0.0, 2.0);
  const double est = l_csm_divergence(q, p, x);
  std::vector<double> terms(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double diff = -x(i, 0) / 2.0 + x(i, 0);
    terms[static_cast<std::size_t>(i)] = 0.5 * diff * diff;
  }
  const auto ms = mean_se(terms);
  o.detail << "identical=" << same << " scale-2 estimate=" << est << " (0.125, se " << ms.se << ")";
  o.require(same == 0.0, "identical fields give exactly 0");
  o.require(std::abs(est - 0.125) <= 3.0 * ms.se, "within 3 SE of 0.125");
}

// ---- 3 --------------------------------------------------------------------

void loss_decomposition(Outcome& o) {
  Rng rng(303);
  struct Pair {
    double mp, vp, mq, vq;
  };
  for (const Pair& pr : {Pair{0.0, 1.0, 0.0, 2.0}, Pair{1.0, 0.5, -0.5, 1.0}, Pair{-2.0, 3.0, 0.0, 0.25}}) {
    const auto p = gauss1(pr.mp, pr.vp);
    const auto q = gauss1(pr.mq, pr.vq);
    const Batch x = normal_batch(100000, 1, pr.mp, std::sqrt(pr.vp), rng);
    std::vector<double> terms(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double sp = -(x(i, 0) - pr.mp) / pr.vp;
      const double sq = -(x(i, 0) - pr.mq) / pr.vq;
      terms[static_cast<std::size_t>(i)] = 0.5 * sq * sq - 1.0 / pr.vq - 0.5 * (sp - sq) * (sp - sq);
    }
    const auto ms = mean_se(terms);
    const double diff = csm_loss(q, x) - l_csm_divergence(q, p, x);
    const double constant = -0.5 / pr.vp;
    o.detail << "diff=" << diff << " vs " << constant << " (se " << ms.se << "); ";
    // A pair with a constant per-sample difference has se 0; allow rounding.
    o.require(std::abs(diff - constant) <= 3.0 * ms.se + 1e-12, "within 3 SE");
  }
}

// ---- 4 --------------------------------------------------------------------

void scale_recovery(Outcome& o) {
  Rng data_rng(404);
  const Batch data = normal_batch(5000, 1, 0.0, 1.0, data_rng);
  DiagGaussianFamily model(1, 0.4, false, {0.0});
  OptimConfig cfg;
  cfg.lr = 0.02;
  cfg.batch_size = 256;
  cfg.max_epochs = 40;
  cfg.min_iters = 400;
  cfg.tolerance = 1e-5;
  Rng rng(405);
  train(model, data, ObjectiveSpec{ObjectiveKind::kCsm}, NoiseSchedule(), cfg, rng);
  o.detail << "sigma=" << model.scale(0);
  o.require(std::abs(model.scale(0) - 1.0) <= 0.02, "sigma within 0.02 of 1");
}

// ---- 5 --------------------------------------------------------------------

void timing(Outcome& o) {
  const auto rows = bench_timing(quiet(ExperimentKind::kBenchTiming));
  auto median_of = [&](std::size_t dim, const std::string& method) {
    for (const auto& r : rows) {
      if (r.dim == dim && r.method == method) return r.median_seconds;
    }
    throw std::runtime_error("missing timing row");
  };
  const double sm = median_of(100, "sm") / median_of(10, "sm");
  const double csm = median_of(100, "csm") / median_of(10, "csm");
  o.detail << "sm D100/D10=" << sm << " csm D100/D10=" << csm;
  o.require(sm >= 5.0, "sm ratio >= 5");
  o.require(csm <= 2.0, "csm ratio <= 2");
}

// ---- 6 --------------------------------------------------------------------

void variance_bench(Outcome& o) {
  const auto rows = bench_variance(quiet(ExperimentKind::kBenchVariance));
  double csm = NAN, fixed = NAN, ssm1 = NAN;
  for (const auto& r : rows) {
    if (r.method == "csm") csm = r.loss_variance;
    if (r.method == "csm-fixed-batch") fixed = r.loss_variance;
    if (r.method == "ssm" && r.n_proj == 1) ssm1 = r.loss_variance;
  }
  o.detail << "ssm(1)/csm=" << ssm1 / csm << " fixed-batch csm variance=" << fixed;
  o.require(ssm1 >= 10.0 * csm, "ssm variance >= 10x csm");
  o.require(fixed == 0.0, "fixed-batch variance exactly 0");
}

// ---- 7 --------------------------------------------------------------------

void nll_ordering(Outcome& o) {
  const NllResult r = run_nll_comparison(quiet(ExperimentKind::kNll));
  const double csm = r.get("csm").final_nll;
  const double dsm1 = r.get("dsm-0.1").final_nll;
  const double dsm3 = r.get("dsm-0.3").final_nll;
  o.detail << "entropy=" << r.entropy << " csm=" << csm << " dsm(0.1)=" << dsm1 << " dsm(0.3)=" << dsm3;
  o.require(csm <= dsm1 && dsm1 <= dsm3, "csm <= dsm(0.1) <= dsm(0.3)");
  for (const auto& s : r.summary) o.require(s.final_nll >= r.entropy - 0.05, s.method + " >= entropy - 0.05");
}

// ---- 8 --------------------------------------------------------------------

void sampler_oracle(Outcome& o) {
  Matrix cov(2, 2);
  cov << 1.0, 0.8, 0.8, 1.0;
  const GaussianField g(Vector::Zero(2), cov);
  LangevinConfig cfg;
  cfg.eps0 = 1e-3;
  cfg.steps = 100;
  cfg.schedule = geometric_schedule(1.0, 0.04, 10);
  std::vector<GaussianField> stages;
  for (std::size_t i = 1; i <= cfg.schedule.size(); ++i) {
    stages.push_back(g.perturbed(cfg.schedule.context_sigma(), cfg.schedule.sigma(i)));
  }
  StagedField ptrs;
  for (const auto& s : stages) ptrs.push_back(&s);
  const Batch s = sample_joint(ptrs, cfg, 10000, Rng(808));
  const Eigen::RowVectorXd mu = s.colwise().mean();
  const Matrix c = s.rowwise() - mu;
  const Matrix sc = c.transpose() * c / static_cast<double>(s.rows() - 1);
  const double rho = sc(0, 1) / std::sqrt(sc(0, 0) * sc(1, 1));
  o.detail << "rho=" << rho << " var=(" << sc(0, 0) << ", " << sc(1, 1) << ")";
  o.require(std::abs(rho - 0.8) <= 0.07, "correlation within 0.07");
  o.require(std::abs(sc(0, 0) - 1.0) <= 0.1 && std::abs(sc(1, 1) - 1.0) <= 0.1, "variances within 0.1");
}

// ---- 9 --------------------------------------------------------------------

void density_fit(Outcome& o) {
  const FitResult r = run_density_fit(quiet(ExperimentKind::kFit));
  const double min_model = *std::min_element(r.coverage.begin(), r.coverage.end());
  const double min_base = *std::min_element(r.baseline_coverage.begin(), r.baseline_coverage.end());
  o.detail << "ar-csm min mode share=" << min_model << " gaussian mle min mode share=" << min_base
           << " (params " << r.model.stages.back()->params().size() << " vs " << r.baseline_params << ")";
  o.require(min_model >= 0.02, "every mode >= 2% for ar-csm");
  o.require(min_base < 0.02, "baseline misses a mode");
}

// ---- 10 -------------------------------------------------------------------

void denoising(Outcome& o) {
  const auto noisy = GaussianField::isotropic(1, std::sqrt(2.0));
  Batch one(1, 1);
  one << 1.0;
  const double x_hat = single_step_denoise(noisy, one, 1.0)(0, 0);
  const DenoiseResult r = run_denoise(quiet(ExperimentKind::kDenoise));
  o.detail << "worked example=" << x_hat << " ring median distance corrupted=" << r.corrupted_median
           << " restored=" << r.restored_median << " (" << r.corrupted_rows << " rows)";
  o.require(std::abs(x_hat - 0.5) <= 1e-15, "worked example 0.5");
  o.require(r.restored_median < r.corrupted_median, "restoration reduces the median distance");
}

// ---- 11 -------------------------------------------------------------------

void ood(Outcome& o) {
  Rng rng(1111);
  bool exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(1 + rng.index(1000)), b(1 + rng.index(1000));
    for (double& v : a) v = std::round(rng.normal() * 3.0);
    for (double& v : b) v = std::round(rng.normal() * 3.0 - 1.0);
    exact = exact && auroc(a, b) == auroc_pairwise(a, b);
  }
  const OodResult r = run_ood(quiet(ExperimentKind::kOod));
  o.detail << "oracle exact=" << (exact ? "yes" : "no") << " auroc=" << r.auroc
           << " identical=" << r.auroc_identical;
  o.require(exact, "rank-sum equals pairwise oracle");
  o.require(r.auroc >= 0.9, "auroc >= 0.9");
  o.require(r.auroc_identical == 0.5, "identical sets give 0.5");
}

// ---- 12 -------------------------------------------------------------------

void entropy_gradient(Outcome& o) {
  // z = mu + sigma eps with the exact score held constant.
  const double sigma = 0.5;
  Rng init(1);
  vae::EncoderOptions eo;
  eo.latent_dim = 1;
  eo.obs_dim = 1;
  vae::ImplicitEncoder enc(eo, init);
  for (double& v : enc.params().view("A")) v = 0.0;
  enc.params().flat()[enc.bias_index(0)] = 0.3;
  enc.params().flat()[enc.lower_index(0, 0)] = sigma;
  const GaussianField oracle(Vector::Constant(2, 0.0) + Vector::Unit(2, 1) * 0.3,
                             (Vector(2) << 1.0, sigma * sigma).finished().asDiagonal());
  Rng rng(1212);
  const auto g = vae::entropy_grad(enc, oracle, Batch::Zero(1, 1), 10000, rng);
  const std::size_t ks = enc.lower_index(0, 0);
  const std::size_t km = enc.bias_index(0);
  o.detail << "dH/dsigma=" << g.grad[ks] << " (2, se " << g.std_error[ks] << ") dH/dmu=" << g.grad[km] << " (se "
           << g.std_error[km] << "); ";
  o.require(std::abs(g.grad[ks] - 1.0 / sigma) <= 3.0 * g.std_error[ks], "dH/dsigma within 3 SE");
  o.require(std::abs(g.grad[km]) <= 3.0 * g.std_error[km], "dH/dmu within 3 SE");

  const VaeSummary r = run_vae(quiet(ExperimentKind::kVae));
  o.detail << "vae elbo=" << r.final_elbo << " optimum=" << r.optimal_elbo << " explicit=" << r.explicit_elbo;
  o.require(std::abs(r.final_elbo - r.optimal_elbo) <= 0.1, "elbo within 0.1 nat of the optimum");
  o.require(std::abs(r.final_elbo - r.explicit_elbo) <= 0.1, "elbo within 0.1 nat of the explicit baseline");
}

// ---- 13 -------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drops the wall-clock columns of timing.csv.
std::string without_seconds(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    std::size_t cut = 0;
    for (int k = 0; k < 4 && cut != std::string::npos; ++k) cut = line.find(',', cut + (k ? 1 : 0));
    out += line.substr(0, cut) + "\n";
  }
  return out;
}

int run_cli(std::vector<std::string> args, std::ostream& log) {
  args.insert(args.begin(), "csm-lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, log);
  return code;
}

void reproducibility(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "csm_acceptance_rerun";
  fs::remove_all(root);
  // Shortened runs; the check is bitwise equality of reruns, not result quality.
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
      {"bench-timing", {"--set", "bench.reps=1", "--set", "bench.dims=[4, 8]"}},
      {"bench-variance", {"--set", "bench.n_trials=100", "--set", "bench.dim=10"}},
      {"nll", {"--set", "optim.max_epochs=2", "--set", "data.n_train=500", "--set", "data.n_test=500"}},
      {"fit", {"--set", "data.n_train=400", "--set", "optim.max_iters=30", "--set", "schedule.levels=3",
               "--set", "sampler.steps=5", "--set", "sampler.n_samples=60", "--set", "fit.grid=5"}},
      {"denoise", {"--set", "data.n_train=400", "--set", "optim.max_iters=30", "--set", "schedule.levels=3",
                   "--set", "sampler.steps=5", "--set", "denoise.n=100"}},
      {"ood", {"--set", "data.n_train=400", "--set", "optim.max_iters=100", "--set", "ood.n_ood=200"}},
      {"vae", {"--set", "vae.iters=30", "--set", "data.n_train=200", "--set", "vae.eval_samples=5"}},
  };
  std::ostringstream log;
  std::size_t files = 0;
  auto compare_dirs = [&](const std::string& name, const fs::path& a, const fs::path& b) {
    std::size_t here = 0;
    if (!fs::is_directory(a) || !fs::is_directory(b)) {
      o.require(false, name + " output directories exist");
      return;
    }
    for (const auto& e : fs::directory_iterator(a)) {
      if (e.path().extension() != ".csv") continue;
      std::string x = slurp(e.path());
      std::string y = slurp(b / e.path().filename());
      if (e.path().filename() == "timing.csv") {
        x = without_seconds(x);
        y = without_seconds(y);
      }
      o.require(x == y, name + "/" + e.path().filename().string() + " identical");
      ++here;
    }
    o.require(here > 0, name + " wrote CSV output");
    files += here;
  };
  for (const auto& [name, extra] : runs) {
    const fs::path a = root / (name + "_a");
    const fs::path b = root / (name + "_b");
    std::vector<std::string> args{name, "--seed", "13", "-o", a.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    o.require(run_cli(args, log) == 0, name + " first run");
    o.require(run_cli({name, "-c", (a / "config.toml").string(), "-o", b.string()}, log) == 0, name + " rerun");
    compare_dirs(name, a, b);
  }
  const fs::path ckpt = root / "fit_a" / "model.bin";
  const fs::path sa = root / "sample_a";
  const fs::path sb = root / "sample_b";
  o.require(run_cli({"sample", "--checkpoint", ckpt.string(), "-n", "50", "--seed", "5", "-o", sa.string()}, log) == 0,
            "sample first run");
  o.require(run_cli({"sample", "--checkpoint", ckpt.string(), "-n", "50", "-c", (sa / "config.toml").string(), "-o",
                     sb.string()},
                    log) == 0,
            "sample rerun");
  compare_dirs("sample", sa, sb);
  o.detail << files << " CSV files compared across " << runs.size() + 1 << " experiments";
  if (!o.pass) o.detail << " log: " << log.str();
  fs::remove_all(root);
}

}  // namespace

// Optional arguments select criteria by number; default runs all.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"autodiff matches central differences", autodiff},
      {"divergence closed forms", divergence_oracle},
      {"csm loss minus divergence is the data constant", loss_decomposition},
      {"csm recovers the data scale", scale_recovery},
      {"timing scales with dimension for sm only", timing},
      {"ssm loss variance exceeds csm", variance_bench},
      {"nll ordering on a correlated gaussian", nll_ordering},
      {"annealed sampler on a correlated gaussian", sampler_oracle},
      {"density fit covers every mode", density_fit},
      {"denoising and restoration", denoising},
      {"ood auroc", ood},
      {"entropy gradient and vae elbo", entropy_gradient},
      {"cli reruns are byte identical", reproducibility},
  };
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int i = 1; i < argc; ++i) {
    const std::size_t k = std::stoul(argv[i]);
    if (k < 1 || k > criteria.size()) {
      std::cerr << "no criterion " << argv[i] << "\n";
      return 2;
    }
    selected[k - 1] = true;
  }
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected[k]) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << std::setw(2) << k + 1 << "] " << criteria[k].first << ": "
              << o.detail.str() << " (" << std::fixed << std::setprecision(1) << secs << " s)"
              << std::defaultfloat << std::setprecision(6) << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
