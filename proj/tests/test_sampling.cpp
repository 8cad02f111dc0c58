#include <cmath>
#include <limits>
#include <map>

#include "csm/fields/gaussian_field.hpp"
#include "csm/sampling/langevin.hpp"
#include "doctest.h"

using namespace csm;

namespace {

struct Moments {
  double mean, var;
};
Moments moments(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, s / static_cast<double>(v.size() - 1)};
}

Matrix sample_cov(const Batch& b) {
  const Eigen::RowVectorXd mu = b.colwise().mean();
  const Matrix c = b.rowwise() - mu;
  return (c.transpose() * c) / static_cast<double>(b.rows() - 1);
}

std::vector<GaussianField> perturbed_stages(const GaussianField& g, const NoiseSchedule& s) {
  std::vector<GaussianField> out;
  for (std::size_t i = 1; i <= s.size(); ++i) out.push_back(g.perturbed(s.context_sigma(), s.sigma(i)));
  return out;
}

StagedField pointers(const std::vector<GaussianField>& fields) {
  StagedField out;
  for (const auto& f : fields) out.push_back(&f);
  return out;
}

// Records every (dimension, prefix) a sampler asks for.
class RecordingField final : public ScoreField {
 public:
  explicit RecordingField(const ScoreField& inner) : inner_(inner) {}
  std::size_t dim() const override { return inner_.dim(); }
  void scores(std::span<const double> c, std::span<const double> h, std::span<double> s) const override {
    inner_.scores(c, h, s);
  }
  void scores_with_deriv(std::span<const double> c, std::span<const double> h, std::span<double> s,
                         std::span<double> ds) const override {
    inner_.scores_with_deriv(c, h, s, ds);
  }
  ConditionalScore conditional(std::span<const double> prefix, std::size_t d) const override {
    calls.emplace_back(d, std::vector<double>(prefix.begin(), prefix.end()));
    return inner_.conditional(prefix, d);
  }
  mutable std::vector<std::pair<std::size_t, std::vector<double>>> calls;

 private:
  const ScoreField& inner_;
};

// s_1 is NaN; s_0 is fine.
class BrokenField final : public ScoreField {
 public:
  std::size_t dim() const override { return 2; }
  void scores(std::span<const double>, std::span<const double>, std::span<double> s) const override {
    s[0] = 0.0;
    s[1] = std::numeric_limits<double>::quiet_NaN();
  }
  void scores_with_deriv(std::span<const double> c, std::span<const double> h, std::span<double> s,
                         std::span<double> ds) const override {
    scores(c, h, s);
    ds[0] = ds[1] = 0.0;
  }
  ConditionalScore conditional(std::span<const double>, std::size_t d) const override {
    if (d == 0) return [](double x) { return -x; };
    return [](double) { return std::numeric_limits<double>::quiet_NaN(); };
  }
};

}  // namespace

TEST_CASE("langevin_1d with zero score and zero noise is the identity") {
  const ConditionalScore zero = [](double) { return 0.0; };
  CHECK(langevin_1d(zero, 1.25, 1.0, 1, [] { return 0.0; }) == 1.25);
}

TEST_CASE("langevin_1d reaches the target moments") {
  Rng rng(1);
  std::vector<double> a(10000), b(10000);
  const ConditionalScore std_normal = [](double x) { return -x; };
  const ConditionalScore shifted = [](double x) { return -(x - 2.0); };
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = langevin_1d(std_normal, 0.0, 0.01, 2000, rng);
    b[i] = langevin_1d(shifted, 0.0, 0.01, 2000, rng);
  }
  const auto ma = moments(a), mb = moments(b);
  CHECK(std::abs(ma.mean) < 0.05);
  CHECK(std::abs(ma.var - 1.0) < 0.1);
  CHECK(std::abs(mb.mean - 2.0) < 0.05);
}

TEST_CASE("langevin_1d moments within three standard errors of a 1-D Gaussian") {
  Rng rng(2);
  const double mu = 1.0, var = 0.25;
  const ConditionalScore score = [&](double x) { return -(x - mu) / var; };
  const std::size_t n = 10000;
  std::vector<double> xs(n);
  for (double& x : xs) x = langevin_1d(score, rng.normal(), 0.002, 3000, rng);
  const auto m = moments(xs);
  CHECK(std::abs(m.mean - mu) < 3.0 * std::sqrt(var / n));
  CHECK(std::abs(m.var - var) < 3.0 * var * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("langevin_1d reports divergence with the iteration") {
  Rng rng(3);
  const ConditionalScore nan = [](double) { return std::numeric_limits<double>::quiet_NaN(); };
  try {
    langevin_1d(nan, 0.0, 0.1, 10, rng);
    FAIL("expected divergence");
  } catch (const SamplerDivergence& e) {
    CHECK(e.iteration() == 0);
  }
  const ConditionalScore explode = [](double x) { return 100.0 * x; };
  CHECK_THROWS_AS(langevin_1d(explode, 1.0, 0.5, 1000, rng), SamplerDivergence);
  CHECK_THROWS_AS(langevin_1d(explode, 1.0, 0.0, 10, rng), InputError);
}

TEST_CASE("annealed step sizes follow sigma_i^2 / sigma_L^2") {
  LangevinConfig cfg;
  cfg.eps0 = 2e-5;
  cfg.schedule = geometric_schedule(1.0, 0.04, 10);
  CHECK(annealed_step_size(cfg, 10) == cfg.eps0);
  for (std::size_t i = 1; i <= 10; ++i) {
    const double r = cfg.schedule.sigma(i) / cfg.schedule.sigma(10);
    CHECK(annealed_step_size(cfg, i) / cfg.eps0 == doctest::Approx(r * r).epsilon(1e-15));
  }
  cfg.schedule = NoiseSchedule({0.08, 0.04});
  CHECK(annealed_step_size(cfg, 1) == doctest::Approx(4.0 * cfg.eps0).epsilon(1e-15));
}

TEST_CASE("a single-stage schedule reduces to langevin_1d") {
  const auto g = GaussianField::isotropic(1, 0.7);
  LangevinConfig cfg;
  cfg.eps0 = 0.01;
  cfg.steps = 50;
  cfg.schedule = NoiseSchedule({0.5});
  const std::vector<double> prefix{0.0};
  Rng a(9), b(9);
  const double annealed = annealed_langevin_dim(repeat_stages(g, 1), prefix, 0, cfg, a);
  const double x0 = b.normal();
  CHECK(annealed == langevin_1d(g.conditional(prefix, 0), x0, cfg.eps0, cfg.steps, b));
}

TEST_CASE("joint sampling of analytic Gaussians") {
  LangevinConfig cfg;
  cfg.eps0 = 1e-3;
  cfg.steps = 100;
  cfg.schedule = geometric_schedule(1.0, 0.04, 10);
  const Rng master(17);

  SUBCASE("standard normal") {
    const auto g = GaussianField::isotropic(2, 1.0);
    const auto stages = perturbed_stages(g, cfg.schedule);
    const Batch s = sample_joint(pointers(stages), cfg, 10000, master);
    const Matrix c = sample_cov(s);
    CHECK((c - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.1);
  }
  SUBCASE("correlation 0.8") {
    Matrix cov(2, 2);
    cov << 1.0, 0.8, 0.8, 1.0;
    const GaussianField g(Vector::Zero(2), cov);
    const auto stages = perturbed_stages(g, cfg.schedule);
    const Batch s = sample_joint(pointers(stages), cfg, 10000, master);
    const Matrix c = sample_cov(s);
    CHECK(std::abs(c(0, 1) / std::sqrt(c(0, 0) * c(1, 1)) - 0.8) < 0.07);
    CHECK(std::abs(c(0, 0) - 1.0) < 0.1);
    CHECK(std::abs(c(1, 1) - 1.0) < 0.1);
  }
  SUBCASE("an AR field built from exact conditionals reproduces its Gaussian") {
    Matrix cov(3, 3);
    cov << 1.0, 0.5, 0.2, 0.5, 0.8, -0.3, 0.2, -0.3, 1.2;
    const Vector mu = (Vector(3) << 0.5, -1.0, 0.0).finished();
    const GaussianField g(mu, cov);
    const Batch s = sample_joint(repeat_stages(g, 10), cfg, 10000, master);
    const Eigen::RowVectorXd m = s.colwise().mean();
    CHECK((m.transpose() - mu).cwiseAbs().maxCoeff() < 0.05);
    CHECK((sample_cov(s) - cov).cwiseAbs().maxCoeff() < 0.1);
  }
}

TEST_CASE("joint sampling is deterministic and thread-count independent") {
  LangevinConfig cfg;
  cfg.steps = 20;
  cfg.schedule = geometric_schedule(1.0, 0.04, 5);
  const auto g = GaussianField::isotropic(3, 1.0);
  const auto st = repeat_stages(g, 5);
  const Batch a = sample_joint(st, cfg, 64, Rng(5));
  const Batch b = sample_joint(st, cfg, 64, Rng(5));
  const Batch c = sample_joint(st, cfg, 64, Rng(5), 4);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(a != sample_joint(st, cfg, 64, Rng(6)));
}

TEST_CASE("sampler errors name the sample and dimension") {
  LangevinConfig cfg;
  cfg.steps = 5;
  cfg.schedule = NoiseSchedule({0.1});
  const BrokenField f;
  for (std::size_t threads : {std::size_t{1}, std::size_t{3}}) {
    try {
      sample_joint(repeat_stages(f, 1), cfg, 4, Rng(1), threads);
      FAIL("expected divergence");
    } catch (const SamplerDivergence& e) {
      CHECK(e.sample() == 0);
      CHECK(e.dim() == 1);
    }
  }
  const auto g = GaussianField::isotropic(2, 1.0);
  CHECK_THROWS_AS(sample_joint(repeat_stages(g, 2), cfg, 4, Rng(1)), ContractError);
}

TEST_CASE("earlier dimensions are never revisited") {
  const auto g = GaussianField::isotropic(3, 1.0);
  const RecordingField rec(g);
  LangevinConfig cfg;
  cfg.steps = 3;
  cfg.schedule = geometric_schedule(1.0, 0.1, 3);
  const Batch s = sample_joint(repeat_stages(rec, 3), cfg, 1, Rng(2));
  std::map<std::size_t, int> per_dim;
  std::size_t last = 0;
  for (const auto& [d, prefix] : rec.calls) {
    CHECK(d >= last);
    last = d;
    ++per_dim[d];
    for (std::size_t j = 0; j < d; ++j) CHECK(prefix[j] == s(0, static_cast<Eigen::Index>(j)));
  }
  CHECK(per_dim.size() == 3);
  for (const auto& [d, n] : per_dim) CHECK(n == 3);
}

TEST_CASE("single-step denoising") {
  const ZeroField z(2);
  Batch x(2, 2);
  x << 1.0, -2.0, 0.5, 3.0;
  CHECK(single_step_denoise(z, x, 0.3) == x);
  // p = N(0, 1), sigma^2 = 1: the noisy density is N(0, 2)
  const auto noisy = GaussianField::isotropic(1, std::sqrt(2.0));
  Batch one(1, 1);
  one << 1.0;
  CHECK(single_step_denoise(noisy, one, 1.0)(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(single_step_denoise(z, x, 0.0), InputError);
}

TEST_CASE("restoration from a clean point stays close and is deterministic") {
  const auto g = GaussianField::isotropic(2, 1.0);
  LangevinConfig cfg;
  cfg.eps0 = 1e-6;
  cfg.steps = 5;
  cfg.schedule = geometric_schedule(0.2, 0.04, 3);
  Batch x(3, 2);
  x << 0.1, 0.2, -0.5, 0.3, 1.0, -1.0;
  const Batch r = langevin_restore(repeat_stages(g, 3), x, cfg, Rng(3));
  for (Eigen::Index i = 0; i < x.rows(); ++i) CHECK((r.row(i) - x.row(i)).norm() < 0.1);
  CHECK(r == langevin_restore(repeat_stages(g, 3), x, cfg, Rng(3), 2));
}
