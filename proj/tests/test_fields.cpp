#include <cmath>
#include <limits>
#include <numbers>

#include "csm/ad/derivatives.hpp"
#include "csm/fields/ar_csm_model.hpp"
#include "csm/fields/gaussian_field.hpp"
#include "csm/fields/tractable_ar_model.hpp"
#include "doctest.h"
#include "fd.hpp"

using namespace csm;

namespace {

Matrix cov2(double a, double b, double c) {
  Matrix m(2, 2);
  m << a, b, b, c;
  return m;
}

ArCsmModel small_ar(std::size_t dim, std::uint64_t seed, std::vector<std::size_t> order = {}) {
  ArCsmOptions o;
  o.dim = dim;
  o.context_width = 6;
  o.made_hidden = {12};
  o.head_hidden = {10, 10};
  o.order = std::move(order);
  Rng rng(seed);
  return ArCsmModel(o, rng);
}

// Exact conditional of x_d given x_<d by the Schur complement.
std::pair<double, double> schur_conditional(const Vector& mu, const Matrix& cov,
                                            std::span<const double> x, std::size_t d) {
  if (d == 0) return {mu(0), cov(0, 0)};
  const Eigen::Index n = static_cast<Eigen::Index>(d);
  const Matrix s11 = cov.topLeftCorner(n, n);
  const Vector s12 = cov.block(0, n, n, 1);
  Vector r(n);
  for (Eigen::Index j = 0; j < n; ++j) r(j) = x[j] - mu(j);
  const Vector w = s11.ldlt().solve(s12);
  return {mu(n) + w.dot(r), cov(n, n) - w.dot(s12)};
}

}  // namespace

TEST_CASE("Gaussian conditional scores, worked examples") {
  const auto std_normal = GaussianField::isotropic(2, 1.0);
  const std::vector<double> ones{1.0, 1.0};
  CHECK(conditional_score(std_normal, ones, 1) == -1.0);
  CHECK(ood_statistic(std_normal, ones) == -2.0);
  const std::vector<double> zeros{0.0, 0.0};
  CHECK(ood_statistic(std_normal, zeros) == 0.0);

  const auto narrow = GaussianField::isotropic(5, 0.1);
  const std::vector<double> x(5, 0.1);
  for (std::size_t d = 0; d < 5; ++d) CHECK(conditional_score(narrow, x, d) == doctest::Approx(-10.0).epsilon(1e-12));

  const GaussianField corr(Vector::Zero(2), cov2(1.0, 0.5, 1.0));
  CHECK(conditional_score(corr, ones, 1) == doctest::Approx(-2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("score field input errors") {
  const auto f = GaussianField::isotropic(2, 1.0);
  const std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(conditional_score(f, bad, 0), InputError);
  CHECK_THROWS_AS(score_all(f, bad), InputError);
  CHECK_THROWS_AS(ood_statistic(f, bad), InputError);
  const std::vector<double> ok{1.0, 2.0};
  CHECK_THROWS_AS(conditional_score(f, ok, 2), std::out_of_range);
  const std::vector<double> short_x{1.0};
  CHECK_THROWS_AS(conditional_score(f, short_x, 0), ContractError);
  CHECK_THROWS_AS(GaussianField(Vector::Zero(2), cov2(1.0, 2.0, 1.0)), InputError);
}

TEST_CASE("score_all at the origin of a standard normal") {
  const auto f = GaussianField::isotropic(3, 1.0);
  const std::vector<double> x(3, 0.0);
  const auto r = score_all(f, x);
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(r.score[d] == 0.0);
    CHECK(r.deriv[d] == -1.0);
  }
}

TEST_CASE("score_all equals per-dimension calls bit for bit") {
  Rng rng(1);
  const GaussianField g(Vector::Constant(3, 0.5), [] {
    Matrix m(3, 3);
    m << 2.0, 0.3, -0.4, 0.3, 1.0, 0.2, -0.4, 0.2, 1.5;
    return m;
  }());
  const auto ar = small_ar(3, 2);
  Rng init(3);
  TractableArOptions to;
  to.dim = 3;
  to.components = 3;
  const TractableArModel tr(to, init);
  const ScoreField* fields[] = {&g, &ar, &tr};
  for (const ScoreField* f : fields) {
    for (int k = 0; k < 20; ++k) {
      std::vector<double> x(3);
      for (double& v : x) v = rng.normal();
      const auto all = score_all(*f, x);
      for (std::size_t d = 0; d < 3; ++d) {
        CHECK(all.score[d] == conditional_score(*f, x, d));
        CHECK(all.score[d] == f->conditional(x, d)(x[d]));
      }
    }
  }
}

TEST_CASE("autoregressive property: later coordinates never change s_d") {
  Rng rng(7);
  const auto ar = small_ar(4, 5);
  const auto ar_perm = small_ar(4, 6, {2, 0, 3, 1});
  const GaussianField g(Vector::Zero(4), [] {
    Matrix m = Matrix::Identity(4, 4) * 1.5;
    m(0, 1) = m(1, 0) = 0.4;
    m(2, 3) = m(3, 2) = -0.3;
    m(1, 3) = m(3, 1) = 0.2;
    return m;
  }());
  const ScoreField* fields[] = {&ar, &ar_perm, &g};
  for (const ScoreField* f : fields) {
    const auto order = f->ordering();
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(4);
      for (double& v : x) v = rng.normal();
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t d = order[k];
        const double base = conditional_score(*f, x, d);
        std::vector<double> y = x;
        for (std::size_t later = k + 1; later < 4; ++later) y[order[later]] += rng.normal() * 3.0;
        CHECK(conditional_score(*f, y, d) == base);
      }
    }
  }
}

TEST_CASE("context vectors have the masked Jacobian") {
  const auto ar = small_ar(4, 9);
  const std::size_t c = ar.options().context_width;
  Rng rng(10);
  std::vector<double> x(4);
  for (double& v : x) v = rng.normal();
  const auto theta = ad::lift<ad::Dual1>(ar.params().flat());
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<ad::Dual1> xs(x.begin(), x.end());
    xs[j].t = 1.0;
    std::vector<ad::Dual1> ctx(4 * c);
    ar.contexts<ad::Dual1>(theta, {}, xs, ctx);
    for (std::size_t d = 0; d <= j; ++d) {
      for (std::size_t k = 0; k < c; ++k) CHECK(ctx[d * c + k].t == 0.0);
    }
    // and the context of the next dimension does depend on x_j
    if (j + 1 < 4) {
      double mag = 0.0;
      for (std::size_t k = 0; k < c; ++k) mag += std::abs(ctx[(j + 1) * c + k].t);
      CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("score head parameters are shared across dimensions") {
  const auto a = small_ar(2, 1);
  const auto b = small_ar(20, 1);
  CHECK(a.head_param_count() == b.head_param_count());
  CHECK(a.params().entry("head.l0.w").size == b.params().entry("head.l0.w").size);
}

TEST_CASE("AR-CSM x_d-derivatives match finite differences of the scores") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ar = small_ar(3, 100 + trial);
    std::vector<double> x(3);
    for (double& v : x) v = rng.normal();
    const auto all = score_all(ar, x);
    for (std::size_t d = 0; d < 3; ++d) {
      auto f = [&](std::span<const double> y) { return conditional_score(ar, y, d); };
      CHECK(fd::close(all.deriv[d], fd::partial(f, x, d), 1e-4, 1e-8));
    }
  }
}

TEST_CASE("Gaussian conditional scores agree with differentiated exact conditional log-densities") {
  Matrix cov(3, 3);
  cov << 1.3, 0.4, -0.2, 0.4, 0.8, 0.1, -0.2, 0.1, 0.6;
  const Vector mu = (Vector(3) << 0.2, -0.5, 1.0).finished();
  const GaussianField g(mu, cov);
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> x(3);
    for (double& v : x) v = rng.normal();
    for (std::size_t d = 0; d < 3; ++d) {
      const auto [m, v] = schur_conditional(mu, cov, x, d);
      auto logc = [&](std::span<const double> y) {
        return -0.5 * (y[d] - m) * (y[d] - m) / v - 0.5 * std::log(2 * std::numbers::pi * v);
      };
      // quadratic in x_d, so a wider step is exact up to rounding
      CHECK(std::abs(conditional_score(g, x, d) - fd::partial(logc, x, d, 1e-2)) < 1e-8);
      CHECK(std::abs(g.conditional_variance(d) - v) < 1e-12);
    }
  }
}

TEST_CASE("perturbed Gaussian conditionals match the Schur complement of the noisy joint") {
  Matrix cov(2, 2);
  cov << 1.0, 0.8, 0.8, 1.0;
  const GaussianField g(Vector::Zero(2), cov);
  const double sc = 0.05, sh = 0.3;
  const auto p = g.perturbed(sc, sh);
  // joint of (x_1 + sc e1, x_2 + sh e2) as far as the second conditional is concerned
  Matrix noisy = cov;
  noisy(0, 0) += sc * sc;
  noisy(1, 1) += sh * sh;
  const std::vector<double> x{0.7, -0.2};
  const auto [m, v] = schur_conditional(Vector::Zero(2), noisy, x, 1);
  CHECK(conditional_score(p, x, 1) == doctest::Approx(-(x[1] - m) / v).epsilon(1e-12));
  // the first conditional sees no context, only head noise
  CHECK(conditional_score(p, x, 0) == doctest::Approx(-x[0] / (1.0 + sh * sh)).epsilon(1e-12));
}

TEST_CASE("tractable model fixed to standard normal conditionals") {
  Rng rng(1);
  TractableArOptions o;
  o.dim = 2;
  TractableArModel m(o, rng);
  m.set_standard_normal();
  const std::vector<double> zero{0.0, 0.0};
  CHECK(m.log_density(zero) == doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(m.log_density(zero) == doctest::Approx(-1.837877).epsilon(1e-6));
  const std::vector<double> x{1.0, 0.0};
  CHECK(m.log_density(x) == doctest::Approx(-std::log(2 * std::numbers::pi) - 0.5).epsilon(1e-14));
}

TEST_CASE("tractable conditionals integrate to one along a slice") {
  for (std::size_t comps : {std::size_t{1}, std::size_t{4}}) {
    Rng rng(comps);
    TractableArOptions o;
    o.dim = 3;
    o.components = comps;
    const TractableArModel m(o, rng);
    for (std::size_t d = 0; d < 3; ++d) {
      std::vector<double> x{0.4, -1.1, 0.0};
      const double lo = -30.0, hi = 30.0;
      const int n = 60000;
      const double h = (hi - lo) / n;
      double acc = 0.0;
      for (int k = 0; k <= n; ++k) {
        x[d] = lo + h * k;
        const double w = (k == 0 || k == n) ? 0.5 : 1.0;
        acc += w * std::exp(m.log_conditional<double>(m.params().flat(), x, d));
      }
      CHECK(std::abs(acc * h - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("tractable log-density is the sum of its conditionals and finite") {
  Rng rng(2);
  TractableArOptions o;
  o.dim = 3;
  o.components = 2;
  const TractableArModel m(o, rng);
  const std::vector<double> x{0.3, 5.0, -2.0};
  double sum = 0.0;
  for (std::size_t d = 0; d < 3; ++d) sum += m.log_conditional<double>(m.params().flat(), x, d);
  CHECK(m.log_density(x) == doctest::Approx(sum).epsilon(1e-14));
  const std::vector<double> far{1e3, -1e3, 1e3};
  CHECK(std::isfinite(m.log_density(far)));
}

TEST_CASE("tractable analytic scores equal autodiff of the log-density") {
  for (std::size_t comps : {std::size_t{1}, std::size_t{3}}) {
    Rng rng(40 + comps);
    TractableArOptions o;
    o.dim = 3;
    o.components = comps;
    const TractableArModel m(o, rng);
    const auto theta = ad::lift<ad::Dual1>(m.params().flat());
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(3);
      for (double& v : x) v = rng.normal() * 2.0;
      const auto all = score_all(m, x);
      for (std::size_t d = 0; d < 3; ++d) {
        auto logc = [&](std::span<const ad::Dual1> xs) { return m.log_conditional<ad::Dual1>(theta, xs, d); };
        const auto r = ad::directional_deriv(logc, x, d);
        CHECK(std::abs(r.deriv - all.score[d]) < 1e-8);
      }
      // the last coordinate appears in no later conditional
      auto logq = [&](std::span<const ad::Dual1> xs) { return m.log_density_t<ad::Dual1>(theta, xs); };
      CHECK(std::abs(ad::directional_deriv(logq, x, 2).deriv - all.score[2]) < 1e-8);
    }
  }
}

TEST_CASE("OOD statistic is larger near the mode than far out") {
  const auto f = GaussianField::isotropic(2, 1.0);
  const std::vector<double> near{0.1, -0.1}, far{3.0, 3.0};
  CHECK(ood_statistic(f, near) > ood_statistic(f, far));
}
