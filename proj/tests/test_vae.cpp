#include <cmath>
#include <numbers>

#include "csm/data/datasets.hpp"
#include "csm/fields/gaussian_field.hpp"
#include "csm/vae/implicit_vae.hpp"
#include "doctest.h"

using namespace csm;
using namespace csm::vae;

namespace {

// Linear encoder z = b + L eps with A = 0, independent of x.
ImplicitEncoder linear_encoder(std::size_t latent, std::size_t obs, const std::vector<double>& b,
                               const Matrix& lower) {
  Rng rng(3);
  EncoderOptions o;
  o.latent_dim = latent;
  o.obs_dim = obs;
  ImplicitEncoder enc(o, rng);
  for (double& v : enc.params().view("A")) v = 0.0;
  for (std::size_t d = 0; d < latent; ++d) {
    enc.params().flat()[enc.bias_index(d)] = b[d];
    for (std::size_t j = 0; j <= d; ++j) {
      enc.params().flat()[enc.lower_index(d, j)] =
          lower(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j));
    }
  }
  return enc;
}

// Exact score of [x ; z] with x ~ N(0, I) independent of z ~ N(b, L L^T).
GaussianField oracle_score(std::size_t obs, const std::vector<double>& b, const Matrix& lower) {
  const auto latent = static_cast<Eigen::Index>(b.size());
  const auto n = static_cast<Eigen::Index>(obs) + latent;
  Vector mean = Vector::Zero(n);
  Matrix cov = Matrix::Identity(n, n);
  for (Eigen::Index d = 0; d < latent; ++d) mean(static_cast<Eigen::Index>(obs) + d) = b[static_cast<std::size_t>(d)];
  cov.bottomRightCorner(latent, latent) = lower * lower.transpose();
  return GaussianField(mean, cov);
}

Batch single_row(std::size_t obs) { return Batch::Constant(1, static_cast<Eigen::Index>(obs), 0.3); }

ArCsmOptions small_net() {
  ArCsmOptions o;
  o.context_width = 4;
  o.made_hidden = {8};
  o.head_hidden = {8};
  return o;
}

}  // namespace

TEST_CASE("entropy_grad: 1-D Gaussian encoder recovers dH/dsigma = 1/sigma and dH/dmu = 0") {
  const double sigma = 0.5;
  const Matrix l = Matrix::Constant(1, 1, sigma);
  const auto enc = linear_encoder(1, 1, {0.7}, l);
  const auto score = oracle_score(1, {0.7}, l);
  for (std::size_t n_mc : {std::size_t{10000}, std::size_t{100000}}) {
    Rng rng(11);
    const auto g = entropy_grad(enc, score, single_row(1), n_mc, rng);
    const std::size_t ks = enc.lower_index(0, 0);
    const std::size_t km = enc.bias_index(0);
    CHECK(std::abs(g.grad[ks] - 1.0 / sigma) <= 3.0 * g.std_error[ks]);
    CHECK(std::abs(g.grad[km]) <= 3.0 * g.std_error[km]);
    CHECK(g.std_error[ks] > 0.0);
    const std::size_t ka = enc.params().entry("A").offset;
    CHECK(std::abs(g.grad[ka]) <= 3.0 * g.std_error[ka]);
  }
}

TEST_CASE("entropy_grad: 2-D lower-triangular encoder recovers dH/dL_dd = 1/L_dd") {
  Matrix l(2, 2);
  l << 1.5, 0.0, 0.7, 0.8;
  const auto enc = linear_encoder(2, 2, {0.0, 0.0}, l);
  const auto score = oracle_score(2, {0.0, 0.0}, l);
  Rng rng(5);
  const auto g = entropy_grad(enc, score, single_row(2), 100000, rng);
  const auto exact = enc.entropy_gradient();
  for (std::size_t k = 0; k < g.grad.size(); ++k) {
    if (g.std_error[k] == 0.0) {
      CHECK(g.grad[k] == doctest::Approx(exact[k]));
    } else {
      CHECK(std::abs(g.grad[k] - exact[k]) <= 3.0 * g.std_error[k]);
    }
  }
  CHECK(exact[enc.lower_index(0, 0)] == doctest::Approx(1.0 / 1.5));
  CHECK(exact[enc.lower_index(1, 1)] == doctest::Approx(1.0 / 0.8));
  CHECK(exact[enc.lower_index(1, 0)] == 0.0);
}

TEST_CASE("encoder entropy matches the Gaussian closed form") {
  Matrix l(2, 2);
  l << 1.5, 0.0, 0.7, 0.8;
  const auto enc = linear_encoder(2, 2, {0.0, 0.0}, l);
  const Matrix cov = l * l.transpose();
  const double h = 0.5 * std::log(std::pow(2.0 * std::numbers::pi * std::numbers::e, 2) * cov.determinant());
  CHECK(enc.entropy() == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("entropy_grad refuses a stale score model and mismatched shapes") {
  Rng rng(1);
  EncoderOptions o;
  o.latent_dim = 2;
  o.obs_dim = 2;
  ImplicitEncoder enc(o, rng);
  EncoderScoreModel score(2, 2, small_net(), rng);
  const Batch x = single_row(2);
  CHECK(score.stale());
  CHECK_THROWS_AS(entropy_grad(enc, score, x, 4, rng), ContractError);
  score.mark_fresh();
  CHECK_NOTHROW(entropy_grad(enc, score, x, 4, rng));
  CHECK_THROWS_AS(entropy_grad(enc, GaussianField::isotropic(3, 1.0), x, 4, rng), ContractError);
  CHECK_THROWS_AS(entropy_grad(enc, score, single_row(3), 4, rng), ContractError);
}

TEST_CASE("entropy_grad holds the score constant: its value moves, its parameters do not") {
  Rng rng(2);
  EncoderOptions o;
  o.latent_dim = 2;
  o.obs_dim = 2;
  o.residual_hidden = {8};
  ImplicitEncoder enc(o, rng);
  EncoderScoreModel score(2, 2, small_net(), rng);
  score.mark_fresh();
  const Batch x = Batch::Constant(3, 2, 0.5);
  const std::vector<double> before(score.params().flat().begin(), score.params().flat().end());

  Rng r1(9);
  const auto g1 = entropy_grad(enc, score, x, 2, r1);
  CHECK(g1.grad.size() == enc.params().size());
  CHECK(std::vector<double>(score.params().flat().begin(), score.params().flat().end()) == before);

  for (double& v : score.params().flat()) v *= 1.5;
  Rng r2(9);
  const auto g2 = entropy_grad(enc, score, x, 2, r2);
  double diff = 0.0;
  for (std::size_t k = 0; k < g1.grad.size(); ++k) diff += std::abs(g1.grad[k] - g2.grad[k]);
  CHECK(diff > 0.0);
}

TEST_CASE("z_d depends on eps_<=d only") {
  Rng rng(4);
  EncoderOptions o;
  o.latent_dim = 4;
  o.obs_dim = 3;
  o.residual_hidden = {16};
  ImplicitEncoder enc(o, rng);
  const std::vector<double> x{0.2, -0.4, 1.0};
  std::vector<double> eps{0.3, -1.1, 0.5, 0.9};
  std::vector<double> z0(4), z1(4);
  enc.sample(x, eps, z0);
  for (std::size_t j = 0; j < 4; ++j) {
    auto e = eps;
    e[j] += 0.37;
    enc.sample(x, e, z1);
    for (std::size_t d = 0; d < 4; ++d) {
      if (d < j) {
        CHECK(z1[d] == z0[d]);
      } else if (d == j) {
        CHECK(z1[d] != z0[d]);
      }
    }
  }
}

TEST_CASE("encoder score model: zero on x, autoregressive on z") {
  Rng rng(6);
  EncoderScoreModel score(3, 2, small_net(), rng);
  const std::vector<double> u{0.1, -0.2, 0.3, 0.4, -0.5};
  std::vector<double> s(5), s2(5);
  score.scores(u, u, s);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 0.0);
  auto v = u;
  v[4] = 2.0;  // last latent coordinate
  score.scores(v, v, s2);
  CHECK(s2[2] == s[2]);
  CHECK(s2[3] == s[3]);
  CHECK(s2[4] != s[4]);
  for (std::size_t d = 0; d < 5; ++d) CHECK(score.conditional(u, d)(u[d]) == doctest::Approx(s[d]).epsilon(1e-12));
}

TEST_CASE("ppca_log_likelihood matches a direct Gaussian log-likelihood at the PPCA solution") {
  Rng rng(8);
  const Batch x = linear_gaussian_data(4, 2, 500, 0.5, rng);
  const double ll = ppca_log_likelihood(x, 2);

  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Matrix c = x.rowwise() - mu;
  const Matrix s = c.transpose() * c / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  const double sigma2 = (eig.eigenvalues()(0) + eig.eigenvalues()(1)) / 2.0;
  Matrix w = eig.eigenvectors().rightCols(2);
  for (Eigen::Index k = 0; k < 2; ++k) w.col(k) *= std::sqrt(eig.eigenvalues()(2 + k) - sigma2);
  const Matrix model_cov = w * w.transpose() + sigma2 * Matrix::Identity(4, 4);
  const Eigen::LLT<Matrix> llt(model_cov);
  const Matrix lower = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index d = 0; d < 4; ++d) log_det += 2.0 * std::log(lower(d, d));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector r = (x.row(i) - mu).transpose();
    acc += -0.5 * (4.0 * std::log(2.0 * std::numbers::pi) + log_det + r.dot(llt.solve(r)));
  }
  CHECK(ll == doctest::Approx(acc / static_cast<double>(x.rows())).epsilon(1e-10));
  CHECK_THROWS_AS(ppca_log_likelihood(x, 4), InputError);
}

TEST_CASE("train_vae: mixture data, reconstruction error falls by half") {
  DatasetSpec spec;
  spec.kind = DatasetKind::kMixture2d;
  spec.n_train = 1000;
  spec.seed = 21;
  const Batch data = make_dataset(spec).train;
  Rng init(1);
  EncoderOptions o;
  o.latent_dim = 2;
  o.obs_dim = 2;
  o.residual_hidden = {16};
  ImplicitEncoder enc(o, init);
  Decoder dec(2, 2, {32, 32}, nn::Activation::kElu, init);
  EncoderScoreModel score(2, 2, small_net(), init);
  VaeTrainConfig tc;
  tc.iters = 2000;
  tc.batch_size = 32;
  Rng eval(2);
  const double before = reconstruction_mse(enc, dec, data, eval);
  Rng train_rng(3);
  const auto result = train_vae(enc, dec, score, data, tc, train_rng);
  const double after = reconstruction_mse(enc, dec, data, eval);
  CHECK(result.trace.rows.size() == 2000);
  CHECK(result.score_loss.size() == 2000);
  CHECK(after <= 0.5 * before);
  CHECK(score.stale());
}

TEST_CASE("train_vae input errors") {
  Rng rng(1);
  EncoderOptions o;
  o.latent_dim = 9;
  o.obs_dim = 2;
  ImplicitEncoder big(o, rng);
  Decoder dec9(9, 2, {}, nn::Activation::kElu, rng);
  EncoderScoreModel score9(9, 2, small_net(), rng);
  const Batch x = Batch::Constant(4, 2, 0.1);
  CHECK_THROWS_AS(train_vae(big, dec9, score9, x, VaeTrainConfig{}, rng), InputError);

  o.latent_dim = 2;
  ImplicitEncoder enc(o, rng);
  Decoder dec(2, 3, {}, nn::Activation::kElu, rng);
  EncoderScoreModel score(2, 2, small_net(), rng);
  CHECK_THROWS_AS(train_vae(enc, dec, score, x, VaeTrainConfig{}, rng), ContractError);
}
