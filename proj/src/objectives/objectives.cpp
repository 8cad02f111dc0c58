#include "csm/objectives/objectives.hpp"

#include <string>

#include "csm/ad/param_store.hpp"
#include "csm/ad/tape.hpp"

namespace csm {

using ad::Dual1;
using ad::Dual2;

namespace {

void check_batch(const Batch& batch, std::size_t dim, const char* where) {
  if (batch.rows() == 0) throw InputError(std::string(where) + ": empty batch");
  if (static_cast<std::size_t>(batch.cols()) != dim) {
    throw ContractError(std::string(where) + ": batch has " + std::to_string(batch.cols()) +
                        " columns, field has dimension " + std::to_string(dim));
  }
  require_finite(batch, where);
}

void check_same_shape(const Batch& a, const Batch& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(where) + ": noise shape does not match batch");
  }
}

Batch standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Batch out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  return out;
}

double csm_value(const ScoreField& field, const Batch& context, const Batch& head) {
  const std::size_t dim = field.dim();
  std::vector<double> s(dim), ds(dim);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < head.rows(); ++i) {
    field.scores_with_deriv(row(context, i), row(head, i), s, ds);
    for (std::size_t d = 0; d < dim; ++d) acc += 0.5 * s[d] * s[d] + ds[d];
  }
  return acc / static_cast<double>(head.rows());
}

// Reverse sweep over forward-mode values. Each output s_d carries
// (value, ds_d/dx_d); seeding it with (1, s_d) leaves the gradient of
// s_d^2 / 2 + ds_d/dx_d in the tangent part of the parameter adjoints.
LossGrad csm_grad(const TrainableScoreField& field, const Batch& context, const Batch& head) {
  const std::size_t dim = field.dim();
  const auto theta = field.params().flat();
  ad::Tape<Dual1> tape;
  const ad::BoundParams<Dual1> params = ad::bind<Dual1>(tape, theta);
  const std::size_t mark = tape.size();
  std::vector<V1> ctx(dim), hx(dim), s(dim);
  std::vector<ad::NodeId> roots(dim);
  std::vector<Dual1> seeds(dim);
  LossGrad out{0.0, std::vector<double>(theta.size(), 0.0)};
  for (Eigen::Index i = 0; i < head.rows(); ++i) {
    tape.truncate(mark);
    const auto c = row(context, i);
    const auto h = row(head, i);
    for (std::size_t j = 0; j < dim; ++j) ctx[j] = ad::make_leaf(tape, Dual1(c[j], 0.0));
    for (std::size_t j = 0; j < dim; ++j) hx[j] = ad::make_leaf(tape, Dual1(h[j], 1.0));
    field.scores(params.span(), ctx, hx, s);
    for (std::size_t d = 0; d < dim; ++d) {
      const Dual1 v = s[d].value();
      out.loss += 0.5 * v.v * v.v + v.t;
      roots[d] = s[d].id();
      seeds[d] = Dual1(1.0, v.v);
    }
    const auto adj = tape.backward(roots, seeds);
    for (std::size_t p = 0; p < theta.size(); ++p) out.grad[p] += adj[params.first + p].t;
  }
  const double inv = 1.0 / static_cast<double>(head.rows());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

Batch perturb(const Batch& batch, double sigma, const Batch& noise) {
  Batch out = batch;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += sigma * noise.data()[i];
  return out;
}

// Evaluates log q with x seeded along `dir` on both tangent levels: the
// first-order part is dir^T grad log q, the second-order part dir^T Hess dir.
Dual2 second_order_along(const LogDensityModel& model, std::span<const double> x,
                         std::span<const double> dir, std::vector<Dual2>& xs) {
  for (std::size_t j = 0; j < x.size(); ++j) xs[j] = Dual2(Dual1(x[j], dir[j]), Dual1(dir[j], 0.0));
  return model.log_density(std::span<const Dual2>(xs));
}

class DirectionalSecondOrderTape {
 public:
  DirectionalSecondOrderTape(const TrainableLogDensity& model)
      : model_(model), theta_(model.params().flat()) {
    params_ = ad::bind<Dual2>(tape_, theta_);
    mark_ = tape_.size();
    xs_.resize(model.dim());
  }

  // Adds the gradient of (dir^T Hess dir + (dir^T grad)^2 / 2) into `grad`
  // and returns its value.
  double accumulate(std::span<const double> x, std::span<const double> dir,
                    std::vector<double>& grad) {
    tape_.truncate(mark_);
    for (std::size_t j = 0; j < x.size(); ++j) {
      xs_[j] = ad::make_leaf(tape_, Dual2(Dual1(x[j], dir[j]), Dual1(dir[j], 0.0)));
    }
    const V2 y = model_.log_density(params_.span(), std::span<const V2>(xs_));
    const double g = y.value().v.t;
    const double h = y.value().t.t;
    const ad::NodeId root = y.id();
    const Dual2 seed(Dual1(1.0, 0.0), Dual1(g, 0.0));
    const auto adj = tape_.backward(std::span<const ad::NodeId>(&root, 1),
                                    std::span<const Dual2>(&seed, 1));
    for (std::size_t p = 0; p < theta_.size(); ++p) grad[p] += adj[params_.first + p].t.t;
    return 0.5 * g * g + h;
  }

 private:
  const TrainableLogDensity& model_;
  std::span<const double> theta_;
  ad::Tape<Dual2> tape_;
  ad::BoundParams<Dual2> params_;
  std::size_t mark_ = 0;
  std::vector<V2> xs_;
};

Batch rademacher(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Batch out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.rademacher();
  return out;
}

}  // namespace

double csm_loss(const ScoreField& field, const Batch& batch) {
  check_batch(batch, field.dim(), "csm_loss");
  return csm_value(field, batch, batch);
}

LossGrad csm_loss_grad(const TrainableScoreField& field, const Batch& batch) {
  check_batch(batch, field.dim(), "csm_loss");
  return csm_grad(field, batch, batch);
}

double l_csm_divergence(const ScoreField& model, const ScoreField& data, const Batch& batch) {
  if (model.dim() != data.dim()) throw ContractError("l_csm_divergence: dimension mismatch");
  check_batch(batch, model.dim(), "l_csm_divergence");
  const std::size_t dim = model.dim();
  std::vector<double> sq(dim), sp(dim);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const auto x = row(batch, i);
    model.scores(x, x, sq);
    data.scores(x, x, sp);
    for (std::size_t d = 0; d < dim; ++d) acc += 0.5 * (sp[d] - sq[d]) * (sp[d] - sq[d]);
  }
  return acc / static_cast<double>(batch.rows());
}

double annealed_csm_loss(const ScoreField& field, const Batch& batch, const StageView& stage,
                         const Batch& context_noise, const Batch& head_noise) {
  check_batch(batch, field.dim(), "annealed_csm_loss");
  check_same_shape(batch, context_noise, "annealed_csm_loss");
  check_same_shape(batch, head_noise, "annealed_csm_loss");
  return csm_value(field, perturb(batch, stage.context_sigma, context_noise),
                   perturb(batch, stage.sigma, head_noise));
}

LossGrad annealed_csm_loss_grad(const TrainableScoreField& field, const Batch& batch,
                                const StageView& stage, const Batch& context_noise,
                                const Batch& head_noise) {
  check_batch(batch, field.dim(), "annealed_csm_loss");
  check_same_shape(batch, context_noise, "annealed_csm_loss");
  check_same_shape(batch, head_noise, "annealed_csm_loss");
  return csm_grad(field, perturb(batch, stage.context_sigma, context_noise),
                  perturb(batch, stage.sigma, head_noise));
}

double annealed_csm_loss(const ScoreField& field, const Batch& batch, const StageView& stage,
                         Rng& rng) {
  const Batch ctx = standard_normal(batch.rows(), batch.cols(), rng);
  const Batch head = standard_normal(batch.rows(), batch.cols(), rng);
  return annealed_csm_loss(field, batch, stage, ctx, head);
}

LossGrad annealed_csm_loss_grad(const TrainableScoreField& field, const Batch& batch,
                                const StageView& stage, Rng& rng) {
  const Batch ctx = standard_normal(batch.rows(), batch.cols(), rng);
  const Batch head = standard_normal(batch.rows(), batch.cols(), rng);
  return annealed_csm_loss_grad(field, batch, stage, ctx, head);
}

double annealed_csm_loss(const ScoreField& field, const Batch& batch, std::size_t stage,
                         const NoiseSchedule& schedule, Rng& rng) {
  return annealed_csm_loss(field, batch, stage_view(schedule, stage), rng);
}

double sm_loss(const LogDensityModel& model, const Batch& batch) {
  check_batch(batch, model.dim(), "sm_loss");
  const std::size_t dim = model.dim();
  std::vector<Dual2> xs(dim);
  std::vector<double> e(dim, 0.0);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const auto x = row(batch, i);
    for (std::size_t d = 0; d < dim; ++d) {
      e[d] = 1.0;
      const Dual2 y = second_order_along(model, x, e, xs);
      e[d] = 0.0;
      acc += 0.5 * y.v.t * y.v.t + y.t.t;
    }
  }
  return acc / static_cast<double>(batch.rows());
}

LossGrad sm_loss_grad(const TrainableLogDensity& model, const Batch& batch) {
  check_batch(batch, model.dim(), "sm_loss");
  const std::size_t dim = model.dim();
  DirectionalSecondOrderTape pass(model);
  LossGrad out{0.0, std::vector<double>(model.params().size(), 0.0)};
  std::vector<double> e(dim, 0.0);
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      e[d] = 1.0;
      out.loss += pass.accumulate(row(batch, i), e, out.grad);
      e[d] = 0.0;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.rows());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

double ssm_loss(const LogDensityModel& model, const Batch& batch, const Batch& projections) {
  check_batch(batch, model.dim(), "ssm_loss");
  if (projections.rows() == 0 || projections.cols() != batch.cols()) {
    throw ContractError("ssm_loss: projection shape does not match batch");
  }
  const std::size_t dim = model.dim();
  const Eigen::Index per_sample = std::max<Eigen::Index>(1, projections.rows() / batch.rows());
  std::vector<Dual2> xs(dim);
  double acc = 0.0;
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    for (Eigen::Index m = 0; m < per_sample; ++m, ++k) {
      const Dual2 y = second_order_along(model, row(batch, i), row(projections, k % projections.rows()), xs);
      acc += 0.5 * y.v.t * y.v.t + y.t.t;
    }
  }
  return acc / static_cast<double>(batch.rows() * per_sample);
}

double ssm_loss(const LogDensityModel& model, const Batch& batch, std::size_t n_proj, Rng& rng) {
  if (n_proj < 1) throw InputError("ssm_loss: n_proj must be at least 1");
  check_batch(batch, model.dim(), "ssm_loss");
  const Batch v = rademacher(batch.rows() * static_cast<Eigen::Index>(n_proj), batch.cols(), rng);
  return ssm_loss(model, batch, v);
}

LossGrad ssm_loss_grad(const TrainableLogDensity& model, const Batch& batch, std::size_t n_proj,
                       Rng& rng) {
  if (n_proj < 1) throw InputError("ssm_loss: n_proj must be at least 1");
  check_batch(batch, model.dim(), "ssm_loss");
  const Batch v = rademacher(batch.rows() * static_cast<Eigen::Index>(n_proj), batch.cols(), rng);
  DirectionalSecondOrderTape pass(model);
  LossGrad out{0.0, std::vector<double>(model.params().size(), 0.0)};
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    for (std::size_t m = 0; m < n_proj; ++m, ++k) out.loss += pass.accumulate(row(batch, i), row(v, k), out.grad);
  }
  const double inv = 1.0 / static_cast<double>(v.rows());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

double dsm_loss(const ScoreField& field, const Batch& batch, double sigma, const Batch& perturbed) {
  if (!(sigma > 0.0)) throw InputError("dsm_loss: sigma must be positive");
  check_batch(batch, field.dim(), "dsm_loss");
  check_same_shape(batch, perturbed, "dsm_loss");
  const std::size_t dim = field.dim();
  const double inv_var = 1.0 / (sigma * sigma);
  std::vector<double> s(dim);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const auto x = row(batch, i);
    const auto xt = row(perturbed, i);
    field.scores(xt, xt, s);
    for (std::size_t d = 0; d < dim; ++d) {
      const double r = s[d] - (x[d] - xt[d]) * inv_var;
      acc += 0.5 * r * r;
    }
  }
  return acc / static_cast<double>(batch.rows());
}

LossGrad dsm_loss_grad(const TrainableScoreField& field, const Batch& batch, double sigma,
                       const Batch& perturbed) {
  if (!(sigma > 0.0)) throw InputError("dsm_loss: sigma must be positive");
  check_batch(batch, field.dim(), "dsm_loss");
  check_same_shape(batch, perturbed, "dsm_loss");
  const std::size_t dim = field.dim();
  const double inv_var = 1.0 / (sigma * sigma);
  const auto theta = field.params().flat();
  ad::Tape<double> tape;
  const ad::BoundParams<double> params = ad::bind<double>(tape, theta);
  const std::size_t mark = tape.size();
  std::vector<V0> xs(dim), s(dim);
  std::vector<ad::NodeId> roots(dim);
  std::vector<double> seeds(dim);
  LossGrad out{0.0, std::vector<double>(theta.size(), 0.0)};
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    tape.truncate(mark);
    const auto x = row(batch, i);
    const auto xt = row(perturbed, i);
    for (std::size_t j = 0; j < dim; ++j) xs[j] = ad::make_leaf(tape, xt[j]);
    field.scores(params.span(), xs, xs, s);
    for (std::size_t d = 0; d < dim; ++d) {
      const double r = s[d].value() - (x[d] - xt[d]) * inv_var;
      out.loss += 0.5 * r * r;
      roots[d] = s[d].id();
      seeds[d] = r;
    }
    const auto adj = tape.backward(roots, seeds);
    for (std::size_t p = 0; p < theta.size(); ++p) out.grad[p] += adj[params.first + p];
  }
  const double inv = 1.0 / static_cast<double>(batch.rows());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

double dsm_loss(const ScoreField& field, const Batch& batch, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw InputError("dsm_loss: sigma must be positive");
  return dsm_loss(field, batch, sigma, perturb(batch, sigma, standard_normal(batch.rows(), batch.cols(), rng)));
}

LossGrad dsm_loss_grad(const TrainableScoreField& field, const Batch& batch, double sigma,
                       Rng& rng) {
  if (!(sigma > 0.0)) throw InputError("dsm_loss: sigma must be positive");
  return dsm_loss_grad(field, batch, sigma,
                       perturb(batch, sigma, standard_normal(batch.rows(), batch.cols(), rng)));
}

LossGrad nll_loss_grad(const TrainableLogDensity& model, const Batch& batch) {
  check_batch(batch, model.dim(), "nll_loss");
  const std::size_t dim = model.dim();
  const auto theta = model.params().flat();
  ad::Tape<double> tape;
  const ad::BoundParams<double> params = ad::bind<double>(tape, theta);
  const std::size_t mark = tape.size();
  std::vector<V0> xs(dim);
  LossGrad out{0.0, std::vector<double>(theta.size(), 0.0)};
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    tape.truncate(mark);
    const auto x = row(batch, i);
    for (std::size_t j = 0; j < dim; ++j) xs[j] = ad::make_leaf(tape, x[j]);
    const V0 y = model.log_density(params.span(), std::span<const V0>(xs));
    out.loss -= y.value();
    const ad::NodeId root = y.id();
    const double seed = -1.0;
    const auto adj = tape.backward(std::span<const ad::NodeId>(&root, 1), std::span<const double>(&seed, 1));
    for (std::size_t p = 0; p < theta.size(); ++p) out.grad[p] += adj[params.first + p];
  }
  const double inv = 1.0 / static_cast<double>(batch.rows());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

}  // namespace csm
