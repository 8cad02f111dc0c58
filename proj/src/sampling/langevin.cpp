#include "csm/sampling/langevin.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace csm {

namespace {

void check_stages(const StagedField& stages, const LangevinConfig& config) {
  if (stages.empty()) throw InputError("Langevin: no stage models");
  if (stages.size() != config.schedule.size()) {
    throw ContractError("Langevin: " + std::to_string(stages.size()) + " stage models for a " +
                        std::to_string(config.schedule.size()) + "-level schedule");
  }
  for (const ScoreField* f : stages) {
    if (f == nullptr || f->dim() != stages[0]->dim()) throw ContractError("Langevin: stage models differ in dimension");
  }
  if (!(config.eps0 > 0.0)) throw InputError("Langevin: eps0 must be positive");
  if (config.steps < 1) throw InputError("Langevin: need at least one step");
}

// Runs fn(i) for i < n across `threads` workers; rethrows the failure with the
// lowest index so the error does not depend on scheduling.
template <class Fn>
void for_each_chain(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (i < failed_at) {
            failed_at = i;
            failure = std::current_exception();
          }
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

StagedField repeat_stages(const ScoreField& field, std::size_t stages) {
  return StagedField(stages, &field);
}

double langevin_1d(const ConditionalScore& score, double x0, double eps, std::size_t steps,
                   const NoiseSource& noise, double divergence_bound) {
  if (!(eps > 0.0)) throw InputError("langevin_1d: step size must be positive");
  const double half = 0.5 * eps;
  const double root = std::sqrt(eps);
  double x = x0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double s = score(x);
    if (!std::isfinite(s)) {
      throw SamplerDivergence("langevin: non-finite score at iteration " + std::to_string(t), t);
    }
    x = x + half * s + root * noise();
    if (!std::isfinite(x) || std::abs(x) > divergence_bound) {
      throw SamplerDivergence("langevin: state left the bound at iteration " + std::to_string(t), t);
    }
  }
  return x;
}

double langevin_1d(const ConditionalScore& score, double x0, double eps, std::size_t steps,
                   Rng& rng) {
  return langevin_1d(score, x0, eps, steps, [&rng] { return rng.normal(); });
}

double annealed_step_size(const LangevinConfig& config, std::size_t stage) {
  const double s = config.schedule.sigma(stage);
  const double last = config.schedule.context_sigma();
  return config.eps0 * (s * s) / (last * last);
}

double annealed_langevin_dim_from(const StagedField& stages, std::span<const double> prefix,
                                  std::size_t d, double x_init, const LangevinConfig& config,
                                  Rng& rng) {
  check_stages(stages, config);
  if (d >= stages[0]->dim()) throw std::out_of_range("annealed_langevin_dim: dimension index");
  double x = x_init;
  const NoiseSource noise = [&rng] { return rng.normal(); };
  for (std::size_t i = 1; i <= stages.size(); ++i) {
    const ConditionalScore score = stages[i - 1]->conditional(prefix, d);
    x = langevin_1d(score, x, annealed_step_size(config, i), config.steps, noise,
                    config.divergence_bound);
  }
  return x;
}

double annealed_langevin_dim(const StagedField& stages, std::span<const double> prefix,
                             std::size_t d, const LangevinConfig& config, Rng& rng) {
  const double x0 = rng.normal();
  return annealed_langevin_dim_from(stages, prefix, d, x0, config, rng);
}

Batch sample_joint(const StagedField& stages, const LangevinConfig& config, std::size_t n,
                   const Rng& rng, std::size_t threads) {
  check_stages(stages, config);
  const std::size_t dim = stages[0]->dim();
  const auto order = stages[0]->ordering();
  Batch out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for_each_chain(n, threads, [&](std::size_t i) {
    Rng chain = rng.split(i);
    std::vector<double> x(dim, 0.0);
    for (std::size_t d : order) {
      try {
        x[d] = annealed_langevin_dim(stages, x, d, config, chain);
      } catch (const SamplerDivergence& e) {
        throw e.at(i, d);
      }
    }
    std::copy(x.begin(), x.end(), row(out, static_cast<Eigen::Index>(i)).begin());
  });
  return out;
}

Batch single_step_denoise(const ScoreField& field, const Batch& noisy, double sigma) {
  if (!(sigma > 0.0)) throw InputError("single_step_denoise: sigma must be positive");
  if (static_cast<std::size_t>(noisy.cols()) != field.dim()) {
    throw ContractError("single_step_denoise: dimension mismatch");
  }
  require_finite(noisy, "single_step_denoise");
  Batch out = noisy;
  std::vector<double> s(field.dim());
  const double var = sigma * sigma;
  for (Eigen::Index i = 0; i < noisy.rows(); ++i) {
    field.scores(row(noisy, i), row(noisy, i), s);
    auto r = row(out, i);
    for (std::size_t d = 0; d < s.size(); ++d) r[d] += var * s[d];
  }
  return out;
}

Batch langevin_restore(const StagedField& stages, const Batch& noisy, const LangevinConfig& config,
                       const Rng& rng, std::size_t threads) {
  check_stages(stages, config);
  const std::size_t dim = stages[0]->dim();
  if (static_cast<std::size_t>(noisy.cols()) != dim) throw ContractError("langevin_restore: dimension mismatch");
  require_finite(noisy, "langevin_restore");
  const auto order = stages[0]->ordering();
  Batch out = noisy;
  for_each_chain(static_cast<std::size_t>(noisy.rows()), threads, [&](std::size_t i) {
    Rng chain = rng.split(i);
    const auto start = row(noisy, static_cast<Eigen::Index>(i));
    std::vector<double> x(start.begin(), start.end());
    for (std::size_t d : order) {
      try {
        x[d] = annealed_langevin_dim_from(stages, x, d, start[d], config, chain);
      } catch (const SamplerDivergence& e) {
        throw e.at(i, d);
      }
    }
    std::copy(x.begin(), x.end(), row(out, static_cast<Eigen::Index>(i)).begin());
  });
  return out;
}

}  // namespace csm
