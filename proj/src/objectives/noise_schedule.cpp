#include "csm/objectives/noise_schedule.hpp"

#include <cmath>
#include <string>

#include "csm/core/errors.hpp"

namespace csm {

NoiseSchedule::NoiseSchedule(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw InputError("NoiseSchedule: no levels");
  for (double s : levels_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InputError("NoiseSchedule: levels must be positive");
  }
  for (std::size_t i = 1; i < levels_.size(); ++i) {
    if (!(levels_[i] < levels_[i - 1])) throw InputError("NoiseSchedule: levels must decrease");
  }
  const double r = ratio();
  for (std::size_t i = 1; i < levels_.size(); ++i) {
    if (std::abs(levels_[i] / levels_[i - 1] - r) > 1e-12) {
      throw InputError("NoiseSchedule: levels are not geometric");
    }
  }
}

double NoiseSchedule::sigma(std::size_t stage) const {
  if (stage < 1 || stage > levels_.size()) {
    throw InputError("NoiseSchedule: stage " + std::to_string(stage) + " out of range");
  }
  return levels_[stage - 1];
}

NoiseSchedule geometric_schedule(double sigma_first, double sigma_last, std::size_t levels) {
  if (levels < 2) throw InputError("geometric_schedule: need at least two levels");
  if (!(sigma_last > 0.0) || !(sigma_first > sigma_last)) {
    throw InputError("geometric_schedule: need sigma_first > sigma_last > 0");
  }
  const double r = std::pow(sigma_last / sigma_first, 1.0 / static_cast<double>(levels - 1));
  std::vector<double> out(levels);
  out[0] = sigma_first;
  for (std::size_t i = 1; i + 1 < levels; ++i) out[i] = sigma_first * std::pow(r, static_cast<double>(i));
  out.back() = sigma_last;
  return NoiseSchedule(std::move(out));
}

StageView stage_view(const NoiseSchedule& schedule, std::size_t stage) {
  return {stage, schedule.sigma(stage), schedule.context_sigma()};
}

}  // namespace csm
