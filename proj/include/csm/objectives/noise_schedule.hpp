#pragma once

#include <cstddef>
#include <vector>

namespace csm {

/// Decreasing geometric noise levels sigma_1 > ... > sigma_L > 0.
///
/// Stages are 1-based. The context noise level is always sigma_L.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// Validates positivity, strict decrease and a constant ratio.
  explicit NoiseSchedule(std::vector<double> levels);

  std::size_t size() const { return levels_.size(); }
  double sigma(std::size_t stage) const;
  double context_sigma() const { return levels_.back(); }
  double ratio() const { return levels_.size() < 2 ? 1.0 : levels_[1] / levels_[0]; }
  const std::vector<double>& levels() const { return levels_; }

 private:
  std::vector<double> levels_;
};

/// sigma_i = sigma_first * r^(i-1) with r = (sigma_last / sigma_first)^(1/(L-1)).
NoiseSchedule geometric_schedule(double sigma_first, double sigma_last, std::size_t levels);

/// What an objective may see of the schedule at one stage: its own level and
/// the context level, nothing else.
struct StageView {
  std::size_t stage = 1;
  double sigma = 0.0;
  double context_sigma = 0.0;
};

StageView stage_view(const NoiseSchedule& schedule, std::size_t stage);

}  // namespace csm
