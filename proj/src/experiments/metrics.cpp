#include "csm/experiments/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace csm::exp {

double auroc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) throw InputError("auroc: both classes need at least one point");
  require_finite(positive, "auroc");
  require_finite(negative, "auroc");
  const std::size_t n = positive.size() + negative.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(n);
  for (double v : positive) all.emplace_back(v, true);
  for (double v : negative) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Ranks are 1-based; a tie group spanning ranks i+1..j gets (i+1+j)/2 each.
  // Twice the rank sum stays an exact integer.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    std::uint64_t pos_in_group = 0;
    for (std::size_t k = i; k < j; ++k) pos_in_group += all[k].second ? 1 : 0;
    twice_rank_sum += pos_in_group * static_cast<std::uint64_t>(i + 1 + j);
    i = j;
  }
  const std::uint64_t np = positive.size();
  const std::uint64_t nn = negative.size();
  const std::uint64_t twice_u = twice_rank_sum - np * (np + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(np) * static_cast<double>(nn));
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median: empty input");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  if (values.size() % 2 == 1) return values[mid];
  const double hi = values[mid];
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw InputError("mean: empty input");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double variance(std::span<const double> values) {
  if (values.size() < 2) throw InputError("variance: needs two values");
  // Shifted by the first value: identical inputs give exactly 0.
  const double shift = values[0];
  double sum = 0.0;
  for (double v : values) sum += v - shift;
  const double m = sum / static_cast<double>(values.size());
  double s = 0.0;
  for (double v : values) s += (v - shift - m) * (v - shift - m);
  return s / static_cast<double>(values.size() - 1);
}

std::vector<double> mode_coverage(const Batch& samples, const std::vector<std::array<double, 2>>& centers,
                                  double radius) {
  if (samples.cols() != 2) throw ContractError("mode_coverage: samples must be 2-D");
  std::vector<double> share(centers.size(), 0.0);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (std::hypot(samples(i, 0) - centers[k][0], samples(i, 1) - centers[k][1]) <= radius) share[k] += 1.0;
    }
  }
  for (double& s : share) s /= static_cast<double>(std::max<Eigen::Index>(samples.rows(), 1));
  return share;
}

double ring_share(const DatasetSpec& spec, const Batch& samples, double half_width) {
  if (samples.rows() == 0) return 0.0;
  double inside = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    if (distance_to_rings(spec, row(samples, i)) <= half_width) inside += 1.0;
  }
  return inside / static_cast<double>(samples.rows());
}

double mean_squared_error(const Batch& a, const Batch& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractError("mean_squared_error: shape mismatch");
  return (a - b).rowwise().squaredNorm().mean();
}

double gaussian_entropy(const Matrix& cov) {
  const double d = static_cast<double>(cov.rows());
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw InputError("gaussian_entropy: covariance not positive definite");
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return 0.5 * (d * std::log(2.0 * std::numbers::pi * std::numbers::e) + log_det);
}

}  // namespace csm::exp
