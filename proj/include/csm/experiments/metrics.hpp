#pragma once

#include <array>
#include <span>
#include <vector>

#include "csm/core/types.hpp"
#include "csm/data/datasets.hpp"

namespace csm::exp {

/// P(a > b) + P(a == b) / 2 for a drawn from `positive` and b from `negative`,
/// via the rank-sum statistic with tied ranks averaged. InputError if either
/// set is empty or holds a non-finite value.
double auroc(std::span<const double> positive, std::span<const double> negative);

double median(std::vector<double> values);
double mean(std::span<const double> values);
/// Unbiased sample variance.
double variance(std::span<const double> values);

/// Share of the rows of `samples` lying within `radius` of each centre.
std::vector<double> mode_coverage(const Batch& samples, const std::vector<std::array<double, 2>>& centers,
                                  double radius);

/// Share of rows within `half_width` of some ring of the dataset.
double ring_share(const DatasetSpec& spec, const Batch& samples, double half_width);

/// Mean over rows of the squared Euclidean distance between a and b.
double mean_squared_error(const Batch& a, const Batch& b);

/// Differential entropy of the Gaussian families.
double gaussian_entropy(const Matrix& cov);

}  // namespace csm::exp
