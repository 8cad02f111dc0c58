#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>

#include "csm/core/errors.hpp"

namespace csm {

/// N x D samples, one row per sample, row-major so rows are contiguous spans.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline std::span<const double> row(const Batch& b, Eigen::Index i) {
  return {b.data() + i * b.cols(), static_cast<std::size_t>(b.cols())};
}
inline std::span<double> row(Batch& b, Eigen::Index i) {
  return {b.data() + i * b.cols(), static_cast<std::size_t>(b.cols())};
}

inline void require_finite(std::span<const double> x, const char* where) {
  for (double v : x) {
    if (!std::isfinite(v)) throw InputError(std::string(where) + ": non-finite input");
  }
}

inline void require_finite(const Batch& b, const char* where) {
  if (!b.allFinite()) throw InputError(std::string(where) + ": non-finite input");
}

}  // namespace csm
