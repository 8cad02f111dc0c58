#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "csm/core/types.hpp"
#include "csm/data/rng.hpp"

namespace csm {

enum class DatasetKind { kGaussian, kGaussianFullCov, kMixture2d, kTwoRings2d, kCheckerboard2d };

DatasetKind parse_dataset_kind(const std::string& name);
std::string to_string(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussian;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 0;

  // gaussian: N(mean, std^2 I) in `dim` dimensions (mean defaults to 0)
  std::size_t dim = 2;
  double std = 1.0;
  std::vector<double> mean;
  // gaussian-full-cov: row-major dim x dim covariance
  std::vector<double> cov;

  // 2-D families; every sample is shifted by `offset`
  std::array<double, 2> offset{0.0, 0.0};
  std::size_t modes = 8;       // mixture: components evenly spaced on a circle
  double radius = 2.0;         // mixture: circle radius
  double mode_std = 0.1;       // mixture: per-component isotropic std
  std::vector<double> ring_radii{1.0, 2.0};
  double ring_width = 0.1;     // rings: radial std
  std::size_t grid = 4;        // checkerboard: grid x grid cells, half filled
  double cell = 1.0;           // checkerboard: cell side

  std::size_t data_dim() const;
};

struct Dataset {
  Batch train;
  Batch test;
};

/// i.i.d. train and test draws; the train and test streams are split from the seed.
Dataset make_dataset(const DatasetSpec& spec);
/// n draws from the dataset's density using `rng`.
Batch draw(const DatasetSpec& spec, std::size_t n, Rng& rng);

/// Mixture component centres (offset applied).
std::vector<std::array<double, 2>> mixture_centers(const DatasetSpec& spec);
/// Distance from x to the nearest ring (offset applied).
double distance_to_rings(const DatasetSpec& spec, std::span<const double> x);

/// Mean and covariance of the Gaussian families.
Vector dataset_mean(const DatasetSpec& spec);
Matrix dataset_cov(const DatasetSpec& spec);

/// One shuffled epoch split into consecutive mini-batches; the last may be short.
std::vector<Batch> batches(const Batch& data, std::size_t size, Rng& rng);

}  // namespace csm
