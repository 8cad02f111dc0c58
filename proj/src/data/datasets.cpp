#include "csm/data/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace csm {

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "gaussian") return DatasetKind::kGaussian;
  if (name == "gaussian-full-cov") return DatasetKind::kGaussianFullCov;
  if (name == "mixture-of-gaussians-2d") return DatasetKind::kMixture2d;
  if (name == "two-rings-2d") return DatasetKind::kTwoRings2d;
  if (name == "checkerboard-2d") return DatasetKind::kCheckerboard2d;
  throw InputError("unknown dataset kind: " + name);
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kGaussian: return "gaussian";
    case DatasetKind::kGaussianFullCov: return "gaussian-full-cov";
    case DatasetKind::kMixture2d: return "mixture-of-gaussians-2d";
    case DatasetKind::kTwoRings2d: return "two-rings-2d";
    case DatasetKind::kCheckerboard2d: return "checkerboard-2d";
  }
  return "unknown";
}

std::size_t DatasetSpec::data_dim() const {
  switch (kind) {
    case DatasetKind::kGaussian:
    case DatasetKind::kGaussianFullCov: return dim;
    default: return 2;
  }
}

Vector dataset_mean(const DatasetSpec& spec) {
  const auto d = static_cast<Eigen::Index>(spec.dim);
  if (spec.mean.empty()) return Vector::Zero(d);
  if (spec.mean.size() != spec.dim) throw InputError("dataset: mean has the wrong length");
  return Eigen::Map<const Vector>(spec.mean.data(), d);
}

Matrix dataset_cov(const DatasetSpec& spec) {
  const auto d = static_cast<Eigen::Index>(spec.dim);
  if (spec.kind == DatasetKind::kGaussian) {
    if (!(spec.std > 0.0)) throw InputError("dataset: std must be positive");
    return Matrix::Identity(d, d) * (spec.std * spec.std);
  }
  if (spec.cov.size() != spec.dim * spec.dim) throw InputError("dataset: covariance has the wrong size");
  Matrix c(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) c(i, j) = spec.cov[static_cast<std::size_t>(i * d + j)];
  }
  return c;
}

std::vector<std::array<double, 2>> mixture_centers(const DatasetSpec& spec) {
  std::vector<std::array<double, 2>> out(spec.modes);
  for (std::size_t k = 0; k < spec.modes; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.modes);
    out[k] = {spec.offset[0] + spec.radius * std::cos(a), spec.offset[1] + spec.radius * std::sin(a)};
  }
  return out;
}

double distance_to_rings(const DatasetSpec& spec, std::span<const double> x) {
  const double r = std::hypot(x[0] - spec.offset[0], x[1] - spec.offset[1]);
  double best = std::abs(r - spec.ring_radii.at(0));
  for (double rr : spec.ring_radii) best = std::min(best, std::abs(r - rr));
  return best;
}

namespace {

void validate(const DatasetSpec& spec) {
  if (spec.n_train < 1 || spec.n_test < 1) throw InputError("dataset: n_train and n_test must be at least 1");
  switch (spec.kind) {
    case DatasetKind::kGaussian:
    case DatasetKind::kGaussianFullCov:
      if (spec.dim < 1) throw InputError("dataset: dim must be at least 1");
      break;
    case DatasetKind::kMixture2d:
      if (spec.modes < 1 || !(spec.mode_std > 0.0)) throw InputError("dataset: bad mixture parameters");
      break;
    case DatasetKind::kTwoRings2d:
      if (spec.ring_radii.empty() || !(spec.ring_width > 0.0)) throw InputError("dataset: bad ring parameters");
      break;
    case DatasetKind::kCheckerboard2d:
      if (spec.grid < 2 || !(spec.cell > 0.0)) throw InputError("dataset: bad checkerboard parameters");
      break;
  }
}

}  // namespace

Batch draw(const DatasetSpec& spec, std::size_t n, Rng& rng) {
  validate(spec);
  const auto rows = static_cast<Eigen::Index>(n);
  Batch out(rows, static_cast<Eigen::Index>(spec.data_dim()));
  switch (spec.kind) {
    case DatasetKind::kGaussian:
    case DatasetKind::kGaussianFullCov: {
      const Vector mu = dataset_mean(spec);
      const Matrix cov = dataset_cov(spec);
      Eigen::LLT<Matrix> llt(cov);
      if (llt.info() != Eigen::Success || !cov.isApprox(cov.transpose())) {
        throw InputError("dataset: covariance is not symmetric positive definite");
      }
      const Matrix l = llt.matrixL();
      Vector z(mu.size());
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
        out.row(i) = (mu + l * z).transpose();
      }
      break;
    }
    case DatasetKind::kMixture2d: {
      const auto centers = mixture_centers(spec);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& c = centers[rng.index(centers.size())];
        out(i, 0) = c[0] + spec.mode_std * rng.normal();
        out(i, 1) = c[1] + spec.mode_std * rng.normal();
      }
      break;
    }
    case DatasetKind::kTwoRings2d: {
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double r = spec.ring_radii[rng.index(spec.ring_radii.size())] + spec.ring_width * rng.normal();
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        out(i, 0) = spec.offset[0] + r * std::cos(a);
        out(i, 1) = spec.offset[1] + r * std::sin(a);
      }
      break;
    }
    case DatasetKind::kCheckerboard2d: {
      // cells (u, v) with u + v even are filled
      const std::size_t k = spec.grid;
      const double half = 0.5 * spec.cell * static_cast<double>(k);
      std::vector<std::array<std::size_t, 2>> filled;
      for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) {
          if ((u + v) % 2 == 0) filled.push_back({u, v});
        }
      }
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& c = filled[rng.index(filled.size())];
        out(i, 0) = spec.offset[0] - half + spec.cell * (static_cast<double>(c[0]) + rng.uniform());
        out(i, 1) = spec.offset[1] - half + spec.cell * (static_cast<double>(c[1]) + rng.uniform());
      }
      break;
    }
  }
  return out;
}

Dataset make_dataset(const DatasetSpec& spec) {
  const Rng master(spec.seed);
  Rng train_rng = master.split(1);
  Rng test_rng = master.split(2);
  Dataset ds;
  ds.train = draw(spec, spec.n_train, train_rng);
  ds.test = draw(spec, spec.n_test, test_rng);
  return ds;
}

std::vector<Batch> batches(const Batch& data, std::size_t size, Rng& rng) {
  if (size < 1) throw InputError("batches: size must be at least 1");
  const auto n = static_cast<std::size_t>(data.rows());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  // Fisher-Yates with our own index draws so the permutation is portable
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < n; start += size) {
    const std::size_t m = std::min(size, n - start);
    Batch b(static_cast<Eigen::Index>(m), data.cols());
    for (std::size_t k = 0; k < m; ++k) b.row(static_cast<Eigen::Index>(k)) = data.row(static_cast<Eigen::Index>(perm[start + k]));
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace csm
