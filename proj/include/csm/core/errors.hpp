#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace csm {

/// Bad caller-supplied data: non-finite values, empty batches, invalid specs.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Violated API contract between components (shape mismatch, stale state).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A Langevin chain left the finite region or exceeded the divergence guard.
class SamplerDivergence : public std::runtime_error {
 public:
  SamplerDivergence(const std::string& what, std::size_t iteration, std::size_t sample = npos,
                    std::size_t dim = npos)
      : std::runtime_error(what), iteration_(iteration), sample_(sample), dim_(dim) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t iteration() const { return iteration_; }
  std::size_t sample() const { return sample_; }
  std::size_t dim() const { return dim_; }

  SamplerDivergence at(std::size_t sample, std::size_t dim) const {
    return SamplerDivergence(std::string(what()) + " (sample " + std::to_string(sample) +
                                 ", dim " + std::to_string(dim) + ")",
                             iteration_, sample, dim);
  }

 private:
  std::size_t iteration_;
  std::size_t sample_;
  std::size_t dim_;
};

}  // namespace csm
