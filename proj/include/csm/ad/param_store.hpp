#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "csm/ad/tape.hpp"

namespace csm::ad {

/// Named parameter tensors over one flat buffer.
///
/// Entries are appended while a model is being built; after seal() the
/// layout (and hence the flat length) is fixed and only values may change.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  /// Appends a zero-initialised tensor and returns its offset in the flat view.
  std::size_t add(std::string name, std::vector<std::size_t> shape);
  void seal() { sealed_ = true; }
  bool sealed() const { return sealed_; }

  std::size_t size() const { return values_.size(); }
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::span<double> view(const std::string& name);
  std::span<const double> view(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  /// Replaces all values; the length must match.
  void assign(std::span<const double> values);

 private:
  std::vector<double> values_;
  std::vector<Entry> entries_;
  bool sealed_ = false;
};

/// Parameters placed on a tape as one contiguous run of leaves.
template <class S>
struct BoundParams {
  std::vector<Var<S>> vars;
  NodeId first = 0;

  std::span<const Var<S>> span() const { return vars; }
};

template <class S>
BoundParams<S> bind(Tape<S>& tape, std::span<const double> values) {
  BoundParams<S> out;
  out.vars.reserve(values.size());
  out.first = static_cast<NodeId>(tape.size());
  for (double v : values) out.vars.push_back(make_leaf(tape, S(v)));
  return out;
}

/// Constants of scalar kind T mirroring `values` (no tape involved).
template <class T>
std::vector<T> lift(std::span<const double> values) {
  return std::vector<T>(values.begin(), values.end());
}

}  // namespace csm::ad
