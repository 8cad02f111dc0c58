#include "csm/ad/param_store.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace csm::ad {

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape) {
  if (sealed_) throw std::logic_error("ParamStore::add after seal: " + name);
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
  }
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  Entry e{std::move(name), std::move(shape), values_.size(), n};
  values_.resize(values_.size() + n, 0.0);
  entries_.push_back(std::move(e));
  return entries_.back().offset;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Entry& e) { return e.name == name; });
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
  return *it;
}

std::span<double> ParamStore::view(const std::string& name) {
  const Entry& e = entry(name);
  return std::span<double>(values_).subspan(e.offset, e.size);
}

std::span<const double> ParamStore::view(const std::string& name) const {
  const Entry& e = entry(name);
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

void ParamStore::assign(std::span<const double> values) {
  if (values.size() != values_.size()) {
    throw std::invalid_argument("ParamStore::assign: length mismatch");
  }
  std::copy(values.begin(), values.end(), values_.begin());
}

}  // namespace csm::ad
