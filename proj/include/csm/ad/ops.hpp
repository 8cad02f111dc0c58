#pragma once

#include <cstdint>
#include <span>

#include "csm/ad/dual.hpp"
#include "csm/ad/tape.hpp"

namespace csm::ad {

/// b + sum_k w[k] * x[index[k]], accumulated left to right.
///
/// Plain and dual scalars evaluate the loop directly; tape variables record a
/// single node whose inputs are every weight, every referenced input and the
/// bias.
template <class T>
T affine(std::span<const T> w, std::span<const T> x, std::span<const std::uint32_t> index,
         const T& b) {
  T acc = b;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[index[k]];
  return acc;
}

template <class S>
Var<S> affine(std::span<const Var<S>> w, std::span<const Var<S>> x,
              std::span<const std::uint32_t> index, const Var<S>& b) {
  Tape<S>& tape = *b.tape();
  S acc = b.value();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const S& wv = w[k].value();
    const S& xv = x[index[k]].value();
    acc += wv * xv;
    tape.add_edge(w[k].id(), xv);
    tape.add_edge(x[index[k]].id(), wv);
  }
  tape.add_edge(b.id(), S(1.0));
  return {&tape, tape.finish_node(acc)};
}

/// Dense form: b + sum_k w[k] * x[k].
template <class T>
T affine(std::span<const T> w, std::span<const T> x, const T& b) {
  T acc = b;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[k];
  return acc;
}

template <class S>
Var<S> affine(std::span<const Var<S>> w, std::span<const Var<S>> x, const Var<S>& b) {
  Tape<S>& tape = *b.tape();
  S acc = b.value();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const S& wv = w[k].value();
    const S& xv = x[k].value();
    acc += wv * xv;
    tape.add_edge(w[k].id(), xv);
    tape.add_edge(x[k].id(), wv);
  }
  tape.add_edge(b.id(), S(1.0));
  return {&tape, tape.finish_node(acc)};
}

/// Sum of terms in index order, recorded as one node on a tape.
template <class T>
T sum(std::span<const T> xs) {
  T acc = xs[0];
  for (std::size_t k = 1; k < xs.size(); ++k) acc += xs[k];
  return acc;
}

template <class S>
Var<S> sum(std::span<const Var<S>> xs) {
  Tape<S>& tape = *xs[0].tape();
  S acc = xs[0].value();
  tape.add_edge(xs[0].id(), S(1.0));
  for (std::size_t k = 1; k < xs.size(); ++k) {
    acc += xs[k].value();
    tape.add_edge(xs[k].id(), S(1.0));
  }
  return {&tape, tape.finish_node(acc)};
}

/// Constant of the same scalar kind as `like`.
template <class T>
T constant_like(const T&, double v) {
  return T(v);
}
template <class S>
Var<S> constant_like(const Var<S>& like, double v) {
  return make_leaf(*like.tape(), S(v));
}

}  // namespace csm::ad
