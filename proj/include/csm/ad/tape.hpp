#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "csm/ad/dual.hpp"

namespace csm::ad {

using NodeId = std::uint32_t;

/// Append-only record of scalar primitive operations.
///
/// Each node stores its value and the local partial derivatives with respect
/// to its inputs. Inputs always refer to earlier nodes, so a single reverse
/// sweep accumulates exact adjoints. The scalar type S may itself be a Dual,
/// in which case the reverse sweep runs over forward-mode values
/// (forward-over-reverse).
template <class S>
class Tape {
 public:
  struct Edge {
    NodeId parent;
    S partial;
  };

  Tape() { edge_end_.reserve(1024); }

  std::size_t size() const { return values_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const S& value(NodeId id) const { return values_[id]; }

  void clear() {
    values_.clear();
    edge_end_.clear();
    edges_.clear();
    outputs_.clear();
  }

  /// Drops every node from `n` on, keeping the first n (e.g. bound parameters).
  void truncate(std::size_t n) {
    if (n >= values_.size()) return;
    values_.resize(n);
    edge_end_.resize(n);
    edges_.resize(n == 0 ? 0 : edge_end_[n - 1]);
    outputs_.clear();
  }

  void reserve(std::size_t nodes, std::size_t edges) {
    values_.reserve(nodes);
    edge_end_.reserve(nodes);
    edges_.reserve(edges);
  }

  NodeId leaf(const S& v) { return push(v); }

  NodeId unary(const S& v, NodeId a, const S& da) {
    edges_.push_back({a, da});
    return push(v);
  }

  NodeId binary(const S& v, NodeId a, const S& da, NodeId b, const S& db) {
    edges_.push_back({a, da});
    edges_.push_back({b, db});
    return push(v);
  }

  /// Begins a node with an arbitrary number of inputs; call add_edge for each
  /// input, then finish_node with the value.
  void add_edge(NodeId parent, const S& partial) { edges_.push_back({parent, partial}); }
  NodeId finish_node(const S& v) { return push(v); }

  void mark_output(NodeId id) { outputs_.push_back(id); }
  std::span<const NodeId> outputs() const { return outputs_; }

  /// Reverse sweep from the given seeds; returns the adjoint of every node.
  std::vector<S> backward(std::span<const NodeId> roots, std::span<const S> seeds) const {
    if (roots.size() != seeds.size()) {
      throw std::invalid_argument("Tape::backward: roots and seeds differ in length");
    }
    std::vector<S> adj(values_.size());
    for (std::size_t k = 0; k < roots.size(); ++k) {
      if (roots[k] >= values_.size()) throw std::out_of_range("Tape::backward: root id");
      adj[roots[k]] += seeds[k];
    }
    for (std::size_t i = values_.size(); i-- > 0;) {
      const S a = adj[i];
      if (is_zero(a)) continue;
      const std::uint32_t begin = i == 0 ? 0 : edge_end_[i - 1];
      for (std::uint32_t e = begin; e < edge_end_[i]; ++e) {
        adj[edges_[e].parent] += a * edges_[e].partial;
      }
    }
    return adj;
  }

  std::vector<S> backward(NodeId root) const {
    const S one(1.0);
    return backward(std::span<const NodeId>(&root, 1), std::span<const S>(&one, 1));
  }

 private:
  NodeId push(const S& v) {
    values_.push_back(v);
    edge_end_.push_back(static_cast<std::uint32_t>(edges_.size()));
    return static_cast<NodeId>(values_.size() - 1);
  }

  std::vector<S> values_;
  std::vector<std::uint32_t> edge_end_;
  std::vector<Edge> edges_;
  std::vector<NodeId> outputs_;
};

/// Handle to a tape node. Arithmetic on Vars records new nodes.
template <class S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape<S>* tape() const { return tape_; }
  NodeId id() const { return id_; }
  const S& value() const { return tape_->value(id_); }

 private:
  Tape<S>* tape_ = nullptr;
  NodeId id_ = 0;
};

template <class S>
Var<S> make_leaf(Tape<S>& tape, const S& v) {
  return {&tape, tape.leaf(v)};
}

/// A leaf holding the current value of x, cut off from x's history.
template <class S>
Var<S> detach(const Var<S>& x) {
  return make_leaf(*x.tape(), x.value());
}

template <class S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) {
  return {a.tape(), a.tape()->binary(a.value() + b.value(), a.id(), S(1.0), b.id(), S(1.0))};
}
template <class S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) {
  return {a.tape(), a.tape()->binary(a.value() - b.value(), a.id(), S(1.0), b.id(), S(-1.0))};
}
template <class S>
Var<S> operator*(const Var<S>& a, const Var<S>& b) {
  return {a.tape(), a.tape()->binary(a.value() * b.value(), a.id(), b.value(), b.id(), a.value())};
}
template <class S>
Var<S> operator/(const Var<S>& a, const Var<S>& b) {
  const S inv = 1.0 / b.value();
  const S q = a.value() / b.value();
  return {a.tape(), a.tape()->binary(q, a.id(), inv, b.id(), -(q * inv))};
}
template <class S>
Var<S> operator-(const Var<S>& a) {
  return {a.tape(), a.tape()->unary(-a.value(), a.id(), S(-1.0))};
}

template <class S>
Var<S> operator+(const Var<S>& a, double b) {
  return {a.tape(), a.tape()->unary(a.value() + b, a.id(), S(1.0))};
}
template <class S>
Var<S> operator+(double a, const Var<S>& b) {
  return b + a;
}
template <class S>
Var<S> operator-(const Var<S>& a, double b) {
  return {a.tape(), a.tape()->unary(a.value() - b, a.id(), S(1.0))};
}
template <class S>
Var<S> operator-(double a, const Var<S>& b) {
  return {b.tape(), b.tape()->unary(a - b.value(), b.id(), S(-1.0))};
}
template <class S>
Var<S> operator*(const Var<S>& a, double b) {
  return {a.tape(), a.tape()->unary(a.value() * b, a.id(), S(b))};
}
template <class S>
Var<S> operator*(double a, const Var<S>& b) {
  return b * a;
}
template <class S>
Var<S> operator/(const Var<S>& a, double b) {
  return {a.tape(), a.tape()->unary(a.value() / b, a.id(), S(1.0 / b))};
}
template <class S>
Var<S> operator/(double a, const Var<S>& b) {
  const S q = a / b.value();
  return {b.tape(), b.tape()->unary(q, b.id(), -(q / b.value()))};
}

template <class S>
bool operator<(const Var<S>& a, double b) {
  return value_of(a.value()) < b;
}
template <class S>
bool operator>(const Var<S>& a, double b) {
  return value_of(a.value()) > b;
}

template <class S>
Var<S> exp(const Var<S>& a) {
  const S e = exp(a.value());
  return {a.tape(), a.tape()->unary(e, a.id(), e)};
}
template <class S>
Var<S> log(const Var<S>& a) {
  return {a.tape(), a.tape()->unary(log(a.value()), a.id(), 1.0 / a.value())};
}
template <class S>
Var<S> tanh(const Var<S>& a) {
  const S y = tanh(a.value());
  return {a.tape(), a.tape()->unary(y, a.id(), 1.0 - y * y)};
}
template <class S>
Var<S> sqrt(const Var<S>& a) {
  const S y = sqrt(a.value());
  return {a.tape(), a.tape()->unary(y, a.id(), 0.5 / y)};
}
template <class S>
Var<S> square(const Var<S>& a) {
  return {a.tape(), a.tape()->unary(square(a.value()), a.id(), 2.0 * a.value())};
}
template <class S>
Var<S> elu(const Var<S>& a) {
  return {a.tape(), a.tape()->unary(elu(a.value()), a.id(), elu_prime(a.value()))};
}
template <class S>
Var<S> sigmoid(const Var<S>& a) {
  const S s = sigmoid(a.value());
  return {a.tape(), a.tape()->unary(s, a.id(), s * (1.0 - s))};
}
template <class S>
Var<S> softplus(const Var<S>& a) {
  return {a.tape(), a.tape()->unary(softplus(a.value()), a.id(), sigmoid(a.value()))};
}

template <class S>
Var<S>& operator+=(Var<S>& a, const Var<S>& b) {
  a = a + b;
  return a;
}

template <class T>
struct is_var : std::false_type {};
template <class S>
struct is_var<Var<S>> : std::true_type {};

template <class S>
double value_of(const Var<S>& x) {
  return value_of(x.value());
}

}  // namespace csm::ad
