#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "csm/ad/dual.hpp"
#include "csm/ad/param_store.hpp"
#include "csm/ad/tape.hpp"

namespace csm::ad {

/// Gradient of a single output node with respect to bound parameters.
///
/// Parameters that never feed the output get an exact zero. Passing anything
/// other than exactly one output node is a contract violation.
template <class S>
std::vector<S> grad(const Tape<S>& tape, std::span<const NodeId> outputs,
                    const BoundParams<S>& params) {
  if (outputs.size() != 1) {
    throw std::invalid_argument("grad: output must be a single scalar node");
  }
  std::vector<S> adj = tape.backward(outputs[0]);
  return std::vector<S>(adj.begin() + params.first, adj.begin() + params.first + params.vars.size());
}

template <class S>
std::vector<S> grad(const Var<S>& output, const BoundParams<S>& params) {
  const NodeId id = output.id();
  return grad(*output.tape(), std::span<const NodeId>(&id, 1), params);
}

struct DirectionalDerivative {
  double value = 0.0;
  double deriv = 0.0;
};

/// Value and partial derivative of f along x_d by forward mode.
///
/// `f` is called with a span of Dual1 and must return a Dual1.
template <class F>
DirectionalDerivative directional_deriv(F&& f, std::span<const double> x, std::size_t d) {
  if (d >= x.size()) throw std::out_of_range("directional_deriv: dimension index out of range");
  std::vector<Dual1> xs(x.begin(), x.end());
  xs[d].t = 1.0;
  const Dual1 y = f(std::span<const Dual1>(xs));
  return {y.v, y.t};
}

struct DirectionalGradient {
  double value = 0.0;
  double deriv = 0.0;
  std::vector<double> grad_value;  // d f / d theta
  std::vector<double> grad_deriv;  // d (df/dx_d) / d theta
};

/// Parameter gradient of f and of df/dx_d in one forward-over-reverse sweep.
///
/// `f(theta, x)` is called with spans of Var<Dual1> on a fresh tape whose x_d
/// leaf carries a unit tangent.
template <class F>
DirectionalGradient grad_of_directional(F&& f, std::span<const double> x, std::size_t d,
                                        std::span<const double> theta) {
  if (d >= x.size()) {
    throw std::out_of_range("grad_of_directional: dimension index out of range");
  }
  Tape<Dual1> tape;
  BoundParams<Dual1> params = bind<Dual1>(tape, theta);
  std::vector<Var<Dual1>> xs;
  xs.reserve(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    xs.push_back(make_leaf(tape, Dual1(x[j], j == d ? 1.0 : 0.0)));
  }
  const Var<Dual1> y = f(params.span(), std::span<const Var<Dual1>>(xs));
  tape.mark_output(y.id());
  const std::vector<Dual1> g = grad(tape, tape.outputs(), params);
  DirectionalGradient out;
  out.value = y.value().v;
  out.deriv = y.value().t;
  out.grad_value.reserve(g.size());
  out.grad_deriv.reserve(g.size());
  for (const Dual1& gi : g) {
    out.grad_value.push_back(gi.v);
    out.grad_deriv.push_back(gi.t);
  }
  return out;
}

}  // namespace csm::ad
