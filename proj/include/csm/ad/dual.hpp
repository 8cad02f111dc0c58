#pragma once

#include <cmath>
#include <type_traits>

namespace csm::ad {

/// Forward-mode number carrying a value and one directional derivative.
///
/// Nesting is allowed: Dual<Dual<double>> carries two independent tangent
/// directions plus their mixed second derivative (the "hyper-dual" layout
/// used by the score-matching trace term). All value arithmetic is done with
/// exactly the operations a plain double evaluation would perform, so the
/// value part is bit-identical to a non-dual evaluation.
template <class T>
struct Dual {
  T v{};
  T t{};

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value), t(0.0) {}  // NOLINT: implicit by design of mixed arithmetic
  constexpr Dual(T value, T tangent) : v(value), t(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    t += o.t;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    t -= o.t;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    t = v * o.t + t * o.v;
    v *= o.v;
    return *this;
  }
};

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

/// Plain double underneath any nesting depth.
inline double value_of(double x) { return x; }
template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.v);
}

inline bool is_zero(double x) { return x == 0.0; }
template <class T>
bool is_zero(const Dual<T>& x) {
  return is_zero(x.v) && is_zero(x.t);
}

inline bool all_finite(double x) { return std::isfinite(x); }
template <class T>
bool all_finite(const Dual<T>& x) {
  return all_finite(x.v) && all_finite(x.t);
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.t + b.t};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.t - b.t};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.t};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.v * b.t + a.t * b.v};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.v / b.v;
  return {q, (a.t - q * b.t) / b.v};
}

template <class T>
Dual<T> operator+(const Dual<T>& a, double b) {
  return {a.v + b, a.t};
}
template <class T>
Dual<T> operator+(double a, const Dual<T>& b) {
  return {a + b.v, b.t};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) {
  return {a.v - b, a.t};
}
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) {
  return {a - b.v, -b.t};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) {
  return {a.v * b, a.t * b};
}
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) {
  return {a * b.v, a * b.t};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, double b) {
  return {a.v / b, a.t / b};
}
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) {
  T q = a / b.v;
  return {q, -(q * b.t) / b.v};
}

template <class T>
bool operator<(const Dual<T>& a, double b) {
  return value_of(a) < b;
}
template <class T>
bool operator>(const Dual<T>& a, double b) {
  return value_of(a) > b;
}

// Elementary functions. The double overloads live here too so generic code
// can call csm::ad::elu etc. uniformly on any scalar.

inline double square(double x) { return x * x; }
inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_prime(double x) { return x > 0.0 ? 1.0 : std::exp(x); }
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

using std::exp;
using std::log;
using std::tanh;
using std::sqrt;

template <class T>
Dual<T> exp(const Dual<T>& a) {
  T e = exp(a.v);
  return {e, a.t * e};
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  return {log(a.v), a.t / a.v};
}
template <class T>
Dual<T> tanh(const Dual<T>& a) {
  T y = tanh(a.v);
  return {y, a.t * (1.0 - y * y)};
}
template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  T y = sqrt(a.v);
  return {y, a.t / (2.0 * y)};
}
template <class T>
Dual<T> square(const Dual<T>& a) {
  return {square(a.v), 2.0 * a.v * a.t};
}
template <class T>
Dual<T> elu_prime(const Dual<T>& a) {
  if (value_of(a.v) > 0.0) return Dual<T>(1.0);
  return exp(a);
}
template <class T>
Dual<T> elu(const Dual<T>& a) {
  return {elu(a.v), a.t * elu_prime(a.v)};
}
template <class T>
Dual<T> sigmoid(const Dual<T>& a) {
  T s = sigmoid(a.v);
  return {s, a.t * s * (1.0 - s)};
}
template <class T>
Dual<T> softplus(const Dual<T>& a) {
  return {softplus(a.v), a.t * sigmoid(a.v)};
}

/// Convenience aliases for the nesting depths used in this project.
using Dual1 = Dual<double>;
using Dual2 = Dual<Dual<double>>;

}  // namespace csm::ad
