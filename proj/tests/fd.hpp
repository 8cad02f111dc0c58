#pragma once

// Central finite differences, step 1e-4.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace fd {

inline constexpr double kStep = 1e-4;

inline std::vector<double> gradient(const std::function<double(std::span<const double>)>& f,
                                    std::span<const double> x, double h = kStep) {
  std::vector<double> xs(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = xs[i];
    xs[i] = x0 + h;
    const double fp = f(xs);
    xs[i] = x0 - h;
    const double fm = f(xs);
    xs[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double partial(const std::function<double(std::span<const double>)>& f,
                      std::span<const double> x, std::size_t i, double h = kStep) {
  std::vector<double> xs(x.begin(), x.end());
  const double x0 = xs[i];
  xs[i] = x0 + h;
  const double fp = f(xs);
  xs[i] = x0 - h;
  const double fm = f(xs);
  return (fp - fm) / (2.0 * h);
}

/// |a - b| <= rel * max(|a|, |b|) or |a - b| <= abs.
inline bool close(double a, double b, double rel, double abs = 0.0) {
  const double diff = std::abs(a - b);
  return diff <= abs || diff <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace fd
