#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include "shadowdr/errors.hpp"

namespace shadowdr::quadrature {

/// Nodes and weights for integrals of the form int f(t) exp(-t^2) dt.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Newton iteration on the orthonormal Hermite recurrence, with the classical
// asymptotic initial guesses for the largest roots.
inline GaussHermiteRule compute_rule(int n) {
  constexpr double pim4 = 0.7511255444649425;  // pi^(-1/4)
  constexpr int max_newton = 100;
  GaussHermiteRule rule;
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * rule.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * rule.nodes[1];
    } else {
      z = 2.0 * z - rule.nodes[static_cast<std::size_t>(i - 2)];
    }
    double pp = 0.0;
    int it = 0;
    for (; it < max_newton; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    if (it == max_newton) throw NumericalError("Gauss-Hermite root iteration did not converge");
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = z;
    rule.nodes[hi] = -z;
    rule.weights[lo] = 2.0 / (pp * pp);
    rule.weights[hi] = rule.weights[lo];
  }
  return rule;
}

}  // namespace detail

/// Cached rule of order `n`. Thread-safe; references stay valid for the
/// lifetime of the program.
inline const GaussHermiteRule& gauss_hermite(int n) {
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::compute_rule(n)).first;
  return it->second;
}

/// E[f(Y)] for Y ~ Normal(mean, sd^2) using an n-point rule.
template <class F>
double normal_expectation(F&& f, double mean, double sd, int n) {
  const auto& rule = gauss_hermite(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    acc += rule.weights[i] * f(mean + std::numbers::sqrt2 * sd * rule.nodes[i]);
  }
  return acc / std::sqrt(std::numbers::pi);
}

/// Orders tried in sequence until two successive estimates agree.
inline constexpr int kBaseOrder = 64;
inline constexpr int kMaxOrder = 128;
inline constexpr double kAgreementTol = 1e-9;

inline bool agrees(double a, double b) {
  return std::abs(a - b) <= kAgreementTol * std::max(1.0, std::abs(b));
}

}  // namespace shadowdr::quadrature
