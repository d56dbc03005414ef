#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "diesep/error.hpp"

namespace diesep {

enum class QuadratureRule { Midpoint, GaussLegendre };

/// Tensor-product rule over a rectangle, `n_u` x `n_v` nodes.
struct QuadratureSpec {
  int n_u = 32;
  int n_v = 32;
  QuadratureRule rule = QuadratureRule::GaussLegendre;
};

/// Nodes and weights on [0, 1]; weights sum to 1.
struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline Rule1D gauss_legendre_unit(int n) {
  Rule1D r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Newton iteration from the Tricomi initial guess.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    r.nodes[i] = 0.5 * (1.0 - z);
    r.nodes[n - 1 - i] = 0.5 * (1.0 + z);
    r.weights[i] = r.weights[n - 1 - i] = 0.5 * w;
  }
  return r;
}

inline Rule1D midpoint_unit(int n) {
  Rule1D r;
  for (int i = 0; i < n; ++i) {
    r.nodes.push_back((i + 0.5) / n);
    r.weights.push_back(1.0 / n);
  }
  return r;
}

inline Rule1D make_rule(QuadratureRule rule, int n) {
  if (n < 2) throw Error("invalid-quadrature", "node count must be >= 2");
  return rule == QuadratureRule::GaussLegendre ? gauss_legendre_unit(n) : midpoint_unit(n);
}

inline void check(const QuadratureSpec& q) {
  if (q.n_u < 2 || q.n_v < 2) throw Error("invalid-quadrature", "n_u and n_v must be >= 2");
}

}  // namespace diesep
