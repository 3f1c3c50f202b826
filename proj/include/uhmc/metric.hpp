#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "uhmc/types.hpp"

namespace uhmc {

/// Blockwise quadratic form M = [[p I, q I], [q I, r I]] on R^{2d}:
///   |(x, v)|_M^2 = p |x|^2 + 2 q x.v + r |v|^2.
struct MetricMatrix {
  double p = 1.0;
  double q = 0.0;
  double r = 1.0;

  static MetricMatrix identity() { return {1.0, 0.0, 1.0}; }

  bool positive_definite() const noexcept { return p > 0.0 && p * r - q * q > 0.0; }

  Eigen::Matrix2d block() const {
    Eigen::Matrix2d B;
    B << p, q, q, r;
    return B;
  }

  /// Range [lo, hi] of the generalized eigenvalues of M against diag(1, w):
  ///   lo (|x|^2 + w |v|^2) <= |z|_M^2 <= hi (|x|^2 + w |v|^2).
  std::pair<double, double> equivalence_constants(double w) const {
    const double s = 1.0 / std::sqrt(w);
    Eigen::Matrix2d N;
    N << p, q * s, q * s, r / w;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(N, Eigen::EigenvaluesOnly);
    return {es.eigenvalues()(0), es.eigenvalues()(1)};
  }
};

/// |z|_M.
inline double m_norm(const MetricMatrix& M, const PhaseState& z) {
  const double sq = M.p * z.x.squaredNorm() + 2.0 * M.q * z.x.dot(z.v) + M.r * z.v.squaredNorm();
  return std::sqrt(std::max(sq, 0.0));
}

}  // namespace uhmc
