#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace uhmc {

using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Precondition violation in an analytic formula (unstable step size,
/// tolerance out of range, nonpositive precision, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A force evaluation produced a non-finite value. Carries the first
/// offending coordinate so the caller can report it.
class NumericalOverflow : public std::overflow_error {
 public:
  NumericalOverflow(Index coordinate, double value)
      : std::overflow_error("non-finite force component " + std::to_string(value) +
                            " at coordinate " + std::to_string(coordinate)),
        coordinate_(coordinate) {}

  Index coordinate() const noexcept { return coordinate_; }

 private:
  Index coordinate_;
};

/// Sampler triple: step size, Verlet steps per transition, damping factor.
struct Params {
  double delta = 0.1;
  int K = 1;
  double eta = 0.0;

  Params() = default;
  Params(double delta_, int K_, double eta_) : delta(delta_), K(K_), eta(eta_) { validate(); }

  void validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta))
      throw DomainError("Params: delta must be a finite positive number");
    if (K < 1) throw DomainError("Params: K must be at least 1");
    if (!(eta >= 0.0 && eta < 1.0)) throw DomainError("Params: eta must lie in [0, 1)");
  }

  /// delta^2 L < 4, the bare stability condition for curvature up to L.
  bool stable(double L) const noexcept { return delta * delta * L < 4.0; }
};

/// Position/velocity pair z = (x, v).
struct PhaseState {
  Vector x;
  Vector v;

  PhaseState() = default;
  PhaseState(Vector x_, Vector v_) : x(std::move(x_)), v(std::move(v_)) {}

  static PhaseState zeros(Index d) { return {Vector::Zero(d), Vector::Zero(d)}; }

  Index dim() const noexcept { return x.size(); }

  bool valid() const {
    return x.size() >= 1 && x.size() == v.size() && x.allFinite() && v.allFinite();
  }

  /// Stacked (x, v) in R^{2d}.
  Vector stacked() const {
    Vector z(2 * x.size());
    z << x, v;
    return z;
  }
};

inline PhaseState operator-(const PhaseState& a, const PhaseState& b) {
  return {a.x - b.x, a.v - b.v};
}

/// Curvature class m <= Hess U <= L.
struct SpectralInterval {
  double m = 1.0;
  double L = 1.0;

  SpectralInterval() = default;
  SpectralInterval(double m_, double L_) : m(m_), L(L_) { validate(); }

  void validate() const {
    if (!(m > 0.0) || !(L >= m) || !std::isfinite(L))
      throw DomainError("SpectralInterval: require 0 < m <= L < inf");
  }

  double kappa() const noexcept { return L / m; }
};

}  // namespace uhmc
