#pragma once

// Closed-form analytics of the chain on quadratic potentials U(x) = x.Sx/2
// with m <= S <= L: equilibrium bias, asymptotic W2 rates, their small-step
// limits, and the parameter choices that maximize them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uhmc/types.hpp"

namespace uhmc::gaussian {

inline constexpr double kPi = std::numbers::pi;

namespace detail {

inline void require_stable(double lambda, double delta, const char* where) {
  if (!(delta * delta * lambda < 4.0))
    throw DomainError(std::string(where) + ": stability requires delta^2 lambda < 4, got " +
                      std::to_string(delta * delta * lambda));
  if (!(lambda > 0.0)) throw DomainError(std::string(where) + ": lambda must be positive");
}

}  // namespace detail

/// Rotation angle of one Verlet step on the mode lambda: arccos(1 - delta^2 lambda/2).
inline double phi_angle(double lambda, double delta) {
  detail::require_stable(lambda, delta, "phi_angle");
  return std::acos(1.0 - 0.5 * delta * delta * lambda);
}

/// Precision nu^2 = lambda / (1 - delta^2 lambda/4) of the position marginal
/// that the Verlet map preserves on the mode lambda.
inline double modified_precision(double lambda, double delta) {
  detail::require_stable(lambda, delta, "modified_precision");
  return lambda / (1.0 - 0.25 * delta * delta * lambda);
}

struct VerletSpectrum {
  double lambda;
  double phi;
  double nu_sq;
};

inline VerletSpectrum verlet_spectrum(double lambda, double delta) {
  return {lambda, phi_angle(lambda, delta), modified_precision(lambda, delta)};
}

/// One Verlet step on the mode lambda in rotation form
/// [[cos phi, sin phi / nu], [-nu sin phi, cos phi]].
inline Eigen::Matrix2d verlet_matrix(double lambda, double delta) {
  const auto s = verlet_spectrum(lambda, delta);
  const double nu = std::sqrt(s.nu_sq);
  Eigen::Matrix2d R;
  R << std::cos(s.phi), std::sin(s.phi) / nu, -nu * std::sin(s.phi), std::cos(s.phi);
  return R;
}

/// sup{|cos t| : t in [lo, hi]} for 0 <= lo <= hi. Equal to 1 when the
/// interval holds a positive multiple of pi, otherwise attained at an end.
inline double cos_envelope(double lo, double hi) {
  const double j = std::max(1.0, std::ceil(lo / kPi));
  if (j * kPi <= hi) return 1.0;
  return std::max(std::abs(std::cos(lo)), std::abs(std::cos(hi)));
}

/// h(K, delta) = sup over lambda in [m, L] of |cos(K phi_lambda)|.
inline double h_envelope(const Params& params, const SpectralInterval& interval) {
  const double lo = params.K * phi_angle(interval.m, params.delta);
  const double hi = params.K * phi_angle(interval.L, params.delta);
  return cos_envelope(lo, hi);
}

/// Spectral radius of the one-transition matrix when |cos(K phi)| = c:
///   g(c, eta) = max(eta, (1+eta^2)c/2 + sqrt(((1+eta^2)c/2)^2 - eta^2)_+).
inline double g_factor(double c, double eta) {
  const double half = 0.5 * (1.0 + eta * eta) * c;
  const double disc = half * half - eta * eta;
  return std::max(eta, half + std::sqrt(std::max(disc, 0.0)));
}

/// argmin over eta of g(c, eta): (1 - sqrt(1 - c^2)) / c, extended by 0 at c = 0.
inline double eta_star(double c) {
  if (c <= 0.0) return 0.0;
  // c / (1 + sqrt(1 - c^2)) is the same number without the cancellation.
  return c / (1.0 + std::sqrt(std::max(0.0, 1.0 - c * c)));
}

enum class RateRegime { generic, periodic_degenerate };

inline const char* to_string(RateRegime r) {
  return r == RateRegime::generic ? "generic" : "periodic-degenerate";
}

/// Worst-case asymptotic W2 rate per gradient evaluation over the class.
struct GaussRate {
  double rho = 0.0;
  double h = 1.0;
  double g = 1.0;
  RateRegime regime = RateRegime::periodic_degenerate;
};

/// Rate from an envelope value. Accepts eta = 1 (rate 0) so that
/// eta_star(h) can be plugged in directly.
inline GaussRate rate_from_envelope(double h, double eta, int K) {
  GaussRate r;
  r.h = h;
  if (h >= 1.0) {
    r.g = 1.0;
    r.rho = 0.0;
    r.regime = RateRegime::periodic_degenerate;
    return r;
  }
  r.g = g_factor(h, eta);
  r.rho = std::max(0.0, -std::log(r.g) / K);
  r.regime = RateRegime::generic;
  return r;
}

/// rho(p) = -ln g(h(K, delta), eta) / K.
inline GaussRate rate(const Params& params, const SpectralInterval& interval) {
  return rate_from_envelope(h_envelope(params, interval), params.eta, params.K);
}

/// Slowest per-gradient rate over a finite list of eigenvalues (the rate an
/// actual diagonal target exhibits, as opposed to the worst case over the
/// whole interval).
template <class Range>
GaussRate spectrum_rate(const Params& params, const Range& eigenvalues) {
  GaussRate worst;
  worst.rho = std::numeric_limits<double>::infinity();
  for (double lambda : eigenvalues) {
    const GaussRate r = rate(params, SpectralInterval(lambda, lambda));
    if (r.rho < worst.rho) worst = r;
  }
  return worst;
}

/// Sup over the class of the W2 distance between target and chain
/// equilibrium: sqrt(d) (1 - sqrt(1 - delta^2 L/4)) / sqrt(L).
inline double epsilon_bias(double delta, double L, double d) {
  if (!(delta >= 0.0) || !(L > 0.0) || !(d >= 1.0))
    throw DomainError("epsilon_bias: need delta >= 0, L > 0, d >= 1");
  const double t = 0.25 * delta * delta * L;
  if (t > 1.0) throw DomainError("epsilon_bias: delta^2 L exceeds 4");
  return std::sqrt(d) * (1.0 - std::sqrt(1.0 - t)) / std::sqrt(L);
}

/// Step size whose equilibrium bias equals epsilon (inverse of epsilon_bias).
inline double delta_for_tolerance(double epsilon, double L, double d) {
  if (!(L > 0.0) || !(d >= 1.0)) throw DomainError("delta_for_tolerance: need L > 0, d >= 1");
  const double rel = epsilon * std::sqrt(L / d);
  if (!(rel > 0.0 && rel <= 1.0))
    throw DomainError("delta_for_tolerance: relative tolerance epsilon sqrt(L/d) = " +
                      std::to_string(rel) + " must lie in (0, 1]");
  // 1 - (1 - rel)^2 = rel (2 - rel), written without cancellation.
  return 2.0 * std::sqrt(rel * (2.0 - rel) / L);
}

/// Exact one-transition law on the mode lambda: z' = A z + B (G, G').
struct TransitionMatrix {
  Eigen::Matrix2d A;
  Eigen::Matrix2d B;
  double lambda = 0.0;
  Params params;
};

inline TransitionMatrix transition_matrix(double lambda, const Params& params) {
  const auto s = verlet_spectrum(lambda, params.delta);
  const double nu = std::sqrt(s.nu_sq);
  const double c = std::cos(params.K * s.phi);
  const double sn = std::sin(params.K * s.phi);
  const double eta = params.eta;
  const double w = std::sqrt(1.0 - eta * eta);
  TransitionMatrix T;
  T.lambda = lambda;
  T.params = params;
  T.A << c, eta * sn / nu, -eta * nu * sn, eta * eta * c;
  // The first Gaussian goes through the rotation and the second damping,
  // the second Gaussian enters the velocity directly.
  T.B << w * sn / nu, 0.0, w * eta * c, w;
  return T;
}

/// Largest eigenvalue modulus of a 2x2 matrix.
inline double spectral_radius(const Eigen::Matrix2d& A) {
  Eigen::EigenSolver<Eigen::Matrix2d> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Operator norm |A^n|, the exact worst-case W2 contraction after n steps of
/// an autoregressive Gaussian chain with drift matrix A.
inline double contraction_factor(const Eigen::Matrix2d& A, unsigned n) {
  Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d base = A;
  for (unsigned e = n; e > 0; e >>= 1) {
    if (e & 1U) P = P * base;
    base = base * base;
  }
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(P);
  return svd.singularValues()(0);
}

/// Limit of rho / (delta sqrt(L)) when K delta -> T with eta fixed.
inline double hmc_scaling_rate(double T, double eta, const SpectralInterval& interval) {
  if (!(T > 0.0)) throw DomainError("hmc_scaling_rate: T must be positive");
  const double h = cos_envelope(T * std::sqrt(interval.m), T * std::sqrt(interval.L));
  if (h >= 1.0) return 0.0;
  return std::abs(std::log(g_factor(h, eta))) / (T * std::sqrt(interval.L));
}

/// Limit of rho / (delta sqrt(L)) when K delta -> 0 with 1 - eta ~ gamma K delta.
inline double langevin_scaling_rate(double gamma, const SpectralInterval& interval) {
  if (!(gamma > 0.0)) throw DomainError("langevin_scaling_rate: gamma must be positive");
  return (gamma - std::sqrt(std::max(gamma * gamma - interval.m, 0.0))) / std::sqrt(interval.L);
}

struct OptimalChoice {
  Params params;
  double epsilon = 0.0;
  GaussRate rate;
};

/// Damping that is optimal in the small-tolerance regime for condition
/// number kappa: (1 - sin a) / cos a with a = pi / (1 + sqrt kappa).
inline double optimal_eta(double kappa) {
  // (1 - sin a)/cos a = tan(pi/4 - a/2); finite at kappa = 1 where it is 0.
  const double a = kPi / (1.0 + std::sqrt(kappa));
  return std::max(0.0, std::tan(0.25 * kPi - 0.5 * a));
}

/// Parameters maximizing the rate at equilibrium bias epsilon in dimension d.
inline OptimalChoice optimal_params(const SpectralInterval& interval, double epsilon, double d) {
  const double delta = delta_for_tolerance(epsilon, interval.L, d);
  if (!(delta * delta * interval.L < 4.0))
    throw DomainError("optimal_params: relative tolerance must be < 1");
  const double kappa = interval.kappa();
  const double scaled = delta * std::sqrt(interval.L) * (1.0 + 1.0 / std::sqrt(kappa));
  const int K = std::max(1, static_cast<int>(std::floor(kPi / scaled)));
  OptimalChoice out;
  out.params = Params(delta, K, optimal_eta(kappa));
  out.epsilon = epsilon_bias(delta, interval.L, d);
  out.rate = rate(out.params, interval);
  return out;
}

struct KCandidate {
  int K = 1;
  double eta = 0.0;  ///< eta_star(h(K, delta)); may be 1 when h = 1
  double rho = 0.0;
};

struct KSelection {
  int k_star = 1;
  bool precondition_holds = true;  ///< 2 phi_m < phi_L <= pi/2
  bool scanned = false;            ///< fallback exhaustive scan used
  KCandidate best;                 ///< best over K with eta = eta_star(h(K))
  KCandidate best_position;        ///< best over K with eta = 0
  std::vector<int> candidates;
};

/// Best number of Verlet steps at fixed delta. Under 2 phi_m < phi_L <= pi/2
/// the maximizer is one of K* - 1, K* with K* = 1 + floor(pi/(phi_m + phi_L));
/// outside that regime every K up to ceil(2 pi / phi_m) is scanned.
inline KSelection optimal_K_fixed_delta(double delta, const SpectralInterval& interval) {
  const double phi_m = phi_angle(interval.m, delta);
  const double phi_L = phi_angle(interval.L, delta);
  KSelection sel;
  sel.k_star = 1 + static_cast<int>(std::floor(kPi / (phi_m + phi_L)));
  sel.precondition_holds = 2.0 * phi_m < phi_L && phi_L <= 0.5 * kPi;
  if (sel.precondition_holds) {
    if (sel.k_star - 1 >= 1) sel.candidates.push_back(sel.k_star - 1);
    sel.candidates.push_back(sel.k_star);
  } else {
    sel.scanned = true;
    const int k_max = std::max(1, static_cast<int>(std::ceil(2.0 * kPi / phi_m)));
    for (int K = 1; K <= k_max; ++K) sel.candidates.push_back(K);
  }
  sel.best.rho = -1.0;
  sel.best_position.rho = -1.0;
  for (int K : sel.candidates) {
    const double h = cos_envelope(K * phi_m, K * phi_L);
    const double eta = eta_star(h);
    const double rho = rate_from_envelope(h, eta, K).rho;
    if (rho > sel.best.rho) sel.best = {K, eta, rho};
    const double rho0 = rate_from_envelope(h, 0.0, K).rho;
    if (rho0 > sel.best_position.rho) sel.best_position = {K, 0.0, rho0};
  }
  return sel;
}

/// W2 between centered 1-d Gaussians with the given precisions.
inline double w2_gaussian_1d(double prec1, double prec2) {
  if (!(prec1 > 0.0) || !(prec2 > 0.0))
    throw DomainError("w2_gaussian_1d: precisions must be positive");
  return std::abs(1.0 / std::sqrt(prec1) - 1.0 / std::sqrt(prec2));
}

/// W2 between Gaussians with diagonal precision matrices and means.
inline double w2_gaussian_diag(const Vector& mean1, const Vector& prec1, const Vector& mean2,
                               const Vector& prec2) {
  if (mean1.size() != prec1.size() || mean2.size() != prec2.size() ||
      mean1.size() != mean2.size())
    throw DomainError("w2_gaussian_diag: dimension mismatch");
  double sq = (mean1 - mean2).squaredNorm();
  for (Index i = 0; i < prec1.size(); ++i) {
    const double s = w2_gaussian_1d(prec1(i), prec2(i));
    sq += s * s;
  }
  return std::sqrt(sq);
}

}  // namespace uhmc::gaussian
