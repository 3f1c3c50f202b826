#pragma once

// Certificates for log-concave targets with m <= D b <= L: the contraction
// conditions, the certified per-transition rate and its metric, and the
// quadratic-risk and equilibrium-bias bounds built on them.
//
// The risk and bias bounds carry exponentials whose arguments are in the
// thousands whenever the contraction conditions hold, so both are also
// reported as natural logarithms; the linear values saturate to +inf.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uhmc/metric.hpp"
#include "uhmc/types.hpp"

namespace uhmc::bounds {

class MissingCertificate : public DomainError {
 public:
  using DomainError::DomainError;
};

struct Condition {
  std::string name;
  bool applicable = true;
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct ConditionReport {
  std::vector<Condition> items;

  const Condition& get(const std::string& name) const {
    for (const auto& c : items)
      if (c.name == name) return c;
    throw std::out_of_range("no condition named " + name);
  }
  bool holds(const std::string& name) const { return get(name).holds; }

  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& c : items)
      if (c.applicable && !c.holds) out.push_back(c.name);
    return out;
  }
};

namespace detail {

// lhs <= rhs up to a few ulps, so conditions that hold with equality in
// exact arithmetic are not lost to rounding.
inline bool leq(double lhs, double rhs) { return lhs <= rhs + 1e-12 * std::abs(rhs); }

}  // namespace detail

/// Evaluates
///   stability:        2 delta sqrt(L) <= 1
///   damping:          1 - eta^2 >= 8 K delta L^{3/2} / m
///   exponential_step: e^{5 K delta sqrt(L)/4} K delta <= m^{3/2} / (40 L^2 (1 - eta^2))
///   position_hmc:     5 delta K <= m / L^{3/2}   (only when eta = 0)
inline ConditionReport check_conditions(const Params& p, const SpectralInterval& iv) {
  const double sL = std::sqrt(iv.L);
  const double Kd = p.K * p.delta;
  const double w = 1.0 - p.eta * p.eta;
  ConditionReport rep;
  auto add = [&](std::string name, bool applicable, double lhs, double rhs) {
    rep.items.push_back({std::move(name), applicable, applicable && detail::leq(lhs, rhs), lhs, rhs});
  };
  add("stability", true, 2.0 * p.delta * sL, 1.0);
  add("damping", true, 8.0 * Kd * iv.L * sL / iv.m, w);
  add("exponential_step", true, std::exp(1.25 * Kd * sL) * Kd,
      std::pow(iv.m, 1.5) / (40.0 * iv.L * iv.L * w));
  add("position_hmc", p.eta == 0.0, 5.0 * Kd, iv.m / (iv.L * sL));
  return rep;
}

/// (2/5) (delta K)^2 m: contraction of |x_n - x_n'| under full refreshment.
inline double position_hmc_rate_formula(const Params& p, const SpectralInterval& iv) {
  const double Kd = p.K * p.delta;
  return 0.4 * Kd * Kd * iv.m;
}

/// (delta K)^2 m / (40 (1 - eta^2)): contraction of |z_n - z_n'|_M.
inline double general_rate_formula(const Params& p, const SpectralInterval& iv) {
  const double Kd = p.K * p.delta;
  return Kd * Kd * iv.m / (40.0 * (1.0 - p.eta * p.eta));
}

/// Contraction metric. Built in rescaled units (L' = 1, m' = m/L,
/// delta' = delta sqrt L) as M' = [[1, c'], [c', a']] with a' = m'/2 and
/// c' = K delta' eta / (1 - eta^2), then mapped back so that
/// |(x, v)|_M = |(sqrt(L) x, v)|_{M'} / sqrt(L).
inline MetricMatrix metric_matrix(const Params& p, const SpectralInterval& iv) {
  const double sL = std::sqrt(iv.L);
  const double a = 0.5 * iv.m / iv.L;
  const double c = p.K * p.delta * sL * p.eta / (1.0 - p.eta * p.eta);
  MetricMatrix M{1.0, c / sL, a / iv.L};
  if (!M.positive_definite())
    throw DomainError("metric_matrix: [[1, c], [c, a]] is not positive definite (c^2 >= a)");
  return M;
}

/// The rescaled block M' itself.
inline MetricMatrix rescaled_metric(const Params& p, const SpectralInterval& iv) {
  const double a = 0.5 * iv.m / iv.L;
  const double c = p.K * p.delta * std::sqrt(iv.L) * p.eta / (1.0 - p.eta * p.eta);
  return {1.0, c, a};
}

enum class CertRegime { none, position_hmc, general };

inline const char* to_string(CertRegime r) {
  switch (r) {
    case CertRegime::position_hmc: return "position-hmc";
    case CertRegime::general: return "general";
    default: return "none";
  }
}

struct RateCertificate {
  std::optional<double> rho;  ///< headline certified factor per transition
  CertRegime regime = CertRegime::none;
  ConditionReport conditions;
  /// Present whenever the general-eta conditions hold, including at eta = 0.
  std::optional<double> general_rho;
  std::optional<MetricMatrix> metric;

  bool ok() const { return rho.has_value(); }
  std::vector<std::string> failures() const { return conditions.failures(); }
};

/// Certified contraction factor. For eta = 0 with the position condition
/// the position distance contracts by 1 - (2/5)(delta K)^2 m; otherwise,
/// when stability, damping and exponential_step hold, the M-distance
/// contracts by 1 - (delta K)^2 m / (40 (1 - eta^2)).
inline RateCertificate certified_rate(const Params& p, const SpectralInterval& iv) {
  RateCertificate cert;
  cert.conditions = check_conditions(p, iv);
  const auto& c = cert.conditions;
  const bool general = c.holds("stability") && c.holds("damping") && c.holds("exponential_step");
  if (general) {
    MetricMatrix M = metric_matrix(p, iv);
    cert.general_rho = general_rate_formula(p, iv);
    cert.metric = M;
  }
  if (p.eta == 0.0 && c.holds("stability") && c.holds("position_hmc")) {
    cert.rho = position_hmc_rate_formula(p, iv);
    cert.regime = CertRegime::position_hmc;
  } else if (general) {
    cert.rho = cert.general_rho;
    cert.regime = CertRegime::general;
  }
  return cert;
}

/// C_{K, delta} = (1/4) e^{5 (K - 1) delta / 4} delta^3 (K^3 + K - 1).
inline double c_k_delta(int K, double delta) {
  const double k = K;
  return 0.25 * std::exp(1.25 * (k - 1.0) * delta) * delta * delta * delta * (k * k * k + k - 1.0);
}

struct RiskBound {
  long long n = 0;
  long long n0 = 0;
  double W0 = 0.0;
  double Nb = 0.0;
  double rho = 0.0;
  double log_var_bound = 0.0;
  double var_bound = 0.0;
  double log_total = 0.0;
  double total = 0.0;
};

namespace detail {

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

inline RateCertificate require_general(const Params& p, const SpectralInterval& iv,
                                       const char* where) {
  RateCertificate cert = certified_rate(p, iv);
  if (!cert.general_rho) {
    std::string msg = std::string(where) + ": contraction certificate missing; failed:";
    for (const auto& f : cert.failures()) msg += " " + f;
    throw MissingCertificate(msg);
  }
  return cert;
}

}  // namespace detail

/// Mean squared error bound for the ergodic average of a 1-Lipschitz f over
/// transitions n0+1..n0+n:
///   3 (1-rho)^{2 n0} / (rho n)^2 W0^2 + 6/(n rho) Var,
///   Var <= (22/rho) e^{25 delta K L/(rho sqrt m)} ((1-eta^2) d + (6 m / L^{5/2}) delta K Nb).
inline RiskBound risk_bound(const Params& p, const SpectralInterval& iv, double d, long long n,
                            long long n0, double W0, double Nb) {
  if (n < 1 || n0 < 0) throw DomainError("risk_bound: need n >= 1 and n0 >= 0");
  if (!(W0 >= 0.0) || !(Nb >= 0.0)) throw DomainError("risk_bound: W0 and Nb must be >= 0");
  const RateCertificate cert = detail::require_general(p, iv, "risk_bound");
  const double rho = *cert.general_rho;
  const double Kd = p.K * p.delta;
  RiskBound rb;
  rb.n = n;
  rb.n0 = n0;
  rb.W0 = W0;
  rb.Nb = Nb;
  rb.rho = rho;
  const double inner = (1.0 - p.eta * p.eta) * d + 6.0 * iv.m / std::pow(iv.L, 2.5) * Kd * Nb;
  rb.log_var_bound = std::log(22.0 / rho) + 25.0 * Kd * iv.L / (rho * std::sqrt(iv.m)) +
                     std::log(inner);
  rb.var_bound = std::exp(rb.log_var_bound);
  const double nn = static_cast<double>(n);
  const double log_init = W0 > 0.0 ? std::log(3.0) + 2.0 * n0 * std::log1p(-rho) -
                                         2.0 * std::log(rho * nn) + 2.0 * std::log(W0)
                                   : -std::numeric_limits<double>::infinity();
  const double log_stat = std::log(6.0 / (nn * rho)) + rb.log_var_bound;
  rb.log_total = detail::log_add(log_init, log_stat);
  rb.total = std::exp(rb.log_total);
  return rb;
}

struct BiasBound {
  double L2 = 0.0;
  double log_Ctilde = 0.0;
  double Ctilde = 0.0;
  double log_bound = 0.0;
  double bound = 0.0;
};

/// W2 distance between target and chain equilibrium marginal, deterministic
/// gradients with L2-Lipschitz Hessian:
///   Ctilde delta^2 d (or sqrt d when separable),
///   Ctilde = (7 (L + L2) / m) exp(111 (1 - eta^2) / (delta K m / sqrt L)).
inline BiasBound bias_bound(const Params& p, const SpectralInterval& iv, double L2, double d,
                            bool separable) {
  if (!(L2 >= 0.0) || !(d >= 1.0)) throw DomainError("bias_bound: need L2 >= 0 and d >= 1");
  detail::require_general(p, iv, "bias_bound");
  BiasBound bb;
  bb.L2 = L2;
  bb.log_Ctilde = std::log(7.0 * (iv.L + L2) / iv.m) +
                  111.0 * (1.0 - p.eta * p.eta) * std::sqrt(iv.L) / (p.delta * p.K * iv.m);
  bb.Ctilde = std::exp(bb.log_Ctilde);
  bb.log_bound = bb.log_Ctilde + 2.0 * std::log(p.delta) + (separable ? 0.5 : 1.0) * std::log(d);
  bb.bound = std::exp(bb.log_bound);
  return bb;
}

}  // namespace uhmc::bounds
