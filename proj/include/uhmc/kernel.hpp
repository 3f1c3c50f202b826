#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "uhmc/metric.hpp"
#include "uhmc/oracle.hpp"
#include "uhmc/rng.hpp"
#include "uhmc/types.hpp"

namespace uhmc {

/// One position-Verlet step with force b(., theta):
///   x' = x + delta v - delta^2/2 b(x + delta/2 v, theta)
///   v' = v - delta b(x + delta/2 v, theta)
/// Exactly one oracle evaluation.
template <GradientOracle O>
PhaseState verlet_step(const O& oracle, const typename O::theta_type& theta, double delta,
                       const PhaseState& z) {
  const Vector mid = z.x + (0.5 * delta) * z.v;
  const Vector force = oracle.eval(mid, theta);
  for (Index i = 0; i < force.size(); ++i)
    if (!std::isfinite(force(i))) throw NumericalOverflow(i, force(i));
  return {z.x + delta * z.v - (0.5 * delta * delta) * force, z.v - delta * force};
}

/// Autoregressive velocity refreshment v <- eta v + sqrt(1 - eta^2) g.
inline PhaseState damping_step(double eta, const PhaseState& z, const Vector& g) {
  if (g.size() != z.v.size())
    throw std::invalid_argument("damping_step: noise has length " + std::to_string(g.size()) +
                                ", velocity has length " + std::to_string(z.v.size()));
  return {z.x, eta * z.v + std::sqrt(1.0 - eta * eta) * g};
}

/// Every random input consumed by one transition.
template <GradientOracle O>
struct TransitionNoise {
  Vector g_in;
  std::vector<typename O::theta_type> thetas;
  Vector g_out;
};

namespace detail {

inline Vector standard_normal(Index d, SplitMix64 gen) {
  std::normal_distribution<double> normal;
  Vector g(d);
  for (Index i = 0; i < d; ++i) g(i) = normal(gen);
  return g;
}

}  // namespace detail

/// Draws the noise of the rng's current transition. Stage layout:
/// 0 first Gaussian, 1..K auxiliary samples, K+1 second Gaussian.
template <GradientOracle O>
TransitionNoise<O> draw_noise(const O& oracle, const Params& params, const ChainRng& rng) {
  TransitionNoise<O> noise;
  const Index d = oracle.dim();
  noise.g_in = detail::standard_normal(d, rng.stage(0));
  noise.thetas.reserve(static_cast<std::size_t>(params.K));
  for (int k = 1; k <= params.K; ++k) {
    auto gen = rng.stage(static_cast<std::uint64_t>(k));
    noise.thetas.push_back(oracle.sample_theta(gen));
  }
  noise.g_out = detail::standard_normal(d, rng.stage(static_cast<std::uint64_t>(params.K) + 1));
  return noise;
}

/// Damping, K Verlet steps, damping, with the supplied noise.
template <GradientOracle O>
PhaseState transition_with(const O& oracle, const Params& params, const PhaseState& z,
                           const TransitionNoise<O>& noise) {
  PhaseState w = damping_step(params.eta, z, noise.g_in);
  for (int k = 0; k < params.K; ++k)
    w = verlet_step(oracle, noise.thetas[static_cast<std::size_t>(k)], params.delta, w);
  return damping_step(params.eta, w, noise.g_out);
}

/// One (SG)HMC transition. Consumes the rng's current transition index and
/// advances it.
template <GradientOracle O>
PhaseState transition(const O& oracle, const Params& params, const PhaseState& z, ChainRng& rng) {
  const auto noise = draw_noise(oracle, params, rng);
  rng.advance();
  return transition_with(oracle, params, z, noise);
}

namespace detail {

template <GradientOracle O>
void check_run_inputs(const O& oracle, const Params& params, const PhaseState& z0) {
  params.validate();
  if (!params.stable(oracle.L()))
    throw DomainError("unstable step size: delta^2 L = " +
                      std::to_string(params.delta * params.delta * oracle.L()) + " >= 4");
  if (!z0.valid() || z0.dim() != oracle.dim())
    throw std::invalid_argument("initial state must be finite with dimension " +
                                std::to_string(oracle.dim()));
}

}  // namespace detail

struct ChainSummary {
  PhaseState final_state;
  std::uint64_t transitions = 0;
  std::uint64_t gradient_evaluations = 0;
};

/// Runs n transitions; observer(n, state) sees the initial state (n = 0) and
/// the state after every transition.
template <GradientOracle O, class Observer>
ChainSummary run_chain(const O& oracle, const Params& params, const PhaseState& z0,
                       std::uint64_t n_transitions, ChainRng& rng, Observer&& observer) {
  detail::check_run_inputs(oracle, params, z0);
  CountingOracle<O> counted(oracle);
  PhaseState z = z0;
  observer(std::uint64_t{0}, static_cast<const PhaseState&>(z));
  for (std::uint64_t n = 1; n <= n_transitions; ++n) {
    z = transition(counted, params, z, rng);
    observer(n, static_cast<const PhaseState&>(z));
  }
  return {std::move(z), n_transitions, counted.count()};
}

template <GradientOracle O>
ChainSummary run_chain(const O& oracle, const Params& params, const PhaseState& z0,
                       std::uint64_t n_transitions, ChainRng& rng) {
  return run_chain(oracle, params, z0, n_transitions, rng, [](std::uint64_t, const PhaseState&) {});
}

/// Observer that stores every visited state.
struct TrajectoryRecorder {
  std::vector<PhaseState> states;
  void operator()(std::uint64_t, const PhaseState& z) { states.push_back(z); }
};

struct CouplingStep {
  std::uint64_t n = 0;
  double dist_euclid = 0.0;
  double dist_M = 0.0;
};

struct CouplingTrace {
  int gradients_per_transition = 1;
  std::vector<CouplingStep> steps;
};

/// Synchronous coupling: both chains consume the same Gaussian vectors and
/// the same auxiliary samples at every transition. Records both distances
/// at n = 0..n_transitions.
template <GradientOracle O>
CouplingTrace run_coupled(const O& oracle, const Params& params, const PhaseState& z0,
                          const PhaseState& z0_prime, std::uint64_t n_transitions, ChainRng& rng,
                          const MetricMatrix& metric) {
  detail::check_run_inputs(oracle, params, z0);
  detail::check_run_inputs(oracle, params, z0_prime);
  if (!metric.positive_definite()) throw DomainError("run_coupled: metric is not positive definite");

  CouplingTrace trace;
  trace.gradients_per_transition = params.K;
  trace.steps.reserve(static_cast<std::size_t>(n_transitions) + 1);
  PhaseState a = z0;
  PhaseState b = z0_prime;
  auto record = [&](std::uint64_t n) {
    const PhaseState diff = a - b;
    trace.steps.push_back({n, diff.stacked().norm(), m_norm(metric, diff)});
  };
  record(0);
  for (std::uint64_t n = 1; n <= n_transitions; ++n) {
    const auto noise = draw_noise(oracle, params, rng);
    rng.advance();
    a = transition_with(oracle, params, a, noise);
    b = transition_with(oracle, params, b, noise);
    record(n);
  }
  return trace;
}

}  // namespace uhmc
