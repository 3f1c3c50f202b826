#pragma once

// Estimators that confront simulated chains with the analytic predictions:
// log-linear decay fits of coupling traces, batch-means moments, ergodic
// risk over independent replicas, and empirical 1-d W2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "uhmc/kernel.hpp"
#include "uhmc/parallel.hpp"
#include "uhmc/types.hpp"

namespace uhmc::diagnostics {

enum class FitFlag { ok, degenerate, stalled };

inline const char* to_string(FitFlag f) {
  switch (f) {
    case FitFlag::ok: return "ok";
    case FitFlag::degenerate: return "degenerate";
    default: return "stalled";
  }
}

struct DecayFit {
  double rate_per_transition = 0.0;
  double rate_per_gradient = 0.0;
  double r_squared = 0.0;
  std::uint64_t n_start = 0;
  std::uint64_t n_end = 0;
  std::size_t points = 0;
  FitFlag flag = FitFlag::degenerate;
};

/// Least-squares fit of ln dist_M(n) = a - rate n over the trace after
/// dropping its first `discard_fraction`. Fewer than 10 usable (positive,
/// finite) points gives a degenerate fit; a per-gradient rate below
/// `stall_threshold` is flagged as stalled.
inline DecayFit fit_decay(const CouplingTrace& trace, double discard_fraction = 0.2,
                          double stall_threshold = 1e-4) {
  if (!(discard_fraction >= 0.0 && discard_fraction < 1.0))
    throw std::invalid_argument("fit_decay: discard_fraction must lie in [0, 1)");
  DecayFit fit;
  const auto& s = trace.steps;
  const auto first = static_cast<std::size_t>(std::floor(discard_fraction * s.size()));
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = first; i < s.size(); ++i) {
    if (s[i].dist_M > 0.0 && std::isfinite(s[i].dist_M)) {
      xs.push_back(static_cast<double>(s[i].n));
      ys.push_back(std::log(s[i].dist_M));
    }
  }
  fit.points = xs.size();
  if (xs.size() < 10) return fit;
  fit.n_start = static_cast<std::uint64_t>(xs.front());
  fit.n_end = static_cast<std::uint64_t>(xs.back());

  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  const double ss_res = std::max(0.0, syy - slope * sxy);
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  fit.rate_per_transition = -slope;
  fit.rate_per_gradient = fit.rate_per_transition / trace.gradients_per_transition;
  fit.flag = std::abs(fit.rate_per_gradient) < stall_threshold ? FitFlag::stalled : FitFlag::ok;
  return fit;
}

struct MeanEstimate {
  double mean = 0.0;
  double se = std::numeric_limits<double>::quiet_NaN();
};

/// Batch-means estimate of the mean of a correlated series and its
/// standard error. Trailing samples that do not fill a batch are ignored
/// for the error but kept in the mean.
inline MeanEstimate batch_means(std::span<const double> series, int batches = 50) {
  MeanEstimate est;
  if (series.empty()) return est;
  double total = 0.0;
  for (double v : series) total += v;
  est.mean = total / static_cast<double>(series.size());
  const std::size_t size = series.size() / static_cast<std::size_t>(batches);
  if (batches < 2 || size == 0) return est;
  std::vector<double> means(static_cast<std::size_t>(batches), 0.0);
  for (std::size_t b = 0; b < means.size(); ++b) {
    for (std::size_t i = 0; i < size; ++i) means[b] += series[b * size + i];
    means[b] /= static_cast<double>(size);
  }
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= batches;
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu);
  var /= (batches - 1);
  est.se = std::sqrt(var / batches);
  return est;
}

struct MomentReport {
  Vector mean_x, var_x, mean_v, var_v;
  Vector se_mean_x, se_var_x, se_mean_v, se_var_v;
  std::uint64_t samples = 0;
  std::uint64_t batches = 0;
};

/// Streaming per-coordinate moments of x and v with batch-means standard
/// errors over consecutive batches of fixed size.
class MomentAccumulator {
 public:
  MomentAccumulator(Index d, std::uint64_t batch_size)
      : d_(d), batch_size_(std::max<std::uint64_t>(1, batch_size)),
        sum_(Vector::Zero(2 * d)), sumsq_(Vector::Zero(2 * d)),
        bsum_(Vector::Zero(2 * d)), bsumsq_(Vector::Zero(2 * d)) {}

  void push(const PhaseState& z) {
    Vector s(2 * d_);
    s << z.x, z.v;
    sum_ += s;
    sumsq_ += s.cwiseAbs2();
    bsum_ += s;
    bsumsq_ += s.cwiseAbs2();
    ++count_;
    if (++in_batch_ == batch_size_) {
      const double b = static_cast<double>(batch_size_);
      batch_mean_.push_back(bsum_ / b);
      batch_sq_.push_back(bsumsq_ / b);
      bsum_.setZero();
      bsumsq_.setZero();
      in_batch_ = 0;
    }
  }

  std::uint64_t count() const noexcept { return count_; }

  MomentReport report() const {
    MomentReport r;
    r.samples = count_;
    r.batches = batch_mean_.size();
    const double n = static_cast<double>(std::max<std::uint64_t>(count_, 1));
    const Vector mean = sum_ / n;
    const Vector var = (sumsq_ / n - mean.cwiseAbs2()).cwiseMax(0.0);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Vector se_mean = Vector::Constant(2 * d_, nan);
    Vector se_var = Vector::Constant(2 * d_, nan);
    const std::size_t B = batch_mean_.size();
    if (B >= 2) {
      // Per-batch variance about the global mean: E_b[y^2] - 2 mu E_b[y] + mu^2.
      std::vector<Vector> bvar;
      for (std::size_t b = 0; b < B; ++b)
        bvar.push_back(batch_sq_[b] - 2.0 * mean.cwiseProduct(batch_mean_[b]) + mean.cwiseAbs2());
      se_mean = spread(batch_mean_);
      se_var = spread(bvar);
    }
    r.mean_x = mean.head(d_);
    r.mean_v = mean.tail(d_);
    r.var_x = var.head(d_);
    r.var_v = var.tail(d_);
    r.se_mean_x = se_mean.head(d_);
    r.se_mean_v = se_mean.tail(d_);
    r.se_var_x = se_var.head(d_);
    r.se_var_v = se_var.tail(d_);
    return r;
  }

 private:
  // Standard error of the average of the batch values.
  Vector spread(const std::vector<Vector>& values) const {
    const double B = static_cast<double>(values.size());
    Vector mu = Vector::Zero(2 * d_);
    for (const auto& v : values) mu += v;
    mu /= B;
    Vector ss = Vector::Zero(2 * d_);
    for (const auto& v : values) ss += (v - mu).cwiseAbs2();
    return (ss / (B - 1.0) / B).cwiseSqrt();
  }

  Index d_;
  std::uint64_t batch_size_;
  std::uint64_t count_ = 0;
  std::uint64_t in_batch_ = 0;
  Vector sum_, sumsq_, bsum_, bsumsq_;
  std::vector<Vector> batch_mean_;
  std::vector<Vector> batch_sq_;
};

inline constexpr int kDefaultBatches = 50;

/// Moments of the chain after `burn_in` transitions, over `n_samples`
/// further transitions, with 50 batch-means standard errors.
template <GradientOracle O>
MomentReport stationary_moments(const O& oracle, const Params& params, const PhaseState& z0,
                                std::uint64_t burn_in, std::uint64_t n_samples, ChainRng& rng) {
  if (n_samples < 10000) throw DomainError("stationary_moments: need at least 1e4 samples");
  MomentAccumulator acc(oracle.dim(), n_samples / kDefaultBatches);
  run_chain(oracle, params, z0, burn_in + n_samples, rng,
            [&](std::uint64_t n, const PhaseState& z) {
              if (n > burn_in) acc.push(z);
            });
  return acc.report();
}

struct RiskEstimate {
  std::uint64_t n = 0;
  std::uint64_t n0 = 0;
  std::size_t replicas = 0;
  double mse = 0.0;
  double se = 0.0;  ///< jackknife standard error
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Jackknife standard error of the mean of `values`.
inline double jackknife_se(std::span<const double> values) {
  const double R = static_cast<double>(values.size());
  if (values.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (double v : values) total += v;
  std::vector<double> loo;
  loo.reserve(values.size());
  for (double v : values) loo.push_back((total - v) / (R - 1.0));
  double mu = 0.0;
  for (double t : loo) mu += t;
  mu /= R;
  double ss = 0.0;
  for (double t : loo) ss += (t - mu) * (t - mu);
  return std::sqrt((R - 1.0) / R * ss);
}

inline RiskEstimate summarize_risk(std::span<const double> sq_errors, std::uint64_t n,
                                   std::uint64_t n0) {
  RiskEstimate est;
  est.n = n;
  est.n0 = n0;
  est.replicas = sq_errors.size();
  double total = 0.0;
  for (double e : sq_errors) total += e;
  est.mse = total / static_cast<double>(sq_errors.size());
  est.se = jackknife_se(sq_errors);
  est.ci_low = std::max(0.0, est.mse - 1.96 * est.se);
  est.ci_high = est.mse + 1.96 * est.se;
  return est;
}

using Observable = std::function<double(const Vector&)>;

/// Empirical mean squared deviation of (1/n) sum_{k=n0+1}^{n0+n} f(x_k)
/// from `reference`, over independent replicas (replica r uses chain
/// stream r), for every n of `n_grid` from the same trajectories.
template <GradientOracle O>
std::vector<RiskEstimate> ergodic_risk_grid(const O& oracle, const Params& params,
                                            const PhaseState& z0, const Observable& f,
                                            double reference, std::span<const std::uint64_t> n_grid,
                                            std::uint64_t n0, std::size_t replicas,
                                            std::uint64_t seed, unsigned threads = 1) {
  if (replicas < 30) throw DomainError("ergodic_risk: need at least 30 replicas");
  if (n_grid.empty()) throw DomainError("ergodic_risk: empty n grid");
  const std::uint64_t n_max = *std::max_element(n_grid.begin(), n_grid.end());
  if (*std::min_element(n_grid.begin(), n_grid.end()) < 1)
    throw DomainError("ergodic_risk: n must be >= 1");
  std::vector<std::vector<double>> errs(n_grid.size(), std::vector<double>(replicas, 0.0));
  parallel_for(replicas, threads, [&](std::size_t r) {
    ChainRng rng(seed, r);
    double running = 0.0;
    std::vector<double> sums(n_grid.size(), 0.0);
    run_chain(oracle, params, z0, n0 + n_max, rng, [&](std::uint64_t k, const PhaseState& z) {
      if (k <= n0) return;
      running += f(z.x);
      const std::uint64_t taken = k - n0;
      for (std::size_t g = 0; g < n_grid.size(); ++g)
        if (n_grid[g] == taken) sums[g] = running;
    });
    for (std::size_t g = 0; g < n_grid.size(); ++g) {
      const double avg = sums[g] / static_cast<double>(n_grid[g]);
      errs[g][r] = (avg - reference) * (avg - reference);
    }
  });
  std::vector<RiskEstimate> out;
  for (std::size_t g = 0; g < n_grid.size(); ++g) out.push_back(summarize_risk(errs[g], n_grid[g], n0));
  return out;
}

template <GradientOracle O>
RiskEstimate ergodic_risk(const O& oracle, const Params& params, const PhaseState& z0,
                          const Observable& f, double reference, std::uint64_t n, std::uint64_t n0,
                          std::size_t replicas, std::uint64_t seed, unsigned threads = 1) {
  const std::uint64_t grid[] = {n};
  return ergodic_risk_grid(oracle, params, z0, f, reference, grid, n0, replicas, seed, threads)
      .front();
}

/// Exact W2 between two equal-size empirical measures on the line.
inline double empirical_w2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("empirical_w2_1d: samples must be non-empty and of equal size");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq / static_cast<double>(a.size()));
}

}  // namespace uhmc::diagnostics
