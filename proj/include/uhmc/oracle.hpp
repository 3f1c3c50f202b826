#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "uhmc/rng.hpp"
#include "uhmc/types.hpp"

namespace uhmc {

/// Auxiliary variable of a deterministic force: carries nothing.
struct NoTheta {};

/// A force model b(x, theta) with certified curvature bounds
/// m |u|^2 <= u . D_x b(x, theta) u and |D_x b(x, theta) u| <= L |u|.
template <class O>
concept GradientOracle = requires(const O& o, const Vector& x,
                                  const typename O::theta_type& theta, SplitMix64& gen) {
  typename O::theta_type;
  { o.dim() } -> std::convertible_to<Index>;
  { o.m() } -> std::convertible_to<double>;
  { o.L() } -> std::convertible_to<double>;
  { o.eval(x, theta) } -> std::convertible_to<Vector>;
  { o.sample_theta(gen) } -> std::same_as<typename O::theta_type>;
  { O::is_deterministic } -> std::convertible_to<bool>;
};

/// b(x) = S x with S diagonal.
class QuadraticOracle {
 public:
  using theta_type = NoTheta;
  static constexpr bool is_deterministic = true;

  explicit QuadraticOracle(Vector diag) : diag_(std::move(diag)) {
    if (diag_.size() < 1) throw DomainError("QuadraticOracle: empty spectrum");
    if (!(diag_.minCoeff() > 0.0) || !diag_.allFinite())
      throw DomainError("QuadraticOracle: eigenvalues must be finite and positive");
  }

  /// d copies of a single eigenvalue.
  static QuadraticOracle isotropic(Index d, double lambda) {
    return QuadraticOracle(Vector::Constant(d, lambda));
  }

  Index dim() const noexcept { return diag_.size(); }
  double m() const noexcept { return diag_.minCoeff(); }
  double L() const noexcept { return diag_.maxCoeff(); }
  const Vector& spectrum() const noexcept { return diag_; }

  Vector eval(const Vector& x, NoTheta = {}) const { return diag_.cwiseProduct(x); }

  template <class Gen>
  NoTheta sample_theta(Gen&) const noexcept {
    return {};
  }

 private:
  Vector diag_;
};

/// b(x)_i = x_i + alpha tanh(x_i). Separable and non-Gaussian, with
/// Hessian bounds 1 <= b' <= 1 + alpha available in closed form.
class PerturbedQuadraticOracle {
 public:
  using theta_type = NoTheta;
  static constexpr bool is_deterministic = true;

  PerturbedQuadraticOracle(Index d, double alpha) : d_(d), alpha_(alpha) {
    if (d < 1) throw DomainError("PerturbedQuadraticOracle: dimension must be >= 1");
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
      throw DomainError("PerturbedQuadraticOracle: alpha must be finite and >= 0");
  }

  Index dim() const noexcept { return d_; }
  double m() const noexcept { return 1.0; }
  double L() const noexcept { return 1.0 + alpha_; }
  double alpha() const noexcept { return alpha_; }

  /// Lipschitz constant of the Hessian: sup |d^3 U| = alpha sup |tanh''| = alpha 4/(3 sqrt 3).
  double hessian_lipschitz() const noexcept { return alpha_ * 4.0 / (3.0 * std::sqrt(3.0)); }

  Vector eval(const Vector& x, NoTheta = {}) const {
    return x + alpha_ * x.array().tanh().matrix();
  }

  template <class Gen>
  NoTheta sample_theta(Gen&) const noexcept {
    return {};
  }

 private:
  Index d_;
  double alpha_;
};

namespace detail {

inline double binomial(int N, int n) {
  double r = 1.0;
  for (int i = 1; i <= n; ++i) r = r * (N - n + i) / i;
  return r;
}

/// Calls f(indices) for every size-n subset of {0..N-1} in lexicographic order.
template <class F>
void for_each_subset(int N, int n, F&& f) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    f(static_cast<const std::vector<int>&>(idx));
    int i = n - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == N - n + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < n; ++j)
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

}  // namespace detail

/// Mini-batch estimator of the gradient of sum_i |A_i x - y_i|^2:
///   b(x, theta) = (N/n) sum_{i in theta} 2 A_i^T (A_i x - y_i),
/// theta a uniform size-n subset of {0..N-1}. The N/n factor makes it
/// unbiased for the full-data gradient.
class MiniBatchLeastSquaresOracle {
 public:
  using theta_type = std::vector<int>;
  static constexpr bool is_deterministic = false;

  /// Subset counts up to this size are enumerated exactly; beyond it the
  /// curvature bounds fall back to Weyl's inequalities.
  static constexpr double kEnumerationLimit = 2.0e5;

  MiniBatchLeastSquaresOracle(std::vector<Eigen::MatrixXd> A, std::vector<Vector> y, int batch)
      : A_(std::move(A)), y_(std::move(y)), batch_(batch) {
    const int N = static_cast<int>(A_.size());
    if (N < 1 || static_cast<int>(y_.size()) != N)
      throw DomainError("MiniBatchLeastSquaresOracle: need matching non-empty A and y");
    if (batch_ < 1 || batch_ > N)
      throw DomainError("MiniBatchLeastSquaresOracle: batch size must lie in [1, N]");
    d_ = A_.front().cols();
    for (int i = 0; i < N; ++i) {
      if (A_[idx(i)].cols() != d_ || A_[idx(i)].rows() != y_[idx(i)].size())
        throw DomainError("MiniBatchLeastSquaresOracle: inconsistent shapes at term " +
                          std::to_string(i));
      hess_.push_back(2.0 * A_[idx(i)].transpose() * A_[idx(i)]);
      shift_.push_back(2.0 * A_[idx(i)].transpose() * y_[idx(i)]);
    }
    compute_bounds();
    if (!(m_ > 0.0))
      throw DomainError("MiniBatchLeastSquaresOracle: some mini-batch Hessian is singular");
  }

  /// Well-conditioned synthetic problem: A_i = (I + spread R_i)/sqrt(2N),
  /// R_i and y_i standard Gaussian, so every batch Hessian is close to I.
  static MiniBatchLeastSquaresOracle synthetic(int N, int batch, Index d, std::uint64_t seed,
                                               double spread = 0.1) {
    SplitMix64 gen(StreamKey{seed, 0xda7aULL, 0, 0}.hash());
    std::normal_distribution<double> normal;
    const double scale = 1.0 / std::sqrt(2.0 * N);
    std::vector<Eigen::MatrixXd> A;
    std::vector<Vector> y;
    for (int i = 0; i < N; ++i) {
      Eigen::MatrixXd R(d, d);
      for (Index r = 0; r < d; ++r)
        for (Index c = 0; c < d; ++c) R(r, c) = normal(gen);
      A.push_back(scale * (Eigen::MatrixXd::Identity(d, d) + spread * R));
      Vector yi(d);
      for (Index r = 0; r < d; ++r) yi(r) = normal(gen);
      y.push_back(std::move(yi));
    }
    return MiniBatchLeastSquaresOracle(std::move(A), std::move(y), batch);
  }

  Index dim() const noexcept { return d_; }
  double m() const noexcept { return m_; }
  double L() const noexcept { return L_; }
  int data_size() const noexcept { return static_cast<int>(A_.size()); }
  int batch_size() const noexcept { return batch_; }
  bool bounds_exact() const noexcept { return bounds_exact_; }

  Vector eval(const Vector& x, const theta_type& theta) const {
    Vector g = Vector::Zero(d_);
    for (int i : theta) g.noalias() += hess_[idx(i)] * x - shift_[idx(i)];
    return (static_cast<double>(data_size()) / batch_) * g;
  }

  template <class Gen>
  theta_type sample_theta(Gen& gen) const {
    // Partial Fisher-Yates on 0..N-1.
    const int N = data_size();
    std::vector<int> pool(static_cast<std::size_t>(N));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < batch_; ++i) {
      std::uniform_int_distribution<int> pick(i, N - 1);
      std::swap(pool[idx(i)], pool[idx(pick(gen))]);
    }
    pool.resize(static_cast<std::size_t>(batch_));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  /// Gradient of sum_i U_i.
  Vector full_gradient(const Vector& x) const {
    Vector g = Vector::Zero(d_);
    for (std::size_t i = 0; i < hess_.size(); ++i) g.noalias() += hess_[i] * x - shift_[i];
    return g;
  }

  /// Unique zero x* of the mean force.
  Vector least_squares_solution() const {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d_, d_);
    Vector r = Vector::Zero(d_);
    for (std::size_t i = 0; i < hess_.size(); ++i) {
      H += hess_[i];
      r += shift_[i];
    }
    return H.ldlt().solve(r);
  }

  /// N_b = inf_x E_theta |b(x, theta)|^2. The second moment is a convex
  /// quadratic in x, so the infimum is found by one linear solve. Exact by
  /// subset enumeration when feasible, otherwise a Monte Carlo average over
  /// `mc_batches` sampled subsets.
  double gradient_floor(std::uint64_t seed = 0, int mc_batches = 20000) const {
    // b(x, theta) = H_theta x - r_theta;
    // E|b|^2 = x^T E[H^2] x - 2 x^T E[H r] + E|r|^2.
    Eigen::MatrixXd HH = Eigen::MatrixXd::Zero(d_, d_);
    Vector Hr = Vector::Zero(d_);
    double rr = 0.0;
    double count = 0.0;
    auto accumulate = [&](const std::vector<int>& theta) {
      auto [H, r] = batch_affine(theta);
      HH += H * H;
      Hr += H * r;
      rr += r.squaredNorm();
      count += 1.0;
    };
    if (detail::binomial(data_size(), batch_) <= kEnumerationLimit) {
      detail::for_each_subset(data_size(), batch_, accumulate);
    } else {
      for (int k = 0; k < mc_batches; ++k) {
        auto gen = StreamKey{seed, 0xb0bULL, static_cast<std::uint64_t>(k), 0}.engine();
        accumulate(sample_theta(gen));
      }
    }
    HH /= count;
    Hr /= count;
    rr /= count;
    const Vector xs = HH.ldlt().solve(Hr);
    return std::max(0.0, rr - Hr.dot(xs));
  }

  /// (H_theta, r_theta) with b(x, theta) = H_theta x - r_theta.
  std::pair<Eigen::MatrixXd, Vector> batch_affine(const theta_type& theta) const {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d_, d_);
    Vector r = Vector::Zero(d_);
    for (int i : theta) {
      H += hess_[idx(i)];
      r += shift_[idx(i)];
    }
    const double w = static_cast<double>(data_size()) / batch_;
    return {w * H, w * r};
  }

 private:
  static std::size_t idx(int i) { return static_cast<std::size_t>(i); }

  void compute_bounds() {
    const int N = data_size();
    if (detail::binomial(N, batch_) <= kEnumerationLimit) {
      m_ = std::numeric_limits<double>::infinity();
      L_ = 0.0;
      detail::for_each_subset(N, batch_, [&](const std::vector<int>& theta) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(batch_affine(theta).first,
                                                          Eigen::EigenvaluesOnly);
        m_ = std::min(m_, es.eigenvalues()(0));
        L_ = std::max(L_, es.eigenvalues()(d_ - 1));
      });
      bounds_exact_ = true;
      return;
    }
    // Weyl: lambda_min of a sum >= sum of lambda_min, likewise for lambda_max.
    std::vector<double> lo;
    std::vector<double> hi;
    for (const auto& H : hess_) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
      lo.push_back(es.eigenvalues()(0));
      hi.push_back(es.eigenvalues()(d_ - 1));
    }
    std::sort(lo.begin(), lo.end());
    std::sort(hi.begin(), hi.end(), std::greater<>());
    const double w = static_cast<double>(N) / batch_;
    m_ = w * std::accumulate(lo.begin(), lo.begin() + batch_, 0.0);
    L_ = w * std::accumulate(hi.begin(), hi.begin() + batch_, 0.0);
    bounds_exact_ = false;
  }

  std::vector<Eigen::MatrixXd> A_;
  std::vector<Vector> y_;
  std::vector<Eigen::MatrixXd> hess_;
  std::vector<Vector> shift_;
  int batch_;
  Index d_ = 0;
  double m_ = 0.0;
  double L_ = 0.0;
  bool bounds_exact_ = false;
};

/// Wraps an oracle and counts force evaluations.
template <GradientOracle O>
class CountingOracle {
 public:
  using theta_type = typename O::theta_type;
  static constexpr bool is_deterministic = O::is_deterministic;

  explicit CountingOracle(const O& inner) : inner_(&inner) {}

  Index dim() const { return inner_->dim(); }
  double m() const { return inner_->m(); }
  double L() const { return inner_->L(); }

  Vector eval(const Vector& x, const theta_type& theta) const {
    ++count_;
    return inner_->eval(x, theta);
  }

  template <class Gen>
  theta_type sample_theta(Gen& gen) const {
    return inner_->sample_theta(gen);
  }

  std::uint64_t count() const noexcept { return count_; }

 private:
  const O* inner_;
  mutable std::uint64_t count_ = 0;
};

struct CurvatureReport {
  bool ok = true;
  double min_ratio = std::numeric_limits<double>::infinity();  // min u.Ju / |u|^2
  double max_ratio = 0.0;                                      // max |Ju| / |u|
  int probes = 0;
  std::string failure;
};

/// Probes Assumption (m, L) with central finite differences at random points
/// and directions: m|u|^2 - tol <= u.(Ju) and |Ju| <= L|u| + tol, where
/// tol = 1e-6 relative to L|u|^2 and the difference step is 1e-5 (1 + |x|).
template <GradientOracle O>
CurvatureReport check_curvature(const O& oracle, int probes, std::uint64_t seed,
                                double position_scale = 3.0) {
  constexpr double kRelTol = 1e-6;
  CurvatureReport rep;
  const Index d = oracle.dim();
  std::normal_distribution<double> normal;
  for (int p = 0; p < probes; ++p) {
    auto gen = StreamKey{seed, 0xc0deULL, static_cast<std::uint64_t>(p), 0}.engine();
    Vector x(d);
    Vector u(d);
    for (Index i = 0; i < d; ++i) x(i) = position_scale * normal(gen);
    for (Index i = 0; i < d; ++i) u(i) = normal(gen);
    u.normalize();
    const auto theta = oracle.sample_theta(gen);
    const double h = 1e-5 * (1.0 + x.norm());
    const Vector Ju = (oracle.eval(x + h * u, theta) - oracle.eval(x - h * u, theta)) / (2.0 * h);
    const double quad = u.dot(Ju);
    const double stretch = Ju.norm();
    rep.min_ratio = std::min(rep.min_ratio, quad);
    rep.max_ratio = std::max(rep.max_ratio, stretch);
    ++rep.probes;
    const double tol = kRelTol * oracle.L();
    if (quad < oracle.m() - tol && rep.ok) {
      rep.ok = false;
      rep.failure = "convexity bound violated at probe " + std::to_string(p);
    }
    if (stretch > oracle.L() + tol && rep.ok) {
      rep.ok = false;
      rep.failure = "smoothness bound violated at probe " + std::to_string(p);
    }
  }
  return rep;
}

}  // namespace uhmc
