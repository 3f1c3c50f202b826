#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "reference.hpp"
#include "uhmc/bounds.hpp"
#include "uhmc/gaussian.hpp"

using namespace uhmc;
using namespace uhmc::bounds;

namespace {

// delta = 0.04, K = 1, 1 - eta^2 = 0.4 on m = 1, L = 1.1.
Params certified() { return Params(0.04, 1, std::sqrt(0.6)); }
const SpectralInterval kIv(1.0, 1.1);

}  // namespace

TEST(Conditions, CertifiedExamplePasses) {
  const auto rep = check_conditions(certified(), kIv);
  EXPECT_TRUE(rep.holds("stability"));
  EXPECT_TRUE(rep.holds("damping"));
  EXPECT_TRUE(rep.holds("exponential_step"));
  EXPECT_FALSE(rep.get("position_hmc").applicable);
  EXPECT_TRUE(rep.failures().empty());
  EXPECT_THROW(rep.get("nonsense"), std::out_of_range);
}

TEST(Conditions, WeakDampingFailsByName) {
  const auto rep = check_conditions(Params(0.04, 1, 0.99), kIv);
  ASSERT_FALSE(rep.holds("damping"));
  const auto f = rep.failures();
  EXPECT_NE(std::find(f.begin(), f.end(), "damping"), f.end());
}

TEST(Conditions, ShrinkingDeltaNeverBreaksACondition) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const SpectralInterval iv(1.0, 1.0 + 5.0 * unif(gen));
    const Params p(0.2 * unif(gen) + 1e-4, 1 + static_cast<int>(4 * unif(gen)), 0.999 * unif(gen));
    const Params q(p.delta * (0.1 + 0.9 * unif(gen)), p.K, p.eta);
    const auto a = check_conditions(p, iv);
    const auto b = check_conditions(q, iv);
    for (const auto& c : a.items)
      if (c.holds) EXPECT_TRUE(b.holds(c.name)) << c.name;
  }
}

TEST(Certificate, RateAndRegime) {
  const auto cert = certified_rate(certified(), kIv);
  ASSERT_TRUE(cert.ok());
  EXPECT_EQ(cert.regime, CertRegime::general);
  EXPECT_NEAR(*cert.rho, 0.04 * 0.04 / (40.0 * 0.4), 1e-18);
  EXPECT_FALSE(certified_rate(Params(0.5, 1, 0.5), kIv).ok());
}

TEST(Certificate, PositionRegimeAtFullRefreshment) {
  // eta = 0 needs 1 >= 8 K delta L^{3/2}/m and 5 delta K <= m / L^{3/2}.
  const SpectralInterval iv(1.0, 1.0);
  const auto cert = certified_rate(Params(0.01, 2, 0.0), iv);
  ASSERT_TRUE(cert.ok());
  EXPECT_EQ(cert.regime, CertRegime::position_hmc);
  EXPECT_NEAR(*cert.rho, 0.4 * 0.02 * 0.02, 1e-18);
  EXPECT_TRUE(cert.general_rho.has_value());
}

TEST(Metric, UnrescalingIsConsistent) {
  const Params p = certified();
  const auto M = metric_matrix(p, kIv);
  const auto Mp = rescaled_metric(p, kIv);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 50; ++i) {
    PhaseState z(Vector::Constant(3, normal(gen)), Vector::Constant(3, normal(gen)));
    z.x(1) = normal(gen);
    z.v(2) = normal(gen);
    const PhaseState scaled(std::sqrt(kIv.L) * z.x, z.v);
    EXPECT_NEAR(m_norm(M, z), m_norm(Mp, scaled) / std::sqrt(kIv.L), 1e-12);
  }
}

TEST(Metric, EquivalenceConstantsSandwichTheNorm) {
  const auto M = metric_matrix(certified(), kIv);
  const double w = kIv.m / (2.0 * kIv.L * kIv.L);
  const auto [lo, hi] = M.equivalence_constants(w);
  EXPECT_GT(lo, 0.0);
  std::mt19937_64 gen(4);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 1000; ++i) {
    const PhaseState z(Vector::Constant(1, normal(gen)), Vector::Constant(1, normal(gen)));
    const double base = z.x.squaredNorm() + w * z.v.squaredNorm();
    const double n2 = std::pow(m_norm(M, z), 2);
    EXPECT_GE(n2, lo * base * (1 - 1e-12));
    EXPECT_LE(n2, hi * base * (1 + 1e-12));
  }
}

TEST(Metric, IdentityIsEuclidean) {
  const PhaseState z(Eigen::Vector2d(3, 0), Eigen::Vector2d(0, 4));
  EXPECT_DOUBLE_EQ(m_norm(MetricMatrix::identity(), z), 5.0);
}

TEST(Metric, CertifiedContractionHoldsOnEveryQuadraticMode) {
  // For quadratic targets the coupled difference follows the drift exactly,
  // so the certified rate must bound the M-operator norm of every mode.
  for (double eta2 : {0.37, 0.385, 0.4}) {
    const Params p(0.04, 1, std::sqrt(1.0 - eta2));
    const auto cert = certified_rate(p, kIv);
    ASSERT_TRUE(cert.ok());
    for (double lambda = 1.0; lambda <= 1.1 + 1e-12; lambda += 0.01) {
      const auto A = ref::transition_product(lambda, p.delta, p.K, p.eta).A;
      EXPECT_LE(ref::metric_operator_norm(A, cert.metric->block()), 1.0 - *cert.rho);
    }
  }
}

TEST(Risk, LogSpaceBoundAndMonotonicity) {
  const auto a = risk_bound(certified(), kIv, 10.0, 1000, 0, 3.0, 0.0);
  const auto b = risk_bound(certified(), kIv, 10.0, 2000, 0, 3.0, 0.0);
  EXPECT_TRUE(std::isfinite(a.log_total));
  EXPECT_GT(a.log_total, 700.0);
  EXPECT_TRUE(std::isinf(a.total));
  EXPECT_LT(b.log_total, a.log_total);
  const auto noisy = risk_bound(certified(), kIv, 10.0, 1000, 0, 3.0, 5.0);
  EXPECT_GT(noisy.log_total, a.log_total);
  EXPECT_THROW(risk_bound(Params(0.5, 1, 0.5), kIv, 1.0, 10, 0, 1.0, 0.0), MissingCertificate);
  EXPECT_THROW(risk_bound(certified(), kIv, 1.0, 0, 0, 1.0, 0.0), DomainError);
}

TEST(Risk, VarianceTermMatchesDirectFormulaInLogs) {
  const Params p = certified();
  const auto rb = risk_bound(p, kIv, 10.0, 1000, 0, 0.0, 0.0);
  const double rho = rb.rho;
  const double expect = std::log(22.0 / rho) + 25.0 * 0.04 * 1.1 / rho + std::log(0.4 * 10.0);
  EXPECT_NEAR(rb.log_var_bound, expect, 1e-9 * expect);
  EXPECT_NEAR(rb.log_total, std::log(6.0 / (1000 * rho)) + expect, 1e-9 * expect);
}

TEST(Bias, DominatesTheExactGaussianBias) {
  for (double delta : {0.005, 0.01, 0.02, 0.04}) {
    for (double eta2 : {0.4, 0.6, 0.9}) {
      const Params p(delta, 1, std::sqrt(1.0 - eta2));
      if (!certified_rate(p, kIv).general_rho) continue;
      const auto bb = bias_bound(p, kIv, 0.0, 10.0, false);
      EXPECT_LT(std::log(gaussian::epsilon_bias(delta, kIv.L, 10.0)), bb.log_bound);
    }
  }
}

TEST(Bias, SeparableUsesSquareRootOfDimension) {
  const auto a = bias_bound(certified(), kIv, 0.1, 16.0, false);
  const auto b = bias_bound(certified(), kIv, 0.1, 16.0, true);
  EXPECT_NEAR(a.log_bound - b.log_bound, 0.5 * std::log(16.0), 1e-9);
}

TEST(Constants, CKDelta) {
  EXPECT_NEAR(c_k_delta(1, 0.1), 0.25 * 1e-3, 1e-18);
  EXPECT_NEAR(c_k_delta(2, 0.1), 0.25 * std::exp(0.125) * 1e-3 * 9.0, 1e-15);
}
