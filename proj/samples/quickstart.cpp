// Tune a sampler for a Gaussian with condition number 25, run it, and
// compare the empirical position variance with the predicted one.

#include <cstdio>

#include "uhmc/uhmc.hpp"

int main() {
  using namespace uhmc;

  const SpectralInterval iv(1.0, 25.0);
  const auto opt = gaussian::optimal_params(iv, 0.01, 2.0);
  std::printf("delta=%.4g K=%d eta=%.4g  predicted rate %.4g per gradient\n", opt.params.delta,
              opt.params.K, opt.params.eta, opt.rate.rho);

  const QuadraticOracle target(Eigen::Vector2d(1.0, 25.0));
  ChainRng rng(42, 0);
  const auto mom = diagnostics::stationary_moments(target, opt.params, PhaseState::zeros(2), 1000,
                                                   200000, rng);
  for (Index i = 0; i < 2; ++i) {
    const double lambda = target.spectrum()(i);
    std::printf("lambda=%-4g var_x=%.5f +- %.5f  (chain invariant %.5f, target %.5f)\n", lambda,
                mom.var_x(i), mom.se_var_x(i),
                1.0 / gaussian::modified_precision(lambda, opt.params.delta), 1.0 / lambda);
  }

  const auto cert = bounds::certified_rate(opt.params, iv);
  std::printf("certificate: %s\n", cert.ok() ? bounds::to_string(cert.regime) : "none");
  for (const auto& f : cert.failures()) std::printf("  fails %s\n", f.c_str());
}
