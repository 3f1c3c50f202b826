// uhmc: analyze | sample | couple | risk | tune
//
// Every command writes a CSV whose comment header is a complete config:
//   uhmc couple --config run.csv --out again.csv
// reproduces run.csv byte for byte.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "uhmc/bounds.hpp"
#include "uhmc/config.hpp"
#include "uhmc/csv.hpp"
#include "uhmc/diagnostics.hpp"
#include "uhmc/gaussian.hpp"
#include "uhmc/kernel.hpp"
#include "uhmc/oracle.hpp"

#ifndef UHMC_VERSION_STRING
#define UHMC_VERSION_STRING "unknown"
#endif

namespace {

using namespace uhmc;
using config::ConfigError;
using config::Kind;
using config::KeySpec;
using config::Resolved;
using csv::num;

// ---------------------------------------------------------------- schema

std::vector<KeySpec> common_keys() {
  return {
      {"seed", Kind::count, "0", "root seed of every random stream", {}},
      {"threads", Kind::integer, std::to_string(default_threads()), "worker threads", {}},
  };
}

std::vector<KeySpec> oracle_keys(const std::string& oracle, const std::string& dim) {
  return {
      {"oracle", Kind::text, oracle, "force model", {"quadratic", "perturbed", "minibatch"}},
      {"spectrum", Kind::real_list, "1", "quadratic: diagonal of the precision matrix", {}},
      {"alpha", Kind::real, "0.1", "perturbed: tanh perturbation strength", {}},
      {"dim", Kind::integer, dim, "perturbed, minibatch: dimension", {}},
      {"data_size", Kind::integer, "8", "minibatch: number of terms N", {}},
      {"batch", Kind::integer, "2", "minibatch: batch size n", {}},
      {"data_seed", Kind::count, "0", "minibatch: seed of the synthetic data", {}},
      {"spread", Kind::real, "0.1", "minibatch: off-identity spread of the design", {}},
  };
}

std::vector<KeySpec> param_keys(const std::string& delta, const std::string& K,
                                const std::string& eta) {
  return {
      {"delta", Kind::real, delta, "step size", {}},
      {"K", Kind::integer, K, "Verlet steps per transition", {}},
      {"eta", Kind::real, eta, "damping factor in [0, 1)", {}},
  };
}

std::vector<KeySpec> schema(const std::string& command) {
  std::vector<KeySpec> keys = common_keys();
  auto add = [&](std::vector<KeySpec> more) { keys.insert(keys.end(), more.begin(), more.end()); };
  if (command == "analyze" || command == "tune") {
    add({{"m", Kind::real, "1", "lower curvature bound", {}},
         {"L", Kind::real, "4", "upper curvature bound", {}},
         {"epsilon", Kind::real, "", "target equilibrium bias in W2", {}},
         {"d", Kind::real, "1", "dimension entering the bias", {}},
         {"delta", Kind::real, "", "step size (instead of epsilon)", {}}});
    if (command == "analyze")
      add({{"K", Kind::integer, "", "explicit candidate: Verlet steps", {}},
           {"eta", Kind::real, "0", "explicit candidate: damping", {}}});
  } else if (command == "sample") {
    add(oracle_keys("quadratic", "1"));
    add(param_keys("0.2", "3", "0.5"));
    add({{"n", Kind::count, "10000", "transitions after the initial state", {}},
         {"burn_in", Kind::count, "1000", "first state index entering the statistics", {}},
         {"stride", Kind::count, "1000", "snapshot every stride transitions", {}},
         {"batch_size", Kind::count, "0", "batch-means batch length (0: (n - burn_in)/50)", {}},
         {"x0", Kind::real, "0", "initial position, every coordinate", {}}});
  } else if (command == "couple") {
    add(oracle_keys("quadratic", "1"));
    add(param_keys("0.2", "3", "0.5"));
    add({{"n", Kind::count, "2000", "transitions", {}},
         {"x0", Kind::real, "0", "first chain: initial position, every coordinate", {}},
         {"separation", Kind::real, "1", "second chain starts at x0 + separation", {}},
         {"discard", Kind::real, "0.2", "fraction of the trace dropped before fitting", {}},
         {"metric", Kind::text, "auto", "distance for dist_M", {"auto", "certified", "identity"}}});
  } else if (command == "risk") {
    add(oracle_keys("perturbed", "10"));
    add(param_keys("0.04", "1", "0.7745966692414834"));
    add({{"n_grid", Kind::count_list, "1000,2000,4000", "averaging lengths", {}},
         {"n0_grid", Kind::count_list, "0", "discarded transitions", {}},
         {"replicas", Kind::count, "100", "independent chains", {}},
         {"coordinate", Kind::integer, "0", "observable f(x) = x[coordinate]", {}},
         {"reference", Kind::real, "", "exact mean of f (default: target mean)", {}},
         {"x0", Kind::real, "0", "initial position, every coordinate", {}},
         {"W0", Kind::real, "", "initial W2 distance in the M-norm (default: pilot estimate)", {}},
         {"Nb", Kind::real, "", "gradient floor (default: 0, or exact for minibatch)", {}},
         {"pilot", Kind::count, "20000", "pilot chain length for W0", {}}});
  }
  return keys;
}

const std::vector<std::pair<std::string, std::string>>& commands() {
  static const std::vector<std::pair<std::string, std::string>> c = {
      {"analyze", "closed-form rates of candidate parameter choices on quadratic targets"},
      {"sample", "run a chain and stream batch-means moment snapshots"},
      {"couple", "synchronous coupling: distances, fitted decay, certified contraction"},
      {"risk", "empirical ergodic-average MSE against the certified risk bound"},
      {"tune", "optimal parameters at a tolerance and best K at fixed step size"},
  };
  return c;
}

// ---------------------------------------------------------------- checks

struct Checks {
  nlohmann::json failures = nlohmann::json::array();
  void fail(const std::string& check, const std::string& detail) {
    failures.push_back({{"check", check}, {"detail", detail}});
  }
  bool ok() const { return failures.empty(); }
};

void require(bool cond, const std::string& key, const std::string& what) {
  if (!cond) throw ConfigError(key + ": " + what);
}

// ---------------------------------------------------------------- inputs

using AnyOracle = std::variant<QuadraticOracle, PerturbedQuadraticOracle, MiniBatchLeastSquaresOracle>;

AnyOracle make_oracle(const Resolved& c) {
  const std::string kind = c.text("oracle");
  if (kind == "quadratic") {
    const auto s = c.reals("spectrum");
    for (double v : s) require(v > 0.0 && std::isfinite(v), "spectrum", "entries must be positive");
    return QuadraticOracle(Eigen::Map<const Vector>(s.data(), static_cast<Index>(s.size())));
  }
  const long long dim = c.integer("dim");
  require(dim >= 1, "dim", "must be >= 1");
  if (kind == "perturbed") {
    require(c.real("alpha") >= 0.0, "alpha", "must be >= 0");
    return PerturbedQuadraticOracle(dim, c.real("alpha"));
  }
  const long long N = c.integer("data_size");
  const long long n = c.integer("batch");
  require(N >= 1, "data_size", "must be >= 1");
  require(n >= 1 && n <= N, "batch", "must lie in [1, data_size]");
  require(c.real("spread") >= 0.0, "spread", "must be >= 0");
  return MiniBatchLeastSquaresOracle::synthetic(static_cast<int>(N), static_cast<int>(n), dim,
                                                c.count("data_seed"), c.real("spread"));
}

Params read_params(const Resolved& c, double L) {
  const double delta = c.real("delta");
  const long long K = c.integer("K");
  const double eta = c.real("eta");
  require(delta > 0.0 && std::isfinite(delta), "delta", "must be a finite positive number");
  require(K >= 1 && K <= 1000000, "K", "must lie in [1, 1e6]");
  require(eta >= 0.0 && eta < 1.0, "eta", "must lie in [0, 1)");
  require(delta * delta * L < 4.0, "delta",
          "unstable: delta^2 L = " + config::format_real(delta * delta * L) + " must be < 4");
  return Params(delta, static_cast<int>(K), eta);
}

SpectralInterval read_interval(const Resolved& c) {
  const double m = c.real("m");
  const double L = c.real("L");
  require(m > 0.0, "m", "must be positive");
  require(L >= m && std::isfinite(L), "L", "must be finite and >= m");
  return {m, L};
}

unsigned read_threads(const Resolved& c) {
  const long long t = c.integer("threads");
  require(t >= 1 && t <= 1024, "threads", "must lie in [1, 1024]");
  return static_cast<unsigned>(t);
}

PhaseState initial_state(Index d, double x0) { return {Vector::Constant(d, x0), Vector::Zero(d)}; }

// ---------------------------------------------------------------- analyze

std::vector<std::string> rate_row(const std::string& name, const Params& p,
                                  const SpectralInterval& iv, double d) {
  const auto r = gaussian::rate(p, iv);
  return {name,
          num(p.delta),
          num(p.K),
          num(p.eta),
          num(gaussian::epsilon_bias(p.delta, iv.L, d)),
          num(r.h),
          num(r.g),
          num(r.rho),
          num(r.rho * p.K),
          gaussian::to_string(r.regime)};
}

int cmd_analyze(const Resolved& c, csv::Writer& out, Checks&) {
  const auto iv = read_interval(c);
  const double d = c.real("d");
  require(d >= 1.0, "d", "must be >= 1");
  require(c.has("epsilon") || c.has("delta"), "epsilon", "either epsilon or delta must be set");

  Params optimal;
  if (c.has("epsilon")) {
    require(c.real("epsilon") > 0.0, "epsilon", "must be positive");
    optimal = gaussian::optimal_params(iv, c.real("epsilon"), d).params;
  } else {
    const double delta = c.real("delta");
    require(delta > 0.0 && delta * delta * iv.L < 4.0, "delta", "must satisfy 0 < delta^2 L < 4");
    const auto sel = gaussian::optimal_K_fixed_delta(delta, iv);
    optimal = Params(delta, sel.best.K, sel.best.eta < 1.0 ? sel.best.eta : 0.0);
  }
  const double delta = optimal.delta;
  out.header({"candidate", "delta", "K", "eta", "epsilon", "h", "g", "rho", "rho_per_transition",
              "regime"});
  out.row(rate_row("optimal", optimal, iv, d));
  out.row(rate_row("langevin", Params(delta, 1, std::max(0.0, 1.0 - std::sqrt(iv.m) * delta)), iv, d));
  out.row(rate_row("position_hmc", Params(delta, optimal.K, 0.0), iv, d));
  if (c.has("K")) {
    const double de = c.has("delta") ? c.real("delta") : delta;
    require(de * de * iv.L < 4.0, "delta", "unstable for the explicit candidate");
    const long long K = c.integer("K");
    require(K >= 1, "K", "must be >= 1");
    const double eta = c.real("eta");
    require(eta >= 0.0 && eta < 1.0, "eta", "must lie in [0, 1)");
    out.row(rate_row("explicit", Params(de, static_cast<int>(K), eta), iv, d));
  }
  return 0;
}

// ---------------------------------------------------------------- tune

int cmd_tune(const Resolved& c, csv::Writer& out, Checks&) {
  const auto iv = read_interval(c);
  const double d = c.real("d");
  require(d >= 1.0, "d", "must be >= 1");
  require(c.has("epsilon") || c.has("delta"), "epsilon", "either epsilon or delta must be set");
  out.header({"row", "delta", "K", "eta", "rho", "rho_position", "h", "epsilon", "note"});
  double delta = 0.0;
  if (c.has("epsilon")) {
    require(c.real("epsilon") > 0.0, "epsilon", "must be positive");
    const auto opt = gaussian::optimal_params(iv, c.real("epsilon"), d);
    delta = opt.params.delta;
    const auto r0 = gaussian::rate(Params(delta, opt.params.K, 0.0), iv);
    out.row({"optimal", num(delta), num(opt.params.K), num(opt.params.eta), num(opt.rate.rho),
             num(r0.rho), num(opt.rate.h), num(opt.epsilon), "tolerance"});
  }
  if (c.has("delta")) delta = c.real("delta");
  require(delta > 0.0 && delta * delta * iv.L < 4.0, "delta", "must satisfy 0 < delta^2 L < 4");
  const auto sel = gaussian::optimal_K_fixed_delta(delta, iv);
  const double phi_m = gaussian::phi_angle(iv.m, delta);
  const double phi_L = gaussian::phi_angle(iv.L, delta);
  const double eps = gaussian::epsilon_bias(delta, iv.L, d);
  for (int K : sel.candidates) {
    const double h = gaussian::cos_envelope(K * phi_m, K * phi_L);
    const double eta = gaussian::eta_star(h);
    std::string note = sel.scanned ? "scan" : "candidate";
    if (K == sel.best.K) note += " best";
    if (K == sel.best_position.K) note += " best_position";
    out.row({"fixed_delta", num(delta), num(K), num(eta),
             num(gaussian::rate_from_envelope(h, eta, K).rho),
             num(gaussian::rate_from_envelope(h, 0.0, K).rho), num(h), num(eps), note});
  }
  out.row({"k_star", num(delta), num(sel.k_star), "", "", "", "", num(eps),
           sel.precondition_holds ? "precondition holds" : "precondition fails"});
  return 0;
}

// ---------------------------------------------------------------- sample

int cmd_sample(const Resolved& c, csv::Writer& out, Checks& checks) {
  const AnyOracle any = make_oracle(c);
  return std::visit(
      [&](const auto& oracle) {
        const Params p = read_params(c, oracle.L());
        const std::uint64_t n = c.count("n");
        const std::uint64_t burn = c.count("burn_in");
        const std::uint64_t stride = c.count("stride");
        require(stride >= 1, "stride", "must be >= 1");
        require(burn <= n, "burn_in", "must not exceed n");
        std::uint64_t batch = c.count("batch_size");
        if (batch == 0) batch = std::max<std::uint64_t>(1, (n - burn + 1) / diagnostics::kDefaultBatches);
        const Index d = oracle.dim();
        diagnostics::MomentAccumulator acc(d, batch);
        out.header({"n", "samples", "coordinate", "mean_x", "se_mean_x", "var_x", "se_var_x",
                    "mean_v", "se_mean_v", "var_v", "se_var_v"});
        auto snapshot = [&](std::uint64_t k) {
          const auto r = acc.report();
          for (Index i = 0; i < d; ++i)
            out.row({num(k), num(r.samples), num(static_cast<long long>(i)), num(r.mean_x(i)),
                     num(r.se_mean_x(i)), num(r.var_x(i)), num(r.se_var_x(i)), num(r.mean_v(i)),
                     num(r.se_mean_v(i)), num(r.var_v(i)), num(r.se_var_v(i))});
        };
        ChainRng rng(c.count("seed"), 0);
        std::uint64_t last = 0;
        try {
          run_chain(oracle, p, initial_state(d, c.real("x0")), n, rng,
                    [&](std::uint64_t k, const PhaseState& z) {
                      last = k;
                      if (k >= burn) acc.push(z);
                      if (k >= burn && (k % stride == 0 || k == n)) snapshot(k);
                    });
        } catch (const NumericalOverflow& e) {
          out.row({"error", num(last + 1), num(static_cast<long long>(e.coordinate())), e.what()});
          checks.fail("overflow", "transition " + std::to_string(last + 1) + ": " + e.what());
        }
        return 0;
      },
      any);
}

// ---------------------------------------------------------------- couple

int cmd_couple(const Resolved& c, csv::Writer& out, Checks& checks) {
  const AnyOracle any = make_oracle(c);
  return std::visit(
      [&](const auto& oracle) {
        using O = std::decay_t<decltype(oracle)>;
        const Params p = read_params(c, oracle.L());
        const SpectralInterval iv(oracle.m(), oracle.L());
        const double discard = c.real("discard");
        require(discard >= 0.0 && discard < 1.0, "discard", "must lie in [0, 1)");
        const auto cert = bounds::certified_rate(p, iv);
        const std::string metric_choice = c.text("metric");
        require(metric_choice != "certified" || cert.metric.has_value(), "metric",
                "no certified metric: conditions fail");
        const bool use_cert = cert.metric.has_value() && metric_choice != "identity";
        const MetricMatrix M = use_cert ? *cert.metric : MetricMatrix::identity();

        const Index d = oracle.dim();
        const double x0 = c.real("x0");
        const PhaseState z0 = initial_state(d, x0);
        const PhaseState z1 = initial_state(d, x0 + c.real("separation"));
        ChainRng rng(c.count("seed"), 0);
        const auto trace = run_coupled(oracle, p, z0, z1, c.count("n"), rng, M);
        const auto fit = diagnostics::fit_decay(trace, discard);

        out.header({"record", "n", "dist_euclid", "dist_M", "step_ratio", "key", "value"});
        double max_ratio = 0.0;
        bool have_ratio = false;
        const double floor = 1e-9 * trace.steps.front().dist_M;
        for (std::size_t i = 0; i < trace.steps.size(); ++i) {
          const auto& s = trace.steps[i];
          std::string ratio;
          if (i > 0 && trace.steps[i - 1].dist_M > 0.0) {
            const double r = s.dist_M / trace.steps[i - 1].dist_M;
            ratio = num(r);
            if (trace.steps[i - 1].dist_M > floor) {
              max_ratio = std::max(max_ratio, r);
              have_ratio = true;
            }
          }
          out.row({"trace", num(s.n), num(s.dist_euclid), num(s.dist_M), ratio});
        }
        auto summary = [&](const std::string& key, const std::string& value) {
          out.row({"summary", "", "", "", "", key, value});
        };
        summary("fit_flag", diagnostics::to_string(fit.flag));
        summary("fit_rate_per_transition", num(fit.rate_per_transition));
        summary("fit_rate_per_gradient", num(fit.rate_per_gradient));
        summary("fit_r_squared", num(fit.r_squared));
        summary("fit_window", num(fit.n_start) + ":" + num(fit.n_end));
        summary("metric", use_cert ? "certified" : "identity");

        if constexpr (std::is_same_v<O, QuadraticOracle>) {
          const auto& s = oracle.spectrum();
          const auto analytic = gaussian::spectrum_rate(p, std::vector<double>(s.data(), s.data() + s.size()));
          summary("analytic_rho", num(analytic.rho));
          summary("analytic_regime", gaussian::to_string(analytic.regime));
          std::string verdict = "skipped";
          if (fit.flag == diagnostics::FitFlag::degenerate) {
            verdict = "skipped";
          } else if (analytic.regime == gaussian::RateRegime::periodic_degenerate) {
            verdict = fit.flag == diagnostics::FitFlag::stalled ? "pass" : "fail";
          } else if (analytic.rho > 0.01) {
            const double rel = std::abs(fit.rate_per_gradient - analytic.rho) / analytic.rho;
            summary("rate_rel_error", num(rel));
            verdict = rel <= 0.05 ? "pass" : "fail";
          }
          summary("rate_check", verdict);
          if (verdict == "fail")
            checks.fail("rate", "fitted " + num(fit.rate_per_gradient) + " vs analytic " +
                                    num(analytic.rho));
        }

        if (cert.ok()) {
          summary("certified_rho", num(*cert.rho));
          summary("certified_regime", bounds::to_string(cert.regime));
        } else {
          std::string why;
          for (const auto& f : cert.failures()) why += (why.empty() ? "" : " ") + f;
          summary("certified_rho", "");
          summary("certified_reason", "failed: " + why);
        }
        if (use_cert && cert.general_rho && have_ratio) {
          const double bound = 1.0 - *cert.general_rho;
          summary("max_step_ratio", num(max_ratio));
          summary("contraction_bound", num(bound));
          const bool pass = max_ratio <= bound;
          summary("contraction_check", pass ? "pass" : "fail");
          if (!pass)
            checks.fail("contraction", "max step ratio " + num(max_ratio) + " exceeds " + num(bound));
        } else {
          summary("contraction_check", "skipped");
        }
        return 0;
      },
      any);
}

// ---------------------------------------------------------------- risk

int cmd_risk(const Resolved& c, csv::Writer& out, Checks& checks) {
  const AnyOracle any = make_oracle(c);
  return std::visit(
      [&](const auto& oracle) {
        using O = std::decay_t<decltype(oracle)>;
        const Params p = read_params(c, oracle.L());
        const SpectralInterval iv(oracle.m(), oracle.L());
        const Index d = oracle.dim();
        const long long coord = c.integer("coordinate");
        require(coord >= 0 && coord < d, "coordinate", "must lie in [0, dim)");
        const std::uint64_t replicas = c.count("replicas");
        require(replicas >= 30, "replicas", "must be >= 30");
        const auto n_grid = c.counts("n_grid");
        const auto n0_grid = c.counts("n0_grid");
        for (auto n : n_grid) require(n >= 1, "n_grid", "entries must be >= 1");
        const unsigned threads = read_threads(c);
        const std::uint64_t seed = c.count("seed");
        const PhaseState z0 = initial_state(d, c.real("x0"));

        double reference = 0.0;
        if constexpr (std::is_same_v<O, MiniBatchLeastSquaresOracle>)
          reference = oracle.least_squares_solution()(coord);
        if (c.has("reference")) reference = c.real("reference");

        double Nb = 0.0;
        if constexpr (!O::is_deterministic) Nb = oracle.gradient_floor(seed);
        if (c.has("Nb")) Nb = c.real("Nb");
        require(Nb >= 0.0, "Nb", "must be >= 0");

        const auto cert = bounds::certified_rate(p, iv);
        std::string reason;
        for (const auto& f : cert.failures()) reason += (reason.empty() ? "" : " ") + f;
        const bool bounded = cert.general_rho.has_value();

        double W0 = 0.0;
        if (c.has("W0")) {
          W0 = c.real("W0");
          require(W0 >= 0.0, "W0", "must be >= 0");
        } else if (bounded) {
          // E_mu |z0 - Z|_M^2 along a pilot chain on its own stream.
          const std::uint64_t pilot = c.count("pilot");
          require(pilot >= 100, "pilot", "must be >= 100");
          ChainRng rng(seed, replicas + 1);
          double sq = 0.0;
          std::uint64_t used = 0;
          run_chain(oracle, p, z0, pilot + pilot / 10, rng, [&](std::uint64_t k, const PhaseState& z) {
            if (k <= pilot / 10) return;
            const double dist = m_norm(*cert.metric, z0 - z);
            sq += dist * dist;
            ++used;
          });
          W0 = std::sqrt(sq / static_cast<double>(used));
        }

        out.header({"n", "n0", "replicas", "mse", "se", "ci_low", "ci_high", "rho", "W0", "Nb",
                    "log_bound", "bound", "pass", "reason"});
        const diagnostics::Observable f = [coord](const Vector& x) { return x(coord); };
        bool all_pass = true;
        for (auto n0 : n0_grid) {
          const auto est = diagnostics::ergodic_risk_grid(oracle, p, z0, f, reference, n_grid, n0,
                                                          replicas, seed, threads);
          for (const auto& e : est) {
            std::vector<std::string> row = {num(e.n),      num(e.n0),      num(static_cast<std::uint64_t>(e.replicas)),
                                            num(e.mse),    num(e.se),      num(e.ci_low),
                                            num(e.ci_high)};
            if (bounded) {
              const auto rb = bounds::risk_bound(p, iv, static_cast<double>(d),
                                                 static_cast<long long>(e.n),
                                                 static_cast<long long>(e.n0), W0, Nb);
              const bool pass = e.mse == 0.0 || std::log(e.mse) <= rb.log_total;
              all_pass = all_pass && pass;
              row.insert(row.end(), {num(rb.rho), num(W0), num(Nb), num(rb.log_total),
                                     num(rb.total), pass ? "pass" : "fail", ""});
            } else {
              row.insert(row.end(), {"", "", num(Nb), "", "", "", "certificate failed: " + reason});
            }
            out.row(row);
          }
        }
        if (!bounded) checks.fail("certificate", "conditions fail: " + reason);
        if (!all_pass) checks.fail("risk_bound", "empirical MSE exceeds the risk bound");
        return 0;
      },
      any);
}

int dispatch(const std::string& command, const Resolved& c, csv::Writer& out, Checks& checks) {
  if (command == "analyze") return cmd_analyze(c, out, checks);
  if (command == "tune") return cmd_tune(c, out, checks);
  if (command == "sample") return cmd_sample(c, out, checks);
  if (command == "couple") return cmd_couple(c, out, checks);
  return cmd_risk(c, out, checks);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unadjusted (stochastic-gradient) HMC: analytics, simulation, certificates"};
  app.set_version_flag("--version", std::string(UHMC_VERSION_STRING));
  app.require_subcommand(1);

  struct Inputs {
    std::string config_path;
    std::string out_path;
    std::map<std::string, std::string> values;
  };
  std::map<std::string, Inputs> inputs;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, about] : commands()) {
    auto* sub = app.add_subcommand(name, about);
    subs[name] = sub;
    auto& in = inputs[name];
    sub->add_option("--config", in.config_path, "config file or a CSV written by this tool");
    sub->add_option("--out", in.out_path, "output CSV (default: stdout)");
    for (const auto& key : schema(name)) {
      std::string help = key.help;
      if (!key.default_value.empty()) help += " [" + key.default_value + "]";
      sub->add_option("--" + key.name, in.values[key.name], help);
    }
  }
  CLI11_PARSE(app, argc, argv);

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;
  auto& in = inputs[command];
  auto* sub = subs[command];

  Checks checks;
  auto report = [&](const std::string& status, const nlohmann::json& body) {
    nlohmann::json j = {{"command", command}, {"status", status}};
    j.update(body);
    std::cerr << j.dump() << '\n';
  };

  try {
    std::map<std::string, std::string> overrides;
    for (const auto& key : schema(command))
      if (sub->count("--" + key.name) > 0) overrides[key.name] = in.values[key.name];
    std::optional<config::RawConfig> file;
    if (!in.config_path.empty()) file = config::load(in.config_path);
    const Resolved cfg = config::resolve(command, schema(command), file ? &*file : nullptr, overrides);

    std::ofstream file_out;
    std::ostream* os = &std::cout;
    if (!in.out_path.empty()) {
      file_out.open(in.out_path, std::ios::binary | std::ios::trunc);
      if (!file_out) throw ConfigError("out: cannot write '" + in.out_path + "'");
      os = &file_out;
    }
    csv::Writer writer(*os);
    writer.provenance(cfg, UHMC_VERSION_STRING);
    dispatch(command, cfg, writer, checks);
  } catch (const ConfigError& e) {
    report("error", {{"error", e.what()}});
    return 2;
  } catch (const std::exception& e) {
    report("error", {{"error", e.what()}});
    return 2;
  }
  if (!checks.ok()) {
    report("fail", {{"failures", checks.failures}});
    return 1;
  }
  return 0;
}
