// Runs a small Monte Carlo study for one scenario and prints bias, Monte
// Carlo error, and goodness-of-fit rejection rates. Used to choose and
// record the scenario parameters of the acceptance grid.
//
//   shadowdr_calibrate key=value ...
//
// Keys: reps, n, boot, seed, threads, a0, a1, a2, a_q, sigma, b_y, b_q, tau,
// c0, c1, c2, c_q, c_y, g (covariate index), mo (0/1),
// mp (0/1), truth_draws.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "shadowdr/simulation.hpp"

int main(int argc, char** argv) {
  using namespace shadowdr;
  sim::ScenarioConfig cfg;
  sim::StudyConfig study;
  study.replications = 100;
  study.truth_draws = 1'000'000;
  study.pipeline.moments.g = ScalarFeature::covariate(1);
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    const auto eq = arg.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "bad argument %s\n", argv[i]);
      return 2;
    }
    const std::string key = arg.substr(0, eq);
    const double v = std::strtod(arg.c_str() + eq + 1, nullptr);
    if (key == "reps") study.replications = static_cast<int>(v);
    else if (key == "n") cfg.n = static_cast<std::size_t>(v);
    else if (key == "boot") study.bootstrap_replicates = static_cast<int>(v);
    else if (key == "seed") study.master_seed = static_cast<std::uint64_t>(v);
    else if (key == "threads") study.threads = static_cast<unsigned>(v);
    else if (key == "truth_draws") study.truth_draws = static_cast<std::size_t>(v);
    else if (key == "a0") cfg.a0 = v;
    else if (key == "a1") cfg.a[0] = v;
    else if (key == "a2") cfg.a[1] = v;
    else if (key == "a_q") cfg.a_q = v;
    else if (key == "sigma") cfg.sigma = v;
    else if (key == "b_y") cfg.b_y = v;
    else if (key == "tau") cfg.tau = v;
    else if (key == "b_q") cfg.b_q = v;
    else if (key == "c0") cfg.c0 = v;
    else if (key == "c1") cfg.c[0] = v;
    else if (key == "c2") cfg.c[1] = v;
    else if (key == "c_q") cfg.c_q = v;
    else if (key == "c_y") cfg.c_y = v;
    else if (key == "g") study.pipeline.moments.g = ScalarFeature::covariate(static_cast<std::size_t>(v) - 1);
    else if (key == "mo") cfg.misspecify_outcome = v != 0.0;
    else if (key == "mp") cfg.misspecify_propensity = v != 0.0;
    else {
      std::fprintf(stderr, "unknown key %s\n", key.c_str());
      return 2;
    }
  }
  try {
    std::printf("response rate %.4f\n", sim::response_rate(cfg));
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = sim::run_study({cfg}, study);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& s = res.scenarios.front();
    std::printf("truth %.6f (mc %.6f se %.6f)  reps %d failures %d  time %.1fs\n", s.truth.analytic,
                s.truth.monte_carlo.mean, s.truth.monte_carlo.se, s.replications, s.failures, secs);
    for (const auto& [kind, count] : s.failure_kinds) std::printf("  failure %s: %d\n", kind.c_str(), count);
    std::printf("%-7s %10s %10s %10s %8s %10s %8s\n", "stat", "mean", "bias", "mc_sd", "bias/se", "boot_se",
                "cover");
    for (const auto& e : s.estimators) {
      std::printf("%-7s %10.5f %10.5f %10.5f %8.2f %10.5f %8.3f\n", e.name.c_str(), e.mean, e.bias, e.mc_sd,
                  e.bias / e.mc_se, e.boot_se_mean, e.coverage);
    }
    std::printf("reject phi %.3f  reject psi %.3f  (tests %d)\n", s.reject_phi, s.reject_psi, s.gof_count);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.exit_code());
  }
  return 0;
}
