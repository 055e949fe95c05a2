// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Runs the full-size studies; expect about
// half an hour on one core.
//
//   shadowdr_acceptance [criterion ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shadowdr/estimation.hpp"
#include "shadowdr/estimators.hpp"
#include "shadowdr/pipeline.hpp"
#include "shadowdr/regression.hpp"
#include "shadowdr/simulation.hpp"

using namespace shadowdr;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "  FAILED CHECK: " << what << '\n';
    }
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

constexpr std::uint64_t kSeed = 2016;

sim::StudyConfig study(int reps, int boot) {
  sim::StudyConfig s;
  s.replications = reps;
  s.bootstrap_replicates = boot;
  s.master_seed = kSeed;
  s.threads = 0;
  return s;
}

// The grid study is shared by criteria 1, 2 and 4.
const sim::StudyResult& grid_study() {
  static const sim::StudyResult res = sim::run_study(sim::acceptance_grid(2000), study(500, 0));
  return res;
}

// 1. Double robustness over the misspecification grid.
void double_robustness(Outcome& o) {
  const auto& res = grid_study();
  for (const auto& s : res.scenarios) {
    const bool both_wrong = s.config.misspecify_outcome && s.config.misspecify_propensity;
    o.detail << "  " << s.config.name << " (truth " << fmt("%.6f", s.truth.analytic) << ", failures " << s.failures
             << ")\n";
    double worst = 0.0;
    for (const char* name : {"mu1", "mu2", "mu3"}) {
      const auto& e = s.estimator(name);
      const double ratio = std::abs(e.bias) / e.mc_se;
      worst = std::max(worst, ratio);
      o.detail << "    " << name << fmt("  mean %.5f  bias %+.5f  mc_sd %.5f  |bias|/mc_se %.2f\n", e.mean, e.bias,
                                       e.mc_sd, ratio);
      if (!both_wrong) o.require(ratio <= 3.0, s.config.name + " " + name + " bias beyond 3 MC SEs");
      o.require(e.count >= 450, s.config.name + " " + name + " fewer than 450 usable replications");
    }
    if (both_wrong) o.require(worst > 5.0, "both_wrong: no estimator shows bias beyond 5 MC SEs");
  }
}

// 2. Extension parameters vanish under their nulls.
void diagnostic_nulls(Outcome& o) {
  const auto& res = grid_study();
  auto describe = [](const sim::EstimatorSummary& e) {
    if (e.mc_sd == 0.0 && e.mean == 0.0) return std::string("identically 0");
    return fmt("%+.5f (%.2f MC SE)", e.mean, e.mean / e.mc_se);
  };
  for (const auto& s : res.scenarios) {
    o.detail << "  " << s.config.name << "  mean phi " << describe(s.estimator("phi")) << "  mean psi "
             << describe(s.estimator("psi")) << '\n';
  }
  // With a linear outcome model M0 lies in the span of the propensity
  // regressors and phi is exactly 0, so both_correct carries the informative
  // phi check.
  for (std::size_t cell : {0, 1}) {
    const auto& phi = res.scenarios[cell].estimator("phi");
    o.require(std::abs(phi.mean) <= 3.0 * phi.mc_se, res.scenarios[cell].config.name + ": mean phi beyond 3 MC SEs");
  }
  for (std::size_t cell : {0, 2}) {
    const auto& psi = res.scenarios[cell].estimator("psi");
    o.require(std::abs(psi.mean) <= 3.0 * psi.mc_se, res.scenarios[cell].config.name + ": mean psi beyond 3 MC SEs");
  }
}

// 3. Size and power of the goodness-of-fit tests. The power bound of 0.5
// was checked against the recorded runs in calibration/ before freezing.
void gof_calibration(Outcome& o) {
  const auto null = sim::run_study({sim::acceptance_grid(2000)[0]}, study(1000, 200)).scenarios[0];
  o.detail << fmt("  null (both_correct, n 2000, 1000 reps, B 200): reject phi %.3f  reject psi %.3f\n",
                  null.reject_phi, null.reject_psi)
           << "    tests completed " << null.gof_count << ", replication failures " << null.failures << '\n';
  o.require(null.gof_count >= 950, "fewer than 950 null replications produced both tests");
  o.require(null.reject_phi >= 0.03 && null.reject_phi <= 0.07, "phi type I error outside [0.03, 0.07]");
  o.require(null.reject_psi >= 0.03 && null.reject_psi <= 0.07, "psi type I error outside [0.03, 0.07]");

  auto grid5000 = sim::acceptance_grid(5000);
  const auto power = sim::run_study({grid5000[2], grid5000[1]}, study(200, 200));
  const auto& wrong_propensity = power.scenarios[0];
  const auto& wrong_outcome = power.scenarios[1];
  o.detail << fmt("  omitted x1^2 in the propensity model (n 5000, 200 reps): phi power %.3f\n",
                  wrong_propensity.reject_phi)
           << fmt("  omitted x1^2 in the outcome model (n 5000, 200 reps): psi power %.3f\n",
                  wrong_outcome.reject_psi);
  o.require(wrong_propensity.reject_phi >= 0.5, "phi power below 0.5");
  o.require(wrong_outcome.reject_psi >= 0.5, "psi power below 0.5");
}

// Random data with scales spanning several orders of magnitude.
Dataset random_dataset(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double xscale = std::pow(10.0, 2.0 * u(gen));
  const double yscale = std::pow(10.0, 6.0 * u(gen) - 3.0);
  std::vector<ObservedSample> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const bool r = i == 0 || u(gen) < 0.6;
    ObservedSample s{{xscale * nd(gen), xscale * nd(gen)}, nd(gen), r, std::nullopt};
    if (r) s.y = yscale * nd(gen) + (u(gen) < 0.2 ? 1e3 * yscale : 0.0);
    rows.push_back(s);
  }
  return Dataset::from_samples(rows, 2);
}

// 4. mu2 stays in the observed range.
void boundedness(Outcome& o) {
  std::mt19937_64 gen(kSeed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 60);
  const double absurd[] = {0.0, 1e-8, 3.0, 50.0, 700.0, 1e4, 1e8, 1e150, 1e300};
  const char* features[] = {"1", "x1", "x2", "x1^2", "x2^2"};
  int violations = 0;
  const int cases = 20000;
  for (int k = 0; k < cases; ++k) {
    const Dataset d = random_dataset(gen, static_cast<std::size_t>(size(gen)));
    const double ascale = std::pow(10.0, 3.0 * u(gen) - 1.0);
    Vector a(3);
    a << ascale * nd(gen), ascale * nd(gen), ascale * nd(gen);
    const auto gamma = OddsRatioSpec::default_spec(std::pow(10.0, 3.0 * u(gen) - 2.0) * nd(gen));
    const double phi = absurd[k % 9] * (u(gen) < 0.5 ? -1.0 : 1.0) * (1.0 + u(gen));
    const ExtendedWeightSpec ext{phi, ScalarFeature::parse(features[k % 5], 2)};
    const auto [lo, hi] = d.observed_range();
    const double m = mu2(d, ext, BaselinePropensitySpec(a), gamma);
    if (!(m >= lo && m <= hi)) ++violations;
  }
  o.detail << "  randomized datasets and parameters: " << cases << " cases, " << violations << " violations\n";
  o.require(violations == 0, "mu2 left the observed range on randomized inputs");

  int fitted = 0, fitted_violations = 0;
  for (const auto& s : grid_study().scenarios) {
    for (const auto& r : s.records) {
      if (r.failed) continue;
      ++fitted;
      fitted_violations += !r.mu2_in_range;
    }
  }
  const auto hv = sim::run_study({sim::high_variability_scenario(2000)}, study(500, 0)).scenarios[0];
  for (const auto& r : hv.records) {
    if (r.failed) continue;
    ++fitted;
    fitted_violations += !r.mu2_in_range;
  }
  o.detail << "  fitted pipelines (grid and high-variability studies): " << fitted << " fits, " << fitted_violations
           << " violations\n";
  o.require(fitted_violations == 0, "fitted mu2 left the observed range");
}

// 5. Population moment batteries at n = 1e5.
void moment_batteries(Outcome& o) {
  const auto grid = sim::acceptance_grid(100000);
  using Battery = std::function<std::vector<MomentCheck>(const Dataset&, const WorkingFits&)>;
  struct Case {
    const char* battery;
    Battery fn;
    std::vector<std::size_t> cells;
  };
  const std::vector<Case> cases{
      {"weighted (propensity correct)", weighted_moment_battery, {0, 1}},
      {"tilted residual (outcome correct)", tilted_residual_battery, {0, 2}},
      {"augmented (either correct)", augmented_moment_battery, {0, 1, 2}},
  };
  std::vector<EstimateReport> reports;
  std::vector<Dataset> data;
  for (std::size_t c = 0; c < 3; ++c) {
    data.push_back(sim::generate(grid[c], 1).observed);
    reports.push_back(run_pipeline(data.back(), grid[c].working_pipeline(sim::study_pipeline(2))));
  }
  for (const auto& cs : cases) {
    for (std::size_t c : cs.cells) {
      const auto checks = cs.fn(data[c], reports[c].fits);
      double worst = 0.0;
      std::string worst_label;
      for (const auto& m : checks) {
        const double z = m.se > 0.0 ? std::abs(m.mean) / m.se : (m.mean == 0.0 ? 0.0 : INFINITY);
        if (z >= worst) {
          worst = z;
          worst_label = m.label;
        }
        o.require(m.within(3.0) || m.mean == 0.0,
                  std::string(cs.battery) + " in " + grid[c].name + ": D = " + m.label + " beyond 3 MC SEs");
      }
      o.detail << "  " << cs.battery << ", " << grid[c].name << ": " << checks.size()
               << fmt(" functions, largest |mean|/se %.2f", worst) << " (" << worst_label << ")\n";
    }
  }
}

// 6. General estimators with gamma fixed at 0 equal the MAR estimators.
void mar_reduction(Outcome& o) {
  const auto cfg = sim::mar_scenario(2000);
  const ScalarFeature raw = ScalarFeature::parse("x1", 2);
  double worst = 0.0;
  int reps = 0, errors = 0;
  for (std::size_t rep = 0; rep < 500; ++rep) {
    const Dataset d = sim::generate(cfg, sim::replication_seed(kSeed, 0, rep)).observed;
    PipelineConfig pc = cfg.working_pipeline(sim::study_pipeline(2));
    pc.mar_mode = true;
    try {
      const auto m = mar_estimators(d, BaselinePropensitySpec(regression::logistic_fit(d), Design::linear(2)),
                                    fit_beta(d, pc.resolved_outcome_design(2)), pc.moments.g, raw);
      pc.moments.q = complete_case_centered(raw, d);
      const EstimateReport r = run_pipeline(d, pc);
      const double diffs[] = {std::abs(r.mu1 - m.mu1), std::abs(r.mu2 - m.mu2), std::abs(r.mu3 - m.mu3),
                              std::abs(r.phi_hat + m.phi), std::abs(r.psi_hat - m.psi),
                              std::abs(r.fits.gamma.gamma[0])};
      for (double v : diffs) worst = std::max(worst, std::isnan(v) ? INFINITY : v);
      ++reps;
    } catch (const Error& e) {
      ++errors;
      o.detail << "  replication " << rep << ": " << e.kind() << '\n';
    }
  }
  o.detail << "  " << reps << " MAR replications (n 2000), largest discrepancy " << fmt("%.3g", worst) << '\n';
  o.require(errors == 0, "some MAR replications failed");
  o.require(worst <= 1e-10, "general and MAR estimators differ by more than 1e-10");
}

// 7. Tilted mean: quadrature reproduces m + gamma sigma^2 before the closed
// form is compared against it.
void tilt_oracle(Outcome& o) {
  const std::vector<double> x0{0.0, 0.0};
  auto outcome = [](double m, double sd) {
    BaselineOutcomeSpec b;
    b.beta_y = Vector::Zero(3);
    b.beta_y[0] = m;
    b.sigma_y = sd;
    b.beta_zy = 1.0;
    b.beta_zx = Vector::Zero(3);
    b.sigma_z = 1.0;
    return b;
  };
  const double example = tilted_mean_y(x0, outcome(1.0, 2.0), OddsRatioSpec::default_spec(0.25), TiltMethod::quadrature);
  o.detail << fmt("  quadrature tilted mean for m 1, sigma 2, gamma 0.25: %.15f (expected 2)\n", example);
  o.require(std::abs(example - 2.0) <= 1e-10, "quadrature misses the m + gamma sigma^2 example");
  double worst = 0.0;
  int points = 0;
  for (double m : {-2.0, 0.0, 1.0, 3.0}) {
    for (double sd : {0.2, 0.5, 1.0, 2.0, 3.5, 5.0}) {
      for (double g : {-1.0, -0.6, -0.2, 0.0, 0.3, 0.7, 1.0}) {
        const auto beta = outcome(m, sd);
        const auto odds = OddsRatioSpec::default_spec(g);
        worst = std::max(worst, std::abs(tilted_mean_y(x0, beta, odds, TiltMethod::closed_form) -
                                         tilted_mean_y(x0, beta, odds, TiltMethod::quadrature)));
        ++points;
      }
    }
  }
  o.detail << "  " << points << " grid points, largest |closed form - quadrature| " << fmt("%.3g", worst) << '\n';
  o.require(worst <= 1e-8, "closed form and quadrature disagree beyond 1e-8");
}

// 8. Analytic truth against 1e7 Monte Carlo draws.
void dual_oracle(Outcome& o) {
  std::vector<sim::ScenarioConfig> scenarios = sim::acceptance_grid(2000);
  for (auto s : {sim::high_variability_scenario(), sim::weak_proxy_scenario(), sim::mar_scenario()}) {
    scenarios.push_back(s);
  }
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const auto& s = scenarios[k];
    try {
      const auto t = sim::true_mean(s, 10'000'000, rng::derive_seed(kSeed, {k, 0x7e57ULL}));
      o.detail << "  " << s.name
               << fmt("  analytic %.6f  monte carlo %.6f (se %.6f)  z %+.2f\n", t.analytic, t.monte_carlo.mean,
                      t.monte_carlo.se, t.z_score);
    } catch (const OracleError& e) {
      o.require(false, e.what());
    }
  }
}

// 9. Every converged fit satisfies its moment equations, re-evaluated
// outside the solver.
void solver_contracts(Outcome& o) {
  std::vector<sim::ScenarioConfig> scenarios = sim::acceptance_grid(2000);
  scenarios.push_back(sim::high_variability_scenario());
  scenarios.push_back(sim::weak_proxy_scenario());
  int fits = 0, skipped = 0;
  double worst_beta = 0.0, worst_ag = 0.0, worst_phi = 0.0, worst_psi = 0.0;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto& cfg = scenarios[s];
    const PipelineConfig pc = cfg.working_pipeline(sim::study_pipeline(2));
    const MomentBasisSpec basis = pc.resolved_moments(2);
    const Design prop = pc.resolved_propensity_design(2);
    for (std::size_t rep = 0; rep < 100; ++rep) {
      const Dataset d = sim::generate(cfg, sim::replication_seed(kSeed, s, rep)).observed;
      EstimateReport r;
      try {
        r = run_pipeline(d, pc);
      } catch (const Error&) {
        ++skipped;
        continue;
      }
      ++fits;
      worst_beta = std::max(worst_beta, outcome_score(d, r.fits.beta).cwiseAbs().maxCoeff());
      Vector theta(r.fits.alpha.alpha.size() + r.fits.gamma.gamma.size());
      theta << r.fits.alpha.alpha, r.fits.gamma.gamma;
      if (r.alpha_gamma_fit.converged) {
        worst_ag = std::max(worst_ag,
                            alpha_gamma_moments(d, r.fits.beta, basis, pc.odds, theta, prop).cwiseAbs().maxCoeff());
      }
      const FittedValues fv = fitted_values(d, r.fits);
      if (r.phi_fit.converged) {
        worst_phi = std::max(worst_phi, std::abs(phi_moment(d, fv, basis.g, r.mu_reg, r.phi_hat)));
      }
      if (r.psi_fit.converged) worst_psi = std::max(worst_psi, std::abs(psi_moment(d, fv, basis.q, r.psi_hat)));
    }
  }
  o.detail << "  " << fits << " pipeline fits (" << skipped << " raised structured errors)\n"
           << fmt("  largest re-evaluated moment: beta %.3g  alpha/gamma %.3g  phi %.3g  psi %.3g\n", worst_beta,
                  worst_ag, worst_phi, worst_psi);
  for (double v : {worst_beta, worst_ag, worst_phi, worst_psi}) {
    o.require(v <= 1e-10, "a converged fit leaves a moment above 1e-10");
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, void (*)(Outcome&)>> criteria{
      {"double robustness over the misspecification grid", double_robustness},
      {"extension parameters vanish under their nulls", diagnostic_nulls},
      {"goodness-of-fit size and power", gof_calibration},
      {"mu2 boundedness", boundedness},
      {"population moment batteries at n = 1e5", moment_batteries},
      {"MAR reduction", mar_reduction},
      {"tilted mean oracle", tilt_oracle},
      {"analytic and Monte Carlo truth agree", dual_oracle},
      {"solver moment contracts", solver_contracts},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  std::vector<std::string> lines;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("unexpected error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s\n%s", id, criteria[k].first, o.detail.str().c_str());
    char line[256];
    std::snprintf(line, sizeof line, "%s  criterion %d: %s (%.0f s)", o.pass ? "PASS" : "FAIL", id,
                  criteria[k].first, secs);
    std::printf("%s\n\n", line);
    std::fflush(stdout);
    lines.emplace_back(line);
    failed += !o.pass;
  }
  std::printf("summary\n");
  for (const auto& l : lines) std::printf("  %s\n", l.c_str());
  return failed == 0 ? 0 : 1;
}
