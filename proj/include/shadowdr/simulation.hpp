#pragma once

// Synthetic data-generating processes with switchable misspecification,
// ground-truth outcome means, and the replicated Monte Carlo study.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "shadowdr/dataset.hpp"
#include "shadowdr/errors.hpp"
#include "shadowdr/inference.hpp"
#include "shadowdr/model_core.hpp"
#include "shadowdr/parallel.hpp"
#include "shadowdr/pipeline.hpp"
#include "shadowdr/quadrature.hpp"
#include "shadowdr/rng.hpp"

namespace shadowdr::sim {

/// Data-generating process, parameterized through the odds-ratio
/// factorization so that each working model can be exactly correct:
///
///   x ~ N(0, I_p)
///   y | r=1, x ~ N(a0 + a^T x + a_q x1^2, sigma^2)          baseline outcome
///   logit pr(r=1 | y=0, x) = c0 + c^T x [+ c_q x1^2]         baseline propensity
///   OR(y | x) = gamma y, gamma = -c_y                        log odds ratio
///   z = b_y y + b^T x + b_q x1^2 + tau e, e ~ N(0,1)       shadow variable
///
/// Equivalently logit pr(r=1 | y, x) = c0 + c^T x [+ c_q x1^2] + c_y y.
/// The fitted outcome model (both regressions) uses (1, x, x1^2) unless
/// misspecify_outcome is set, in which case it omits x1^2. Without b_q a
/// linear shadow law lets the z-moment balance y itself, which keeps mu1
/// consistent even when both working models are wrong. The fitted
/// propensity model is linear in x; the bracketed term enters the truth only
/// when misspecify_propensity is set.
struct ScenarioConfig {
  std::string name = "scenario";
  std::size_t n = 2000;
  std::size_t p = 2;
  double a0 = 0.0;
  std::vector<double> a{1.0, 0.5};
  double a_q = 0.5;
  double sigma = 1.0;
  double b_y = 1.0;
  std::vector<double> b{0.5, -0.5};
  double b_q = 0.5;
  double tau = 0.5;
  double c0 = 1.0;
  std::vector<double> c{0.5, -0.5};
  double c_q = -0.5;
  /// Selection-logit slope on y; the log odds ratio is OR(y | x) = -c_y y.
  double c_y = -0.3;
  bool misspecify_outcome = false;
  bool misspecify_propensity = false;
  std::uint64_t seed = 1;

  double gamma() const { return -c_y; }
  double outcome_quadratic() const { return a_q; }
  double propensity_quadratic() const { return misspecify_propensity ? c_q : 0.0; }

  /// Regressors of the fitted baseline outcome model.
  Design fitted_outcome_design() const {
    const Design lin = Design::linear(p);
    return misspecify_outcome ? lin : lin.with({0, 2});
  }
  /// Regressors of the fitted baseline propensity model.
  Design fitted_propensity_design() const { return Design::linear(p); }

  /// `base` with the working-model designs of this scenario.
  PipelineConfig working_pipeline(PipelineConfig base) const {
    base.outcome_design = fitted_outcome_design();
    base.propensity_design = fitted_propensity_design();
    return base;
  }

  /// Complete-case outcome mean at x.
  double complete_case_mean(Covariates x) const {
    double m = a0 + outcome_quadratic() * x[0] * x[0];
    for (std::size_t j = 0; j < p; ++j) m += a[j] * x[j];
    return m;
  }

  double baseline_logit(Covariates x) const {
    double t = c0 + propensity_quadratic() * x[0] * x[0];
    for (std::size_t j = 0; j < p; ++j) t += c[j] * x[j];
    return t;
  }

  /// logit pr(r = 1 | x) = logit p0 - log E[e^{gamma y} | r=1, x].
  double response_logit(Covariates x) const {
    const double m = complete_case_mean(x);
    const double g = gamma();
    return baseline_logit(x) - (g * m + 0.5 * g * g * sigma * sigma);
  }

  /// Structural checks only; the response-rate check needs quadrature.
  void validate_structure() const {
    if (n < 1) throw ConfigError(name + ": n must be positive");
    if (p < 1) throw ConfigError(name + ": at least one covariate is required");
    if (a.size() != p || b.size() != p || c.size() != p) {
      throw ConfigError(name + ": coefficient vectors must have length p");
    }
    if (!(sigma > 0.0) || !(tau > 0.0)) throw ConfigError(name + ": sigma and tau must be positive");
    if (b_y == 0.0) throw ConfigError(name + ": b_y must be nonzero (shadow variable must be relevant)");
    for (double v : {a0, a_q, sigma, b_y, b_q, tau, c0, c_q, c_y}) {
      if (!std::isfinite(v)) throw ConfigError(name + ": non-finite parameter");
    }
  }
};

/// A generated sample. `true_y` is the oracle side channel: the estimators
/// only ever receive `observed`.
struct SimulatedData {
  Dataset observed;
  Vector true_y;
};

inline SimulatedData generate(const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate_structure();
  auto gen = rng::stream(seed, {});
  rng::StandardNormal normal;
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const auto p = static_cast<Eigen::Index>(cfg.p);
  RowMatrix x(n, p);
  Vector z(n), y(n), ytrue(n);
  std::vector<std::uint8_t> r(cfg.n);
  const double shift = cfg.gamma() * cfg.sigma * cfg.sigma;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = normal(gen);
    const Covariates xi{x.data() + i * p, cfg.p};
    const double pr1 = expit(cfg.response_logit(xi));
    const bool ri = rng::StandardNormal::uniform(gen) < pr1;
    const double m = cfg.complete_case_mean(xi) + (ri ? 0.0 : shift);
    const double yi = m + cfg.sigma * normal(gen);
    double zi = cfg.b_y * yi + cfg.b_q * x(i, 0) * x(i, 0) + cfg.tau * normal(gen);
    for (Eigen::Index j = 0; j < p; ++j) zi += cfg.b[static_cast<std::size_t>(j)] * x(i, j);
    r[static_cast<std::size_t>(i)] = ri ? 1 : 0;
    ytrue[i] = yi;
    y[i] = yi;  // discarded by Dataset for r = 0
    z[i] = zi;
  }
  return {Dataset(std::move(x), std::move(z), std::move(r), std::move(y)), std::move(ytrue)};
}

inline SimulatedData generate(const ScenarioConfig& cfg) { return generate(cfg, cfg.seed); }

/// Observed data only.
inline Dataset generate_dataset(const ScenarioConfig& cfg) { return generate(cfg).observed; }

namespace detail {

// E over x of f(x1, v) where v = w^T x_{2..p} ~ N(0, |w|^2), and the
// response logit is affine in (x1, x1^2, v).
template <class F>
double covariate_expectation(const ScenarioConfig& cfg, F&& f) {
  double wnorm2 = 0.0;
  for (std::size_t j = 1; j < cfg.p; ++j) {
    const double w = cfg.c[j] - cfg.gamma() * cfg.a[j];
    wnorm2 += w * w;
  }
  const double wsd = std::sqrt(wnorm2);
  auto eval = [&](int order) {
    return quadrature::normal_expectation(
        [&](double x1) {
          if (wsd == 0.0) return f(x1, 0.0);
          return quadrature::normal_expectation([&](double v) { return f(x1, v); }, 0.0, wsd, order);
        },
        0.0, 1.0, order);
  };
  return shadowdr::detail::adaptive_gauss_hermite(eval, "covariate expectation");
}

inline double response_logit_reduced(const ScenarioConfig& cfg, double x1, double v) {
  const double g = cfg.gamma();
  const double lin0 = cfg.c0 - g * cfg.a0 - 0.5 * g * g * cfg.sigma * cfg.sigma;
  const double lin1 = cfg.c[0] - g * cfg.a[0];
  const double quad = cfg.propensity_quadratic() - g * cfg.outcome_quadratic();
  return lin0 + lin1 * x1 + quad * x1 * x1 + v;
}

}  // namespace detail

/// Marginal pr(r = 1) by quadrature over the covariates.
inline double response_rate(const ScenarioConfig& cfg) {
  cfg.validate_structure();
  return detail::covariate_expectation(
      cfg, [&](double x1, double v) { return expit(detail::response_logit_reduced(cfg, x1, v)); });
}

inline void validate(const ScenarioConfig& cfg) {
  cfg.validate_structure();
  const double rate = response_rate(cfg);
  if (rate < 0.4 || rate > 0.9) {
    std::ostringstream os;
    os << cfg.name << ": marginal response rate " << rate << " is outside [0.4, 0.9]";
    throw ConfigError(os.str());
  }
}

/// E(Y) = E_x[m(x) + (1 - pr(r=1|x)) gamma sigma^2]. The first term is
/// a0 + a_q E[x1^2]; the second is a two-dimensional Gauss-Hermite integral.
inline double true_mean_analytic(const ScenarioConfig& cfg) {
  cfg.validate_structure();
  const double mean_m = cfg.a0 + cfg.outcome_quadratic();
  const double shift = cfg.gamma() * cfg.sigma * cfg.sigma;
  if (shift == 0.0) return mean_m;
  const double nonresponse = detail::covariate_expectation(
      cfg, [&](double x1, double v) { return expit(-detail::response_logit_reduced(cfg, x1, v)); });
  return mean_m + shift * nonresponse;
}

struct MonteCarloMean {
  double mean = 0.0;
  double se = 0.0;
  std::size_t draws = 0;
};

/// Brute-force E(Y) from `draws` full-data draws of the DGP.
inline MonteCarloMean true_mean_monte_carlo(const ScenarioConfig& cfg, std::size_t draws, std::uint64_t seed) {
  cfg.validate_structure();
  auto gen = rng::stream(seed, {0x7275746855ULL});
  rng::StandardNormal normal;
  std::vector<double> x(cfg.p);
  const double shift = cfg.gamma() * cfg.sigma * cfg.sigma;
  // Welford accumulation.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    for (auto& v : x) v = normal(gen);
    const bool ri = rng::StandardNormal::uniform(gen) < expit(cfg.response_logit(x));
    const double yi = cfg.complete_case_mean(x) + (ri ? 0.0 : shift) + cfg.sigma * normal(gen);
    const double d = yi - mean;
    mean += d / static_cast<double>(k + 1);
    m2 += d * (yi - mean);
  }
  MonteCarloMean out;
  out.mean = mean;
  out.draws = draws;
  out.se = draws > 1 ? std::sqrt(m2 / static_cast<double>(draws - 1) / static_cast<double>(draws)) : 0.0;
  return out;
}

struct TrueMean {
  double analytic = 0.0;
  MonteCarloMean monte_carlo;
  double z_score = 0.0;
};

/// Analytic mean cross-checked against Monte Carlo; disagreement beyond
/// 4 Monte Carlo standard errors throws OracleError.
inline TrueMean true_mean(const ScenarioConfig& cfg, std::size_t draws = 10'000'000,
                          std::uint64_t seed = 0x5eed0fca11ULL) {
  TrueMean t;
  t.analytic = true_mean_analytic(cfg);
  t.monte_carlo = true_mean_monte_carlo(cfg, draws, seed);
  t.z_score = (t.monte_carlo.mean - t.analytic) / t.monte_carlo.se;
  if (!(std::abs(t.z_score) <= 4.0)) {
    std::ostringstream os;
    os.precision(10);
    os << cfg.name << ": analytic mean " << t.analytic << " disagrees with Monte Carlo mean "
       << t.monte_carlo.mean << " (se " << t.monte_carlo.se << ", z " << t.z_score << ")";
    throw OracleError(os.str());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Replicated study

inline const std::array<const char*, 6> kStatisticNames{"mu_reg", "mu1", "mu2", "mu3", "phi", "psi"};

struct ReplicationRecord {
  bool failed = false;
  std::string failure_kind;
  std::array<double, 6> estimate{};
  std::array<double, 6> se{};
  double p_phi = std::numeric_limits<double>::quiet_NaN();
  double p_psi = std::numeric_limits<double>::quiet_NaN();
  bool mu2_in_range = true;
  double response_fraction = 0.0;
};

struct EstimatorSummary {
  std::string name;
  double truth = 0.0;   // the outcome mean for mu's; 0 for phi and psi
  int count = 0;
  double mean = 0.0;
  double bias = 0.0;
  double mc_sd = 0.0;
  double mc_se = 0.0;   // mc_sd / sqrt(count)
  double boot_se_mean = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
};

struct ScenarioSummary {
  ScenarioConfig config;
  TrueMean truth;
  int replications = 0;
  int failures = 0;
  std::map<std::string, int> failure_kinds;
  std::vector<EstimatorSummary> estimators;
  int gof_count = 0;
  double reject_phi = std::numeric_limits<double>::quiet_NaN();
  double reject_psi = std::numeric_limits<double>::quiet_NaN();
  std::vector<ReplicationRecord> records;

  const EstimatorSummary& estimator(std::string_view name) const {
    for (const auto& e : estimators) {
      if (e.name == name) return e;
    }
    throw ConfigError("unknown estimator " + std::string(name));
  }
};

/// Pipeline settings used with the named scenarios: g(x) = x2, which is
/// monotone in M0 at both tails and so keeps the phi equation bracketed.
inline PipelineConfig study_pipeline(std::size_t p = 2) {
  PipelineConfig pc = PipelineConfig::defaults(p);
  if (p >= 2) pc.moments.g = ScalarFeature::covariate(1);
  return pc;
}

struct StudyConfig {
  int replications = 500;
  std::uint64_t master_seed = 2016;
  unsigned threads = 0;
  /// 0 disables bootstrap standard errors, coverage, and the gof tests.
  int bootstrap_replicates = 0;
  std::size_t truth_draws = 10'000'000;
  PipelineConfig pipeline = study_pipeline(2);

  void validate() const {
    if (replications < 2) throw ConfigError("a study needs at least 2 replications");
    if (bootstrap_replicates == 1 || bootstrap_replicates < 0) {
      throw ConfigError("bootstrap_replicates must be 0 or at least 2");
    }
  }
};

struct StudyResult {
  std::vector<ScenarioSummary> scenarios;
};

/// Seed of dataset `rep` in scenario `scenario`.
inline std::uint64_t replication_seed(std::uint64_t master, std::size_t scenario, std::size_t rep) {
  return rng::derive_seed(master, {scenario, rep, 0});
}

inline ReplicationRecord run_replication(const ScenarioConfig& cfg, const StudyConfig& study, std::size_t s,
                                         std::size_t rep) {
  ReplicationRecord rec;
  rec.se.fill(std::numeric_limits<double>::quiet_NaN());
  rec.estimate.fill(std::numeric_limits<double>::quiet_NaN());
  try {
    const Dataset data = generate(cfg, replication_seed(study.master_seed, s, rep)).observed;
    rec.response_fraction = static_cast<double>(data.complete_cases()) / static_cast<double>(data.size());
    const PipelineConfig pipeline = cfg.working_pipeline(study.pipeline);
    EstimateReport report;
    if (study.bootstrap_replicates > 0) {
      BootstrapConfig boot{study.bootstrap_replicates, rng::derive_seed(study.master_seed, {s, rep, 1}), 1};
      report = estimate_with_inference(data, pipeline, boot);
    } else {
      report = run_pipeline(data, pipeline);
    }
    const auto st = report.statistics();
    std::copy(st.begin(), st.end(), rec.estimate.begin());
    if (report.se) {
      rec.se = {report.se->mu_reg, report.se->mu1, report.se->mu2, report.se->mu3, report.se->phi, report.se->psi};
    }
    if (report.gof_phi) rec.p_phi = report.gof_phi->p_value;
    if (report.gof_psi) rec.p_psi = report.gof_psi->p_value;
    rec.mu2_in_range = report.mu2 >= report.observed_min && report.mu2 <= report.observed_max;
  } catch (const Error& e) {
    rec.failed = true;
    rec.failure_kind = e.kind();
  }
  return rec;
}

inline ScenarioSummary summarize(const ScenarioConfig& cfg, const TrueMean& truth,
                                 std::vector<ReplicationRecord> records) {
  ScenarioSummary sum;
  sum.config = cfg;
  sum.truth = truth;
  sum.replications = static_cast<int>(records.size());
  for (const auto& r : records) {
    if (r.failed) {
      ++sum.failures;
      ++sum.failure_kinds[r.failure_kind];
    }
  }
  for (std::size_t k = 0; k < kStatisticNames.size(); ++k) {
    EstimatorSummary e;
    e.name = kStatisticNames[k];
    e.truth = k < 4 ? truth.analytic : 0.0;
    double acc = 0.0;
    for (const auto& r : records) {
      if (!r.failed && std::isfinite(r.estimate[k])) {
        acc += r.estimate[k];
        ++e.count;
      }
    }
    if (e.count == 0) {
      e.mean = e.bias = e.mc_sd = e.mc_se = std::numeric_limits<double>::quiet_NaN();
      sum.estimators.push_back(e);
      continue;
    }
    e.mean = acc / e.count;
    e.bias = e.mean - e.truth;
    double ss = 0.0, se_acc = 0.0;
    int se_count = 0, covered = 0;
    for (const auto& r : records) {
      if (r.failed || !std::isfinite(r.estimate[k])) continue;
      ss += (r.estimate[k] - e.mean) * (r.estimate[k] - e.mean);
      if (std::isfinite(r.se[k])) {
        se_acc += r.se[k];
        ++se_count;
        if (std::abs(r.estimate[k] - e.truth) <= 1.959963984540054 * r.se[k]) ++covered;
      }
    }
    e.mc_sd = e.count > 1 ? std::sqrt(ss / (e.count - 1)) : std::numeric_limits<double>::quiet_NaN();
    e.mc_se = e.mc_sd / std::sqrt(static_cast<double>(e.count));
    if (se_count > 0) {
      e.boot_se_mean = se_acc / se_count;
      e.coverage = static_cast<double>(covered) / se_count;
    }
    sum.estimators.push_back(e);
  }
  int tested_phi = 0, tested_psi = 0, rej_phi = 0, rej_psi = 0;
  for (const auto& r : records) {
    if (r.failed) continue;
    if (std::isfinite(r.p_phi)) {
      ++tested_phi;
      rej_phi += r.p_phi < 0.05;
    }
    if (std::isfinite(r.p_psi)) {
      ++tested_psi;
      rej_psi += r.p_psi < 0.05;
    }
  }
  sum.gof_count = std::min(tested_phi, tested_psi);
  if (tested_phi > 0) sum.reject_phi = static_cast<double>(rej_phi) / tested_phi;
  if (tested_psi > 0) sum.reject_psi = static_cast<double>(rej_psi) / tested_psi;
  sum.records = std::move(records);
  return sum;
}

/// Runs every scenario for `study.replications` replications. Replication
/// failures are counted, never fatal. Deterministic given the master seed
/// for any thread count.
inline StudyResult run_study(const std::vector<ScenarioConfig>& scenarios, const StudyConfig& study) {
  study.validate();
  StudyResult result;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto& cfg = scenarios[s];
    validate(cfg);
    const TrueMean truth = true_mean(cfg, study.truth_draws, rng::derive_seed(study.master_seed, {s, 0xfeedULL}));
    std::vector<ReplicationRecord> records(static_cast<std::size_t>(study.replications));
    parallel::for_each_index(records.size(), study.threads,
                             [&](std::size_t rep) { records[rep] = run_replication(cfg, study, s, rep); });
    result.scenarios.push_back(summarize(cfg, truth, std::move(records)));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Named scenarios

/// The four correct/wrong cells of the outcome and propensity models.
inline std::vector<ScenarioConfig> acceptance_grid(std::size_t n = 2000) {
  std::vector<ScenarioConfig> grid;
  for (const auto& [mo, mp, name] : {std::tuple{false, false, "both_correct"},
                                     std::tuple{true, false, "propensity_correct"},
                                     std::tuple{false, true, "outcome_correct"},
                                     std::tuple{true, true, "both_wrong"}}) {
    ScenarioConfig cfg;
    cfg.name = name;
    cfg.n = n;
    cfg.misspecify_outcome = mo;
    cfg.misspecify_propensity = mp;
    grid.push_back(cfg);
  }
  return grid;
}

/// Response probability falls to about 0.15 for x1 below -1.5.
inline ScenarioConfig high_variability_scenario(std::size_t n = 2000) {
  ScenarioConfig cfg;
  cfg.name = "high_variability";
  cfg.n = n;
  cfg.c0 = 0.6;
  cfg.c = {1.5, -0.25};
  return cfg;
}

/// Shadow variable only weakly related to the outcome.
inline ScenarioConfig weak_proxy_scenario(std::size_t n = 2000) {
  ScenarioConfig cfg;
  cfg.name = "weak_proxy";
  cfg.n = n;
  cfg.b_y = 0.2;
  return cfg;
}

/// Missing at random: the response depends on x only.
inline ScenarioConfig mar_scenario(std::size_t n = 2000) {
  ScenarioConfig cfg;
  cfg.name = "mar";
  cfg.n = n;
  cfg.c_y = 0.0;
  return cfg;
}

// ---------------------------------------------------------------------------
// Population bias of mu1

/// Working-model fits on one very large sample, standing in for the
/// probability limits (alpha*, beta*, gamma*).
struct ProbabilityLimits {
  BaselineOutcomeSpec beta;
  BaselinePropensitySpec alpha;
  OddsRatioSpec gamma;
};

inline ProbabilityLimits probability_limits(const ScenarioConfig& cfg, const PipelineConfig& pipeline,
                                            std::size_t n = 1'000'000, std::uint64_t seed = 0x1a2b3c4dULL) {
  ScenarioConfig big = cfg;
  big.n = n;
  const Dataset data = generate(big, seed).observed;
  const PipelineConfig pc = cfg.working_pipeline(pipeline);
  ProbabilityLimits lim;
  lim.beta = fit_beta(data, pc.resolved_outcome_design(cfg.p));
  const AlphaGammaFit ag = fit_alpha_gamma(data, lim.beta, pc.resolved_moments(cfg.p), pc.odds, pc.solver, {},
                                           pc.resolved_propensity_design(cfg.p));
  lim.alpha = ag.alpha;
  lim.gamma = ag.gamma;
  return lim;
}

/// Monte Carlo value of E[{W(x, y; alpha*, gamma*) r - 1}{y - M0(x; beta*, gamma*)}]
/// on fresh full-data draws, using the true outcome of every unit.
inline MonteCarloMean bias1_population(const ScenarioConfig& cfg, const ProbabilityLimits& lim,
                                       std::size_t draws = 1'000'000, std::uint64_t seed = 0x5ca1ab1eULL) {
  ScenarioConfig fresh = cfg;
  fresh.n = draws;
  const SimulatedData sd = generate(fresh, seed);
  const Dataset& data = sd.observed;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.x(i);
    const double y = sd.true_y[static_cast<Eigen::Index>(i)];
    const double wr = data.observed(i) ? weight(x, y, lim.alpha, lim.gamma) : 0.0;
    const double v = (wr - 1.0) * (y - tilted_mean_y(x, lim.beta, lim.gamma));
    const double d = v - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (v - mean);
  }
  MonteCarloMean out;
  out.mean = mean;
  out.draws = data.size();
  out.se = data.size() > 1 ? std::sqrt(m2 / static_cast<double>(data.size() - 1) / static_cast<double>(data.size()))
                           : 0.0;
  return out;
}

}  // namespace shadowdr::sim
