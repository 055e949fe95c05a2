#pragma once

// Nonparametric bootstrap over the full pipeline and Wald-type
// goodness-of-fit tests of phi = 0 and psi = 0.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "shadowdr/dataset.hpp"
#include "shadowdr/errors.hpp"
#include "shadowdr/parallel.hpp"
#include "shadowdr/pipeline.hpp"
#include "shadowdr/rng.hpp"

namespace shadowdr {

struct BootstrapConfig {
  int replicates = 200;
  std::uint64_t seed = 20160101;
  unsigned threads = 1;

  void validate() const {
    if (replicates < 2) throw ConfigError("bootstrap replicates must be at least 2");
  }
};

namespace detail {

inline constexpr std::size_t kStatCount = 6;
using StatRow = std::array<double, kStatCount>;

// Sample standard deviation of the finite entries.
inline double finite_sd(const std::vector<StatRow>& rows, std::size_t k) {
  double sum = 0.0;
  std::size_t m = 0;
  for (const auto& r : rows) {
    if (std::isfinite(r[k])) {
      sum += r[k];
      ++m;
    }
  }
  if (m < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mean = sum / static_cast<double>(m);
  double ss = 0.0;
  for (const auto& r : rows) {
    if (std::isfinite(r[k])) ss += (r[k] - mean) * (r[k] - mean);
  }
  return std::sqrt(ss / static_cast<double>(m - 1));
}

}  // namespace detail

/// Indices of bootstrap resample `b`; stream (seed, b) under the splitting rule of rng::derive_seed.
inline std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed, std::uint64_t b) {
  auto gen = rng::stream(seed, {b});
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng::uniform_index(gen, n));
  return idx;
}

/// Standard errors of (mu_reg, mu1, mu2, mu3, phi, psi) across resamples.
/// Failed resamples are dropped and counted; more than half failing is an error.
inline StandardErrors bootstrap_ses(const Dataset& data, const PipelineConfig& cfg, const BootstrapConfig& boot) {
  boot.validate();
  const auto B = static_cast<std::size_t>(boot.replicates);
  std::vector<detail::StatRow> rows(B);
  std::vector<char> ok(B, 0);
  parallel::for_each_index(B, boot.threads, [&](std::size_t b) {
    const auto idx = bootstrap_indices(data.size(), boot.seed, b);
    try {
      const EstimateReport rep = run_pipeline(data.subset(idx), cfg);
      const auto s = rep.statistics();
      std::copy(s.begin(), s.end(), rows[b].begin());
      ok[b] = 1;
    } catch (const Error&) {
      ok[b] = 0;
    }
  });
  std::vector<detail::StatRow> used;
  for (std::size_t b = 0; b < B; ++b) {
    if (ok[b]) used.push_back(rows[b]);
  }
  StandardErrors se;
  se.attempted = boot.replicates;
  se.used = static_cast<int>(used.size());
  se.dropped = se.attempted - se.used;
  if (2 * se.dropped > se.attempted) {
    std::ostringstream os;
    os << "bootstrap unreliable: " << se.dropped << " of " << se.attempted << " resamples failed";
    throw SolverError(os.str(), "inference_unreliable");
  }
  se.mu_reg = detail::finite_sd(used, 0);
  se.mu1 = detail::finite_sd(used, 1);
  se.mu2 = detail::finite_sd(used, 2);
  se.mu3 = detail::finite_sd(used, 3);
  se.phi = detail::finite_sd(used, 4);
  se.psi = detail::finite_sd(used, 5);
  return se;
}

/// Two-sided Wald test of a zero null against a normal reference.
inline GofTestResult gof_test(double estimate, double se) {
  if (!std::isfinite(estimate)) {
    throw DegenerateWeightsError("extension parameter is inestimable (weights degenerate)");
  }
  if (!(se > 0.0) || !std::isfinite(se)) {
    throw SolverError("standard error is zero or undefined; test statistic is undefined", "undefined_statistic");
  }
  GofTestResult t;
  t.estimate = estimate;
  t.se = se;
  t.statistic = estimate / se;
  t.p_value = estimate == 0.0 ? 1.0 : std::erfc(std::abs(t.statistic) / std::numbers::sqrt2);
  return t;
}

/// H0: phi = 0 (baseline propensity model correct).
inline GofTestResult gof_phi(const EstimateReport& rep) {
  if (!rep.se) throw ConfigError("gof_phi needs bootstrap standard errors");
  return gof_test(rep.phi_hat, rep.se->phi);
}

/// H0: psi = 0 (baseline outcome model correct).
inline GofTestResult gof_psi(const EstimateReport& rep) {
  if (!rep.se) throw ConfigError("gof_psi needs bootstrap standard errors");
  return gof_test(rep.psi_hat, rep.se->psi);
}

/// Pipeline plus bootstrap standard errors and both goodness-of-fit tests.
/// Tests that cannot be formed are left empty with a warning.
inline EstimateReport estimate_with_inference(const Dataset& data, const PipelineConfig& cfg,
                                              const BootstrapConfig& boot) {
  EstimateReport rep = run_pipeline(data, cfg);
  rep.se = bootstrap_ses(data, cfg, boot);
  try {
    rep.gof_phi = gof_phi(rep);
  } catch (const Error& e) {
    rep.warnings.push_back(std::string("phi test unavailable: ") + e.what());
  }
  try {
    rep.gof_psi = gof_psi(rep);
  } catch (const Error& e) {
    rep.warnings.push_back(std::string("psi test unavailable: ") + e.what());
  }
  return rep;
}

}  // namespace shadowdr
