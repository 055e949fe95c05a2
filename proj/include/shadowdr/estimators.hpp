#pragma once

// Outcome-mean estimators: regression imputation, the three doubly robust
// constructions, and their missing-at-random special cases.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "shadowdr/dataset.hpp"
#include "shadowdr/errors.hpp"
#include "shadowdr/estimation.hpp"
#include "shadowdr/model_core.hpp"

namespace shadowdr {

/// E^{(1 - r) M0(x) + r y}.
inline double mu_reg(const Dataset& data, const BaselineOutcomeSpec& beta, const OddsRatioSpec& gamma) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    acc += data.observed(i) ? data.y(i) : tilted_mean_y(data.x(i), beta, gamma);
  }
  return acc / static_cast<double>(data.size());
}

/// Regression with residual bias correction: E^[W r {y - M0} + M0].
inline double mu1(const Dataset& data, const BaselinePropensitySpec& alpha, const BaselineOutcomeSpec& beta,
                  const OddsRatioSpec& gamma) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.x(i);
    const double m0 = tilted_mean_y(x, beta, gamma);
    acc += m0;
    if (data.observed(i)) acc += weight(x, data.y(i), alpha, gamma) * (data.y(i) - m0);
  }
  return acc / static_cast<double>(data.size());
}

/// Self-normalized Horvitz-Thompson with extended weights. Weights are
/// normalized on the log scale, so the result is a convex combination of the
/// observed outcomes for any finite phi.
inline double mu2(const Dataset& data, const ExtendedWeightSpec& ext, const BaselinePropensitySpec& alpha,
                  const OddsRatioSpec& gamma) {
  if (data.complete_cases() == 0) throw DegenerateWeightsError("no complete cases: mu2 is undefined");
  std::vector<double> lw;
  std::vector<double> ys;
  lw.reserve(data.complete_cases());
  ys.reserve(data.complete_cases());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.observed(i)) continue;
    lw.push_back(extended_log_weight(data.x(i), data.y(i), ext, alpha, gamma));
    ys.push_back(data.y(i));
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double v : lw) top = std::max(top, v);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < lw.size(); ++k) {
    const double w = std::exp(lw[k] - top);
    num += w * ys[k];
    den += w;
  }
  const auto [lo, hi] = data.observed_range();
  return std::clamp(num / den, lo, hi);  // guards the last ulp of rounding
}

/// E^{W_ext r}; near 1 when the extended weights are stable.
inline double mean_extended_weight(const Dataset& data, const ExtendedWeightSpec& ext,
                                   const BaselinePropensitySpec& alpha, const OddsRatioSpec& gamma) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.observed(i)) acc += extended_weight(data.x(i), data.y(i), ext, alpha, gamma);
  }
  return acc / static_cast<double>(data.size());
}

/// Regression with an extended outcome model: E^{(1 - r) M0ext + r y}.
inline double mu3(const Dataset& data, const ExtendedOutcomeSpec& ext, const BaselineOutcomeSpec& beta,
                  const OddsRatioSpec& gamma) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    acc += data.observed(i) ? data.y(i) : extended_outcome_mean(data.x(i), ext, beta, gamma);
  }
  return acc / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Missing-at-random forms

struct MarEstimates {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double mu3 = 0.0;
  /// Coefficient in logit pr_ext(r=1|x) = (1,x^T) alpha + phi g(x).
  double phi = 0.0;
  double psi = 0.0;
  /// E^[r {y - M_ext}], the second moment condition of the extended outcome fit.
  double outcome_condition = 0.0;
};

/// q centred over the complete cases: q(x) - E^[r q] / E^[r].
inline ScalarFeature complete_case_centered(const ScalarFeature& q, const Dataset& data) {
  if (data.complete_cases() == 0) throw DegenerateWeightsError("no complete cases");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.observed(i)) acc += q(data.x(i));
  }
  const double c = acc / static_cast<double>(data.complete_cases());
  return {q.name() + "-cc_mean", [q, c](Covariates x) { return q(x) - c; }};
}

/// Inverse propensity 1 / expit((1,d(x)^T) alpha) as a covariate feature.
inline ScalarFeature inverse_propensity_feature(const BaselinePropensitySpec& alpha) {
  return {"inverse_propensity", [alpha](Covariates x) { return 1.0 + std::exp(-alpha.linear_predictor(x)); }};
}

/// MAR estimators with OR = 0: W(x) = 1/expit((1,d(x)^T) alpha), M(x) = (1,d(x)^T) beta_y.
/// The outcome extension M_ext = M + psi q_c uses q centred over complete
/// cases, so both E^[W r (y - M_ext)] = 0 and E^[r (y - M_ext)] = 0 hold.
inline MarEstimates mar_estimators(const Dataset& data, const BaselinePropensitySpec& alpha,
                                   const BaselineOutcomeSpec& beta, const ScalarFeature& g, const ScalarFeature& q,
                                   const SolverConfig& cfg = {}) {
  const std::size_t n = data.size();
  const double nd = static_cast<double>(n);
  std::vector<double> m(n), w(n, 0.0), lp(n), gv(n);
  double mu_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.x(i);
    m[i] = beta.mean_y(x);
    lp[i] = alpha.linear_predictor(x);
    gv[i] = g(x);
    if (data.observed(i)) w[i] = 1.0 + std::exp(-lp[i]);
    mu_r += data.observed(i) ? data.y(i) : m[i];
  }
  mu_r /= nd;

  MarEstimates est;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += m[i];
    if (data.observed(i)) acc += w[i] * (data.y(i) - m[i]);
  }
  est.mu1 = acc / nd;

  // Extended logistic propensity, phi from the mean-calibration equation.
  auto phi_eq = [&](double phi) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double wr = data.observed(i) ? 1.0 + std::exp(std::min(-lp[i] - phi * gv[i], 700.0)) : 0.0;
      s += (wr - 1.0) * (m[i] - mu_r);
    }
    return s / nd;
  };
  if (data.incomplete_cases() == 0) {
    est.mu2 = est.mu1;
    est.mu3 = est.mu1;
    return est;
  }
  const FitResult fphi = solve_scalar(phi_eq, 0.0, cfg, 0.25, 10.0);
  if (!fphi.converged) throw SolverError("MAR phi equation did not converge", "solver_nonconvergence");
  est.phi = fphi.theta_hat[0];
  std::vector<double> lw;
  std::vector<double> ys;
  for (std::size_t i = 0; i < n; ++i) {
    if (!data.observed(i)) continue;
    lw.push_back(log1pexp(-lp[i] - est.phi * gv[i]));
    ys.push_back(data.y(i));
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double v : lw) top = std::max(top, v);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < lw.size(); ++k) {
    const double e = std::exp(lw[k] - top);
    num += e * ys[k];
    den += e;
  }
  est.mu2 = num / den;

  const ScalarFeature qc = complete_case_centered(q, data);
  std::vector<double> qv(n);
  double pnum = 0.0, pden = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    qv[i] = qc(data.x(i));
    if (!data.observed(i)) continue;
    pnum += w[i] * (data.y(i) - m[i]);
    pden += w[i] * qv[i];
  }
  if (!(std::abs(pden / nd) >= 1e-12)) {
    throw SolverError("MAR outcome extension is degenerate (q is constant over complete cases?)",
                      "degenerate_extension");
  }
  est.psi = pnum / pden;
  double mext = 0.0, cond = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double me = m[i] + est.psi * qv[i];
    mext += me;
    if (data.observed(i)) cond += data.y(i) - me;
  }
  est.mu3 = mext / nd;
  est.outcome_condition = cond / nd;
  return est;
}

}  // namespace shadowdr
