#pragma once

// End-to-end estimation: beta -> (alpha, gamma) -> mu_reg -> phi, psi ->
// the three doubly robust estimates.

#include <cmath>
#include <limits>
#include <optional>
#include <tuple>
#include <string>
#include <vector>

#include "shadowdr/dataset.hpp"
#include "shadowdr/estimation.hpp"
#include "shadowdr/estimators.hpp"
#include "shadowdr/model_core.hpp"
#include "shadowdr/regression.hpp"
#include "shadowdr/solver.hpp"

namespace shadowdr {

struct PipelineConfig {
  /// Basis of the odds-ratio model; its gamma values are ignored.
  OddsRatioSpec odds = OddsRatioSpec::default_spec();
  /// Empty G means "mirror the odds-ratio basis".
  MomentBasisSpec moments;
  SolverConfig solver;
  /// gamma pinned at 0 and alpha from logistic regression of r on d(x).
  bool mar_mode = false;
  int extra_starts = 0;
  /// Regressors of the baseline outcome and propensity models; empty means
  /// linear in every covariate.
  std::optional<Design> outcome_design;
  std::optional<Design> propensity_design;

  Design resolved_outcome_design(std::size_t p) const { return outcome_design.value_or(Design::linear(p)); }
  Design resolved_propensity_design(std::size_t p) const {
    return propensity_design.value_or(Design::linear(p));
  }

  MomentBasisSpec resolved_moments(std::size_t p) const {
    if (!moments.G.empty()) return moments;
    MomentBasisSpec m = MomentBasisSpec::mirror(odds, p);
    m.g = moments.g;
    m.q = moments.q;
    return m;
  }

  /// Defaults for p covariates: g(x) = x1 (or 1), q(x) = 1.
  static PipelineConfig defaults(std::size_t p) {
    PipelineConfig c;
    c.moments = MomentBasisSpec::mirror(c.odds, p);
    return c;
  }
};

struct StandardErrors {
  double mu_reg = std::numeric_limits<double>::quiet_NaN();
  double mu1 = std::numeric_limits<double>::quiet_NaN();
  double mu2 = std::numeric_limits<double>::quiet_NaN();
  double mu3 = std::numeric_limits<double>::quiet_NaN();
  double phi = std::numeric_limits<double>::quiet_NaN();
  double psi = std::numeric_limits<double>::quiet_NaN();
  int attempted = 0;
  int used = 0;
  int dropped = 0;

  double dropped_fraction() const { return attempted == 0 ? 0.0 : static_cast<double>(dropped) / attempted; }
};

struct GofTestResult {
  double estimate = 0.0;
  double se = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;

  bool rejects(double level = 0.05) const { return p_value < level; }
};

struct EstimateReport {
  double mu_reg = 0.0;
  double mu1 = 0.0;
  double mu2 = 0.0;
  double mu3 = 0.0;
  double phi_hat = std::numeric_limits<double>::quiet_NaN();
  double psi_hat = std::numeric_limits<double>::quiet_NaN();

  WorkingFits fits;
  FitResult alpha_gamma_fit;
  FitResult phi_fit;
  FitResult psi_fit;

  /// E^{W_ext(phi_hat) r}; far from 1 signals unstable weights.
  double mean_extended_weight = std::numeric_limits<double>::quiet_NaN();
  double observed_min = 0.0;
  double observed_max = 0.0;
  /// mu3 is not range-preserving; flagged rather than enforced.
  bool mu3_out_of_range = false;
  /// No incomplete cases: all estimators equal the sample mean and the
  /// extension parameters are inestimable.
  bool weights_degenerate = false;
  std::vector<std::string> warnings;

  std::optional<StandardErrors> se;
  std::optional<GofTestResult> gof_phi;
  std::optional<GofTestResult> gof_psi;

  /// Scalar statistics in a fixed order (mu_reg, mu1, mu2, mu3, phi, psi).
  std::vector<double> statistics() const { return {mu_reg, mu1, mu2, mu3, phi_hat, psi_hat}; }
};

inline EstimateReport run_pipeline(const Dataset& data, const PipelineConfig& cfg) {
  const std::size_t p = data.dim();
  if (data.size() == 0) throw SampleSizeError("dataset is empty");
  cfg.odds.validate(p);
  cfg.solver.validate();
  const MomentBasisSpec basis = cfg.resolved_moments(p);
  basis.validate(cfg.odds, p);

  EstimateReport rep;
  std::tie(rep.observed_min, rep.observed_max) = data.observed_range();

  if (data.incomplete_cases() == 0) {
    double mean = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) mean += data.y(i);
    mean /= static_cast<double>(data.size());
    rep.mu_reg = rep.mu1 = rep.mu2 = rep.mu3 = mean;
    rep.weights_degenerate = true;
    rep.warnings.emplace_back("no incomplete cases; phi and psi are inestimable");
    return rep;
  }

  const Design prop_design = cfg.resolved_propensity_design(p);
  rep.fits.beta = fit_beta(data, cfg.resolved_outcome_design(p));
  if (cfg.mar_mode) {
    rep.fits.alpha = BaselinePropensitySpec{regression::logistic_fit(data, prop_design), prop_design};
    rep.fits.gamma = cfg.odds;
    rep.fits.gamma.gamma.setZero();
    rep.alpha_gamma_fit.theta_hat = rep.fits.alpha.alpha;
    rep.alpha_gamma_fit.converged = true;
    rep.alpha_gamma_fit.final_moment_norm = 0.0;
  } else {
    AlphaGammaFit ag = fit_alpha_gamma(data, rep.fits.beta, basis, cfg.odds, cfg.solver, {cfg.extra_starts},
                                       prop_design);
    rep.fits.alpha = ag.alpha;
    rep.fits.gamma = ag.gamma;
    rep.alpha_gamma_fit = std::move(ag.fit);
    for (auto& w : ag.warnings) rep.warnings.push_back(std::move(w));
  }

  rep.mu_reg = mu_reg(data, rep.fits.beta, rep.fits.gamma);
  const PhiFit phi = fit_phi(data, rep.fits, rep.mu_reg, basis, cfg.solver);
  const PsiFit psi = fit_psi(data, rep.fits, basis, cfg.solver);
  rep.phi_hat = phi.ext.phi;
  rep.psi_hat = psi.ext.psi;
  rep.phi_fit = phi.fit;
  rep.psi_fit = psi.fit;

  rep.mu1 = mu1(data, rep.fits.alpha, rep.fits.beta, rep.fits.gamma);
  rep.mu2 = mu2(data, phi.ext, rep.fits.alpha, rep.fits.gamma);
  rep.mu3 = mu3(data, psi.ext, rep.fits.beta, rep.fits.gamma);
  rep.mean_extended_weight = mean_extended_weight(data, phi.ext, rep.fits.alpha, rep.fits.gamma);
  if (!(rep.mean_extended_weight > 0.0)) throw NumericalError("mean extended weight is not positive");
  rep.mu3_out_of_range = rep.mu3 < rep.observed_min || rep.mu3 > rep.observed_max;
  if (rep.mu3_out_of_range) rep.warnings.emplace_back("mu3 lies outside the observed outcome range");
  return rep;
}

}  // namespace shadowdr
