#pragma once

// Estimating equations for the working-model parameters: the complete-case
// outcome likelihood, the joint (alpha, gamma) moment system, and the scalar
// extension parameters phi and psi.

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "shadowdr/dataset.hpp"
#include "shadowdr/errors.hpp"
#include "shadowdr/model_core.hpp"
#include "shadowdr/regression.hpp"
#include "shadowdr/solver.hpp"

namespace shadowdr {

/// z^power, optionally times one covariate: the shadow-variable analogue of
/// an odds-ratio term.
struct ShadowTerm {
  int z_power = 1;
  int covariate = -1;

  double value(double z, Covariates x) const {
    const double zp = z_power == 1 ? z : std::pow(z, z_power);
    return covariate < 0 ? zp : zp * x[static_cast<std::size_t>(covariate)];
  }
  double covariate_factor(Covariates x) const {
    return covariate < 0 ? 1.0 : x[static_cast<std::size_t>(covariate)];
  }
  std::string name() const {
    std::string s = z_power == 1 ? "z" : "z^" + std::to_string(z_power);
    if (covariate >= 0) s += "*x" + std::to_string(covariate + 1);
    return s;
  }

  /// Parses "z", "z^2", "z*x1", "z^2*x3".
  static ShadowTerm parse(std::string_view s) {
    ShadowTerm t;
    const auto star = s.find('*');
    t.z_power = detail::parse_power(s.substr(0, star), 'z', s);
    if (t.z_power == 0) throw ConfigError("G term '" + std::string(s) + "' must contain a positive power of z");
    if (star != std::string_view::npos) t.covariate = detail::parse_covariate_index(s.substr(star + 1), s);
    return t;
  }
};

/// User-chosen functions driving the estimating equations. H(x) is the
/// propensity regressor vector (1, d(x)^T) and always contains the constant.
struct MomentBasisSpec {
  std::vector<ShadowTerm> G;
  ScalarFeature g;
  ScalarFeature q = ScalarFeature::constant(1.0);

  /// G mirrors the odds-ratio basis with z in place of y.
  static MomentBasisSpec mirror(const OddsRatioSpec& odds, std::size_t p) {
    MomentBasisSpec m;
    for (const auto& t : odds.basis) m.G.push_back({t.y_power, t.covariate});
    m.g = ExtendedWeightSpec::default_spec(p).g;
    return m;
  }

  void validate(const OddsRatioSpec& odds, std::size_t p) const {
    if (G.size() != odds.size()) throw ConfigError("dim(G) must equal dim(gamma)");
    for (const auto& t : G) {
      if (t.z_power < 1) throw ConfigError("G terms must involve z");
      if (t.covariate >= static_cast<int>(p)) throw ConfigError("G term refers to a missing covariate");
    }
  }
};

/// Fitted parameters of the three working models.
struct WorkingFits {
  BaselineOutcomeSpec beta;
  BaselinePropensitySpec alpha;
  OddsRatioSpec gamma;
};

// ---------------------------------------------------------------------------
// Baseline outcome model: complete-case maximum likelihood

/// Mean complete-case score E^{r S(z, y, x; beta)} in the order
/// (beta_y, sigma_y^2, beta_zy, beta_zx, sigma_z^2).
inline Vector outcome_score(const Dataset& data, const BaselineOutcomeSpec& beta) {
  const Design design = beta.design.size() + 1 == static_cast<std::size_t>(beta.beta_y.size())
                            ? beta.design
                            : Design::linear(data.dim());
  const auto k = static_cast<Eigen::Index>(design.size());
  Vector s = Vector::Zero(2 * k + 5);
  const double vy = beta.sigma_y * beta.sigma_y;
  const double vz = beta.sigma_z * beta.sigma_z;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.observed(i)) continue;
    const auto x = data.x(i);
    const double y = data.y(i);
    const double ey = y - beta.mean_y(x);
    const double ez = data.z(i) - beta.mean_z(y, x);
    s[0] += ey / vy;
    s[k + 1] += -0.5 / vy + 0.5 * ey * ey / (vy * vy);
    s[k + 2] += ez / vz * y;
    s[k + 3] += ez / vz;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double f = design.features[static_cast<std::size_t>(j)].value(x);
      s[1 + j] += ey / vy * f;
      s[k + 4 + j] += ez / vz * f;
    }
    s[2 * k + 4] += -0.5 / vz + 0.5 * ez * ez / (vz * vz);
  }
  return s / static_cast<double>(data.size());
}

/// Solves the complete-case score equation. For the Gaussian factorization
/// this is least squares of y on (1, d(x)) and of z on (y, 1, d(x)) with
/// maximum likelihood variances.
inline BaselineOutcomeSpec fit_beta(const Dataset& data, const Design& design) {
  design.validate(data.dim());
  const std::size_t k = design.size();
  const std::size_t ncc = data.complete_cases();
  if (ncc < k + 3) {
    throw SampleSizeError("need at least " + std::to_string(k + 3) + " complete cases, have " +
                          std::to_string(ncc));
  }
  const auto m = static_cast<Eigen::Index>(ncc);
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd dy(m, kk + 1), dz(m, kk + 2);
  Vector yv(m), zv(m);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.observed(i)) continue;
    const auto x = data.x(i);
    dy(row, 0) = 1.0;
    dz(row, 0) = data.y(i);
    dz(row, 1) = 1.0;
    for (Eigen::Index j = 0; j < kk; ++j) {
      const double f = design.features[static_cast<std::size_t>(j)].value(x);
      dy(row, 1 + j) = f;
      dz(row, 2 + j) = f;
    }
    yv[row] = data.y(i);
    zv[row] = data.z(i);
    ++row;
  }
  const auto fy = regression::least_squares(dy, yv);
  const auto fz = regression::least_squares(dz, zv);
  const double vy = fy.rss / static_cast<double>(m);
  const double vz = fz.rss / static_cast<double>(m);
  const double scale_y = std::max(1.0, yv.squaredNorm() / static_cast<double>(m));
  const double scale_z = std::max(1.0, zv.squaredNorm() / static_cast<double>(m));
  if (!(vy > 1e-14 * scale_y)) throw SingularDesignError("complete-case outcome has zero residual variance");
  if (!(vz > 1e-14 * scale_z)) throw SingularDesignError("complete-case shadow variable has zero residual variance");
  BaselineOutcomeSpec beta;
  beta.beta_y = fy.coef;
  beta.sigma_y = std::sqrt(vy);
  beta.beta_zy = fz.coef[0];
  beta.beta_zx = fz.coef.tail(kk + 1);
  beta.sigma_z = std::sqrt(vz);
  beta.design = design;
  return beta;
}

inline BaselineOutcomeSpec fit_beta(const Dataset& data) { return fit_beta(data, Design::linear(data.dim())); }

// ---------------------------------------------------------------------------
// Joint (alpha, gamma) system

namespace detail {

inline OddsRatioSpec with_gamma(const OddsRatioSpec& shape, const Vector& gamma) {
  OddsRatioSpec s = shape;
  s.gamma = gamma;
  return s;
}

// E[G_k(x, z) | r = 0, x]
inline double tilted_G(const ShadowTerm& t, Covariates x, const BaselineOutcomeSpec& beta,
                       const OddsRatioSpec& gamma) {
  return t.covariate_factor(x) * tilted_mean_z_power(t.z_power, x, beta, gamma);
}

}  // namespace detail

/// Empirical moments E^[{W r - 1} (G1^T, H^T)^T] at theta = (alpha, gamma),
/// with H(x) = (1, d(x)^T) for the propensity design d. G1 is re-tilted at
/// the gamma being evaluated.
inline Vector alpha_gamma_moments(const Dataset& data, const BaselineOutcomeSpec& beta,
                                  const MomentBasisSpec& basis, const OddsRatioSpec& odds_shape,
                                  const Vector& theta, const Design& propensity) {
  const std::size_t nf = propensity.size();
  const auto na = static_cast<Eigen::Index>(nf + 1);
  const auto ng = static_cast<Eigen::Index>(odds_shape.size());
  BaselinePropensitySpec alpha{theta.head(na), propensity};
  const OddsRatioSpec gamma = detail::with_gamma(odds_shape, theta.tail(ng));
  Vector out = Vector::Zero(ng + na);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.x(i);
    const double resid = data.observed(i) ? weight(x, data.y(i), alpha, gamma) - 1.0 : -1.0;
    for (Eigen::Index k = 0; k < ng; ++k) {
      const auto& t = basis.G[static_cast<std::size_t>(k)];
      out[k] += resid * (t.value(data.z(i), x) - detail::tilted_G(t, x, beta, gamma));
    }
    out[ng] += resid;
    for (std::size_t j = 0; j < nf; ++j) {
      out[ng + 1 + static_cast<Eigen::Index>(j)] += resid * propensity.features[j].value(x);
    }
  }
  return out / static_cast<double>(data.size());
}

inline Vector alpha_gamma_moments(const Dataset& data, const BaselineOutcomeSpec& beta,
                                  const MomentBasisSpec& basis, const OddsRatioSpec& odds_shape,
                                  const Vector& theta) {
  return alpha_gamma_moments(data, beta, basis, odds_shape, theta, Design::linear(data.dim()));
}

namespace detail {

// Per-row quantities of the (alpha, gamma) system that do not depend on
// theta. Valid when the odds ratio is linear in y and every G term is linear
// in z, so that E[G_k | r=0, x] = f_k(x) {beta_zy (m(x) + s(x; gamma) sigma_y^2) + zx(x)}.
class AlphaGammaCache {
 public:
  static bool applicable(const MomentBasisSpec& basis, const OddsRatioSpec& odds) {
    if (!odds.linear_in_y()) return false;
    for (const auto& t : basis.G) {
      if (t.z_power != 1) return false;
    }
    return true;
  }

  AlphaGammaCache(const Dataset& data, const BaselineOutcomeSpec& beta, const MomentBasisSpec& basis,
                  const OddsRatioSpec& odds, const Design& propensity)
      : n_(static_cast<Eigen::Index>(data.size())),
        na_(static_cast<Eigen::Index>(propensity.size() + 1)),
        ng_(static_cast<Eigen::Index>(odds.size())),
        vy_(beta.sigma_y * beta.sigma_y),
        bzy_(beta.beta_zy),
        h_(n_, na_),
        or_basis_(n_, ng_),
        or_factor_(n_, ng_),
        g_obs_(n_, ng_),
        g_factor_(n_, ng_),
        m_(n_),
        zx_(n_),
        observed_(data.size()) {
    BaselineOutcomeSpec tz = beta;
    tz.beta_zy = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto x = data.x(i);
      observed_[i] = data.observed(i);
      h_(ii, 0) = 1.0;
      for (std::size_t j = 0; j < propensity.size(); ++j) {
        h_(ii, static_cast<Eigen::Index>(j + 1)) = propensity.features[j].value(x);
      }
      for (Eigen::Index k = 0; k < ng_; ++k) {
        const auto& t = odds.basis[static_cast<std::size_t>(k)];
        or_factor_(ii, k) = t.covariate < 0 ? 1.0 : x[static_cast<std::size_t>(t.covariate)];
        or_basis_(ii, k) = observed_[i] ? t.value(data.y(i), x) : 0.0;
        const auto& g = basis.G[static_cast<std::size_t>(k)];
        g_obs_(ii, k) = g.value(data.z(i), x);
        g_factor_(ii, k) = g.covariate_factor(x);
      }
      m_[ii] = beta.mean_y(x);
      zx_[ii] = tz.mean_z(0.0, x);
    }
  }

  Vector moments(const Vector& theta) const {
    const Vector alpha = theta.head(na_);
    const Vector gamma = theta.tail(ng_);
    const Vector lp = h_ * alpha;
    const Vector orv = or_basis_ * gamma;
    const Vector slope = or_factor_ * gamma;
    Vector out = Vector::Zero(ng_ + na_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double resid =
          observed_[static_cast<std::size_t>(i)] ? std::exp(std::min(orv[i] - lp[i], 700.0)) : -1.0;
      const double tz = bzy_ * (m_[i] + slope[i] * vy_) + zx_[i];
      for (Eigen::Index k = 0; k < ng_; ++k) out[k] += resid * (g_obs_(i, k) - g_factor_(i, k) * tz);
      out.tail(na_) += resid * h_.row(i).transpose();
    }
    return out / static_cast<double>(n_);
  }

 private:
  Eigen::Index n_, na_, ng_;
  double vy_, bzy_;
  Eigen::MatrixXd h_, or_basis_, or_factor_, g_obs_, g_factor_;
  Vector m_, zx_;
  std::vector<bool> observed_;
};

}  // namespace detail

struct AlphaGammaFit {
  BaselinePropensitySpec alpha;
  OddsRatioSpec gamma;
  FitResult fit;
  std::vector<std::string> warnings;
};

struct AlphaGammaOptions {
  /// Additional starting points (gamma = +-0.5, +-1, ...) used only to warn
  /// about disagreeing roots.
  int extra_starts = 0;
};

/// Solves the (alpha, gamma) moment system from the MAR start: alpha from a
/// logistic regression of r on d(x), gamma = 0.
inline AlphaGammaFit fit_alpha_gamma(const Dataset& data, const BaselineOutcomeSpec& beta,
                                     const MomentBasisSpec& basis, const OddsRatioSpec& odds_shape,
                                     const SolverConfig& cfg, const AlphaGammaOptions& opts,
                                     const Design& propensity) {
  const std::size_t p = data.dim();
  odds_shape.validate(p);
  basis.validate(odds_shape, p);
  propensity.validate(p);
  if (data.incomplete_cases() == 0) {
    throw DegenerateWeightsError("no incomplete cases: weights are degenerate and (alpha, gamma) inestimable");
  }
  const auto na = static_cast<Eigen::Index>(propensity.size() + 1);
  const auto ng = static_cast<Eigen::Index>(odds_shape.size());
  std::optional<detail::AlphaGammaCache> cache;
  if (detail::AlphaGammaCache::applicable(basis, odds_shape)) {
    cache.emplace(data, beta, basis, odds_shape, propensity);
  }
  MomentFunction f = [&](const Vector& theta) {
    if (cache) return cache->moments(theta);
    return alpha_gamma_moments(data, beta, basis, odds_shape, theta, propensity);
  };
  Vector start(na + ng);
  start.head(na) = regression::logistic_fit(data, propensity);
  start.tail(ng).setZero();
  FitResult fit = solve_moments(f, start, cfg);
  if (!fit.converged) {
    std::ostringstream os;
    os << "(alpha, gamma) solver did not converge: max-abs moment " << fit.final_moment_norm << " after "
       << fit.iterations << " iterations";
    throw SolverError(os.str(), "solver_nonconvergence", fit.final_moment_norm, fit.path);
  }
  AlphaGammaFit out{BaselinePropensitySpec{fit.theta_hat.head(na), propensity},
                    detail::with_gamma(odds_shape, fit.theta_hat.tail(ng)), fit, {}};
  for (int s = 0; s < opts.extra_starts; ++s) {
    Vector alt = start;
    const double g0 = 0.5 * (1 + s / 2) * (s % 2 == 0 ? 1.0 : -1.0);
    alt.tail(ng).setConstant(g0);
    try {
      const FitResult other = solve_moments(f, alt, cfg);
      if (other.converged && (other.theta_hat - fit.theta_hat).cwiseAbs().maxCoeff() > 1e-6) {
        std::ostringstream os;
        os << "start with gamma = " << g0 << " reached a different root";
        out.warnings.push_back(os.str());
      }
    } catch (const SolverError&) {
      // A failed alternative start says nothing about uniqueness.
    }
  }
  return out;
}

inline AlphaGammaFit fit_alpha_gamma(const Dataset& data, const BaselineOutcomeSpec& beta,
                                     const MomentBasisSpec& basis, const OddsRatioSpec& odds_shape,
                                     const SolverConfig& cfg, const AlphaGammaOptions& opts = {}) {
  return fit_alpha_gamma(data, beta, basis, odds_shape, cfg, opts, Design::linear(data.dim()));
}

// ---------------------------------------------------------------------------
// Per-row quantities shared by the extension equations and the estimators

struct FittedValues {
  Vector m0;       // M0(x_i; beta, gamma), all rows
  Vector log_odds; // OR(y_i | x_i) - (1, d(x_i)^T) alpha for complete cases, NaN otherwise
};

inline FittedValues fitted_values(const Dataset& data, const WorkingFits& fits) {
  const auto n = static_cast<Eigen::Index>(data.size());
  FittedValues fv{Vector(n), Vector::Constant(n, std::numeric_limits<double>::quiet_NaN())};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.x(i);
    const auto ii = static_cast<Eigen::Index>(i);
    fv.m0[ii] = tilted_mean_y(x, fits.beta, fits.gamma);
    if (data.observed(i)) {
      fv.log_odds[ii] = odds_ratio(data.y(i), x, fits.gamma) - fits.alpha.linear_predictor(x);
    }
  }
  return fv;
}

/// mu_reg = E^{(1 - r) M0 + r y}.
inline double regression_mean(const Dataset& data, const FittedValues& fv) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    acc += data.observed(i) ? data.y(i) : fv.m0[static_cast<Eigen::Index>(i)];
  }
  return acc / static_cast<double>(data.size());
}

/// E^[{W_ext(phi) r - 1}{M0 - mu_reg}] with g evaluated per row in `gv`.
inline double phi_moment(const Dataset& data, const FittedValues& fv, std::span<const double> gv, double mu_reg,
                         double phi) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double resid = -1.0;
    if (data.observed(i)) {
      const double shift = phi == 0.0 ? 0.0 : phi * gv[i];
      resid = std::exp(std::min(fv.log_odds[ii] + shift, 700.0));
    }
    acc += resid * (fv.m0[ii] - mu_reg);
  }
  return acc / static_cast<double>(data.size());
}

inline double phi_moment(const Dataset& data, const FittedValues& fv, const ScalarFeature& g, double mu_reg,
                         double phi) {
  std::vector<double> gv(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) gv[i] = g(data.x(i));
  return phi_moment(data, fv, gv, mu_reg, phi);
}

struct PhiFit {
  ExtendedWeightSpec ext;
  FitResult fit;
};

/// Scalar root of the phi equation nearest 0, bracketed by expanding search
/// out to [-10, 10].
inline PhiFit fit_phi(const Dataset& data, const WorkingFits& fits, double mu_reg, const MomentBasisSpec& basis,
                      const SolverConfig& cfg) {
  if (data.incomplete_cases() == 0) throw DegenerateWeightsError("no incomplete cases: phi is inestimable");
  const FittedValues fv = fitted_values(data, fits);
  std::vector<double> gv(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) gv[i] = basis.g(data.x(i));
  auto f = [&](double phi) { return phi_moment(data, fv, gv, mu_reg, phi); };
  FitResult fit = solve_scalar(f, 0.0, cfg, 0.25, 10.0);
  if (!fit.converged) {
    std::ostringstream os;
    os << "phi solver did not converge: |moment| " << fit.final_moment_norm;
    throw SolverError(os.str(), "solver_nonconvergence", fit.final_moment_norm, fit.path);
  }
  return {ExtendedWeightSpec{fit.theta_hat[0], basis.g}, fit};
}

/// E^[{W - 1} r {y - M0 - psi q}].
inline double psi_moment(const Dataset& data, const FittedValues& fv, const ScalarFeature& q, double psi) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.observed(i)) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    const double wm1 = std::exp(std::min(fv.log_odds[ii], 700.0));
    acc += wm1 * (data.y(i) - fv.m0[ii] - psi * q(data.x(i)));
  }
  return acc / static_cast<double>(data.size());
}

struct PsiFit {
  ExtendedOutcomeSpec ext;
  FitResult fit;
};

/// Identity-link extension makes the psi equation linear:
/// psi = E^[(W-1) r (y - M0)] / E^[(W-1) r q].
inline PsiFit fit_psi(const Dataset& data, const WorkingFits& fits, const MomentBasisSpec& basis,
                      const SolverConfig& cfg) {
  if (data.incomplete_cases() == 0) throw DegenerateWeightsError("no incomplete cases: psi is inestimable");
  const FittedValues fv = fitted_values(data, fits);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.observed(i)) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    const double wm1 = std::exp(std::min(fv.log_odds[ii], 700.0));
    num += wm1 * (data.y(i) - fv.m0[ii]);
    den += wm1 * basis.q(data.x(i));
  }
  const double n = static_cast<double>(data.size());
  if (!(std::abs(den / n) >= 1e-12)) {
    throw SolverError("psi equation is degenerate: E^[(W-1) r q] is numerically zero", "degenerate_extension");
  }
  FitResult fit;
  fit.theta_hat = Vector::Constant(1, num / den);
  fit.final_moment_norm = std::abs(psi_moment(data, fv, basis.q, fit.theta_hat[0]));
  fit.converged = fit.final_moment_norm <= cfg.tol;
  fit.path.push_back({fit.theta_hat[0]});
  if (!fit.converged) {
    throw SolverError("psi closed form failed the moment tolerance", "solver_nonconvergence",
                      fit.final_moment_norm, fit.path);
  }
  return {ExtendedOutcomeSpec{fit.theta_hat[0], basis.q}, fit};
}


// ---------------------------------------------------------------------------
// Population moment checks

/// Test functions D(z, x): 1, x_j, z, z^2 and x_j z.
inline std::vector<ShadowTerm> moment_test_functions(std::size_t p) {
  std::vector<ShadowTerm> d{{0, -1}};
  for (std::size_t j = 0; j < p; ++j) d.push_back({0, static_cast<int>(j)});
  d.push_back({1, -1});
  d.push_back({2, -1});
  for (std::size_t j = 0; j < p; ++j) d.push_back({1, static_cast<int>(j)});
  return d;
}

inline std::string test_function_name(const ShadowTerm& t) {
  if (t.z_power == 0) return t.covariate < 0 ? "1" : "x" + std::to_string(t.covariate + 1);
  return t.name();
}

/// Sample mean of per-row contributions and its Monte Carlo standard error
/// (row standard deviation over sqrt(n), fitted parameters held fixed).
struct MomentCheck {
  std::string label;
  double mean = 0.0;
  double se = 0.0;

  bool within(double k) const { return std::abs(mean) <= k * se; }
};

namespace detail {

inline MomentCheck summarize_rows(std::string label, const std::vector<double>& v) {
  MomentCheck c;
  c.label = std::move(label);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (v[i] - mean);
  }
  c.mean = mean;
  const double n = static_cast<double>(v.size());
  c.se = v.size() > 1 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0;
  return c;
}

// Rows x test functions of D(z_i, x_i) and E(D | r = 0, x_i).
struct TestFunctionValues {
  std::vector<ShadowTerm> terms;
  std::vector<std::vector<double>> value, tilted;
};

inline TestFunctionValues test_function_values(const Dataset& data, const WorkingFits& fits, bool need_tilted) {
  TestFunctionValues out;
  out.terms = moment_test_functions(data.dim());
  out.value.assign(out.terms.size(), std::vector<double>(data.size()));
  if (need_tilted) out.tilted.assign(out.terms.size(), std::vector<double>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.x(i);
    double ez[3] = {1.0, 0.0, 0.0};
    if (need_tilted) {
      ez[1] = tilted_mean_z_power(1, x, fits.beta, fits.gamma);
      ez[2] = tilted_mean_z_power(2, x, fits.beta, fits.gamma);
    }
    for (std::size_t k = 0; k < out.terms.size(); ++k) {
      const auto& t = out.terms[k];
      out.value[k][i] = t.z_power == 0 ? t.covariate_factor(x) : t.value(data.z(i), x);
      if (need_tilted) out.tilted[k][i] = t.covariate_factor(x) * ez[t.z_power];
    }
  }
  return out;
}

}  // namespace detail

/// E^[{W r - 1} D]. Vanishes in the limit when the baseline propensity and
/// odds ratio models are correct.
inline std::vector<MomentCheck> weighted_moment_battery(const Dataset& data, const WorkingFits& fits) {
  const auto tv = detail::test_function_values(data, fits, false);
  std::vector<double> resid(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    resid[i] = data.observed(i) ? weight(data.x(i), data.y(i), fits.alpha, fits.gamma) - 1.0 : -1.0;
  }
  std::vector<MomentCheck> out;
  std::vector<double> rows(data.size());
  for (std::size_t k = 0; k < tv.terms.size(); ++k) {
    for (std::size_t i = 0; i < data.size(); ++i) rows[i] = resid[i] * tv.value[k][i];
    out.push_back(detail::summarize_rows(test_function_name(tv.terms[k]), rows));
  }
  return out;
}

/// E^[r e^OR V {D - E(D | r = 0, x)}] for V in {1, x1}. Vanishes in the limit
/// when the baseline outcome and odds ratio models are correct.
inline std::vector<MomentCheck> tilted_residual_battery(const Dataset& data, const WorkingFits& fits) {
  const auto tv = detail::test_function_values(data, fits, true);
  std::vector<double> tilt(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.observed(i)) tilt[i] = std::exp(odds_ratio(data.y(i), data.x(i), fits.gamma));
  }
  std::vector<MomentCheck> out;
  std::vector<double> rows(data.size());
  for (int v = -1; v < (data.dim() > 0 ? 1 : 0); ++v) {
    for (std::size_t k = 0; k < tv.terms.size(); ++k) {
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double vx = v < 0 ? 1.0 : data.x(i)[0];
        rows[i] = tilt[i] * vx * (tv.value[k][i] - tv.tilted[k][i]);
      }
      out.push_back(detail::summarize_rows((v < 0 ? "" : "x1*") + test_function_name(tv.terms[k]), rows));
    }
  }
  return out;
}

/// E^[{W r - 1}{D - E(D | r = 0, x)}]. Vanishes in the limit when either
/// baseline model is correct, given a correct odds ratio model.
inline std::vector<MomentCheck> augmented_moment_battery(const Dataset& data, const WorkingFits& fits) {
  const auto tv = detail::test_function_values(data, fits, true);
  std::vector<double> resid(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    resid[i] = data.observed(i) ? weight(data.x(i), data.y(i), fits.alpha, fits.gamma) - 1.0 : -1.0;
  }
  std::vector<MomentCheck> out;
  std::vector<double> rows(data.size());
  for (std::size_t k = 0; k < tv.terms.size(); ++k) {
    for (std::size_t i = 0; i < data.size(); ++i) rows[i] = resid[i] * (tv.value[k][i] - tv.tilted[k][i]);
    out.push_back(detail::summarize_rows(test_function_name(tv.terms[k]), rows));
  }
  return out;
}

}  // namespace shadowdr
