#pragma once

// Working-model parameterizations: baseline propensity, baseline outcome
// density, log odds ratio, their one-parameter extensions, and the tilted
// conditional expectations among incomplete cases.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shadowdr/dataset.hpp"
#include "shadowdr/errors.hpp"
#include "shadowdr/quadrature.hpp"

namespace shadowdr {

// ---------------------------------------------------------------------------
// Scalar helpers

inline double expit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// log(1 + e^t) without overflow.
inline double log1pexp(double t) {
  if (t > 35.0) return t;
  if (t < -35.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string("non-finite ") + what);
}

inline void require_finite(Covariates x) {
  for (double v : x) require_finite(v, "covariate");
}

// Keeps probabilities off the closed interval endpoints.
inline double clamp_open_unit(double p) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(p, lo, hi);
}

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline int parse_covariate_index(std::string_view s, std::string_view whole) {
  // s is "xN" with N >= 1
  if (s.size() < 2 || s[0] != 'x') throw ConfigError("unrecognized term '" + std::string(whole) + "'");
  int j = 0;
  auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), j);
  if (ec != std::errc() || ptr != s.data() + s.size() || j < 1) {
    throw ConfigError("unrecognized covariate in '" + std::string(whole) + "'");
  }
  return j - 1;
}

inline int parse_power(std::string_view s, char var, std::string_view whole) {
  // "v" or "v^k"
  if (s.empty() || s[0] != var) return 0;
  if (s.size() == 1) return 1;
  if (s[1] != '^') throw ConfigError("unrecognized term '" + std::string(whole) + "'");
  int k = 0;
  auto [ptr, ec] = std::from_chars(s.data() + 2, s.data() + s.size(), k);
  if (ec != std::errc() || ptr != s.data() + s.size() || k < 1) {
    throw ConfigError("bad power in '" + std::string(whole) + "'");
  }
  return k;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Covariate features g(x), q(x)

/// A named scalar function of the covariates.
class ScalarFeature {
 public:
  using Fn = std::function<double(Covariates)>;

  ScalarFeature() : ScalarFeature(constant(1.0)) {}
  ScalarFeature(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  static ScalarFeature constant(double c) {
    std::ostringstream os;
    os << c;
    return {os.str(), [c](Covariates) { return c; }};
  }

  /// Zero-based covariate index; named x1, x2, ...
  static ScalarFeature covariate(std::size_t j) {
    return {"x" + std::to_string(j + 1), [j](Covariates x) { return x[j]; }};
  }

  /// Accepts "1" (or any numeric constant), "xj", or "xj^2".
  static ScalarFeature parse(std::string_view spec, std::size_t p) {
    double c = 0.0;
    auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), c);
    if (ec == std::errc() && ptr == spec.data() + spec.size()) return constant(c);
    const auto caret = spec.find('^');
    const int j = detail::parse_covariate_index(spec.substr(0, caret), spec);
    if (static_cast<std::size_t>(j) >= p) {
      throw ConfigError("feature '" + std::string(spec) + "' refers to a missing covariate");
    }
    if (caret == std::string_view::npos) return covariate(static_cast<std::size_t>(j));
    if (spec.substr(caret) != "^2") throw ConfigError("only squares are supported: " + std::string(spec));
    const auto jj = static_cast<std::size_t>(j);
    return {std::string(spec), [jj](Covariates x) { return x[jj] * x[jj]; }};
  }

  double operator()(Covariates x) const { return fn_(x); }
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
  Fn fn_;
};

// ---------------------------------------------------------------------------
// Regression designs

/// x_j^power for a zero-based covariate index.
struct Feature {
  std::size_t covariate = 0;
  int power = 1;

  double value(Covariates x) const {
    const double v = x[covariate];
    return power == 1 ? v : power == 2 ? v * v : std::pow(v, power);
  }
  std::string name() const {
    std::string s = "x" + std::to_string(covariate + 1);
    return power == 1 ? s : s + "^" + std::to_string(power);
  }

  /// "x2" or "x1^2".
  static Feature parse(std::string_view s, std::size_t p) {
    const auto caret = s.find('^');
    Feature f;
    const int j = detail::parse_covariate_index(s.substr(0, caret), s);
    if (static_cast<std::size_t>(j) >= p) throw ConfigError("feature '" + std::string(s) + "' refers to a missing covariate");
    f.covariate = static_cast<std::size_t>(j);
    if (caret != std::string_view::npos) {
      std::string_view tail = s.substr(caret + 1);
      auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), f.power);
      if (ec != std::errc() || ptr != tail.data() + tail.size() || f.power < 1) {
        throw ConfigError("bad power in feature '" + std::string(s) + "'");
      }
    }
    return f;
  }

  friend bool operator==(const Feature&, const Feature&) = default;
};

/// Regressors of a working model; the intercept is implicit.
struct Design {
  std::vector<Feature> features;

  /// x1, ..., xp.
  static Design linear(std::size_t p) {
    Design d;
    for (std::size_t j = 0; j < p; ++j) d.features.push_back({j, 1});
    return d;
  }

  Design with(Feature f) const {
    Design d = *this;
    d.features.push_back(f);
    return d;
  }

  std::size_t size() const noexcept { return features.size(); }

  /// coef[0] + sum_k coef[k+1] f_k(x)
  double affine(const Vector& coef, Covariates x) const {
    double v = coef[0];
    for (std::size_t k = 0; k < features.size(); ++k) {
      v += coef[static_cast<Eigen::Index>(k + 1)] * features[k].value(x);
    }
    return v;
  }

  void validate(std::size_t p) const {
    for (const auto& f : features) {
      if (f.covariate >= p) throw ConfigError("design feature " + f.name() + " refers to a missing covariate");
      if (f.power < 1) throw ConfigError("design feature powers must be positive");
    }
  }

  std::string describe() const {
    std::string s = "1";
    for (const auto& f : features) s += ", " + f.name();
    return s;
  }

  friend bool operator==(const Design&, const Design&) = default;
};

// ---------------------------------------------------------------------------
// Log odds ratio OR(y | x; gamma)

/// y^power, optionally times one covariate. Every term vanishes at y = 0.
struct OddsRatioTerm {
  int y_power = 1;
  int covariate = -1;  // zero-based; -1 for none

  double value(double y, Covariates x) const {
    const double yp = y_power == 1 ? y : std::pow(y, y_power);
    return covariate < 0 ? yp : yp * x[static_cast<std::size_t>(covariate)];
  }

  std::string name() const {
    std::string s = y_power == 1 ? "y" : "y^" + std::to_string(y_power);
    if (covariate >= 0) s += "*x" + std::to_string(covariate + 1);
    return s;
  }

  /// Parses "y", "y^2", "y*x1", "y^2*x3". Terms involving z are rejected.
  static OddsRatioTerm parse(std::string_view s) {
    if (s.find('z') != std::string_view::npos) {
      throw ConfigError("odds-ratio term '" + std::string(s) +
                        "' depends on the shadow variable, which is not allowed");
    }
    OddsRatioTerm t;
    const auto star = s.find('*');
    t.y_power = detail::parse_power(s.substr(0, star), 'y', s);
    if (t.y_power == 0) {
      throw ConfigError("odds-ratio term '" + std::string(s) + "' must contain a positive power of y");
    }
    if (star != std::string_view::npos) t.covariate = detail::parse_covariate_index(s.substr(star + 1), s);
    return t;
  }

  friend bool operator==(const OddsRatioTerm&, const OddsRatioTerm&) = default;
};

struct OddsRatioSpec {
  Vector gamma;
  std::vector<OddsRatioTerm> basis;

  /// Basis {y} with scalar coefficient.
  static OddsRatioSpec default_spec(double gamma = 0.0) {
    OddsRatioSpec s;
    s.gamma = Vector::Constant(1, gamma);
    s.basis = {OddsRatioTerm{}};
    return s;
  }

  std::size_t size() const noexcept { return basis.size(); }

  /// True when OR(y|x) = s(x) * y, so tilting a Gaussian is a mean shift.
  bool linear_in_y() const noexcept {
    return std::all_of(basis.begin(), basis.end(), [](const auto& t) { return t.y_power == 1; });
  }

  /// Coefficient s(x) in OR = s(x) y; meaningful only when linear_in_y().
  double slope(Covariates x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) {
      const auto& t = basis[k];
      s += gamma[static_cast<Eigen::Index>(k)] *
           (t.covariate < 0 ? 1.0 : x[static_cast<std::size_t>(t.covariate)]);
    }
    return s;
  }

  void validate(std::size_t p) const {
    if (basis.empty()) throw ConfigError("odds-ratio basis is empty");
    if (static_cast<std::size_t>(gamma.size()) != basis.size()) {
      throw ConfigError("odds-ratio coefficient count does not match basis");
    }
    for (const auto& t : basis) {
      if (t.y_power < 1) throw ConfigError("odds-ratio term without y");
      if (t.covariate >= static_cast<int>(p)) throw ConfigError("odds-ratio term refers to a missing covariate");
    }
  }
};

inline double odds_ratio(double y, Covariates x, const OddsRatioSpec& spec) {
  detail::require_finite(y, "outcome");
  detail::require_finite(x);
  if (y == 0.0) return 0.0;
  double v = 0.0;
  for (std::size_t k = 0; k < spec.basis.size(); ++k) {
    v += spec.gamma[static_cast<Eigen::Index>(k)] * spec.basis[k].value(y, x);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Baseline propensity pr(r = 1 | y = 0, x; alpha) and the inverse weight

/// Logistic on (1, d(x)^T) with coefficient vector alpha of length dim(d) + 1.
/// The default design is d(x) = x.
struct BaselinePropensitySpec {
  Vector alpha;
  Design design;

  BaselinePropensitySpec() = default;
  /// Linear design in alpha.size() - 1 covariates.
  explicit BaselinePropensitySpec(Vector a)
      : alpha(std::move(a)), design(Design::linear(static_cast<std::size_t>(alpha.size() - 1))) {}
  BaselinePropensitySpec(Vector a, Design d) : alpha(std::move(a)), design(std::move(d)) {}

  double linear_predictor(Covariates x) const { return design.affine(alpha, x); }
  double baseline(Covariates x) const { return detail::clamp_open_unit(expit(linear_predictor(x))); }
};

/// pr(r = 1 | y, x) = p0 / (p0 + e^OR (1 - p0)), evaluated as expit(logit p0 - OR).
inline double propensity(Covariates x, double y, const BaselinePropensitySpec& alpha,
                         const OddsRatioSpec& gamma) {
  const double t = alpha.linear_predictor(x) - odds_ratio(y, x, gamma);
  return detail::clamp_open_unit(expit(t));
}

/// log W = log(1 + exp{OR - (1, x^T) alpha}).
inline double log_weight(Covariates x, double y, const BaselinePropensitySpec& alpha,
                         const OddsRatioSpec& gamma) {
  return log1pexp(odds_ratio(y, x, gamma) - alpha.linear_predictor(x));
}

inline double weight(Covariates x, double y, const BaselinePropensitySpec& alpha,
                     const OddsRatioSpec& gamma) {
  const double t = odds_ratio(y, x, gamma) - alpha.linear_predictor(x);
  return 1.0 + std::exp(std::min(t, 700.0));
}

/// Baseline propensity enlarged by phi * g(x); phi = 0 is the unextended model.
struct ExtendedWeightSpec {
  double phi = 0.0;
  ScalarFeature g;

  /// g(x) = x1, or the constant 1 when there are no covariates.
  static ExtendedWeightSpec default_spec(std::size_t p, double phi = 0.0) {
    return {phi, p == 0 ? ScalarFeature::constant(1.0) : ScalarFeature::covariate(0)};
  }
};

namespace detail {
// logit of the extended propensity at (x, y)
inline double extended_logit(Covariates x, double y, const ExtendedWeightSpec& ext,
                             const BaselinePropensitySpec& alpha, const OddsRatioSpec& gamma) {
  const double shift = ext.phi == 0.0 ? 0.0 : ext.phi * ext.g(x);
  return alpha.linear_predictor(x) - shift - odds_ratio(y, x, gamma);
}
}  // namespace detail

inline double extended_propensity(Covariates x, double y, const ExtendedWeightSpec& ext,
                                  const BaselinePropensitySpec& alpha, const OddsRatioSpec& gamma) {
  detail::require_finite(ext.phi, "phi");
  return detail::clamp_open_unit(expit(detail::extended_logit(x, y, ext, alpha, gamma)));
}

inline double extended_log_weight(Covariates x, double y, const ExtendedWeightSpec& ext,
                                  const BaselinePropensitySpec& alpha, const OddsRatioSpec& gamma) {
  detail::require_finite(ext.phi, "phi");
  return log1pexp(-detail::extended_logit(x, y, ext, alpha, gamma));
}

inline double extended_weight(Covariates x, double y, const ExtendedWeightSpec& ext,
                              const BaselinePropensitySpec& alpha, const OddsRatioSpec& gamma) {
  detail::require_finite(ext.phi, "phi");
  return 1.0 + std::exp(std::min(-detail::extended_logit(x, y, ext, alpha, gamma), 700.0));
}

// ---------------------------------------------------------------------------
// Baseline outcome density f(z, y | r = 1, x; beta)

/// y | r=1, x ~ N((1,d(x)^T) beta_y, sigma_y^2);
/// z | y, r=1, x ~ N(beta_zy y + (1,d(x)^T) beta_zx, sigma_z^2).
/// An empty design with p covariates is read as d(x) = x.
struct BaselineOutcomeSpec {
  Vector beta_y;
  double sigma_y = 1.0;
  double beta_zy = 0.0;
  Vector beta_zx;
  double sigma_z = 1.0;
  Design design;

  double mean_y(Covariates x) const { return design_for(x).affine(beta_y, x); }
  double mean_z(double y, Covariates x) const { return beta_zy * y + design_for(x).affine(beta_zx, x); }

  double log_density(double z, double y, Covariates x) const {
    constexpr double half_log_2pi = 0.91893853320467274178;
    const double ey = (y - mean_y(x)) / sigma_y;
    const double ez = (z - mean_z(y, x)) / sigma_z;
    return -2.0 * half_log_2pi - std::log(sigma_y) - std::log(sigma_z) - 0.5 * (ey * ey + ez * ez);
  }

  void validate(std::size_t p) const {
    design.validate(p);
    const auto k = static_cast<Eigen::Index>(design.size() + 1);
    if (beta_y.size() != k || beta_zx.size() != k) {
      throw ConfigError("baseline outcome coefficients have the wrong length");
    }
    if (!(sigma_y > 0.0) || !(sigma_z > 0.0)) throw ConfigError("baseline outcome scales must be positive");
  }

 private:
  const Design& design_for(Covariates x) const {
    if (design.size() + 1 == static_cast<std::size_t>(beta_y.size()) || !design.features.empty()) return design;
    // Coefficients given without a design: linear in x.
    thread_local Design linear;
    if (linear.size() != x.size()) linear = Design::linear(x.size());
    return linear;
  }
};

// ---------------------------------------------------------------------------
// Tilted expectations among incomplete cases

enum class TiltMethod {
  automatic,    // closed form when OR is linear in y, quadrature otherwise
  closed_form,  // Gaussian mean shift; requires OR linear in y
  quadrature,   // Gauss-Hermite against the complete-case law weighted by e^OR
};

namespace detail {

inline bool use_closed_form(TiltMethod m, const OddsRatioSpec& gamma) {
  if (m == TiltMethod::closed_form) {
    if (!gamma.linear_in_y()) throw ConfigError("closed-form tilt requires an odds ratio linear in y");
    return true;
  }
  return m == TiltMethod::automatic && gamma.linear_in_y();
}

// Runs `eval(order)` at 32, 64 and, if needed, 128 nodes.
template <class Eval>
double adaptive_gauss_hermite(Eval&& eval, const char* what) {
  const double coarse = eval(quadrature::kBaseOrder / 2);
  const double base = eval(quadrature::kBaseOrder);
  if (quadrature::agrees(coarse, base)) return base;
  const double fine = eval(quadrature::kMaxOrder);
  if (quadrature::agrees(base, fine)) return fine;
  std::ostringstream os;
  os.precision(17);
  os << what << ": Gauss-Hermite did not converge (32 nodes: " << coarse << ", 64 nodes: " << base
     << ", 128 nodes: " << fine << ")";
  throw NumericalError(os.str());
}

// Normalized tilt weights over the outer nodes y_i = m + sqrt2 sd t_i.
inline void tilt_weights(int order, double m, double sd, Covariates x, const OddsRatioSpec& gamma,
                         std::vector<double>& ys, std::vector<double>& w) {
  const auto& rule = quadrature::gauss_hermite(order);
  const std::size_t n = rule.nodes.size();
  ys.resize(n);
  w.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = m + std::numbers::sqrt2 * sd * rule.nodes[i];
    w[i] = std::log(rule.weights[i]) + odds_ratio(ys[i], x, gamma);
  }
  const double lse = log_sum_exp(w);
  for (auto& v : w) v = std::exp(v - lse);
}

inline double log_normalizer_quadrature(int order, double m, double sd, Covariates x,
                                        const OddsRatioSpec& gamma) {
  const auto& rule = quadrature::gauss_hermite(order);
  std::vector<double> lw(rule.nodes.size());
  for (std::size_t i = 0; i < lw.size(); ++i) {
    lw[i] = std::log(rule.weights[i]) + odds_ratio(m + std::numbers::sqrt2 * sd * rule.nodes[i], x, gamma);
  }
  return log_sum_exp(lw) - 0.5 * std::log(std::numbers::pi);
}

}  // namespace detail

/// log E[e^OR | r = 1, x].
inline double log_tilted_normalizer(Covariates x, const BaselineOutcomeSpec& beta, const OddsRatioSpec& gamma,
                                    TiltMethod method = TiltMethod::automatic) {
  detail::require_finite(x);
  const double m = beta.mean_y(x);
  const double sd = beta.sigma_y;
  if (detail::use_closed_form(method, gamma)) {
    const double s = gamma.slope(x);
    return s * m + 0.5 * s * s * sd * sd;
  }
  return detail::adaptive_gauss_hermite(
      [&](int order) { return detail::log_normalizer_quadrature(order, m, sd, x, gamma); },
      "tilted normalizer");
}

inline double tilted_normalizer(Covariates x, const BaselineOutcomeSpec& beta, const OddsRatioSpec& gamma,
                                TiltMethod method = TiltMethod::automatic) {
  return std::exp(log_tilted_normalizer(x, beta, gamma, method));
}

/// M0(x; beta, gamma) = E(y | r = 0, x).
inline double tilted_mean_y(Covariates x, const BaselineOutcomeSpec& beta, const OddsRatioSpec& gamma,
                            TiltMethod method = TiltMethod::automatic) {
  detail::require_finite(x);
  const double m = beta.mean_y(x);
  const double sd = beta.sigma_y;
  if (detail::use_closed_form(method, gamma)) return m + gamma.slope(x) * sd * sd;
  std::vector<double> ys, w;
  return detail::adaptive_gauss_hermite(
      [&](int order) {
        detail::tilt_weights(order, m, sd, x, gamma, ys, w);
        double acc = 0.0;
        for (std::size_t i = 0; i < ys.size(); ++i) acc += w[i] * ys[i];
        return acc;
      },
      "tilted mean");
}

/// E[h(z, y) | r = 0, x] = E[e^OR h | r=1, x] / E[e^OR | r=1, x].
template <class H>
double tilted_mean_fn(H&& h, Covariates x, const BaselineOutcomeSpec& beta, const OddsRatioSpec& gamma,
                      TiltMethod method = TiltMethod::automatic) {
  detail::require_finite(x);
  const double m = beta.mean_y(x);
  const double sd = beta.sigma_y;
  const bool closed = detail::use_closed_form(method, gamma);
  const double shifted_mean = closed ? m + gamma.slope(x) * sd * sd : m;
  std::vector<double> ys, w;
  return detail::adaptive_gauss_hermite(
      [&](int order) {
        if (closed) {
          const auto& rule = quadrature::gauss_hermite(order);
          ys.resize(rule.nodes.size());
          w.resize(rule.nodes.size());
          for (std::size_t i = 0; i < ys.size(); ++i) {
            ys[i] = shifted_mean + std::numbers::sqrt2 * sd * rule.nodes[i];
            w[i] = rule.weights[i] / std::sqrt(std::numbers::pi);
          }
        } else {
          detail::tilt_weights(order, m, sd, x, gamma, ys, w);
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < ys.size(); ++i) {
          const double y = ys[i];
          const double inner = quadrature::normal_expectation([&](double z) { return h(z, y); },
                                                              beta.mean_z(y, x), beta.sigma_z, order);
          acc += w[i] * inner;
        }
        return acc;
      },
      "tilted expectation");
}

/// E[z^k | r = 0, x]. Closed form for k = 1 under a linear odds ratio.
inline double tilted_mean_z_power(int k, Covariates x, const BaselineOutcomeSpec& beta, const OddsRatioSpec& gamma,
                                  TiltMethod method = TiltMethod::automatic) {
  if (k == 1) return beta.mean_z(tilted_mean_y(x, beta, gamma, method), x);
  // Raw moments of z | y are polynomial in y; integrate them against the tilt.
  const double s2 = beta.sigma_z * beta.sigma_z;
  auto raw_moment = [k, s2](double mu) {
    double prev = 1.0, cur = mu;
    for (int j = 2; j <= k; ++j) {
      const double next = mu * cur + (j - 1) * s2 * prev;
      prev = cur;
      cur = next;
    }
    return k == 0 ? 1.0 : cur;
  };
  const double m = beta.mean_y(x);
  const double sd = beta.sigma_y;
  const bool closed = detail::use_closed_form(method, gamma);
  std::vector<double> ys, w;
  return detail::adaptive_gauss_hermite(
      [&](int order) {
        if (closed) {
          const double ms = m + gamma.slope(x) * sd * sd;
          return quadrature::normal_expectation([&](double y) { return raw_moment(beta.mean_z(y, x)); }, ms, sd,
                                                order);
        }
        detail::tilt_weights(order, m, sd, x, gamma, ys, w);
        double acc = 0.0;
        for (std::size_t i = 0; i < ys.size(); ++i) acc += w[i] * raw_moment(beta.mean_z(ys[i], x));
        return acc;
      },
      "tilted shadow moment");
}

// ---------------------------------------------------------------------------
// Extended outcome mean

/// M0ext(x; psi) = M0(x) + psi q(x) under the identity link.
struct ExtendedOutcomeSpec {
  double psi = 0.0;
  ScalarFeature q = ScalarFeature::constant(1.0);
};

inline double extended_outcome_mean(Covariates x, const ExtendedOutcomeSpec& ext, const BaselineOutcomeSpec& beta,
                                    const OddsRatioSpec& gamma, TiltMethod method = TiltMethod::automatic) {
  detail::require_finite(ext.psi, "psi");
  const double m0 = tilted_mean_y(x, beta, gamma, method);
  return ext.psi == 0.0 ? m0 : m0 + ext.psi * ext.q(x);
}

}  // namespace shadowdr
