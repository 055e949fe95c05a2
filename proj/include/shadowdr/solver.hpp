#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shadowdr/dataset.hpp"
#include "shadowdr/errors.hpp"

namespace shadowdr {

struct SolverConfig {
  double tol = 1e-10;       // on the max-abs empirical moment
  int max_iter = 100;
  int max_halvings = 30;
  double fd_step = 1e-6;    // relative forward-difference step

  void validate() const {
    if (!(tol > 0.0)) throw ConfigError("solver tol must be positive");
    if (max_iter < 1) throw ConfigError("solver max_iter must be at least 1");
    if (max_halvings < 0) throw ConfigError("solver max_halvings must be non-negative");
    if (!(fd_step > 0.0)) throw ConfigError("solver fd_step must be positive");
  }
};

struct FitResult {
  Vector theta_hat;
  bool converged = false;
  double final_moment_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::vector<std::vector<double>> path;
};

using MomentFunction = std::function<Vector(const Vector&)>;

inline double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

namespace detail {
inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
}  // namespace detail

/// Forward-difference Jacobian with step fd_step * (1 + |theta_j|).
inline Eigen::MatrixXd forward_jacobian(const MomentFunction& f, const Vector& theta, const Vector& f0,
                                        double fd_step) {
  Eigen::MatrixXd jac(f0.size(), theta.size());
  Vector t = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = fd_step * (1.0 + std::abs(theta[j]));
    t[j] = theta[j] + h;
    jac.col(j) = (f(t) - f0) / h;
    t[j] = theta[j];
  }
  return jac;
}

inline Eigen::MatrixXd central_jacobian(const MomentFunction& f, const Vector& theta, double fd_step) {
  Vector probe = f(theta);
  Eigen::MatrixXd jac(probe.size(), theta.size());
  Vector t = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = fd_step * (1.0 + std::abs(theta[j]));
    t[j] = theta[j] + h;
    const Vector up = f(t);
    t[j] = theta[j] - h;
    const Vector down = f(t);
    jac.col(j) = (up - down) / (2.0 * h);
    t[j] = theta[j];
  }
  return jac;
}

/// Damped Newton root-finding for a square system of empirical moments.
/// Steps are halved until the squared norm decreases. Throws SolverError on
/// a singular Jacobian or when no descent step exists; otherwise returns
/// with `converged` reporting whether the tolerance was met.
inline FitResult solve_moments(const MomentFunction& f, Vector theta, const SolverConfig& cfg) {
  cfg.validate();
  FitResult res;
  Vector fv = f(theta);
  if (fv.size() != theta.size()) throw SolverError("moment system is not square");
  res.path.push_back(detail::to_std(theta));
  double norm = max_abs(fv);
  double merit = fv.squaredNorm();
  auto fail = [&](const std::string& why, const std::string& kind) {
    std::ostringstream os;
    os.precision(6);
    os << why << " after " << res.iterations << " iterations (max-abs moment " << norm << ")";
    throw SolverError(os.str(), kind, norm, res.path);
  };
  while (!(norm <= cfg.tol) && res.iterations < cfg.max_iter) {
    if (!std::isfinite(merit)) fail("moment function is not finite", "solver_diverged");
    const Eigen::MatrixXd jac = forward_jacobian(f, theta, fv, cfg.fd_step);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible() || !jac.allFinite()) fail("singular moment Jacobian", "singular_jacobian");
    const Vector step = lu.solve(-fv);
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_halvings; ++h, scale *= 0.5) {
      const Vector cand = theta + scale * step;
      const Vector fc = f(cand);
      const double mc = fc.squaredNorm();
      if (std::isfinite(mc) && mc < merit) {
        theta = cand;
        fv = fc;
        merit = mc;
        accepted = true;
        break;
      }
    }
    ++res.iterations;
    res.path.push_back(detail::to_std(theta));
    norm = max_abs(fv);
    if (!accepted) break;
  }
  // One extra full step once within tolerance, so that independent
  // re-evaluation of the moments does not hinge on the last few ulps.
  if (norm <= cfg.tol && norm > 0.0 && res.iterations > 0) {
    const Eigen::MatrixXd jac = forward_jacobian(f, theta, fv, cfg.fd_step);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (lu.isInvertible() && jac.allFinite()) {
      const Vector cand = theta + lu.solve(-fv);
      const Vector fc = f(cand);
      if (fc.allFinite() && fc.squaredNorm() < merit) {
        theta = cand;
        fv = fc;
        norm = max_abs(fv);
        res.path.push_back(detail::to_std(theta));
      }
    }
  }
  res.theta_hat = theta;
  res.final_moment_norm = norm;
  res.converged = norm <= cfg.tol;
  return res;
}

/// Root of a scalar function, searching outward from `start` for the nearest
/// sign change and then refining with secant steps safeguarded by bisection.
/// The bracket half-width grows from `initial_half_width` up to `limit`.
inline FitResult solve_scalar(const std::function<double(double)>& f, double start, const SolverConfig& cfg,
                              double initial_half_width, double limit) {
  cfg.validate();
  FitResult res;
  res.theta_hat = Vector::Constant(1, start);
  auto record = [&](double t) { res.path.push_back({t}); };
  const double f0 = f(start);
  record(start);
  res.final_moment_norm = std::abs(f0);
  if (!std::isfinite(f0)) throw SolverError("scalar moment is not finite at the start", "solver_diverged");
  if (std::abs(f0) <= cfg.tol) {
    res.converged = true;
    return res;
  }
  // Expanding search: scan [start - h, start + h] in steps of the previous width.
  double lo = 0.0, hi = 0.0, flo = 0.0, fhi = 0.0;
  bool found = false;
  double inner = 0.0;
  double f_in_left = f0, f_in_right = f0;
  for (double h = initial_half_width; !found; h *= 2.0) {
    h = std::min(h, limit);
    const double fl = f(start - h);
    const double fr = f(start + h);
    record(start - h);
    record(start + h);
    const bool right = std::isfinite(fr) && std::signbit(fr) != std::signbit(f_in_right);
    const bool left = std::isfinite(fl) && std::signbit(fl) != std::signbit(f_in_left);
    if (right || left) {
      // Prefer the side whose bracket value is smaller in magnitude at the far end.
      const bool take_right = right && (!left || std::abs(fr) <= std::abs(fl));
      if (take_right) {
        lo = start + inner; flo = f_in_right; hi = start + h; fhi = fr;
      } else {
        lo = start - h; flo = fl; hi = start - inner; fhi = f_in_left;
      }
      found = true;
      break;
    }
    if (h >= limit) break;
    inner = h;
    f_in_left = std::isfinite(fl) ? fl : f_in_left;
    f_in_right = std::isfinite(fr) ? fr : f_in_right;
  }
  if (!found) {
    std::ostringstream os;
    os << "no sign change of the scalar moment within [" << start - limit << ", " << start + limit << "]";
    throw SolverError(os.str(), "non_identification", res.final_moment_norm, res.path);
  }
  double x = std::abs(flo) < std::abs(fhi) ? lo : hi;
  double fx = std::abs(flo) < std::abs(fhi) ? flo : fhi;
  // Polish well below tol so that mirrored or re-ordered problems land on the
  // same root to near machine precision.
  const double polish = 1e-6 * cfg.tol;
  for (res.iterations = 0; res.iterations < std::max(cfg.max_iter, 200); ++res.iterations) {
    if (std::abs(fx) <= polish) break;
    double cand = x - fx * (hi - lo) / (fhi - flo);
    if (!(cand > std::min(lo, hi) && cand < std::max(lo, hi)) || !std::isfinite(cand)) cand = 0.5 * (lo + hi);
    // Bisect if the bracket is shrinking too slowly.
    if (res.iterations % 4 == 3) cand = 0.5 * (lo + hi);
    const double fc = f(cand);
    record(cand);
    if (std::signbit(fc) == std::signbit(flo)) {
      lo = cand;
      flo = fc;
    } else {
      hi = cand;
      fhi = fc;
    }
    x = cand;
    fx = fc;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
      ++res.iterations;
      break;
    }
  }
  for (const auto& [t, ft] : {std::pair{lo, flo}, std::pair{hi, fhi}}) {
    if (std::abs(ft) < std::abs(fx)) {
      x = t;
      fx = ft;
    }
  }
  res.theta_hat[0] = x;
  res.final_moment_norm = std::abs(fx);
  res.converged = res.final_moment_norm <= cfg.tol;
  return res;
}

}  // namespace shadowdr
