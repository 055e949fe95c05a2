#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "shadowdr/dataset.hpp"
#include "shadowdr/errors.hpp"
#include "shadowdr/model_core.hpp"

namespace shadowdr::regression {

struct LeastSquaresFit {
  Vector coef;
  double rss = 0.0;
};

/// Ordinary least squares with a rank check.
inline LeastSquaresFit least_squares(const Eigen::MatrixXd& design, const Vector& response) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    throw SingularDesignError("design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                              std::to_string(design.cols()) + ")");
  }
  LeastSquaresFit fit;
  fit.coef = qr.solve(response);
  fit.rss = (response - design * fit.coef).squaredNorm();
  return fit;
}

/// Rows (1, d(x_i)^T) for all records.
inline Eigen::MatrixXd intercept_design(const Dataset& data, const Design& design) {
  const auto k = static_cast<Eigen::Index>(design.size());
  Eigen::MatrixXd d(static_cast<Eigen::Index>(data.size()), k + 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto x = data.x(i);
    d(ii, 0) = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) d(ii, j + 1) = design.features[static_cast<std::size_t>(j)].value(x);
  }
  return d;
}

inline Eigen::MatrixXd intercept_design(const Dataset& data) {
  return intercept_design(data, Design::linear(data.dim()));
}

/// Logistic regression of r on (1, d(x)) by Newton-Raphson on the log likelihood.
inline Vector logistic_fit(const Dataset& data, const Design& design, double tol = 1e-12, int max_iter = 100) {
  const Eigen::MatrixXd d = intercept_design(data, design);
  const auto n = d.rows();
  Vector r(n);
  for (Eigen::Index i = 0; i < n; ++i) r[i] = data.observed(static_cast<std::size_t>(i)) ? 1.0 : 0.0;
  const double rbar = r.mean();
  if (rbar == 0.0 || rbar == 1.0) {
    throw DegenerateWeightsError("response indicator is constant; propensity is not estimable");
  }
  Vector alpha = Vector::Zero(d.cols());
  alpha[0] = std::log(rbar / (1.0 - rbar));
  for (int it = 0; it < max_iter; ++it) {
    const Vector eta = d * alpha;
    Vector p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = expit(eta[i]);
      w[i] = p[i] * (1.0 - p[i]);
    }
    const Vector score = d.transpose() * (r - p);
    if (score.cwiseAbs().maxCoeff() <= tol * static_cast<double>(n)) return alpha;
    const Eigen::MatrixXd info = d.transpose() * w.asDiagonal() * d;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw SingularDesignError("logistic information matrix is singular");
    }
    alpha += ldlt.solve(score);
    if (!alpha.allFinite()) throw SolverError("logistic regression diverged (separation?)", "solver_diverged");
  }
  throw SolverError("logistic regression did not converge", "solver_nonconvergence");
}

inline Vector logistic_fit(const Dataset& data) { return logistic_fit(data, Design::linear(data.dim())); }

}  // namespace shadowdr::regression
