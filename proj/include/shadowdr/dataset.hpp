#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "shadowdr/errors.hpp"

namespace shadowdr {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Covariates = std::span<const double>;

/// One record as seen by the estimators: y is present iff r = 1.
struct ObservedSample {
  std::vector<double> x;
  double z = 0.0;
  bool r = false;
  std::optional<double> y;
};

/// Column store of observed records. Construction enforces the observation
/// invariants; the outcome of an incomplete case is never stored.
class Dataset {
 public:
  Dataset() = default;

  /// `y` is read only where `r[i] == 1`; other entries are discarded.
  Dataset(RowMatrix x, Vector z, std::vector<std::uint8_t> r, Vector y)
      : x_(std::move(x)), z_(std::move(z)), r_(std::move(r)), y_(std::move(y)) {
    const auto n = static_cast<Eigen::Index>(r_.size());
    if (x_.rows() != n || z_.size() != n || y_.size() != n) {
      throw DataError("dataset columns have inconsistent lengths");
    }
    n_complete_ = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (r_[i] > 1) throw DataError("row " + std::to_string(i) + ": r must be 0 or 1");
      for (Eigen::Index j = 0; j < x_.cols(); ++j) {
        if (!std::isfinite(x_(i, j))) {
          throw DomainError("row " + std::to_string(i) + ": non-finite covariate");
        }
      }
      if (!std::isfinite(z_[i])) throw DomainError("row " + std::to_string(i) + ": non-finite z");
      if (r_[i] == 1) {
        if (!std::isfinite(y_[i])) {
          throw DomainError("row " + std::to_string(i) + ": observed y must be finite");
        }
        ++n_complete_;
      } else {
        y_[i] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }

  static Dataset from_samples(std::span<const ObservedSample> rows, std::size_t p) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    RowMatrix x(n, static_cast<Eigen::Index>(p));
    Vector z(n), y(n);
    std::vector<std::uint8_t> r(rows.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = rows[static_cast<std::size_t>(i)];
      if (s.x.size() != p) throw DataError("row " + std::to_string(i) + ": wrong covariate count");
      if (s.r != s.y.has_value()) {
        throw DataError("row " + std::to_string(i) + ": y must be present iff r = 1");
      }
      for (std::size_t j = 0; j < p; ++j) x(i, static_cast<Eigen::Index>(j)) = s.x[j];
      z[i] = s.z;
      r[static_cast<std::size_t>(i)] = s.r ? 1 : 0;
      y[i] = s.y.value_or(std::numeric_limits<double>::quiet_NaN());
    }
    return Dataset(std::move(x), std::move(z), std::move(r), std::move(y));
  }

  std::size_t size() const noexcept { return r_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(x_.cols()); }
  std::size_t complete_cases() const noexcept { return n_complete_; }
  std::size_t incomplete_cases() const noexcept { return size() - n_complete_; }

  Covariates x(std::size_t i) const noexcept {
    return {x_.data() + i * dim(), dim()};
  }
  double z(std::size_t i) const noexcept { return z_[static_cast<Eigen::Index>(i)]; }
  bool observed(std::size_t i) const noexcept { return r_[i] == 1; }
  /// Outcome of a complete case. Undefined (NaN) for incomplete cases.
  double y(std::size_t i) const noexcept { return y_[static_cast<Eigen::Index>(i)]; }
  std::optional<double> y_if_observed(std::size_t i) const {
    if (!observed(i)) return std::nullopt;
    return y(i);
  }

  ObservedSample sample(std::size_t i) const {
    auto xi = x(i);
    return {std::vector<double>(xi.begin(), xi.end()), z(i), observed(i), y_if_observed(i)};
  }

  const RowMatrix& covariates() const noexcept { return x_; }
  const Vector& shadow() const noexcept { return z_; }
  const std::vector<std::uint8_t>& indicators() const noexcept { return r_; }

  /// Rows `idx` in order (duplicates allowed), e.g. a bootstrap resample.
  Dataset subset(std::span<const std::size_t> idx) const {
    const auto m = static_cast<Eigen::Index>(idx.size());
    RowMatrix x(m, x_.cols());
    Vector z(m), y(m);
    std::vector<std::uint8_t> r(idx.size());
    for (Eigen::Index k = 0; k < m; ++k) {
      const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)]);
      x.row(k) = x_.row(i);
      z[k] = z_[i];
      y[k] = y_[i];
      r[static_cast<std::size_t>(k)] = r_[static_cast<std::size_t>(i)];
    }
    return Dataset(std::move(x), std::move(z), std::move(r), std::move(y));
  }

  /// Smallest and largest observed outcome; requires a complete case.
  std::pair<double, double> observed_range() const {
    if (n_complete_ == 0) throw DegenerateWeightsError("no complete cases");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!observed(i)) continue;
      lo = std::min(lo, y(i));
      hi = std::max(hi, y(i));
    }
    return {lo, hi};
  }

 private:
  RowMatrix x_;
  Vector z_;
  std::vector<std::uint8_t> r_;
  Vector y_;
  std::size_t n_complete_ = 0;
};

}  // namespace shadowdr
