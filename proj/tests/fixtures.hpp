#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "shadowdr/dataset.hpp"

namespace shadowdr::testing {

// 40 rows {x1, x2, z, r, y}; regenerate with tests/oracles/oracles.py.
inline Dataset toy_dataset() {
  constexpr double na = std::numeric_limits<double>::quiet_NaN();
  const double rows[40][5] = {
      {0.00, 0.30, 0.31, 0, na},     {-0.27, -0.89, 0.37, 0, na},   {-0.45, -0.99, 1.15, 1, 0.93},
      {0.06, 1.34, -1.61, 0, na},    {-0.49, -0.62, -0.54, 0, na},  {0.49, 0.36, 1.13, 1, 1.67},
      {0.11, -0.93, -1.60, 1, -0.55}, {-0.03, 0.70, 1.75, 1, 1.47}, {-1.34, -0.46, -1.64, 1, -1.86},
      {-1.90, -1.29, 0.05, 1, 0.50}, {-1.84, -0.24, -1.70, 0, na},  {-1.27, 0.27, 0.60, 0, na},
      {0.16, -0.19, 0.79, 1, 1.39},  {-2.52, -0.54, -2.47, 0, na},  {-0.05, 0.11, 1.19, 0, na},
      {-1.53, -0.48, 0.17, 1, 1.15}, {-0.98, -0.81, 0.71, 1, 0.36}, {1.06, -0.81, 1.26, 1, 2.19},
      {-0.03, 0.88, 0.71, 1, 0.37},  {-0.58, -0.11, -0.45, 0, na},  {0.11, 0.06, 1.54, 0, na},
      {-1.23, 0.08, -0.88, 0, na},   {1.36, -1.55, 2.31, 1, 3.08},  {0.86, 0.12, 0.69, 0, na},
      {-0.64, 2.00, -0.49, 1, -1.27}, {0.76, -1.20, 0.52, 1, 1.08}, {0.07, 0.58, 2.39, 0, na},
      {-0.19, 0.68, 0.80, 1, 0.32},  {-0.07, 0.67, 1.64, 1, 1.56},  {1.44, -0.68, 1.75, 1, 2.79},
      {0.20, -0.46, -0.24, 0, na},   {0.13, -1.19, 1.24, 1, 1.40},  {-0.58, -0.20, 0.39, 0, na},
      {0.90, 1.15, 1.34, 1, 1.33},   {-1.32, -0.79, -0.21, 0, na},  {0.65, -1.99, 1.67, 0, na},
      {-0.46, -0.10, -0.25, 1, -0.79}, {1.26, 0.69, 1.56, 1, 1.11}, {-0.33, -0.37, 1.67, 0, na},
      {-0.25, 1.52, 0.67, 1, -0.68},
  };
  RowMatrix x(40, 2);
  Vector z(40), y(40);
  std::vector<std::uint8_t> r(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = rows[i][0];
    x(i, 1) = rows[i][1];
    z[i] = rows[i][2];
    r[static_cast<std::size_t>(i)] = rows[i][3] == 1.0 ? 1 : 0;
    y[i] = rows[i][4];
  }
  return Dataset(std::move(x), std::move(z), std::move(r), std::move(y));
}

// Max-abs entry of a vector.
inline double sup_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace shadowdr::testing
