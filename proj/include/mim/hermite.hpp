#pragma once

#include <vector>

#include "mim/errors.hpp"

namespace mim {

// Physicists' Hermite polynomial H_n(x) by the three-term recurrence
// H_{k+1} = 2x H_k - 2k H_{k-1}. Works for real and complex arguments.
template <class T>
T hermite_value(int n, T x) {
  if (n < 0) throw config_error("hermite: order must be non-negative");
  T hprev = T(1);
  if (n == 0) return hprev;
  T h = T(2) * x;
  for (int k = 1; k < n; ++k) {
    T hnext = T(2) * x * h - T(2 * k) * hprev;
    hprev = h;
    h = hnext;
  }
  return h;
}

inline double hermite_poly(int n, double x) { return hermite_value<double>(n, x); }

inline constexpr int kHermiteMaxOrder = 24;

// Monomial coefficients of H_n: result[k] multiplies x^k. All coefficients are
// integers below 2^53 for n <= 24, so the table is exact in double precision.
inline const std::vector<double>& hermite_coefficients(int n) {
  static const std::vector<std::vector<double>> table = [] {
    std::vector<std::vector<double>> t(kHermiteMaxOrder + 1);
    t[0] = {1.0};
    t[1] = {0.0, 2.0};
    for (int k = 2; k <= kHermiteMaxOrder; ++k) {
      t[k].assign(k + 1, 0.0);
      for (int j = 0; j < k; ++j) t[k][j + 1] += 2.0 * t[k - 1][j];
      for (int j = 0; j <= k - 2; ++j) t[k][j] -= 2.0 * (k - 1) * t[k - 2][j];
    }
    return t;
  }();
  if (n < 0 || n > kHermiteMaxOrder)
    throw config_error("hermite_coefficients: order outside [0, 24]");
  return table[n];
}

}  // namespace mim
