#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "mim/errors.hpp"

namespace mim {

struct SymEigen {
  std::vector<double> values;               // ascending
  std::vector<std::vector<double>> vectors; // vectors[k] belongs to values[k]
};

// Cyclic Jacobi diagonalization for small dense symmetric matrices (row-major).
// Deterministic: fixed sweep order, fixed convergence threshold, eigenvectors
// sorted ascending with the largest-magnitude component made positive.
inline SymEigen jacobi_eigensolve(std::vector<double> a, int n) {
  if (n < 1 || static_cast<int>(a.size()) != n * n)
    throw config_error("jacobi_eigensolve: bad dimensions");
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off2 = [&] {
    double s = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) s += a[p * n + q] * a[p * n + q];
    return s;
  };
  double norm2 = 0.0;
  for (double e : a) norm2 += e * e;
  const double tol2 = std::max(norm2, 1e-300) * 1e-30;

  for (int sweep = 0; sweep < 100 && off2() > tol2; ++sweep) {
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a[i * n + i] < a[j * n + j]; });

  SymEigen out;
  out.values.resize(n);
  out.vectors.assign(n, std::vector<double>(n));
  for (int r = 0; r < n; ++r) {
    const int col = order[r];
    out.values[r] = a[col * n + col];
    double big = 0.0;
    int ibig = 0;
    for (int k = 0; k < n; ++k) {
      out.vectors[r][k] = v[k * n + col];
      if (std::abs(out.vectors[r][k]) > big) {
        big = std::abs(out.vectors[r][k]);
        ibig = k;
      }
    }
    if (out.vectors[r][ibig] < 0.0)
      for (double& e : out.vectors[r]) e = -e;
  }
  return out;
}

// Cholesky solve of an SPD system (row-major). Returns false if the matrix is
// not positive definite; x is valid only on success.
inline bool cholesky_solve(std::vector<double> a, std::vector<double> b, int n,
                           std::vector<double>& x) {
  for (int j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (int k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
  }
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  x = std::move(b);
  return true;
}

// Dense linear least squares via normal equations; rows of jac are the
// regressors for each residual. Small, well-conditioned systems only.
inline bool linear_least_squares(const std::vector<std::vector<double>>& jac,
                                 const std::vector<double>& rhs, std::vector<double>& coef) {
  if (jac.empty()) return false;
  const int p = static_cast<int>(jac.front().size());
  std::vector<double> ata(static_cast<std::size_t>(p) * p, 0.0), atb(p, 0.0);
  for (std::size_t r = 0; r < jac.size(); ++r) {
    for (int i = 0; i < p; ++i) {
      atb[i] += jac[r][i] * rhs[r];
      for (int j = 0; j < p; ++j) ata[i * p + j] += jac[r][i] * jac[r][j];
    }
  }
  return cholesky_solve(std::move(ata), std::move(atb), p, coef);
}

}  // namespace mim
