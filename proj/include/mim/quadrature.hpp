#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>
#include <vector>

#include "mim/errors.hpp"

namespace mim {

struct QuadratureRule {
  std::vector<double> x;
  std::vector<double> w;
};

// Gauss-Legendre rule on [-1, 1]. Newton refinement from Chebyshev estimates.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw config_error("gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 1; k < n; ++k) {
        double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15 * (1.0 + std::abs(x))) break;
    }
    rule.x[i] = -x;
    rule.x[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.w[i] = w;
    rule.w[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.x[n / 2] = 0.0;
  return rule;
}

namespace detail {

// Orthonormal Hermite functions scaled by the Gaussian half-weight,
// ψ_k(x) = h_k(x) e^{-x²/2}, which stay bounded for any order. Returns
// (ψ_n, ψ_{n-1}); derivative is ψ_n' = √(2n) ψ_{n-1} - x ψ_n.
inline std::pair<double, double> hermite_scaled_pair(int n, double x) {
  double pm = 0.0;
  double p = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * x * x);
  for (int k = 0; k < n; ++k) {
    const double pn = x * std::sqrt(2.0 / (k + 1)) * p - std::sqrt(double(k) / (k + 1)) * pm;
    pm = p;
    p = pn;
  }
  return {p, pm};
}

}  // namespace detail

// Gauss-Hermite rule: ∫ f(x) e^{-x²} dx ≈ Σ w_i f(x_i). Roots are bracketed by
// a dense scan of the scaled Hermite function (no overflow at any order) and
// polished by safeguarded Newton; weights w_i = e^{-x_i²} / (n ψ_{n-1}(x_i)²).
inline QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw config_error("gauss_hermite: need at least one node");
  QuadratureRule rule;
  rule.x.resize(n);
  rule.w.resize(n);

  std::vector<double> pos_roots;
  const double xmax = std::sqrt(2.0 * n + 1.0) + 1.0;
  const int scan = 16 * n;
  double xa = (n % 2 == 1) ? xmax / scan * 0.5 : 0.0;
  double fa = detail::hermite_scaled_pair(n, xa).first;
  for (int i = 1; i <= scan; ++i) {
    const double xb = xmax * i / scan;
    const double fb = detail::hermite_scaled_pair(n, xb).first;
    if (fa * fb < 0.0) {
      double lo = xa, hi = xb, x = 0.5 * (xa + xb);
      double flo = fa;
      for (int it = 0; it < 80; ++it) {
        const auto [p, pm] = detail::hermite_scaled_pair(n, x);
        if (p == 0.0) break;  // exact hit; a zero would poison the sign test below
        const double deriv = std::sqrt(2.0 * n) * pm - x * p;
        if (p * flo < 0.0)
          hi = x;
        else {
          lo = x;
          flo = p;
        }
        double xn = x - p / deriv;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        const bool done = std::abs(xn - x) < 1e-15 * (1.0 + std::abs(x));
        x = xn;
        if (done) break;
      }
      pos_roots.push_back(x);
    }
    xa = xb;
    fa = fb;
  }
  if (static_cast<int>(pos_roots.size()) != n / 2)
    throw numerical_error("gauss_hermite: root bracketing failed");

  int idx = 0;
  const int half = n / 2;
  for (int i = 0; i < half; ++i) rule.x[idx++] = -pos_roots[half - 1 - i];
  if (n % 2 == 1) rule.x[idx++] = 0.0;
  for (int i = 0; i < half; ++i) rule.x[idx++] = pos_roots[i];
  for (int i = 0; i < n; ++i) {
    const double x = rule.x[i];
    const double pm = detail::hermite_scaled_pair(n, x).second;
    rule.w[i] = std::exp(-x * x) / (n * pm * pm);
  }
  return rule;
}

namespace detail {

template <QuadratureRule (*Maker)(int)>
const QuadratureRule& cached_rule(int n) {
  static std::map<int, QuadratureRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Maker(n)).first;
  return it->second;
}

}  // namespace detail

inline const QuadratureRule& gauss_legendre_cached(int n) {
  return detail::cached_rule<gauss_legendre>(n);
}
inline const QuadratureRule& gauss_hermite_cached(int n) {
  return detail::cached_rule<gauss_hermite>(n);
}

// Composite 16-node Gauss-Legendre over [a,b] with panel doubling until two
// consecutive refinements agree to rel_tol (relative to the integral scale).
template <class F>
auto integrate_adaptive(F&& f, double a, double b, double rel_tol, int max_doublings = 14,
                        bool* converged = nullptr, double* achieved = nullptr) {
  const QuadratureRule& gl = gauss_legendre_cached(16);
  using R = decltype(f(a));
  auto eval = [&](int panels) {
    R acc{};
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      const double c = a + (p + 0.5) * h;
      for (std::size_t k = 0; k < gl.x.size(); ++k) acc += gl.w[k] * f(c + 0.5 * h * gl.x[k]);
    }
    return acc * (0.5 * h);
  };
  R prev = eval(1);
  if (converged) *converged = false;
  for (int d = 1; d <= max_doublings; ++d) {
    const R cur = eval(1 << d);
    const double diff = std::abs(cur - prev);
    const double scale = std::max(std::abs(cur), 1e-300);
    if (achieved) *achieved = diff / scale;
    prev = cur;
    if (diff <= rel_tol * scale) {
      if (converged) *converged = true;
      break;
    }
  }
  return prev;
}

// Moments ∫_{-1}^{1} P_n(u) e^{iωu} du = 2 iⁿ j_n(ω), valid for either sign of ω.
inline std::vector<std::complex<double>> legendre_oscillatory_moments(int nmax, double omega) {
  std::vector<std::complex<double>> mu(static_cast<std::size_t>(nmax) + 1);
  const double aw = std::abs(omega);
  std::complex<double> ipow = 1.0;
  const std::complex<double> unit(0.0, omega >= 0.0 ? 1.0 : -1.0);
  for (int n = 0; n <= nmax; ++n) {
    mu[n] = 2.0 * ipow * std::sph_bessel(static_cast<unsigned>(n), aw);
    ipow *= unit;
  }
  return mu;
}

// Filon-type quadrature of ∫_a^b f(x) e^{iΩx} dx on uniform panels: f is fitted
// by a Legendre series at Gauss-Legendre nodes, the oscillation integrated
// exactly through spherical-Bessel moments. Accurate for f smooth on the panel
// scale no matter how large Ω is.
template <class F>
std::complex<double> filon_integrate(F&& f, double a, double b, double Omega, int panels,
                                     int nodes_per_panel = 12) {
  const QuadratureRule& gl = gauss_legendre_cached(nodes_per_panel);
  const int nmax = nodes_per_panel - 1;
  const double h = (b - a) / panels;
  const auto mu = legendre_oscillatory_moments(nmax, 0.5 * Omega * h);

  // Legendre values at the fit nodes.
  std::vector<double> pval(static_cast<std::size_t>(nodes_per_panel) * (nmax + 1));
  for (int k = 0; k < nodes_per_panel; ++k) {
    double p0 = 1.0, p1 = gl.x[k];
    pval[k * (nmax + 1)] = p0;
    if (nmax >= 1) pval[k * (nmax + 1) + 1] = p1;
    for (int n = 1; n < nmax; ++n) {
      const double p2 = ((2.0 * n + 1.0) * gl.x[k] * p1 - n * p0) / (n + 1.0);
      p0 = p1;
      p1 = p2;
      pval[k * (nmax + 1) + n + 1] = p2;
    }
  }

  std::complex<double> total = 0.0;
  std::vector<std::complex<double>> fv(nodes_per_panel);
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * h;
    for (int k = 0; k < nodes_per_panel; ++k) fv[k] = f(c + 0.5 * h * gl.x[k]);
    std::complex<double> panel = 0.0;
    for (int n = 0; n <= nmax; ++n) {
      std::complex<double> an = 0.0;
      for (int k = 0; k < nodes_per_panel; ++k) an += gl.w[k] * pval[k * (nmax + 1) + n] * fv[k];
      an *= (2.0 * n + 1.0) / 2.0;
      panel += an * mu[n];
    }
    total += (0.5 * h) * std::exp(std::complex<double>(0.0, Omega * c)) * panel;
  }
  return total;
}

}  // namespace mim
