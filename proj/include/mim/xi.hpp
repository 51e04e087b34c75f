#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "mim/errors.hpp"
#include "mim/hermite.hpp"

namespace mim {

using cplx = std::complex<double>;

// Moments of a shifted Gaussian, M_p = ∫ (x - i s/2)^p e^{-x^2} dx.
// Recurrence from integration by parts: M_p = (p-1)/2 M_{p-2} - (i s/2) M_{p-1}.
inline std::vector<cplx> shifted_gaussian_moments(int pmax, cplx s) {
  const double rtpi = std::sqrt(std::numbers::pi);
  std::vector<cplx> m(static_cast<std::size_t>(pmax) + 1);
  m[0] = rtpi;
  if (pmax >= 1) m[1] = cplx(0.0, -0.5) * s * rtpi;
  for (int p = 2; p <= pmax; ++p)
    m[p] = 0.5 * double(p - 1) * m[p - 2] + cplx(0.0, -0.5) * s * m[p - 1];
  return m;
}

// General shifted Hermite-product Gaussian integral
//   ∫ dx e^{-x^2} (x - is/2)^q H_{ni}(gi (x - is/2)) H_{nj}(gj (x - is/2))
// evaluated exactly by expanding the polynomial in v = x - is/2 and contracting
// with the moments above. Scale factors gi, gj may be complex (self-overlap
// integrals use the complex beam width). Stable up to ni, nj ~ 12.
inline cplx xi_scaled(int ni, int nj, int q, cplx s, cplx gi, cplx gj) {
  if (ni < 0 || nj < 0) throw config_error("xi: Hermite orders must be non-negative");
  if (q < 0) throw config_error("xi: monomial power must be non-negative");
  const auto& ci = hermite_coefficients(ni);
  const auto& cj = hermite_coefficients(nj);

  std::vector<cplx> pi(ci.size()), pj(cj.size());
  cplx ga = 1.0;
  for (std::size_t a = 0; a < ci.size(); ++a, ga *= gi) pi[a] = ci[a] * ga;
  cplx gb = 1.0;
  for (std::size_t b = 0; b < cj.size(); ++b, gb *= gj) pj[b] = cj[b] * gb;

  const int deg = ni + nj + q;
  std::vector<cplx> poly(static_cast<std::size_t>(deg) + 1, 0.0);
  for (std::size_t a = 0; a < pi.size(); ++a)
    for (std::size_t b = 0; b < pj.size(); ++b) poly[a + b + q] += pi[a] * pj[b];

  const auto mom = shifted_gaussian_moments(deg, s);
  cplx acc = 0.0;
  for (int p = deg; p >= 0; --p) acc += poly[p] * mom[p];
  return acc;
}

// ξ^{qβK}_{ni nj} with the near-degenerate-pair scaling: the lower-k mode's
// Hermite argument is compressed by 1/√A and the higher-k one stretched by √A.
inline cplx xi_integral(int ni, int nj, int q, double beta_k, double A) {
  if (q < 0 || q > 3) throw config_error("xi_integral: q must be in {0,1,2,3}");
  if (!(A > 0.0)) throw config_error("xi_integral: scale factor A must be positive");
  const double ra = std::sqrt(A);
  return xi_scaled(ni, nj, q, cplx(beta_k, 0.0), 1.0 / ra, ra);
}

}  // namespace mim
