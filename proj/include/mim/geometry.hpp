#pragma once
// Symmetric two-mirror cavity geometry and its Hermite-Gauss standing-wave
// modes.
//
// Conventions: the optic axis is x with mirrors at ±L/2; y, z transverse.
// A mode is labelled (l, m, n): l+1 axial half-waves between the mirrors and
// transverse Hermite orders m (along y) and n (along z). Resonance requires
//   k L = (l+1)π + 2(m+n+1) ψ_m,   ψ_m = atan(L / (2 x_R)),
// so all modes of equal l and equal m+n share one wavenumber. Modes are
// normalized so that ∫ Re(φ)² dV = 1 over the cavity volume; on top of the
// usual transverse-Gaussian prefactor this needs a small correction
// ν = (1 + C)^{-1/2}, where C = ½ Re ∫ φ² dV is the endpoint-dominated
// self-overlap of order 1/(kL) (~1e-6 here), evaluated by oscillatory
// quadrature with the transverse plane integrated in closed form.

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "mim/errors.hpp"
#include "mim/hermite.hpp"
#include "mim/quadrature.hpp"
#include "mim/xi.hpp"

namespace mim {

struct ModeIndex {
  int l = 1;  // axial order: l+1 half-waves between the mirrors
  int m = 0;  // transverse Hermite order along y
  int n = 0;  // transverse Hermite order along z
  friend bool operator==(const ModeIndex&, const ModeIndex&) = default;
};

namespace detail {

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// e^{-i l π/2} is one of {1, -i, -1, i}; evaluating it via the table keeps the
// axial-order phase exact even for l ~ 1e5.
inline std::complex<double> axial_quarter_phase(int l) {
  switch (((l % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, -1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, 1.0};
  }
}

}  // namespace detail

struct CavityGeometry {
  double length = 0.0;                // mirror separation L [m]
  double mirror_roc = 0.0;            // radius of curvature of both mirrors [m]
  double rayleigh_range = 0.0;        // x_R [m]
  double gouy_mirror = 0.0;           // ψ(L/2) = atan(L / (2 x_R))
  int reference_index = 0;            // odd axial order l of the reference singlet
  double reference_wavenumber = 0.0;  // k of mode (reference_index, 0, 0)
  double wavelength = 0.0;            // realized wavelength of that mode [m]
  double waist = 0.0;                 // its 1/e field radius w0 at x = 0 [m]

  // The realized wavelength is the resonance of the odd-l fundamental nearest
  // target_wavelength. Odd l puts a node of the standing wave at the cavity
  // centre, the usual starting point for a membrane near x = 0.
  CavityGeometry(double L, double roc, double target_wavelength) {
    if (!(L > 0.0)) throw config_error("cavity length must be positive");
    if (!(roc > 0.5 * L))
      throw config_error("cavity is unstable: need mirror_roc > length/2");
    if (!(target_wavelength > 0.0) || target_wavelength >= L)
      throw config_error("target wavelength must lie in (0, length)");
    length = L;
    mirror_roc = roc;
    rayleigh_range = std::sqrt(0.5 * L * (roc - 0.5 * L));
    gouy_mirror = std::atan(0.5 * L / rayleigh_range);

    const double k_target = 2.0 * std::numbers::pi / target_wavelength;
    const double l_real =
        (k_target * L - 2.0 * gouy_mirror) / std::numbers::pi - 1.0;
    const long long l_odd = 2 * llround(0.5 * (l_real - 1.0)) + 1;
    if (l_odd < 3 || l_odd > 100000000)
      throw config_error("target wavelength out of range for this cavity");
    reference_index = static_cast<int>(l_odd);
    reference_wavenumber =
        ((reference_index + 1) * std::numbers::pi + 2.0 * gouy_mirror) / L;
    wavelength = 2.0 * std::numbers::pi / reference_wavenumber;
    waist = std::sqrt(2.0 * rayleigh_range / reference_wavenumber);
  }

  double resonant_wavenumber(const ModeIndex& mode) const {
    if (mode.l < 1 || mode.m < 0 || mode.n < 0 || mode.m > kHermiteMaxOrder ||
        mode.n > kHermiteMaxOrder)
      throw config_error("mode index out of range");
    return ((mode.l + 1) * std::numbers::pi +
            2.0 * (mode.m + mode.n + 1) * gouy_mirror) /
           length;
  }

  // Fractional resonance offset g = (k_t/k_s)² − 1 of the m+n = 2 triplet one
  // axial order below the reference singlet; the quadruplet they form is
  // nearly degenerate because 2ψ_m is close to π/2 for this geometry.
  double fractional_splitting() const {
    const double kt = resonant_wavenumber({reference_index - 1, 2, 0});
    const double ks = reference_wavenumber;
    return (kt / ks) * (kt / ks) - 1.0;
  }

  std::array<ModeIndex, 4> quadruplet() const {
    const int l = reference_index;
    return {ModeIndex{l, 0, 0}, ModeIndex{l - 1, 2, 0}, ModeIndex{l - 1, 1, 1},
            ModeIndex{l - 1, 0, 2}};
  }
};

// Local beam parameters at axial position x for a mode of wavenumber k. The
// width depends on k through w0² = 2 x_R / k; curvature and Gouy phase are
// purely geometric. inv_roc = x / (x² + x_R²) avoids the infinity at x = 0.
struct BeamFrame {
  double w = 0.0;        // 1/e field radius
  double inv_roc = 0.0;  // 1 / R(x)
  double gouy = 0.0;     // atan(x / x_R)
  double delta = 0.0;    // x / x_R
};

inline BeamFrame beam_frame(double x, double k, const CavityGeometry& g) {
  if (!(k > 0.0)) throw config_error("beam_frame: wavenumber must be positive");
  BeamFrame f;
  f.delta = x / g.rayleigh_range;
  const double w0 = std::sqrt(2.0 * g.rayleigh_range / k);
  f.w = w0 * std::sqrt(1.0 + f.delta * f.delta);
  f.inv_roc = x / (x * x + g.rayleigh_range * g.rayleigh_range);
  f.gouy = std::atan(f.delta);
  return f;
}

inline BeamFrame beam_frame(double x, const CavityGeometry& g) {
  return beam_frame(x, g.reference_wavenumber, g);
}

// Self-overlap C = ½ Re ∫ φ² dV of the mode without its ν factor. The
// transverse plane integrates in closed form: substituting u = √2 y / w turns
// each axis into (w/√2)(1+iΔ)^{-1/2} ∫ H_m(u q̂)² e^{-u²} du with
// q̂ = (1+iΔ)^{-1/2}, because k w²/(2R) = Δ exactly. What remains is an axial
// integral with carrier e^{-2ikx} and a smooth envelope, done by Filon
// quadrature. The result is O(1/(kL)); everything downstream only needs it to
// a few percent.
inline double mode_self_overlap(const ModeIndex& mode, const CavityGeometry& g) {
  using cplx = std::complex<double>;
  const double k = g.resonant_wavenumber(mode);
  const int M = mode.m + mode.n;
  const double B = 1.0 / (std::numbers::pi * g.length *
                          std::ldexp(1.0, M - 1) * detail::factorial(mode.m) *
                          detail::factorial(mode.n));
  auto envelope = [&](double x) {
    const double d = x / g.rayleigh_range;
    const cplx qhat = 1.0 / std::sqrt(cplx(1.0, d));
    const cplx xm = xi_scaled(mode.m, mode.m, 0, cplx(0.0), qhat, qhat);
    const cplx xn = xi_scaled(mode.n, mode.n, 0, cplx(0.0), qhat, qhat);
    const cplx gouy = std::exp(cplx(0.0, 2.0 * (M + 1) * std::atan(d)));
    return B * xm * xn * gouy / cplx(1.0, d);
  };
  const cplx I =
      filon_integrate(envelope, -0.5 * g.length, 0.5 * g.length, -2.0 * k, 64, 12);
  const double parity = (mode.l % 2 == 0) ? 1.0 : -1.0;
  return 0.5 * parity * I.real();
}

// ν = (1 + C)^{-1/2}; cached because every matrix element touches it.
inline double mode_normalization(const ModeIndex& mode, const CavityGeometry& g) {
  using Key = std::tuple<double, double, double, int, int, int>;
  static std::map<Key, double> cache;
  static std::mutex mu;
  const Key key{g.length, g.mirror_roc, g.resonant_wavenumber(mode),
                mode.m, mode.n, mode.l % 2};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const double c = mode_self_overlap(mode, g);
  if (!(c > -0.5 && c < 0.5))
    throw numerical_error("mode_normalization: self-overlap out of range");
  const double nu = 1.0 / std::sqrt(1.0 + c);
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, nu);
  return nu;
}

// Complex travelling-wave mode function; the physical standing wave is its
// real part. Each mode uses the width set by its own wavenumber, so the
// transverse profile is exact, not shared across the quadruplet.
inline std::complex<double> mode_field(double x, double y, double z,
                                       const ModeIndex& mode,
                                       const CavityGeometry& g) {
  const double k = g.resonant_wavenumber(mode);
  const BeamFrame f = beam_frame(x, k, g);
  const int M = mode.m + mode.n;
  const double nu = mode_normalization(mode, g);
  const double norm =
      std::numbers::sqrt2 * nu /
      (f.w * std::sqrt(std::numbers::pi * g.length * std::ldexp(1.0, M - 1) *
                       detail::factorial(mode.m) * detail::factorial(mode.n)));
  const double r2 = y * y + z * z;
  const double amp = norm *
                     hermite_value(mode.m, std::numbers::sqrt2 * y / f.w) *
                     hermite_value(mode.n, std::numbers::sqrt2 * z / f.w) *
                     std::exp(-r2 / (f.w * f.w));
  const double phase = (M + 1) * f.gouy - k * x - 0.5 * k * r2 * f.inv_roc;
  return amp * std::polar(1.0, phase) * detail::axial_quarter_phase(mode.l);
}

// Near-waist approximation of mode_field: the width is frozen at w0 and the
// curvature and Gouy phases are expanded to first order in Δ = x/x_R, which
// collapses the slow phase to ((M+1) − r²/w0²) Δ. Useful as the reference
// shape for perturbation integrals of a membrane close to the waist.
inline std::complex<double> mode_field_waist(double x, double y, double z,
                                             const ModeIndex& mode,
                                             const CavityGeometry& g) {
  const double k = g.resonant_wavenumber(mode);
  const double w0 = std::sqrt(2.0 * g.rayleigh_range / k);
  const int M = mode.m + mode.n;
  const double nu = mode_normalization(mode, g);
  const double norm =
      std::numbers::sqrt2 * nu /
      (w0 * std::sqrt(std::numbers::pi * g.length * std::ldexp(1.0, M - 1) *
                      detail::factorial(mode.m) * detail::factorial(mode.n)));
  const double r2 = y * y + z * z;
  const double amp = norm *
                     hermite_value(mode.m, std::numbers::sqrt2 * y / w0) *
                     hermite_value(mode.n, std::numbers::sqrt2 * z / w0) *
                     std::exp(-r2 / (w0 * w0));
  const double d = x / g.rayleigh_range;
  const double phase = (M + 1 - r2 / (w0 * w0)) * d - k * x;
  return amp * std::polar(1.0, phase) * detail::axial_quarter_phase(mode.l);
}

}  // namespace mim
