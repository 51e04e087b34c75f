#pragma once
// One-dimensional reference model: a single transverse mode of a two-mirror
// cavity (perfect end mirrors) containing either a lossless dielectric slab
// (index n, geometric thickness t) or an idealized lossless sheet of field
// reflectivity |r|.  Both are special cases of a symmetric lossless scatterer
// with amplitudes t̂ = |t̂|e^{iτ}, r̂ = i|r|e^{iτ}, for which the resonance
// condition reduces to
//
//   sin(k·(L − t_geo) + τ) = |r| · cos(2 k x0),
//
// where x0 is the offset of the element from the cavity centre.  For the slab
// the mapping is |r| = ρ/√(1+ρ²), ρ = (n²−1)·sin β/(2n), β = n k t, and
// τ = β + atan2(r12² sin 2β, 1 − r12² cos 2β) with r12 = (1−n)/(1+n); for the
// ideal sheet τ = asin|r| and t_geo = 0.  The two code paths stay separate so
// they can cross-check each other.

#include <cmath>
#include <complex>
#include <limits>

#include "mim/errors.hpp"
#include "mim/version.hpp"

namespace mim {

struct SingleModeCavity {
  double length = 0.0;      // mirror separation L [m]
  double wavelength = 0.0;  // target vacuum wavelength [m]
  bool use_slab = true;     // dielectric slab vs ideal lossless sheet

  // slab description
  double slab_index = 2.0;
  double slab_thickness = 50e-9;  // [m]

  // sheet description (field amplitude, not power); a non-finite phase means
  // the ideal minimal-phase sheet, τ = asin|r|
  double sheet_reflectivity = 0.0;
  double sheet_phase = std::numeric_limits<double>::quiet_NaN();
  double sheet_thickness = 0.0;

  static SingleModeCavity slab(double L, double lambda, double n = 2.0,
                               double t = 50e-9) {
    SingleModeCavity c;
    c.length = L;
    c.wavelength = lambda;
    c.use_slab = true;
    c.slab_index = n;
    c.slab_thickness = t;
    c.validate();
    return c;
  }

  static SingleModeCavity mirror(double L, double lambda, double field_r) {
    SingleModeCavity c;
    c.length = L;
    c.wavelength = lambda;
    c.use_slab = false;
    c.sheet_reflectivity = field_r;
    c.validate();
    return c;
  }

  // general lossless symmetric scatterer with frozen (|r|, τ, t_geo)
  static SingleModeCavity scatterer(double L, double lambda, double field_r,
                                    double tau, double t_geo = 0.0) {
    SingleModeCavity c;
    c.length = L;
    c.wavelength = lambda;
    c.use_slab = false;
    c.sheet_reflectivity = field_r;
    c.sheet_phase = tau;
    c.sheet_thickness = t_geo;
    c.validate();
    return c;
  }

  void validate() const {
    if (!(length > 0.0)) throw config_error("cavity length must be positive");
    if (!(wavelength > 0.0) || !(wavelength < length))
      throw config_error("wavelength must be positive and below the cavity length");
    if (use_slab) {
      if (!(slab_index >= 1.0)) throw config_error("slab index must be at least 1");
      if (!(slab_thickness > 0.0) || !(slab_thickness < 0.25 * length))
        throw config_error("slab thickness must be positive and small against the cavity");
    } else {
      if (!(sheet_reflectivity >= 0.0) || !(sheet_reflectivity < 1.0))
        throw config_error("sheet field reflectivity must lie in [0, 1)");
      if (!std::isnan(sheet_phase) && !std::isfinite(sheet_phase))
        throw config_error("sheet phase must be finite or left unset");
      if (!(sheet_thickness >= 0.0) || !(sheet_thickness < 0.25 * length))
        throw config_error("sheet thickness must be nonnegative and small against the cavity");
    }
  }

  // longitudinal order of the reference mode, kL = pπ for the empty cavity
  long longitudinal_index() const {
    long p = std::lround(2.0 * length / wavelength);
    return p > 0 ? p : 1;
  }

  double free_spectral_range() const { return 0.5 * kSpeedOfLight / length; }

  // (|r|, transmission phase τ, geometric thickness) at wavenumber k
  void scattering(double k, double* r_mag, double* tau, double* t_geo) const {
    if (!use_slab) {
      *r_mag = sheet_reflectivity;
      *tau = std::isnan(sheet_phase) ? std::asin(sheet_reflectivity) : sheet_phase;
      *t_geo = sheet_thickness;
      return;
    }
    const double n = slab_index;
    const double beta = n * k * slab_thickness;
    const double rho = (n * n - 1.0) * std::sin(beta) / (2.0 * n);
    const double r12 = (1.0 - n) / (1.0 + n);
    *r_mag = rho / std::sqrt(1.0 + rho * rho);
    *tau = beta + std::atan2(r12 * r12 * std::sin(2.0 * beta),
                             1.0 - r12 * r12 * std::cos(2.0 * beta));
    *t_geo = slab_thickness;
  }

  // complex field reflection amplitude of the intracavity element
  std::complex<double> field_reflectivity(double k) const {
    const std::complex<double> i1(0.0, 1.0);
    if (!use_slab) {
      double r, tau, tg;
      scattering(k, &r, &tau, &tg);
      return i1 * r * std::exp(i1 * tau);
    }
    const double n = slab_index;
    const double beta = n * k * slab_thickness;
    const double r12 = (1.0 - n) / (1.0 + n);
    const std::complex<double> e2 = std::exp(2.0 * i1 * beta);
    return r12 * (1.0 - e2) / (1.0 - r12 * r12 * e2);
  }
};

// Exact resonance wavenumber of the longitudinal reference mode with the
// element offset by x0 from the cavity centre.  Solved by fixed-point
// iteration of  k = (pπ ± asin(|r| cos 2kx0) − τ)/(L − t_geo), which is a
// strong contraction for |x0| ≪ L.
inline double resonance_wavenumber(double x0, const SingleModeCavity& cav) {
  cav.validate();
  if (!(std::abs(x0) < 0.45 * cav.length))
    throw config_error("element offset must stay well inside the cavity");
  const long p = cav.longitudinal_index();
  const double pi = 3.14159265358979323846;
  const double sigma = (p % 2 == 0) ? 1.0 : -1.0;
  double k = static_cast<double>(p) * pi / cav.length;
  for (int it = 0; it < 500; ++it) {
    double r, tau, tg;
    cav.scattering(k, &r, &tau, &tg);
    const double next =
        (static_cast<double>(p) * pi + sigma * std::asin(r * std::cos(2.0 * k * x0)) - tau) /
        (cav.length - tg);
    if (std::abs(next - k) * cav.length < 1e-13) return next;
    k = next;
  }
  throw numerical_error("cavity resonance iteration did not converge");
}

// Sheet cavity with the source element's scattering parameters frozen at
// wavenumber k.  Frozen at a resonance of the source cavity it shares that
// resonance exactly; the ideal sheet of equal |r| alone does not, because the
// slab carries a different transmission phase.
inline SingleModeCavity equivalent_sheet(const SingleModeCavity& src, double k) {
  double r, tau, tg;
  src.scattering(k, &r, &tau, &tg);
  return SingleModeCavity::scatterer(src.length, src.wavelength, r, tau, tg);
}

// Laser-frequency detuning [Hz] of the reference mode relative to the empty
// cavity, as a function of the element offset x0.  Nonpositive up to roundoff:
// a lossless dielectric only pulls the resonance down.
inline double transfer_matrix_detuning(double x0, const SingleModeCavity& cav) {
  const double pi = 3.14159265358979323846;
  const double k_empty = static_cast<double>(cav.longitudinal_index()) * pi / cav.length;
  const double k = resonance_wavenumber(x0, cav);
  return (k - k_empty) * kSpeedOfLight / (2.0 * pi);
}

// Curvature |d²ν/dx0²| [Hz/m²] of the detuning curve at a band top, i.e. with
// the element at a node of the intracavity standing wave.  Obtained by
// implicit differentiation of F(k, x0) = sin(k(L−t_geo)+τ) − |r|cos(2kx0) = 0:
// the extrema sit at sin(2kx0) = 0, where k' = 0 and
//   k'' = −F_xx/F_k,  F_xx = 4k²|r|cos(2kx0),
//   F_k  = cos(k(L−t_geo)+τ)·(L−t_geo+τ') − |r|'cos(2kx0),
// which avoids the noise floor of finite differences through the resonance
// solver.
inline double node_curvature(const SingleModeCavity& cav) {
  const double pi = 3.14159265358979323846;
  const double period = 0.5 * cav.wavelength;
  // coarse scan for the band top over one period; the top sits at a node of
  // the standing wave (x0 a multiple of a quarter wave), interior to [0, period]
  double best_x = 0.0, best_f = -1e300;
  const int coarse = 64;
  for (int i = 0; i <= coarse; ++i) {
    const double x = period * static_cast<double>(i) / coarse;
    const double f = transfer_matrix_detuning(x, cav);
    if (f > best_f) {
      best_f = f;
      best_x = x;
    }
  }
  // lock onto the exact extremum 2 k x0 = jπ by fixed point
  double k = resonance_wavenumber(best_x, cav);
  const long j = std::lround(2.0 * k * best_x / pi);
  double x0 = best_x;
  for (int it = 0; it < 8; ++it) {
    x0 = 0.5 * pi * static_cast<double>(j) / k;
    k = resonance_wavenumber(x0, cav);
  }
  double r, tau, tg;
  cav.scattering(k, &r, &tau, &tg);
  if (r == 0.0) return 0.0;
  // scattering parameters are smooth in k; central differences are noise-free
  const double dk = 1e-6 * k;
  double rp, taup, rm, taum, tgd;
  cav.scattering(k + dk, &rp, &taup, &tgd);
  cav.scattering(k - dk, &rm, &taum, &tgd);
  const double dtau = (taup - taum) / (2.0 * dk);
  const double dr = (rp - rm) / (2.0 * dk);
  const double d = cav.length - tg;
  const double c2 = std::cos(2.0 * k * x0);
  const double f_xx = 4.0 * k * k * r * c2;
  const double f_k = std::cos(k * d + tau) * (d + dtau) - dr * c2;
  return std::abs(f_xx / f_k) * kSpeedOfLight / (2.0 * pi);
}

// Invert the node-curvature relation of the ideal-sheet model: given a band
// curvature [Hz/m²], return the power reflectivity |r|² of the equivalent
// lossless sheet.  For the ideal sheet (τ = asin|r|, t_geo = 0) the band top
// sits exactly at k = pπ/L, so the relation closes:
//   κ = 4k²c·|r| / (2πL√(1−|r|²))  ⇔  |r|² = ρ²/(1+ρ²),  ρ = κπL/(2k²c).
inline double curvature_to_reflectivity(double curvature, double length,
                                        double wavelength) {
  if (!(curvature > 0.0))
    throw config_error("curvature below the zero-reflectivity floor");
  if (!(length > 0.0) || !(wavelength > 0.0) || !(wavelength < length))
    throw config_error("curvature inversion needs a valid cavity length and wavelength");
  const double pi = 3.14159265358979323846;
  long p = std::lround(2.0 * length / wavelength);
  if (p < 1) p = 1;
  const double k = static_cast<double>(p) * pi / length;
  const double rho = curvature * pi * length / (2.0 * k * k * kSpeedOfLight);
  return rho * rho / (1.0 + rho * rho);
}

}  // namespace mim
