#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>

#include "mim/geometry.hpp"
#include "mim/transfer_matrix.hpp"
#include "mim/version.hpp"

using Catch::Approx;
using namespace mim;

namespace {

const CavityGeometry& cavity() {
  static CavityGeometry g(6.7e-2, 5.0e-2, 1.064e-6);
  return g;
}

SingleModeCavity reference_slab() {
  return SingleModeCavity::slab(cavity().length, cavity().wavelength, 2.0, 50e-9);
}

// Independent route for the resonance condition: complex round-trip
// determinant of the three-mirror system (perfect end mirrors, element of
// amplitudes r̂ = i|r|e^{iτ}, t̂ = |t|e^{iτ} at offset x0).  Vanishes exactly
// at a resonance.
double determinant_residual(double k, double x0, const SingleModeCavity& cav) {
  double r, tau, tg;
  cav.scattering(k, &r, &tau, &tg);
  const std::complex<double> i1(0.0, 1.0);
  const std::complex<double> rhat = i1 * r * std::exp(i1 * tau);
  const std::complex<double> that = std::sqrt(1.0 - r * r) * std::exp(i1 * tau);
  const double l1 = 0.5 * cav.length + x0 - 0.5 * tg;
  const double l2 = 0.5 * cav.length - x0 - 0.5 * tg;
  const std::complex<double> d =
      (1.0 + rhat * std::exp(2.0 * i1 * k * l1)) *
          (1.0 + rhat * std::exp(2.0 * i1 * k * l2)) -
      that * that * std::exp(2.0 * i1 * k * (l1 + l2));
  return std::abs(d);
}

// Independent route for the band-top curvature: locate the top by scan +
// parabola descent, then a five-point second difference.
double stencil_node_curvature(const SingleModeCavity& cav) {
  const double period = 0.5 * cav.wavelength;
  double bx = 0.0, bf = -1e300;
  for (int i = 0; i <= 256; ++i) {
    const double x = period * static_cast<double>(i) / 256.0;
    const double f = transfer_matrix_detuning(x, cav);
    if (f > bf) {
      bf = f;
      bx = x;
    }
  }
  double h = period / 256.0;
  for (int it = 0; it < 60 && h > 1e-9 * period; ++it) {
    const double fm = transfer_matrix_detuning(bx - h, cav);
    const double f0 = transfer_matrix_detuning(bx, cav);
    const double fp = transfer_matrix_detuning(bx + h, cav);
    const double den = fm - 2.0 * f0 + fp;
    if (den < 0.0) {
      double st = 0.5 * h * (fm - fp) / den;
      if (std::abs(st) > h) st = (st > 0 ? h : -h);
      bx += st;
    }
    h *= 0.5;
  }
  const double hs = period / 400.0;
  const double sec = (-transfer_matrix_detuning(bx - 2.0 * hs, cav) +
                      16.0 * transfer_matrix_detuning(bx - hs, cav) -
                      30.0 * transfer_matrix_detuning(bx, cav) +
                      16.0 * transfer_matrix_detuning(bx + hs, cav) -
                      transfer_matrix_detuning(bx + 2.0 * hs, cav)) /
                     (12.0 * hs * hs);
  return std::abs(sec);
}

}  // namespace

TEST_CASE("cavity validation rejects unphysical parameters") {
  const double L = cavity().length;
  const double lam = cavity().wavelength;
  CHECK_THROWS_AS(SingleModeCavity::slab(0.0, lam), config_error);
  CHECK_THROWS_AS(SingleModeCavity::slab(L, 0.0), config_error);
  CHECK_THROWS_AS(SingleModeCavity::slab(L, 2.0 * L), config_error);
  CHECK_THROWS_AS(SingleModeCavity::slab(L, lam, 0.5), config_error);
  CHECK_THROWS_AS(SingleModeCavity::slab(L, lam, 2.0, -1e-9), config_error);
  CHECK_THROWS_AS(SingleModeCavity::slab(L, lam, 2.0, 0.3 * L), config_error);
  CHECK_THROWS_AS(SingleModeCavity::mirror(L, lam, -0.1), config_error);
  CHECK_THROWS_AS(SingleModeCavity::mirror(L, lam, 1.0), config_error);
  CHECK_THROWS_AS(SingleModeCavity::scatterer(L, lam, 0.3, INFINITY), config_error);
  CHECK_THROWS_AS(SingleModeCavity::scatterer(L, lam, 0.3, 0.5, -1e-9), config_error);
  CHECK_NOTHROW(SingleModeCavity::scatterer(L, lam, 0.3, 0.5, 50e-9));
}

TEST_CASE("longitudinal index and free spectral range") {
  const auto slab = reference_slab();
  CHECK(slab.longitudinal_index() == 125941);
  CHECK(slab.longitudinal_index() % 2 == 1);
  CHECK(slab.free_spectral_range() == Approx(2.237257149e9).epsilon(1e-9));
}

TEST_CASE("slab field reflectivity at the reference wavenumber") {
  const auto slab = reference_slab();
  const double k0 = 2.0 * std::numbers::pi / cavity().wavelength;

  // closed-form |r|² of the scattering map
  double r, tau, tg;
  slab.scattering(k0, &r, &tau, &tg);
  CHECK(r * r == Approx(0.1484939829).margin(1e-8));
  CHECK(tg == 50e-9);

  // independent route: Airy summation of the two-interface element
  const std::complex<double> rc = slab.field_reflectivity(k0);
  CHECK(std::norm(rc) == Approx(r * r).margin(1e-12));

  // lossless: |r|² + |t|² = 1 for the complex amplitudes
  const double n = 2.0, t = 50e-9;
  const double r12 = (1.0 - n) / (1.0 + n);
  const std::complex<double> i1(0.0, 1.0);
  const std::complex<double> e1 = std::exp(i1 * n * k0 * t);
  const std::complex<double> tc =
      (1.0 - r12 * r12) * e1 / (1.0 - r12 * r12 * e1 * e1);
  CHECK(std::norm(rc) + std::norm(tc) == Approx(1.0).margin(1e-12));
}

TEST_CASE("resonance wavenumber satisfies the round-trip determinant") {
  const auto slab = reference_slab();
  for (double x0 : {5.0e-5, 1.234e-4, 2.77e-4, 4.9e-4}) {
    const double k = resonance_wavenumber(x0, slab);
    CHECK(determinant_residual(k, x0, slab) < 1e-8);
    // off resonance by a fraction of an FSR the determinant is far from zero
    const double koff = k + 1e-3 * std::numbers::pi / slab.length;
    CHECK(determinant_residual(koff, x0, slab) > 1e-4);
  }
  CHECK_THROWS_AS(resonance_wavenumber(0.46 * slab.length, slab), config_error);
}

TEST_CASE("detuning band of the reference slab") {
  const auto slab = reference_slab();
  const double period = 0.5 * cavity().wavelength;

  // sample one spatial period starting a few hundred waists from the waist
  double fmin = 1e300, fmax = -1e300;
  const int npts = 801;
  for (int i = 0; i < npts; ++i) {
    const double x = 3.0e-4 + period * static_cast<double>(i) / (npts - 1);
    const double f = transfer_matrix_detuning(x, slab);
    fmin = std::min(fmin, f);
    fmax = std::max(fmax, f);
  }

  // a lossless element only pulls the resonance down
  CHECK(fmax < 0.0);
  CHECK(fmax == Approx(-4.684452e6).epsilon(3e-2));

  // peak-to-peak span in units of the free spectral range
  const double pp = fmax - fmin;
  CHECK(pp / slab.free_spectral_range() == Approx(0.251834).margin(1e-3));

  // periodicity in half the wavelength
  for (double x : {3.1e-4, 4.567e-4}) {
    const double a = transfer_matrix_detuning(x, slab);
    const double b = transfer_matrix_detuning(x + period, slab);
    CHECK(std::abs(b - a) < 1e-5 * pp);
  }

  // index-matched element leaves the cavity untouched
  const auto vacuum = SingleModeCavity::slab(slab.length, slab.wavelength, 1.0, 50e-9);
  CHECK(std::abs(transfer_matrix_detuning(3.1e-4, vacuum)) < 1.0);
}

TEST_CASE("node curvature against an independent finite-difference route") {
  const auto slab = reference_slab();
  const double kappa = node_curvature(slab);
  CHECK(kappa == Approx(4.1483190035e22).epsilon(5e-3));
  CHECK(kappa / stencil_node_curvature(slab) == Approx(1.0).margin(1e-5));

  // the same holds for a strongly reflective sheet
  const auto hi = SingleModeCavity::mirror(slab.length, slab.wavelength, std::sqrt(0.9));
  CHECK(node_curvature(hi) / stencil_node_curvature(hi) == Approx(1.0).margin(1e-4));

  // zero-reflectivity element has a flat band
  const auto none = SingleModeCavity::mirror(slab.length, slab.wavelength, 0.0);
  CHECK(node_curvature(none) == 0.0);
}

TEST_CASE("curvature grows monotonically and diverges towards unit reflectivity") {
  const double L = cavity().length;
  const double lam = cavity().wavelength;
  auto kap = [&](double r2) {
    return node_curvature(SingleModeCavity::mirror(L, lam, std::sqrt(r2)));
  };
  CHECK(kap(0.3) < kap(0.9));
  CHECK(kap(0.9) < kap(0.99));
  // κ ∝ |r|/√(1−|r|²): tenfold smaller transmission ⇒ √10 larger curvature
  CHECK(kap(0.999) / kap(0.99) == Approx(3.1766).margin(0.06));
  CHECK(kap(0.9999) / kap(0.999) == Approx(3.1637).margin(0.06));
  // curvature of a good sheet relative to the bare membrane model
  CHECK(kap(0.997) / node_curvature(reference_slab()) == Approx(43.654).margin(0.5));
}

TEST_CASE("curvature to reflectivity inverts the forward model") {
  const double L = cavity().length;
  const double lam = cavity().wavelength;
  for (double r2 : {1e-4, 0.13, 0.5, 0.9, 0.99, 0.9999}) {
    const double kappa =
        node_curvature(SingleModeCavity::mirror(L, lam, std::sqrt(r2)));
    const double back = curvature_to_reflectivity(kappa, L, lam);
    CHECK(back == Approx(r2).margin(1e-6));
    CHECK(back == Approx(r2).epsilon(1e-6));
  }
  // edge behaviour: tiny curvature maps to tiny reflectivity, never throws
  CHECK(curvature_to_reflectivity(1e10, L, lam) < 1e-20);
  CHECK(curvature_to_reflectivity(1e30, L, lam) < 1.0);
  CHECK_THROWS_AS(curvature_to_reflectivity(0.0, L, lam), config_error);
  CHECK_THROWS_AS(curvature_to_reflectivity(-1.0, L, lam), config_error);
  CHECK_THROWS_AS(curvature_to_reflectivity(1e20, 0.0, lam), config_error);
}

TEST_CASE("frozen-scattering sheet reproduces the slab resonance exactly") {
  const auto slab = reference_slab();
  for (double x0 : {5.0e-5, 1.234e-4, 2.77e-4, 4.9e-4}) {
    const double ks = resonance_wavenumber(x0, slab);
    const auto sheet = equivalent_sheet(slab, ks);
    CHECK_FALSE(sheet.use_slab);
    CHECK(sheet.sheet_thickness == 50e-9);
    const double km = resonance_wavenumber(x0, sheet);
    CHECK(std::abs(km - ks) * slab.length < 1e-10);
    const double fs = transfer_matrix_detuning(x0, slab);
    const double fm = transfer_matrix_detuning(x0, sheet);
    CHECK(fm == Approx(fs).epsilon(1e-6));
  }

  // the frozen transmission phase differs from the minimal-phase value,
  // and the minimal-phase sheet of equal |r| is NOT equivalent to the slab
  const double ks = resonance_wavenumber(1.234e-4, slab);
  const auto sheet = equivalent_sheet(slab, ks);
  double r, tau, tg;
  slab.scattering(ks, &r, &tau, &tg);
  CHECK(std::abs(sheet.sheet_phase - std::asin(r)) > 0.01);
  const auto naive = SingleModeCavity::mirror(slab.length, slab.wavelength, r);
  const double fs = transfer_matrix_detuning(1.234e-4, slab);
  const double fn = transfer_matrix_detuning(1.234e-4, naive);
  CHECK(std::abs(fn - fs) / std::abs(fs) > 1e-3);

  // band curvature of the frozen sheet agrees with the slab's to the level
  // set by the (tiny) dispersion of the scattering parameters
  CHECK(node_curvature(sheet) / node_curvature(slab) == Approx(1.0).margin(1e-5));
}

TEST_CASE("one-dimensional band top is consistent with the transverse model") {
  // the singlet band top of the full transverse model sits at
  // −1.6176e-8 · ν0; the single-mode cavity should land within a few percent
  const auto slab = reference_slab();
  const double period = 0.5 * cavity().wavelength;
  double fmax = -1e300;
  for (int i = 0; i < 801; ++i) {
    const double x = 3.0e-4 + period * static_cast<double>(i) / 800.0;
    fmax = std::max(fmax, transfer_matrix_detuning(x, slab));
  }
  const double nu0 =
      cavity().reference_wavenumber * kSpeedOfLight / (2.0 * std::numbers::pi);
  const double transverse_top = -1.6176e-8 * nu0;
  CHECK(fmax / transverse_top == Approx(1.0).margin(0.05));
}
