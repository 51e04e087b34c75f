#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mim/errors.hpp"
#include "mim/geometry.hpp"
#include "mim/linalg.hpp"
#include "mim/membrane.hpp"
#include "mim/parallel.hpp"
#include "mim/perturbation.hpp"
#include "mim/spectra.hpp"

namespace mim {

// ---------------------------------------------------------------------------
// weighted nonlinear least squares (damped Gauss-Newton)

struct FitResult {
  std::vector<std::string> names;    // one label per parameter (may be empty)
  std::vector<double> parameters;
  std::vector<double> uncertainties; // 1σ from the linearized covariance
  std::vector<double> covariance;    // row-major p×p, positive semidefinite
  double residual_norm = 0.0;        // √(Σ w r²) at the reported point
  bool converged = false;
  int iterations = 0;

  double parameter(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return parameters[j];
    throw config_error("fit has no parameter named " + name);
  }
  double sigma(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return uncertainties[j];
    throw config_error("fit has no parameter named " + name);
  }
};

namespace detail {

// central-difference Jacobian row block; steps scale with the parameter
template <class Model>
void fd_jacobian(const Model& model, const std::vector<double>& x,
                 const std::vector<double>& p, const std::vector<double>& scale,
                 std::vector<std::vector<double>>& jac) {
  const std::size_t n = x.size(), np = p.size();
  std::vector<double> q(p);
  for (std::size_t j = 0; j < np; ++j) {
    const double h = 1e-6 * std::max(std::abs(p[j]), scale[j]);
    q[j] = p[j] + h;
    for (std::size_t i = 0; i < n; ++i) jac[i][j] = model(q, x[i]);
    q[j] = p[j] - h;
    for (std::size_t i = 0; i < n; ++i)
      jac[i][j] = (jac[i][j] - model(q, x[i])) / (2.0 * h);
    q[j] = p[j];
  }
}

inline double weighted_cost(const std::vector<double>& r, const std::vector<double>& w) {
  double c = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) c += w[i] * r[i] * r[i];
  return c;
}

}  // namespace detail

// Minimize Σ w_i (y_i − model(p, x_i))² by damped Gauss-Newton with
// finite-difference Jacobians.  Non-convergence within the iteration cap —
// or a rank-deficient Jacobian at the solution — is reported through the
// flag; the best point found is always returned.  `scales` sets the natural
// magnitude of each parameter (finite-difference steps and the conditioning
// of the normal equations); when omitted it is taken from the initial guess,
// so zero-initialized parameters then need an explicit scale.
template <class Model>
FitResult least_squares(const Model& model, const std::vector<double>& x,
                        const std::vector<double>& y, std::vector<double> w,
                        std::vector<double> p0,
                        std::vector<std::string> names = {},
                        std::vector<double> scales = {}) {
  const std::size_t n = x.size(), np = p0.size();
  if (np == 0) throw config_error("least_squares needs at least one parameter");
  if (y.size() != n) throw config_error("least_squares: x and y sizes differ");
  if (n < np) throw config_error("least_squares needs at least as many points as parameters");
  if (w.empty()) w.assign(n, 1.0);
  if (w.size() != n) throw config_error("least_squares: weight vector size mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]) || !(w[i] >= 0.0))
      throw config_error("least_squares: non-finite data or negative weight");
  if (!names.empty() && names.size() != np)
    throw config_error("least_squares: one name per parameter required");
  if (scales.empty()) {
    scales.resize(np);
    for (std::size_t j = 0; j < np; ++j) scales[j] = std::max(std::abs(p0[j]), 1e-12);
  }
  if (scales.size() != np)
    throw config_error("least_squares: one scale per parameter required");
  for (double s : scales)
    if (!(s > 0.0)) throw config_error("least_squares: scales must be positive");

  std::vector<double> p = p0, r(n);
  auto residuals = [&](const std::vector<double>& q, std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = y[i] - model(q, x[i]);
  };
  residuals(p, r);
  double cost = detail::weighted_cost(r, w);

  // normal equations are accumulated in scale-free parameter units so that
  // parameters of wildly different magnitude share one condition number
  std::vector<std::vector<double>> jac(n, std::vector<double>(np, 0.0));
  std::vector<double> a(np * np), g(np), step(np), sol, trial(np), rt(n);
  auto accumulate = [&]() {
    detail::fd_jacobian(model, x, p, scales, jac);
    std::fill(a.begin(), a.end(), 0.0);
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < np; ++j) {
        const double jj = jac[i][j] * scales[j];
        g[j] += w[i] * jj * r[i];
        for (std::size_t k = 0; k <= j; ++k)
          a[j * np + k] += w[i] * jj * (jac[i][k] * scales[k]);
      }
    for (std::size_t j = 0; j < np; ++j)
      for (std::size_t k = j + 1; k < np; ++k) a[j * np + k] = a[k * np + j];
  };

  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  const int cap = 200;
  for (; it < cap && !converged; ++it) {
    if (cost == 0.0) {
      converged = true;
      break;
    }
    accumulate();
    bool accepted = false;
    for (int damp = 0; damp < 40 && !accepted; ++damp) {
      std::vector<double> ad(a);
      for (std::size_t j = 0; j < np; ++j)
        ad[j * np + j] = a[j * np + j] + lambda * std::max(a[j * np + j], 1e-30);
      if (!cholesky_solve(std::move(ad), g, static_cast<int>(np), sol)) {
        lambda *= 10.0;
        continue;
      }
      for (std::size_t j = 0; j < np; ++j) {
        step[j] = sol[j] * scales[j];
        trial[j] = p[j] + step[j];
      }
      residuals(trial, rt);
      const double ct = detail::weighted_cost(rt, w);
      if (std::isfinite(ct) && ct <= cost) {
        double rel_step = 0.0;
        for (std::size_t j = 0; j < np; ++j)
          rel_step = std::max(rel_step,
                              std::abs(step[j]) / std::max(std::abs(p[j]), scales[j]));
        const double rel_drop = (cost - ct) / std::max(cost, 1e-300);
        p = trial;
        r = rt;
        cost = ct;
        accepted = true;
        // a vanishing gain under heavy damping is a crawl, not a solution
        if (rel_step < 1e-12 || (rel_drop < 1e-14 && lambda <= 1e-3)) converged = true;
        lambda = std::max(lambda / 3.0, 1e-12);
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;  // no downhill step found: flat or rank-deficient
  }

  FitResult out;
  out.names = std::move(names);
  out.parameters = p;
  out.residual_norm = std::sqrt(cost);
  out.converged = converged;
  out.iterations = it;

  // linearized covariance at the reported point, noise level estimated from
  // the residuals; a singular (rank-deficient) system demotes the fit to
  // non-converged and falls back to a ridge for best-effort numbers
  accumulate();
  const double s2 = n > np ? cost / static_cast<double>(n - np) : 1.0;
  out.covariance.assign(np * np, 0.0);
  out.uncertainties.assign(np, 0.0);
  double dmax = 1e-300;
  for (std::size_t j = 0; j < np; ++j) dmax = std::max(dmax, a[j * np + j]);
  bool ok = false;
  for (double ridge : {0.0, 1e-12, 1e-8, 1e-4}) {
    std::vector<double> ar(a);
    for (std::size_t j = 0; j < np; ++j) ar[j * np + j] += ridge * dmax;
    std::vector<double> e(np, 0.0), col;
    ok = true;
    for (std::size_t k = 0; k < np && ok; ++k) {
      std::fill(e.begin(), e.end(), 0.0);
      e[k] = 1.0;
      ok = cholesky_solve(ar, e, static_cast<int>(np), col);
      if (ok)
        for (std::size_t j = 0; j < np; ++j)
          out.covariance[j * np + k] = col[j] * scales[j] * scales[k] * s2;
    }
    if (ok) {
      if (ridge > 0.0) out.converged = false;
      break;
    }
  }
  if (ok) {
    for (std::size_t j = 0; j < np; ++j)
      for (std::size_t k = j + 1; k < np; ++k) {
        const double sym = 0.5 * (out.covariance[j * np + k] + out.covariance[k * np + j]);
        out.covariance[j * np + k] = out.covariance[k * np + j] = sym;
      }
    for (std::size_t j = 0; j < np; ++j)
      out.uncertainties[j] = std::sqrt(std::max(out.covariance[j * np + j], 0.0));
  } else {
    out.converged = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// avoided-crossing hyperbola

struct HyperbolaFit {
  double slope = 0.0;      // a: asymptotic branch slope, output per input unit
  double gap = 0.0;        // Δf: minimum branch separation
  double center = 0.0;     // position of closest approach
  double offset = 0.0;     // vertical nuisance
  double curvature = 0.0;  // 2a²/Δf at the turning point
  FitResult fit;           // parameters {slope, gap, center, offset}
};

// Fit y(x) = offset + √((a(x−center))² + (Δf/2)²) to one hyperbola branch
// (or to the half-separation of a branch pair).
inline HyperbolaFit fit_hyperbola(const std::vector<double>& x,
                                  const std::vector<double>& y,
                                  std::vector<double> w = {}) {
  if (x.size() < 4) throw config_error("fit_hyperbola needs at least four points");
  const std::size_t imin =
      static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
  if (imin == 0 || imin + 1 == y.size())
    throw config_error("fit_hyperbola data must bracket the minimum");
  const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
  const double ymin = y[imin], ymax = *std::max_element(y.begin(), y.end());
  const double range = ymax - ymin;
  if (!(range > 0.0)) throw config_error("fit_hyperbola data are flat");

  // the fit runs in coordinates centered on the data minimum so the center
  // parameter carries the scale of the turning region, not of |x| itself
  const double xc0 = x[imin];
  std::vector<double> xs(x);
  for (double& xi : xs) xi -= xc0;
  const std::size_t iedge =
      std::abs(xs.front()) > std::abs(xs.back()) ? 0 : xs.size() - 1;
  const double a0 =
      std::max(std::abs(y[iedge] - ymin) / std::max(std::abs(xs[iedge]), 1e-300),
               1e-300);
  const double gap0 = std::max(std::abs(ymin), 1e-3 * range);
  const double width0 =
      std::max(0.5 * gap0 / a0, (*xhi - *xlo) / static_cast<double>(x.size() - 1));
  auto model = [](const std::vector<double>& p, double xi) {
    return p[3] + std::hypot(p[0] * (xi - p[2]), 0.5 * p[1]);
  };
  FitResult fr = least_squares(model, xs, y, std::move(w), {a0, gap0, 0.0, 0.0},
                               {"slope", "gap", "center", "offset"},
                               {a0, gap0, width0, range});
  fr.parameters[2] += xc0;

  HyperbolaFit out;
  out.slope = std::abs(fr.parameters[0]);
  out.gap = std::abs(fr.parameters[1]);
  out.center = fr.parameters[2];
  out.offset = fr.parameters[3];
  out.curvature = 2.0 * out.slope * out.slope / std::max(out.gap, 1e-300);
  out.fit = std::move(fr);
  return out;
}

// ---------------------------------------------------------------------------
// band-phase displacement estimate

struct BandPhaseFit {
  double displacement = 0.0;        // membrane offset from the waist [m]
  double displacement_sigma = 0.0;  // [m]
  double phase_difference = 0.0;    // parity-corrected relative phase [rad]
  double frequency_difference = 0.0;  // partner − singlet spatial frequency [rad/m]
  FitResult singlet, partner;
};

namespace detail {

// Local spatial frequency of a band's standing-wave modulation at position x.
// The standing wave advances at 2k minus twice the mode's Gouy rate, but
// averaging over the transverse profile (whose wavefront curvature carries
// the opposite phase) restores half of that, leaving a Gouy coefficient of
// m + n + 1 on the intensity carrier.
inline double band_spatial_frequency(const CavityGeometry& geom, const ModeIndex& mode,
                                     double x) {
  const double k = geom.resonant_wavenumber(mode);
  const double u = x / geom.rayleigh_range;
  return 2.0 * k -
         static_cast<double>(mode.m + mode.n + 1) /
             (geom.rayleigh_range * (1.0 + u * u));
}

// accumulated carrier phase from the waist to x (integral of the above)
inline double band_phase_advance(const CavityGeometry& geom, const ModeIndex& mode,
                                 double x) {
  const double k = geom.resonant_wavenumber(mode);
  return 2.0 * k * x -
         static_cast<double>(mode.m + mode.n + 1) * std::atan(x / geom.rayleigh_range);
}

struct CosineFit {
  double phase = 0.0;        // argument of the fitted cosine at x = xref
  double phase_sigma = 0.0;
  double xref = 0.0;         // series mean, the fit's phase reference
  double frequency = 0.0;    // K held fixed during the fit
  FitResult fit;
};

// fit f(x) = c + A cos(K (x − xref) + φ) at fixed spatial frequency K
inline CosineFit fit_fixed_frequency_cosine(const std::vector<double>& x,
                                            const std::vector<double>& f, double K) {
  if (x.size() != f.size() || x.size() < 6)
    throw config_error("band series needs matched x/f with at least six points");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if ((*hi - *lo) * K < 4.0 * 3.14159265358979323846)
    throw config_error("band series must span at least two oscillation periods");
  double xref = 0.0, c0 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xref += x[i];
    c0 += f[i];
  }
  xref /= static_cast<double>(x.size());
  c0 /= static_cast<double>(f.size());
  // quadrature demodulation at K seeds amplitude and phase
  double cs = 0.0, sn = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double th = K * (x[i] - xref);
    cs += (f[i] - c0) * std::cos(th);
    sn += (f[i] - c0) * std::sin(th);
  }
  const double half = 0.5 * static_cast<double>(x.size());
  const double a0 = std::hypot(cs, sn) / half;
  const double phi0 = std::atan2(-sn / half, cs / half);
  if (!(a0 > 0.0)) throw config_error("band series shows no modulation at the expected period");
  auto model = [K, xref](const std::vector<double>& p, double xi) {
    return p[0] + p[1] * std::cos(K * (xi - xref) + p[2]);
  };
  FitResult fr = least_squares(model, x, f, {}, {c0, a0, phi0},
                               {"offset", "amplitude", "phase"}, {a0, a0, 1.0});
  double phi = fr.parameters[2];
  if (fr.parameters[1] < 0.0) phi += 3.14159265358979323846;
  CosineFit out;
  out.phase = std::remainder(phi, 2.0 * 3.14159265358979323846);
  out.phase_sigma = fr.uncertainties[2];
  out.xref = xref;
  out.frequency = K;
  out.fit = std::move(fr);
  return out;
}

}  // namespace detail

// Estimate the membrane's displacement from the waist out of the relative
// phase of the singlet and partner band oscillations.  The two bands share
// the membrane's phase but run at slightly different spatial frequencies
// (the singlet's period is smaller), so their relative phase, measured at
// the scan window's center, grows linearly with the window's distance from
// the waist; opposite axial parity of the two modes puts the bands in
// antiphase at the waist itself, which is corrected for before converting
// phase to displacement.  The coordinate origin of the series may be offset
// from the waist; |displacement| is resolved up to the half-period
// π/|ΔK| ≈ 21 mm of the phase lever.
inline BandPhaseFit fit_band_phase(const std::vector<double>& x_singlet,
                                   const std::vector<double>& f_singlet,
                                   const std::vector<double>& x_partner,
                                   const std::vector<double>& f_partner,
                                   const CavityGeometry& geom) {
  const double pi = 3.14159265358979323846;
  const auto quad = geom.quadruplet();
  const ModeIndex ms = quad[0], mp = quad[1];

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e;
    return s / std::max<std::size_t>(v.size(), 1);
  };
  const double xs = mean(x_singlet), xp = mean(x_partner);
  detail::CosineFit cs = detail::fit_fixed_frequency_cosine(
      x_singlet, f_singlet, detail::band_spatial_frequency(geom, ms, xs));
  detail::CosineFit cp = detail::fit_fixed_frequency_cosine(
      x_partner, f_partner, detail::band_spatial_frequency(geom, mp, xp));

  // relative phase at the common window center, parity-corrected
  const double xc = 0.5 * (xs + xp);
  const double parity = ((ms.l - mp.l) % 2 != 0) ? pi : 0.0;
  const double theta_s = cs.phase + cs.frequency * (xc - cs.xref);
  const double theta_p = cp.phase + cp.frequency * (xc - cp.xref);
  const double dphi = std::remainder(theta_p - theta_s - parity, 2.0 * pi);

  // invert the accumulated relative phase Δφ(d); Newton from the waist, with
  // the local frequency difference as the (monotone, negative) derivative
  double d = 0.0, dk = 0.0;
  for (int it = 0; it < 8; ++it) {
    dk = detail::band_spatial_frequency(geom, mp, d) -
         detail::band_spatial_frequency(geom, ms, d);
    if (!(std::abs(dk) > 0.0))
      throw numerical_error("band spatial frequencies coincide; no phase lever");
    const double f = detail::band_phase_advance(geom, mp, d) -
                     detail::band_phase_advance(geom, ms, d) - dphi;
    const double dnew = d - f / dk;
    if (dnew == d) break;
    d = dnew;
  }

  BandPhaseFit out;
  out.phase_difference = dphi;
  out.frequency_difference = dk;
  out.displacement = d;
  out.displacement_sigma = std::hypot(cs.phase_sigma, cp.phase_sigma) / std::abs(dk);
  out.singlet = std::move(cs.fit);
  out.partner = std::move(cp.fit);
  return out;
}

// ---------------------------------------------------------------------------
// partner-splitting ↔ tilt

// Diabatic splitting between the two outer partner lines at the membrane's
// position, in Hz of laser frequency.  A tilt about the y axis (gradient
// along z) attenuates the standing-wave pull most for the z-extended
// partner, so the splitting grows from exactly zero as the tilt squared.
// `tilt` replaces the config's tilt_z; tilt_y is kept as given.
inline double triplet_splitting(double tilt, const MembraneConfig& membrane,
                                const CavityGeometry& geom,
                                Method method = Method::analytic) {
  MembraneConfig m = membrane;
  m.tilt_z = tilt;
  const auto quad = geom.quadruplet();
  const std::vector<ModeIndex> modes(quad.begin(), quad.end());
  const CouplingMatrix cm = assemble_matrix(modes, geom, m, method, 1, 1e-7);
  const std::size_t n = modes.size();
  const double nu0 =
      geom.reference_wavenumber * kSpeedOfLight / (2.0 * 3.14159265358979323846);
  // diabatic line positions: detuning offset minus the membrane's pull
  const double d20 = cm.offsets[1] - cm.value[1 * n + 1];  // extended along y
  const double d02 = cm.offsets[3] - cm.value[3 * n + 3];  // extended along z
  return std::abs(fractional_shift(d02) - fractional_shift(d20)) * nu0;
}

// Invert the forward splitting(α) curve by bisection.
inline double splitting_to_tilt(double splitting_hz, const MembraneConfig& membrane,
                                const CavityGeometry& geom,
                                Method method = Method::analytic) {
  if (!std::isfinite(splitting_hz) || splitting_hz < 0.0)
    throw config_error("splitting must be a finite non-negative frequency");
  if (splitting_hz == 0.0) return 0.0;
  double lo = 0.0, hi = 2e-3;
  const double top = triplet_splitting(hi, membrane, geom, method);
  if (splitting_hz > top)
    throw config_error("splitting exceeds the model's tilt range");
  for (int it = 0; it < 200 && hi - lo > 1e-18; ++it) {
    const double mid = 0.5 * (lo + hi);
    (triplet_splitting(mid, membrane, geom, method) < splitting_hz ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// tilt-stage calibration

struct TiltCalibration {
  double conversion = 0.0;             // a: mrad of tilt per µm of stage travel
  double conversion_sigma = 0.0;
  double residual_misalignment = 0.0;  // α_y: tilt component the stage cannot null, mrad
  double misalignment_sigma = 0.0;
  FitResult fit;                       // parameters {conversion, misalignment}
};

// geometric conversion expected from the stage's 12.7 mm lever arm [mrad/µm]
inline constexpr double kLeverArmConversion = 1.0 / 12.7;

// Fit α(q) = √((a q)² + α_y²) to (stage travel [µm], total tilt [mrad]) data.
inline TiltCalibration fit_tilt_calibration(const std::vector<double>& travel_um,
                                            const std::vector<double>& tilt_mrad,
                                            std::vector<double> w = {}) {
  if (travel_um.size() < 3)
    throw config_error("tilt calibration needs at least three samples");
  if (travel_um.size() != tilt_mrad.size())
    throw config_error("tilt calibration needs matched travel/tilt samples");
  double qmax = 0.0, amax = 0.0, amin = 1e300;
  for (std::size_t i = 0; i < travel_um.size(); ++i) {
    qmax = std::max(qmax, std::abs(travel_um[i]));
    amax = std::max(amax, std::abs(tilt_mrad[i]));
    amin = std::min(amin, std::abs(tilt_mrad[i]));
  }
  if (!(qmax > 0.0)) throw config_error("tilt calibration needs nonzero stage travel");
  if (!(amax > 0.0)) throw config_error("tilt calibration needs nonzero tilt readings");
  auto model = [](const std::vector<double>& p, double q) {
    return std::hypot(p[0] * q, p[1]);
  };
  const double a0 = std::max(amax / qmax, 1e-300);
  const double ay0 = std::max(amin, 1e-2 * amax);
  FitResult fr = least_squares(model, travel_um, tilt_mrad, std::move(w), {a0, ay0},
                               {"conversion", "misalignment"}, {a0, ay0});
  TiltCalibration out;
  out.conversion = std::abs(fr.parameters[0]);
  out.conversion_sigma = fr.uncertainties[0];
  out.residual_misalignment = std::abs(fr.parameters[1]);
  out.misalignment_sigma = fr.uncertainties[1];
  out.fit = std::move(fr);
  return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo uncertainty validation

struct MonteCarloSummary {
  std::vector<double> spread;  // empirical 1σ per parameter over the trials
  double coverage3 = 0.0;      // fraction of trials with every parameter
                               // within 3 reported σ of the truth
  int trials = 0;
};

// Repeatedly refit synthetic data (truth + Gaussian noise) and compare the
// reported uncertainties with the empirical scatter.  One generator per
// trial, seeded from (seed, trial), so the result is independent of the
// thread count.
template <class Model>
MonteCarloSummary monte_carlo_coverage(const Model& model, const std::vector<double>& x,
                                       const std::vector<double>& truth,
                                       double noise_sigma, int trials,
                                       std::uint64_t seed, int threads = 1) {
  if (trials < 1) throw config_error("monte_carlo_coverage needs at least one trial");
  if (!(noise_sigma > 0.0)) throw config_error("monte_carlo_coverage needs positive noise");
  const std::size_t np = truth.size();
  std::vector<double> clean(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) clean[i] = model(truth, x[i]);
  const std::vector<double> w(x.size(), 1.0 / (noise_sigma * noise_sigma));

  std::vector<std::vector<double>> fitted(trials);
  std::vector<char> covered(trials, 0);
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * (t + 1));
    std::normal_distribution<double> gauss(0.0, noise_sigma);
    std::vector<double> y(clean);
    for (double& v : y) v += gauss(rng);
    FitResult fr = least_squares(model, x, y, w, truth);
    bool ok = fr.converged;
    for (std::size_t j = 0; j < np && ok; ++j)
      ok = std::abs(fr.parameters[j] - truth[j]) <= 3.0 * fr.uncertainties[j];
    covered[t] = ok ? 1 : 0;
    fitted[t] = std::move(fr.parameters);
  });

  MonteCarloSummary out;
  out.trials = trials;
  out.spread.assign(np, 0.0);
  std::vector<double> mean(np, 0.0);
  for (const auto& p : fitted)
    for (std::size_t j = 0; j < np; ++j) mean[j] += p[j];
  for (double& m : mean) m /= static_cast<double>(trials);
  for (const auto& p : fitted)
    for (std::size_t j = 0; j < np; ++j) {
      const double d = p[j] - mean[j];
      out.spread[j] += d * d;
    }
  for (double& s : out.spread)
    s = std::sqrt(s / std::max(trials - 1, 1));
  int hits = 0;
  for (char c : covered) hits += c;
  out.coverage3 = static_cast<double>(hits) / static_cast<double>(trials);
  return out;
}

}  // namespace mim
