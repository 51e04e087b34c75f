#pragma once
// Coupling matrix of a thin dielectric membrane between nearly degenerate
// cavity modes, and the resulting detunings.
//
// First-order perturbation of the resonance condition by a weak dielectric
// inclusion gives, for the mode amplitudes c_j of a nearly degenerate set,
//   (δ - g_j) c_j = -Σ_i V_ji c_i,
// where g_j = (k_j/k_ref)² - 1 are the bare fractional offsets of the set and
//   V_ij = (n²-1) ∫_slab Re φ_i Re φ_j dV .
// The detunings δ are therefore eigenvalues of diag(g) - V.
//
// Two independent evaluations of V_ij are provided.
//
// vij_numeric integrates the exact mode fields over the slab: an adaptive
// Gauss-Hermite tensor over the transverse plane (the combined waist Gaussian
// is folded into the quadrature measure so only a near-unity residual is
// exponentiated) with a Gauss-Legendre pass along the axial chord at every
// transverse node.
//
// vij_analytic evaluates the closed form obtained in the waist frame: the
// product of standing waves splits into carrier-sum and carrier-difference
// terms; each transverse axis reduces to shifted Hermite-product Gaussian
// integrals ξ, with the membrane tilt entering through the shift
// s = β K_eff and the finite thickness through the sinc-squared-like factors
// T = 1 - Δt²K²/24. Its domain is a membrane within ~1 mm of the waist
// (the error grows quadratically in position/x_R).

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "mim/errors.hpp"
#include "mim/geometry.hpp"
#include "mim/linalg.hpp"
#include "mim/membrane.hpp"
#include "mim/parallel.hpp"
#include "mim/quadrature.hpp"
#include "mim/xi.hpp"

namespace mim {

enum class Method { analytic, numeric };

// Scalars shared by the closed-form matrix element of one mode pair.
struct PerturbationContext {
  double ki = 0.0, kj = 0.0;
  int Mi = 0, Mj = 0;
  double rho = 1.0;     // kj / ki
  double A = 1.0;       // (1 + rho)/2: combined-Gaussian scale
  double eta = 0.0;     // (rho - 1)/(1 + rho)
  double delta0 = 0.0;  // membrane position / x_R
  double tx = 0.0;      // axial chord through the slab
  double dt = 0.0;      // tx / x_R
  double beta_y = 0.0;  // tilt_y · w_i / (x_R √(2A))
  double beta_z = 0.0;
  double K = 0.0;       // carrier-sum spatial frequency · x_R
  double Kp = 0.0;      // carrier-difference analogue
  double T = 1.0;       // thickness attenuation of the carrier-sum term
  double T2 = 1.0;      // and of the carrier-difference term
  double P0 = 0.0;      // bare prefactor: chord · contrast / (πL √(2^ΣM Πm!n!))
  double P_pair = 0.0;  // P0 with mode normalizations and the √ρ/A measure
};

inline PerturbationContext make_pair_context(const ModeIndex& a,
                                             const ModeIndex& b,
                                             const CavityGeometry& g,
                                             const MembraneConfig& mem) {
  PerturbationContext c;
  c.ki = g.resonant_wavenumber(a);
  c.kj = g.resonant_wavenumber(b);
  c.Mi = a.m + a.n;
  c.Mj = b.m + b.n;
  c.rho = c.kj / c.ki;
  c.A = 0.5 * (1.0 + c.rho);
  c.eta = (c.rho - 1.0) / (1.0 + c.rho);
  const double xr = g.rayleigh_range;
  c.delta0 = mem.position / xr;
  c.tx = mem.thickness * mem.chord_factor();
  c.dt = c.tx / xr;
  const double wi = std::sqrt(2.0 * xr / c.ki);
  c.beta_y = mem.tilt_y * wi / (xr * std::sqrt(2.0 * c.A));
  c.beta_z = mem.tilt_z * wi / (xr * std::sqrt(2.0 * c.A));
  c.K = (c.ki + c.kj) * xr - (c.Mi + c.Mj + 2);
  c.Kp = (c.Mj - c.Mi) - (c.kj - c.ki) * xr;
  if (!mem.thin_limit) {
    c.T = 1.0 - c.dt * c.dt * c.K * c.K / 24.0;
    c.T2 = 1.0 - c.dt * c.dt * c.Kp * c.Kp / 24.0;
  }
  c.P0 = c.tx * mem.contrast() /
         (std::numbers::pi * g.length *
          std::sqrt(std::ldexp(1.0, c.Mi + c.Mj) * detail::factorial(a.m) *
                    detail::factorial(a.n) * detail::factorial(b.m) *
                    detail::factorial(b.n)));
  c.P_pair = c.P0 * mode_normalization(a, g) * mode_normalization(b, g) *
             std::sqrt(c.rho) / c.A;
  return c;
}

// Nominal validity radius of the near-waist closed form; beyond it the
// dropped quadratic envelope terms are no longer negligible.
inline constexpr double kAnalyticPositionLimit = 1e-3;

// Closed-form matrix element. See the header comment for the structure; the
// two carrier terms share the envelope
//   G(K_eff, c) = e^{-i K_eff Δ0} e^{-(s_y²+s_z²)/4}
//                 · [Γ00 - i c (Δ0(Γ20+Γ02) + β_y(Γ30+Γ12) + β_z(Γ21+Γ03))]
// with Γqp the per-axis ξ integrals at shifts s = β K_eff, and enter as
//   V = Re{ P · [T e^{-i(l_i+l_j)π/2} G(K, 1) + T2 e^{-i(l_i-l_j)π/2} G(K', -η)] }.
inline double vij_analytic(const ModeIndex& a, const ModeIndex& b,
                           const CavityGeometry& g, const MembraneConfig& mem) {
  mem.validate();
  const PerturbationContext c = make_pair_context(a, b, g, mem);
  const cplx gi(1.0 / std::sqrt(c.A), 0.0);
  const cplx gj(std::sqrt(c.rho / c.A), 0.0);

  auto envelope = [&](double keff, double csign) {
    const double sy = c.beta_y * keff;
    const double sz = c.beta_z * keff;
    auto xy = [&](int q) { return xi_scaled(a.m, b.m, q, cplx(sy, 0.0), gi, gj); };
    auto xz = [&](int q) { return xi_scaled(a.n, b.n, q, cplx(sz, 0.0), gi, gj); };
    const cplx y0 = xy(0), y1 = xy(1), y2 = xy(2), y3 = xy(3);
    const cplx z0 = xz(0), z1 = xz(1), z2 = xz(2), z3 = xz(3);
    const cplx bracket =
        y0 * z0 - cplx(0.0, csign) * (c.delta0 * (y2 * z0 + y0 * z2) +
                                      c.beta_y * (y3 * z0 + y1 * z2) +
                                      c.beta_z * (y2 * z1 + y0 * z3));
    return std::polar(1.0, -keff * c.delta0) *
           std::exp(-0.25 * (sy * sy + sz * sz)) * bracket;
  };

  const cplx sum_term = c.T * detail::axial_quarter_phase(a.l + b.l) *
                        envelope(c.K, 1.0);
  const cplx diff_term = c.T2 * detail::axial_quarter_phase(a.l - b.l) *
                         envelope(c.Kp, -c.eta);
  return (c.P_pair * (sum_term + diff_term)).real();
}

// The same near-waist integrand as vij_analytic but with the small-exponent
// factor e^{-i(K_eff ± (y²+z²))Δc} kept exact (no 1+iε linearization) and the
// chord average kept as the exact sinc, evaluated by transverse
// Gauss-Hermite quadrature. The gap between this and vij_analytic measures
// the linearization error alone; the gap to vij_numeric measures the error
// of the near-waist mode approximation itself.
inline double vij_waist_numeric(const ModeIndex& a, const ModeIndex& b,
                                const CavityGeometry& g,
                                const MembraneConfig& mem) {
  mem.validate();
  const PerturbationContext c = make_pair_context(a, b, g, mem);
  const double gi = 1.0 / std::sqrt(c.A);
  const double gj = std::sqrt(c.rho / c.A);
  const auto& gh = gauss_hermite_cached(48);
  auto chord = [&](double keff) {
    if (mem.thin_limit) return 1.0;
    const double half = 0.5 * keff * c.dt;
    return (std::abs(half) < 1e-8) ? 1.0 : std::sin(half) / half;
  };
  cplx sum_int = 0.0, diff_int = 0.0;
  for (std::size_t p = 0; p < gh.x.size(); ++p) {
    const double y = gh.x[p];
    const double hy = hermite_value(a.m, gi * y) * hermite_value(b.m, gj * y);
    for (std::size_t q = 0; q < gh.x.size(); ++q) {
      const double z = gh.x[q];
      const double wpq = gh.w[p] * gh.w[q] * hy * hermite_value(a.n, gi * z) *
                         hermite_value(b.n, gj * z);
      const double dc = c.delta0 + c.beta_y * y + c.beta_z * z;
      const double r2 = y * y + z * z;
      const double ks = c.K + r2;        // carrier-sum effective frequency
      const double kd = c.Kp - c.eta * r2;  // carrier-difference analogue
      sum_int += wpq * chord(ks) * std::polar(1.0, -ks * dc);
      diff_int += wpq * chord(kd) * std::polar(1.0, -kd * dc);
    }
  }
  return (c.P_pair * (detail::axial_quarter_phase(a.l + b.l) * sum_int +
                      detail::axial_quarter_phase(a.l - b.l) * diff_int))
      .real();
}

struct QuadratureReport {
  bool converged = true;
  double achieved_rel = 0.0;  // |last doubling change| / max(|V|, scale floor)
  int transverse_nodes = 0;   // per-axis Gauss-Hermite order used
};

namespace detail {

// cos(θ - lπ/2) with the quarter turns applied exactly
inline double cos_less_quarter(double theta, int l) {
  switch (((l % 4) + 4) % 4) {
    case 0: return std::cos(theta);
    case 1: return std::sin(theta);
    case 2: return -std::cos(theta);
    default: return -std::sin(theta);
  }
}

}  // namespace detail

// Direct integration of (n²-1) Re φ_i Re φ_j over the slab, split into the
// carrier-difference and carrier-sum halves of cosθ_i cosθ_j (their sum is
// the matrix element; separately they adjudicate the two closed-form terms).
// The transverse Gauss-Hermite order doubles 24 → 48 → 96 until the whole
// element changes by less than rel_tol of max(|V|, (n²-1) t_x/L).
inline std::array<double, 2> vij_numeric_split(const ModeIndex& a,
                                               const ModeIndex& b,
                                               const CavityGeometry& g,
                                               const MembraneConfig& mem,
                                               double rel_tol = 1e-7,
                                               QuadratureReport* report = nullptr) {
  mem.validate();
  const double ki = g.resonant_wavenumber(a);
  const double kj = g.resonant_wavenumber(b);
  const int Mi = a.m + a.n, Mj = b.m + b.n;
  const double xr = g.rayleigh_range;
  const double w0i = std::sqrt(2.0 * xr / ki);
  const double w0j = std::sqrt(2.0 * xr / kj);
  const double inv_s2 = 1.0 / (w0i * w0i) + 1.0 / (w0j * w0j);
  const double sigma = 1.0 / std::sqrt(inv_s2);
  // x-independent parts of the normalizations; 1/w(x) factors join per point
  const double pref =
      2.0 * mode_normalization(a, g) * mode_normalization(b, g) /
      std::sqrt(std::numbers::pi * g.length * std::ldexp(1.0, Mi - 1) *
                detail::factorial(a.m) * detail::factorial(a.n) *
                std::numbers::pi * g.length * std::ldexp(1.0, Mj - 1) *
                detail::factorial(b.m) * detail::factorial(b.n));
  const double tx = mem.thickness * mem.chord_factor();
  const double contrast = mem.contrast();
  const auto& glx = gauss_legendre_cached(64);

  auto eval_with = [&](int ngh) {
    const auto& gh = gauss_hermite_cached(ngh);
    double acc_d = 0.0, acc_s = 0.0;
    for (std::size_t p = 0; p < gh.x.size(); ++p) {
      const double y = sigma * gh.x[p];
      for (std::size_t q = 0; q < gh.x.size(); ++q) {
        const double z = sigma * gh.x[q];
        const double folded = gh.x[p] * gh.x[p] + gh.x[q] * gh.x[q];
        const double xc = mem.position + mem.tilt_y * y + mem.tilt_z * z;
        const double r2 = y * y + z * z;
        const double wt_t = gh.w[p] * gh.w[q] * sigma * sigma;
        double cell_d = 0.0, cell_s = 0.0;
        const int nx = mem.thin_limit ? 1 : static_cast<int>(glx.x.size());
        for (int ix = 0; ix < nx; ++ix) {
          const double x = mem.thin_limit ? xc : xc + 0.5 * tx * glx.x[ix];
          const double wx = mem.thin_limit ? tx : 0.5 * tx * glx.w[ix];
          const BeamFrame fi = beam_frame(x, ki, g);
          const BeamFrame fj = beam_frame(x, kj, g);
          const double gauss = std::exp(
              folded - r2 * (1.0 / (fi.w * fi.w) + 1.0 / (fj.w * fj.w)));
          const double herm =
              hermite_value(a.m, std::numbers::sqrt2 * y / fi.w) *
              hermite_value(b.m, std::numbers::sqrt2 * y / fj.w) *
              hermite_value(a.n, std::numbers::sqrt2 * z / fi.w) *
              hermite_value(b.n, std::numbers::sqrt2 * z / fj.w);
          const double amp = pref / (fi.w * fj.w) * gauss * herm;
          const double ti = (Mi + 1) * fi.gouy - ki * x - 0.5 * ki * r2 * fi.inv_roc;
          const double tj = (Mj + 1) * fj.gouy - kj * x - 0.5 * kj * r2 * fj.inv_roc;
          cell_d += wx * amp * 0.5 * detail::cos_less_quarter(tj - ti, b.l - a.l);
          cell_s += wx * amp * 0.5 * detail::cos_less_quarter(ti + tj, a.l + b.l);
        }
        acc_d += wt_t * cell_d;
        acc_s += wt_t * cell_s;
      }
    }
    return std::array<double, 2>{contrast * acc_d, contrast * acc_s};
  };

  const double floor_scale = contrast * tx / g.length;
  std::array<double, 2> prev = eval_with(24);
  QuadratureReport rep;
  rep.transverse_nodes = 24;
  rep.converged = false;
  rep.achieved_rel = 1.0;
  for (int ngh : {48, 96}) {
    const std::array<double, 2> next = eval_with(ngh);
    const double change = std::abs((next[0] + next[1]) - (prev[0] + prev[1]));
    const double scale = std::max(std::abs(next[0] + next[1]), floor_scale);
    prev = next;
    rep.transverse_nodes = ngh;
    rep.achieved_rel = change / scale;
    if (rep.achieved_rel <= rel_tol) {
      rep.converged = true;
      break;
    }
  }
  if (report) *report = rep;
  return prev;
}

inline double vij_numeric(const ModeIndex& a, const ModeIndex& b,
                          const CavityGeometry& g, const MembraneConfig& mem,
                          QuadratureReport* report = nullptr,
                          double rel_tol = 1e-7) {
  const auto parts = vij_numeric_split(a, b, g, mem, rel_tol, report);
  return parts[0] + parts[1];
}

// Leading-order closed forms for an untilted membrane near the waist: the
// diagonal element of any mode and the displacement-linear coupling between
// the fundamental and the transverse pair modes of the adjacent quadruplet.
// All other elements vanish at this order (transverse parity). Throws for
// tilted membranes, whose couplings need the full expression.
inline double interaction_shorthand(const ModeIndex& a, const ModeIndex& b,
                                    const CavityGeometry& g,
                                    const MembraneConfig& mem) {
  mem.validate();
  if (mem.tilt_y != 0.0 || mem.tilt_z != 0.0)
    throw config_error("interaction_shorthand: closed form requires zero tilt");
  const double xr = g.rayleigh_range;
  const double d0 = mem.position / xr;
  const double tx = mem.thickness;  // chord factor is 1 without tilt
  const double chi = mem.contrast();

  if (a == b) {
    const double k = g.resonant_wavenumber(a);
    const int M = a.m + a.n;
    const double karg = 2.0 * k * xr - 2.0 * (M + 1);
    const double T =
        mem.thin_limit ? 1.0
                       : 1.0 - (tx / xr) * (tx / xr) * karg * karg / 24.0;
    const double parity = (a.l % 2 == 0) ? 1.0 : -1.0;
    return chi * (tx / g.length) *
           (1.0 + parity * T * std::cos((2.0 * k * xr - (M + 1)) * d0));
  }

  // order the pair as (fundamental, partner)
  const ModeIndex& s = (a.m + a.n == 0) ? a : b;
  const ModeIndex& t = (a.m + a.n == 0) ? b : a;
  const bool pair_mode = (s.m + s.n == 0) && (t.l == s.l - 1) &&
                         ((t.m == 2 && t.n == 0) || (t.m == 0 && t.n == 2));
  if (!pair_mode) return 0.0;

  const double ks = g.resonant_wavenumber(s);
  const double kt = g.resonant_wavenumber(t);
  const double karg = (ks + kt) * xr - 4.0;
  const double T =
      mem.thin_limit ? 1.0 : 1.0 - (tx / xr) * (tx / xr) * karg * karg / 24.0;
  const double parity = (s.l % 2 == 0) ? 1.0 : -1.0;
  return parity * d0 * (tx * chi / (std::numbers::sqrt2 * g.length)) * T *
         std::cos(karg * d0);
}

// Convenience form taking the dimensionless displacement directly: the
// coupling between the reference fundamental and either of its transverse
// pair partners.
inline double interaction_shorthand(double delta0, const CavityGeometry& g,
                                    MembraneConfig mem) {
  mem.position = delta0 * g.rayleigh_range;
  const auto quad = g.quadruplet();
  return interaction_shorthand(quad[0], quad[1], g, mem);
}

struct CouplingMatrix {
  std::vector<ModeIndex> modes;
  std::vector<double> value;    // row-major V, symmetric
  std::vector<double> offsets;  // g_j = (k_j/k_ref)² - 1, reference = modes[0]
  QuadratureReport report;      // worst per-pair report (numeric route only)
  bool analytic_domain_exceeded = false;  // closed form used beyond its radius
};

inline CouplingMatrix assemble_matrix(const std::vector<ModeIndex>& modes,
                                      const CavityGeometry& g,
                                      const MembraneConfig& mem, Method method,
                                      int threads = 1, double rel_tol = 1e-7) {
  if (modes.empty()) throw config_error("assemble_matrix: empty mode set");
  mem.validate();
  if (std::abs(mem.position) >= 0.5 * g.length)
    throw config_error("membrane position outside the cavity");
  const int n = static_cast<int>(modes.size());

  CouplingMatrix out;
  out.modes = modes;
  out.value.assign(static_cast<std::size_t>(n) * n, 0.0);
  out.offsets.resize(n);
  out.analytic_domain_exceeded = method == Method::analytic &&
                                 std::abs(mem.position) > kAnalyticPositionLimit;
  const double kref = g.resonant_wavenumber(modes[0]);
  const double span = 2.0 * std::numbers::pi / (g.length * kref);
  const double max_offset = (1.0 + span) * (1.0 + span) - 1.0;
  for (int j = 0; j < n; ++j) {
    const double kj = g.resonant_wavenumber(modes[j]);
    out.offsets[j] = (kj / kref) * (kj / kref) - 1.0;
    if (std::abs(out.offsets[j]) > max_offset)
      throw config_error("mode set spans more than one free spectral range");
  }

  // warm the normalization cache serially so worker threads only read
  for (const auto& m : modes) mode_normalization(m, g);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<double> vals(pairs.size());
  std::vector<QuadratureReport> reps(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    if (method == Method::analytic)
      vals[p] = vij_analytic(modes[i], modes[j], g, mem);
    else
      vals[p] = vij_numeric(modes[i], modes[j], g, mem, &reps[p], rel_tol);
  });
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    out.value[static_cast<std::size_t>(i) * n + j] = vals[p];
    out.value[static_cast<std::size_t>(j) * n + i] = vals[p];
    if (method == Method::numeric) {
      if (!reps[p].converged) out.report.converged = false;
      if (reps[p].achieved_rel > out.report.achieved_rel)
        out.report.achieved_rel = reps[p].achieved_rel;
      out.report.transverse_nodes =
          std::max(out.report.transverse_nodes, reps[p].transverse_nodes);
    }
  }
  return out;
}

struct DetuningSolution {
  std::vector<double> detunings;             // eigenvalues of diag(g) - V, ascending
  std::vector<std::vector<double>> vectors;  // matching mode compositions
};

inline DetuningSolution solve_detunings(const CouplingMatrix& cm) {
  const int n = static_cast<int>(cm.modes.size());
  std::vector<double> a(cm.value);
  for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i) * n + i] -= cm.offsets[i];
  for (auto& v : a) v = -v;  // diag(g) - V
  auto eig = jacobi_eigensolve(a, n);
  return {std::move(eig.values), std::move(eig.vectors)};
}

}  // namespace mim
