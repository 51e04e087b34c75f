#pragma once
// Band structure of the nearly degenerate transverse multiplet versus
// membrane position: sweeps of the coupled-mode detunings, diagonal band
// curves, avoided-crossing extraction and labeled gap maps.
//
// Detunings δ are fractional squared wavenumbers, (k/k_ref)² − 1, the natural
// output of the eigenproblem diag(g) − V.  Conversions: relative frequency
// shift Δω/ω₀ = √(1+δ) − 1, free-spectral-range units divide by λ_ref/(2L),
// absolute Hz multiply by ν₀ = c·k_ref/(2π).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mim/errors.hpp"
#include "mim/geometry.hpp"
#include "mim/membrane.hpp"
#include "mim/parallel.hpp"
#include "mim/perturbation.hpp"
#include "mim/transfer_matrix.hpp"
#include "mim/version.hpp"

namespace mim {

// Δω/ω₀ for a squared-wavenumber detuning δ, in a cancellation-free form.
inline double fractional_shift(double delta) {
  return delta / (1.0 + std::sqrt(1.0 + delta));
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) throw config_error("linspace needs at least one point");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

// fractional squared-wavenumber offset of a mode against the cavity reference
inline double fractional_offset(const CavityGeometry& geom, const ModeIndex& mode) {
  const double r = geom.resonant_wavenumber(mode) / geom.reference_wavenumber;
  return r * r - 1.0;
}

// All (l, m, n) with m + n = order, with the axial index picked so the
// multiplet lies closest to the cavity reference mode.
inline std::vector<ModeIndex> manifold_modes(const CavityGeometry& geom, int order) {
  if (order < 0) throw config_error("manifold order must be nonnegative");
  const int l_ref = geom.reference_index;
  int best_l = -1;
  double best = 1e300;
  for (int dl = order / 2 - 1; dl <= order / 2 + 2; ++dl) {
    const int l = l_ref - dl;
    if (l < 0) continue;
    const double off = std::abs(fractional_offset(geom, ModeIndex{l, 0, order}));
    if (off < best) {
      best = off;
      best_l = l;
    }
  }
  if (best_l < 0) throw config_error("no axial order available for this manifold");
  std::vector<ModeIndex> out;
  out.reserve(static_cast<std::size_t>(order) + 1);
  for (int m = 0; m <= order; ++m) out.push_back(ModeIndex{best_l, m, order - m});
  return out;
}

// ---------------------------------------------------------------------------
// diagonal bands

struct BandCurve {
  ModeIndex mode{};
  double offset = 0.0;                 // (k_mode/k_ref)² − 1
  double reference_wavenumber = 0.0;
  double fsr_fraction = 0.0;           // λ_ref/(2L) as a frequency fraction
  bool analytic_domain_exceeded = false;
  std::vector<double> positions;
  std::vector<double> detuning;        // δ(x) = offset − V_mm(x)

  double frequency_fraction(std::size_t i) const { return fractional_shift(detuning[i]); }
  double fsr_units(std::size_t i) const { return frequency_fraction(i) / fsr_fraction; }
  double hertz(std::size_t i) const {
    return frequency_fraction(i) * reference_wavenumber * kSpeedOfLight /
           (2.0 * 3.14159265358979323846);
  }
};

// Single uncoupled band δ_m(x) = g_m − V_mm(x) from the closed-form matrix
// element; fast enough for full multi-manifold diagrams.
inline BandCurve diagonal_band(const ModeIndex& mode,
                               const std::vector<double>& positions,
                               MembraneConfig mem, const CavityGeometry& geom) {
  if (positions.empty()) throw config_error("diagonal_band needs at least one position");
  BandCurve out;
  out.mode = mode;
  out.offset = fractional_offset(geom, mode);
  out.reference_wavenumber = geom.reference_wavenumber;
  out.fsr_fraction =
      3.14159265358979323846 / (geom.reference_wavenumber * geom.length);
  out.positions = positions;
  out.detuning.reserve(positions.size());
  for (double x : positions) {
    mem.position = x;
    out.detuning.push_back(out.offset - vij_analytic(mode, mode, geom, mem));
    if (std::abs(x) > kAnalyticPositionLimit) out.analytic_domain_exceeded = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// coupled band structure

struct BandStructure {
  CavityGeometry geometry;
  MembraneConfig membrane;             // tilts and slab data; position is swept
  std::vector<ModeIndex> mode_set;
  Method method = Method::analytic;
  std::vector<double> positions;
  std::vector<double> offsets;         // diag(g), reference = mode_set[0]
  std::vector<std::vector<double>> detuning;                  // [pos][band] ascending
  std::vector<std::vector<std::vector<double>>> composition;  // [pos][band][mode]
  std::vector<std::vector<int>> track;                        // [pos][band] → identity
  double min_track_overlap = 1.0;      // worst consecutive-point overlap of an identity
  bool analytic_domain_exceeded = false;
  double reference_wavenumber = 0.0;
  double fsr_fraction = 0.0;

  explicit BandStructure(const CavityGeometry& g) : geometry(g) {}

  std::size_t bands() const { return mode_set.size(); }
  double frequency_fraction(std::size_t p, std::size_t b) const {
    return fractional_shift(detuning[p][b]);
  }
  double fsr_units(std::size_t p, std::size_t b) const {
    return frequency_fraction(p, b) / fsr_fraction;
  }
  double hertz(std::size_t p, std::size_t b) const {
    return frequency_fraction(p, b) * reference_wavenumber * kSpeedOfLight /
           (2.0 * 3.14159265358979323846);
  }
};

namespace detail {

inline double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Within numerically degenerate clusters the eigenbasis is arbitrary; rotate
// it to follow the previous grid point so identities stay continuous.
inline void align_degenerate_clusters(const std::vector<double>& delta,
                                      std::vector<std::vector<double>>& vecs,
                                      const std::vector<std::vector<double>>& prev,
                                      double tol) {
  const std::size_t n = delta.size();
  std::size_t b = 0;
  while (b < n) {
    std::size_t e = b + 1;
    while (e < n && delta[e] - delta[e - 1] < tol) ++e;
    const std::size_t width = e - b;
    if (width >= 2) {
      // projection weight of each previous vector onto the degenerate span
      std::vector<std::pair<double, std::size_t>> weight;
      for (std::size_t t = 0; t < prev.size(); ++t) {
        double w = 0.0;
        for (std::size_t j = b; j < e; ++j) {
          const double c = vec_dot(prev[t], vecs[j]);
          w += c * c;
        }
        weight.emplace_back(-w, t);
      }
      std::stable_sort(weight.begin(), weight.end());
      std::vector<std::size_t> chosen;
      for (std::size_t t = 0; t < width; ++t) chosen.push_back(weight[t].second);
      std::sort(chosen.begin(), chosen.end());
      // Gram-Schmidt of the projections, in previous-order
      std::vector<std::vector<double>> aligned;
      for (std::size_t t : chosen) {
        std::vector<double> w(vecs[b].size(), 0.0);
        for (std::size_t j = b; j < e; ++j) {
          const double c = vec_dot(prev[t], vecs[j]);
          for (std::size_t k = 0; k < w.size(); ++k) w[k] += c * vecs[j][k];
        }
        for (const auto& u : aligned) {
          const double c = vec_dot(u, w);
          for (std::size_t k = 0; k < w.size(); ++k) w[k] -= c * u[k];
        }
        const double norm = std::sqrt(vec_dot(w, w));
        if (norm < 1e-8) {
          aligned.clear();
          break;  // projections rank-deficient: keep the raw basis
        }
        for (double& v : w) v /= norm;
        aligned.push_back(std::move(w));
      }
      if (aligned.size() == width)
        for (std::size_t j = 0; j < width; ++j) vecs[b + j] = std::move(aligned[j]);
    }
    b = e;
  }
}

// greedy identity assignment: band b at the current point gets the identity
// of the best-matching previous vector; returns worst matching overlap
inline std::pair<std::vector<int>, double> greedy_match(
    const std::vector<std::vector<double>>& prev_by_track,
    const std::vector<std::vector<double>>& cur) {
  const std::size_t nb = cur.size();
  std::vector<int> assign(nb, 0);
  std::vector<bool> track_used(nb, false), band_used(nb, false);
  double worst = 1.0;
  for (std::size_t round = 0; round < nb; ++round) {
    double best = -1.0;
    std::size_t bt = 0, bb = 0;
    for (std::size_t t = 0; t < nb; ++t) {
      if (track_used[t]) continue;
      for (std::size_t b = 0; b < nb; ++b) {
        if (band_used[b]) continue;
        const double o = std::abs(vec_dot(prev_by_track[t], cur[b]));
        if (o > best) {
          best = o;
          bt = t;
          bb = b;
        }
      }
    }
    track_used[bt] = true;
    band_used[bb] = true;
    assign[bb] = static_cast<int>(bt);
    worst = std::min(worst, best);
  }
  return {std::move(assign), worst};
}

// Replace the vectors of `bands` by their matched tracks projected onto the
// joint span of those bands.  Rescue for eigenbasis jumps narrower than the
// position resolution: the individual vectors inside a nearly-degenerate
// subspace are not trustworthy there, but the subspace itself is continuous.
inline bool align_subspace(std::vector<std::vector<double>>& vecs,
                           const std::vector<std::size_t>& bands,
                           const std::vector<std::size_t>& tracks,
                           const std::vector<std::vector<double>>& prev) {
  const std::size_t dim = vecs.front().size();
  std::vector<std::vector<double>> aligned;
  for (std::size_t t : tracks) {
    std::vector<double> w(dim, 0.0);
    for (std::size_t b : bands) {
      const double c = vec_dot(prev[t], vecs[b]);
      for (std::size_t k = 0; k < dim; ++k) w[k] += c * vecs[b][k];
    }
    for (const auto& u : aligned) {
      const double c = vec_dot(u, w);
      for (std::size_t k = 0; k < dim; ++k) w[k] -= c * u[k];
    }
    const double norm = std::sqrt(vec_dot(w, w));
    if (norm < 1e-8) return false;  // projections rank-deficient: keep raw
    for (double& v : w) v /= norm;
    aligned.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < bands.size(); ++i) vecs[bands[i]] = std::move(aligned[i]);
  return true;
}

constexpr double kTrackContinuity = 0.92;  // refine hops whose matching is worse

// Assign identities across one hop a → b, bisecting the hop (solving extra
// midpoints) until every sub-hop's eigenvector rotation is resolved.  Keeps
// identity assignment meaningful on grids much coarser than the avoided-
// crossing hybridization zones.  Exact crossings need no refinement: their
// eigenvectors do not rotate, so the diabatic greedy match is already clean.
template <class Solver>
std::vector<int> refine_hop(const std::vector<std::vector<double>>& by_track_a,
                            double xa, double xb, const std::vector<double>& delta_b,
                            std::vector<std::vector<double>>& vecs_b, int depth,
                            double* min_overlap, const Solver& solve_at) {
  // Cluster only at the eigensolver's resolution floor.  A looser tolerance
  // would rotate the basis inside narrow avoided crossings and hand a frame
  // discontinuity to the neighbouring sub-hops at the tolerance edge; the
  // bisection below resolves those rotations on its own.
  const double degeneracy_tol = 1e-15;
  align_degenerate_clusters(delta_b, vecs_b, by_track_a, degeneracy_tol);
  auto [assign, worst] = greedy_match(by_track_a, vecs_b);
  const bool interval_spent =
      !(xb - xa > 1e-14 * std::max({std::abs(xa), std::abs(xb), 1e-9}));
  if (interval_spent && worst < kTrackContinuity) {
    // The hop is below position resolution, so a residual mismatch is an
    // eigenbasis ambiguity inside a nearly-degenerate subspace (for example
    // the hard edge of the cluster tolerance above), not a real rotation.
    // Hand that subspace the incoming frame and rematch.
    std::vector<std::size_t> bands, tracks;
    for (std::size_t b = 0; b < vecs_b.size(); ++b) {
      const auto t = static_cast<std::size_t>(assign[b]);
      if (std::abs(vec_dot(by_track_a[t], vecs_b[b])) < kTrackContinuity) {
        bands.push_back(b);
        tracks.push_back(t);
      }
    }
    if (bands.size() >= 2 && align_subspace(vecs_b, bands, tracks, by_track_a)) {
      auto rematch = greedy_match(by_track_a, vecs_b);
      assign = std::move(rematch.first);
      worst = rematch.second;
    }
  }
  if (worst >= kTrackContinuity || depth <= 0 || interval_spent) {
    *min_overlap = std::min(*min_overlap, worst);
    return assign;
  }
  const double xm = 0.5 * (xa + xb);
  DetuningSolution mid = solve_at(xm);
  const std::vector<int> assign_m = refine_hop(by_track_a, xa, xm, mid.detunings,
                                               mid.vectors, depth - 1, min_overlap,
                                               solve_at);
  std::vector<std::vector<double>> by_track_m(vecs_b.size());
  for (std::size_t b = 0; b < mid.vectors.size(); ++b)
    by_track_m[static_cast<std::size_t>(assign_m[b])] = std::move(mid.vectors[b]);
  return refine_hop(by_track_m, xm, xb, delta_b, vecs_b, depth - 1, min_overlap,
                    solve_at);
}

template <class Solver>
void assign_tracks(BandStructure& bs, const Solver& solve_at) {
  const std::size_t np = bs.positions.size();
  const std::size_t nb = bs.bands();
  bs.track.assign(np, std::vector<int>(nb, 0));
  for (std::size_t b = 0; b < nb; ++b) bs.track[0][b] = static_cast<int>(b);
  for (std::size_t p = 1; p < np; ++p) {
    // previous vectors ordered by track id
    std::vector<std::vector<double>> prev(nb);
    for (std::size_t b = 0; b < nb; ++b)
      prev[static_cast<std::size_t>(bs.track[p - 1][b])] = bs.composition[p - 1][b];
    bs.track[p] = refine_hop(prev, bs.positions[p - 1], bs.positions[p],
                             bs.detuning[p], bs.composition[p], 42,
                             &bs.min_track_overlap, solve_at);
  }
}

}  // namespace detail

// Solve the coupled multiplet on a position grid.  Grid points are
// independent and computed in parallel; the identity-tracking pass that
// follows is sequential, so results are deterministic for any thread count.
inline BandStructure band_sweep(const std::vector<double>& positions,
                                const MembraneConfig& membrane,
                                const CavityGeometry& geom,
                                const std::vector<ModeIndex>& mode_set,
                                Method method = Method::analytic, int threads = 1,
                                double rel_tol = 1e-7) {
  if (positions.empty()) throw config_error("band_sweep needs a nonempty position grid");
  for (std::size_t i = 1; i < positions.size(); ++i)
    if (!(positions[i] > positions[i - 1]))
      throw config_error("band_sweep positions must increase strictly");
  if (mode_set.empty()) throw config_error("band_sweep needs a nonempty mode set");
  BandStructure bs(geom);
  bs.membrane = membrane;
  bs.mode_set = mode_set;
  bs.method = method;
  bs.positions = positions;
  bs.reference_wavenumber = geom.resonant_wavenumber(mode_set[0]);
  bs.fsr_fraction =
      3.14159265358979323846 / (bs.reference_wavenumber * geom.length);
  bs.offsets.resize(mode_set.size());
  for (std::size_t j = 0; j < mode_set.size(); ++j) {
    const double r = geom.resonant_wavenumber(mode_set[j]) / bs.reference_wavenumber;
    bs.offsets[j] = r * r - 1.0;
  }
  const std::size_t np = positions.size();
  bs.detuning.resize(np);
  bs.composition.resize(np);
  std::vector<char> domain(np, 0);
  parallel_for(np, threads, [&](std::size_t i) {
    MembraneConfig m = membrane;
    m.position = positions[i];
    CouplingMatrix cm = assemble_matrix(mode_set, geom, m, method, 1, rel_tol);
    DetuningSolution sol = solve_detunings(cm);
    bs.detuning[i] = std::move(sol.detunings);
    bs.composition[i] = std::move(sol.vectors);
    domain[i] = cm.analytic_domain_exceeded ? 1 : 0;
  });
  for (char d : domain)
    if (d) bs.analytic_domain_exceeded = true;
  detail::assign_tracks(bs, [&](double x) {
    MembraneConfig m = membrane;
    m.position = x;
    return solve_detunings(assemble_matrix(mode_set, geom, m, method, 1, rel_tol));
  });
  return bs;
}

// ---------------------------------------------------------------------------
// avoided crossings

struct AvoidedCrossing {
  std::string label;             // "TL","TR","BL","BR", or empty
  ModeIndex partner_a{}, partner_b{};  // diabatic pair, a = reference mode when present
  double center_position = 0.0;  // [m]
  double center_detuning = 0.0;  // fractional δ of the degeneracy point
  double gap_fractional = 0.0;   // adiabatic minimum separation in δ
  double gap_hz = 0.0;           // the same in laser-frequency Hz
  double coupling_fractional = 0.0;  // signed off-diagonal element at the center
  double asymptotic_slope = 0.0;     // a [Hz/m], far-section slope of the hyperbola
  double curvature = 0.0;            // [Hz/m²], measured at the upper-branch turning point
  double hyperbola_curvature = 0.0;  // 2a²/Δf, ideal two-level value
  double effective_reflectivity = 0.0;  // |r|² of the equivalent sheet, in [0,1)
  bool true_crossing = false;    // separation at the numerical floor
};

namespace detail {

struct CrossingContext {
  CavityGeometry geom;
  MembraneConfig membrane;
  std::vector<ModeIndex> modes;
  Method method = Method::analytic;
  double rel_tol = 1e-7;
  std::vector<double> offsets;
  double k_ref = 0.0;
  double nu0 = 0.0;

  CrossingContext(const CavityGeometry& g, const MembraneConfig& mem,
                  std::vector<ModeIndex> set, Method meth, double tol)
      : geom(g), membrane(mem), modes(std::move(set)), method(meth), rel_tol(tol) {
    k_ref = geom.resonant_wavenumber(modes[0]);
    nu0 = k_ref * kSpeedOfLight / (2.0 * 3.14159265358979323846);
    offsets.resize(modes.size());
    for (std::size_t j = 0; j < modes.size(); ++j) {
      const double r = geom.resonant_wavenumber(modes[j]) / k_ref;
      offsets[j] = r * r - 1.0;
    }
  }

  // closed-form diabatic diagonal g_i − V_ii (anchoring only)
  double diag(std::size_t i, double x) const {
    MembraneConfig m = membrane;
    m.position = x;
    return offsets[i] - vij_analytic(modes[i], modes[i], geom, m);
  }
  double diag_diff(std::size_t i, std::size_t j, double x) const {
    return diag(i, x) - diag(j, x);
  }

  CouplingMatrix matrix(double x) const {
    MembraneConfig m = membrane;
    m.position = x;
    return assemble_matrix(modes, geom, m, method, 1, rel_tol);
  }
};

// two adiabatic branches carrying the (i, j) character at position x, in Hz
struct BranchSample {
  double lo_hz, hi_hz, lo_delta, hi_delta;
};

inline BranchSample branch_sample(const CrossingContext& c, std::size_t i,
                                  std::size_t j, double x) {
  const CouplingMatrix cm = c.matrix(x);
  const DetuningSolution sol = solve_detunings(cm);
  const std::size_t nb = sol.detunings.size();
  std::size_t b1 = 0, b2 = 1;
  double p1 = -1.0, p2 = -1.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const double w =
        sol.vectors[b][i] * sol.vectors[b][i] + sol.vectors[b][j] * sol.vectors[b][j];
    if (w > p1) {
      p2 = p1;
      b2 = b1;
      p1 = w;
      b1 = b;
    } else if (w > p2) {
      p2 = w;
      b2 = b;
    }
  }
  const double dl = std::min(sol.detunings[b1], sol.detunings[b2]);
  const double dh = std::max(sol.detunings[b1], sol.detunings[b2]);
  return {fractional_shift(dl) * c.nu0, fractional_shift(dh) * c.nu0, dl, dh};
}

// quadratic refinement of a grid minimum at uniform spacing h
inline void parabola_min(double h, double s1, double s2, double s3, double* xoff,
                         double* smin) {
  const double denom = s3 - 2.0 * s2 + s1;
  if (denom > 0.0) {
    double off = 0.5 * h * (s1 - s3) / denom;
    if (std::abs(off) > h) off = (off > 0 ? h : -h);
    double v = s2 - 0.125 * (s3 - s1) * (s3 - s1) / denom;
    *xoff = off;
    *smin = std::max(v, 0.0);
  } else {
    *xoff = 0.0;
    *smin = s2;
  }
}

inline AvoidedCrossing extract_crossing(const CrossingContext& c, std::size_t i,
                                        std::size_t j, double xa, double xb) {
  // bisect the diabatic degeneracy
  double fa = c.diag_diff(i, j, xa);
  double fb = c.diag_diff(i, j, xb);
  if (fa == 0.0 && fb == 0.0)
    throw numerical_error("crossing bracket degenerate");
  if (fa * fb > 0.0) throw numerical_error("crossing bracket lost its sign change");
  for (int it = 0; it < 72; ++it) {
    const double xm = 0.5 * (xa + xb);
    const double fm = c.diag_diff(i, j, xm);
    if (fm == 0.0) {
      xa = xb = xm;
      break;
    }
    if (fa * fm < 0.0) {
      xb = xm;
      fb = fm;
    } else {
      xa = xm;
      fa = fm;
    }
  }
  const double xc = 0.5 * (xa + xb);

  AvoidedCrossing out;
  out.partner_a = c.modes[i];
  out.partner_b = c.modes[j];
  out.center_position = xc;
  out.center_detuning = 0.5 * (c.diag(i, xc) + c.diag(j, xc));

  const CouplingMatrix cm = c.matrix(xc);
  const std::size_t n = c.modes.size();
  out.coupling_fractional = -cm.value[i * n + j];

  // diabatic relative slope → far-section asymptotic slope of the hyperbola
  const double hs = 2e-10;
  const double dslope =
      (c.diag_diff(i, j, xc + hs) - c.diag_diff(i, j, xc - hs)) / (2.0 * hs);
  const double a_delta = 0.5 * std::abs(dslope);
  if (!(a_delta > 1e-3))
    throw numerical_error("diabatic lines nearly parallel at the crossing");
  out.asymptotic_slope = 0.5 * a_delta * c.nu0;  // d(Δν)/dδ = ν0/2 at δ ≪ 1

  // hybridization window, capped well inside one flank
  const double gap0 = std::max(2.0 * std::abs(out.coupling_fractional), 1e-12);
  double gw = gap0 / (2.0 * a_delta);
  double W = std::clamp(8.0 * gw, 2e-10, 5e-8);

  const int N = 121;
  std::vector<double> xs(N), sep_hz(N), sep_delta(N), upper_hz(N);
  int arg = 0;
  for (int attempt = 0; attempt < 3; ++attempt) {
    for (int k = 0; k < N; ++k) {
      xs[k] = xc - W + 2.0 * W * static_cast<double>(k) / (N - 1);
      const BranchSample s = branch_sample(c, i, j, xs[k]);
      sep_hz[k] = s.hi_hz - s.lo_hz;
      sep_delta[k] = s.hi_delta - s.lo_delta;
      upper_hz[k] = s.hi_hz;
    }
    arg = static_cast<int>(std::min_element(sep_hz.begin(), sep_hz.end()) -
                           sep_hz.begin());
    if (arg >= 2 && arg <= N - 3) break;
    const double wider = W * 3.0;
    if (wider > 5e-8) break;
    W = wider;
  }
  const double hgrid = 2.0 * W / (N - 1);
  double xoff = 0.0, gap_hz = sep_hz[arg];
  double gap_delta = sep_delta[arg];
  if (arg >= 1 && arg <= N - 2) {
    parabola_min(hgrid, sep_hz[arg - 1], sep_hz[arg], sep_hz[arg + 1], &xoff, &gap_hz);
    double dummy;
    parabola_min(hgrid, sep_delta[arg - 1], sep_delta[arg], sep_delta[arg + 1], &dummy,
                 &gap_delta);
  }
  out.gap_hz = gap_hz;
  out.gap_fractional = gap_delta;
  // floor: smallest separation a zero-coupling crossing resolves on this grid
  const double edge_sep = 0.5 * (sep_hz.front() + sep_hz.back());
  const double grid_floor = out.asymptotic_slope * hgrid;
  out.true_crossing = gap_hz < std::max(1e-3 * edge_sep, 3.0 * grid_floor);
  out.hyperbola_curvature =
      2.0 * out.asymptotic_slope * out.asymptotic_slope / std::max(gap_hz, 1e-12);

  // turning point of the upper branch, then a five-point stencil
  int atp = static_cast<int>(std::min_element(upper_hz.begin(), upper_hz.end()) -
                             upper_hz.begin());
  double xtp = xs[atp];
  if (atp >= 1 && atp <= N - 2) {
    const double denom = upper_hz[atp + 1] - 2.0 * upper_hz[atp] + upper_hz[atp - 1];
    if (denom > 0.0) {
      double off = 0.5 * hgrid * (upper_hz[atp - 1] - upper_hz[atp + 1]) / denom;
      if (std::abs(off) > hgrid) off = (off > 0 ? hgrid : -hgrid);
      xtp += off;
    }
  }
  const double hk = std::clamp(gw / 20.0, 1e-13, 1e-9);
  double f[5];
  for (int k = -2; k <= 2; ++k)
    f[k + 2] = branch_sample(c, i, j, xtp + k * hk).hi_hz;
  out.curvature = std::abs(
      (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * hk * hk));

  const double lambda_ref = 2.0 * 3.14159265358979323846 / c.k_ref;
  out.effective_reflectivity =
      out.curvature > 0.0
          ? curvature_to_reflectivity(out.curvature, c.geom.length, lambda_ref)
          : 0.0;
  return out;
}

// Fig-style labels: cluster singlet × even-partner events into lens flanks
// (left/right) and, within each flank, top/bottom by crossing detuning.
inline void label_crossings(std::vector<AvoidedCrossing>& events,
                            const CrossingContext& c) {
  const ModeIndex fund = c.modes[0];
  std::vector<std::size_t> cand;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& ev = events[e];
    if (!(ev.partner_a == fund)) continue;
    const ModeIndex& p = ev.partner_b;
    if ((p.m - fund.m) % 2 != 0 || (p.n - fund.n) % 2 != 0) continue;
    cand.push_back(e);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    return events[a].center_position < events[b].center_position;
  });
  const double period = 3.14159265358979323846 / c.k_ref;  // λ_ref/2
  // flank clusters
  std::vector<std::vector<std::size_t>> flanks;
  for (std::size_t idx : cand) {
    if (flanks.empty() || events[idx].center_position -
                                  events[flanks.back().back()].center_position >
                              period / 16.0)
      flanks.emplace_back();
    flanks.back().push_back(idx);
  }
  // consecutive flank pairs closer than a third of a period form one lens
  std::size_t f = 0;
  while (f + 1 < flanks.size()) {
    const double spacing = events[flanks[f + 1].front()].center_position -
                           events[flanks[f].back()].center_position;
    if (spacing < period / 3.0 && flanks[f].size() == 2 && flanks[f + 1].size() == 2) {
      auto assign = [&](const std::vector<std::size_t>& flank, const char* top,
                        const char* bottom) {
        std::size_t a = flank[0], b = flank[1];
        bool a_top;
        if (events[a].center_detuning != events[b].center_detuning) {
          a_top = events[a].center_detuning > events[b].center_detuning;
        } else {
          // degenerate flank: deterministic tie-break by partner order
          auto rank = [&](const ModeIndex& m) {
            for (std::size_t q = 0; q < c.modes.size(); ++q)
              if (c.modes[q] == m) return q;
            return c.modes.size();
          };
          a_top = rank(events[a].partner_b) > rank(events[b].partner_b);
        }
        events[a_top ? a : b].label = top;
        events[a_top ? b : a].label = bottom;
      };
      assign(flanks[f], "TL", "BL");
      assign(flanks[f + 1], "TR", "BR");
      f += 2;
    } else {
      ++f;
    }
  }
}

}  // namespace detail

// Locate and refine all avoided crossings covered by a band structure.
// Anchors come from sign changes of the reconstructed diabatic diagonals
// d_i(x) = Σ_b δ_b c_{b,i}²; each anchor is polished on the closed-form
// diagonals and the gap is measured on a locally refined adiabatic sweep
// (grid step ≤ gap width / 20 for the curvature stencil).
inline std::vector<AvoidedCrossing> find_crossings(const BandStructure& bs) {
  if (bs.positions.size() < 2) throw config_error("find_crossings needs a position sweep");
  const std::size_t np = bs.positions.size();
  const std::size_t nb = bs.bands();
  detail::CrossingContext ctx(bs.geometry, bs.membrane, bs.mode_set, bs.method, 1e-7);

  // diabatic diagonals from the stored eigensystem
  std::vector<std::vector<double>> diag(np, std::vector<double>(nb, 0.0));
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t i = 0; i < nb; ++i) {
      double d = 0.0;
      for (std::size_t b = 0; b < nb; ++b)
        d += bs.detuning[p][b] * bs.composition[p][b][i] * bs.composition[p][b][i];
      diag[p][i] = d;
    }

  double scale = 1e-9;
  for (double g : bs.offsets) scale = std::max(scale, std::abs(g));

  std::vector<AvoidedCrossing> out;
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = i + 1; j < nb; ++j) {
      double fmax = 0.0;
      for (std::size_t p = 0; p < np; ++p)
        fmax = std::max(fmax, std::abs(diag[p][i] - diag[p][j]));
      if (fmax < 1e-6 * scale) continue;  // identical lines, no isolated crossing
      for (std::size_t p = 0; p + 1 < np; ++p) {
        const double f0 = diag[p][i] - diag[p][j];
        const double f1 = diag[p + 1][i] - diag[p + 1][j];
        if (!(f0 == 0.0 ? f1 != 0.0 : f0 * f1 < 0.0)) continue;
        double xa = bs.positions[p], xb = bs.positions[p + 1];
        // re-bracket on the closed-form diagonals used for polishing
        double ga = ctx.diag_diff(i, j, xa), gb = ctx.diag_diff(i, j, xb);
        if (ga * gb > 0.0) {
          const double w = xb - xa;
          xa -= w;
          xb += w;
          ga = ctx.diag_diff(i, j, xa);
          gb = ctx.diag_diff(i, j, xb);
          if (ga * gb > 0.0) continue;  // reconstruction artifact
        }
        AvoidedCrossing ev = detail::extract_crossing(ctx, i, j, xa, xb);
        bool dup = false;
        for (const auto& prev : out)
          if (prev.partner_a == ev.partner_a && prev.partner_b == ev.partner_b &&
              std::abs(prev.center_position - ev.center_position) < 1e-11)
            dup = true;
        if (!dup) out.push_back(std::move(ev));
      }
    }
  }
  if (out.empty()) throw config_error("no crossing found in range");
  std::stable_sort(out.begin(), out.end(),
                   [](const AvoidedCrossing& a, const AvoidedCrossing& b) {
                     return a.center_position < b.center_position;
                   });
  detail::label_crossings(out, ctx);
  return out;
}

// ---------------------------------------------------------------------------
// labeled gap map over membrane offset and tilt

struct GapMap {
  static constexpr std::array<const char*, 4> kLabels{"TL", "TR", "BL", "BR"};
  std::vector<double> positions;  // x0 grid [m]
  std::vector<double> tilts;      // tilt_z grid [rad]
  // surfaces indexed [label][tilt][position]
  std::array<std::vector<std::vector<double>>, 4> gap_hz;
  std::array<std::vector<std::vector<double>>, 4> coupling;  // signed fractional
  std::array<std::vector<std::vector<double>>, 4> center;    // refined position [m]

  static std::size_t label_index(const std::string& label) {
    for (std::size_t q = 0; q < kLabels.size(); ++q)
      if (label == kLabels[q]) return q;
    throw config_error("unknown crossing label " + label);
  }
};

// Extract the four labeled gaps of the lens nearest each grid offset, for
// each tilt.  Operates on the nearly degenerate quadruplet; the tilt grid
// replaces membrane.tilt_z while tilt_y is kept from the base config.
inline GapMap gap_map(const std::vector<double>& positions,
                      const std::vector<double>& tilts, const MembraneConfig& membrane,
                      const CavityGeometry& geom, Method method = Method::analytic,
                      int threads = 1) {
  if (positions.empty() || tilts.empty())
    throw config_error("gap_map needs nonempty position and tilt grids");
  GapMap out;
  out.positions = positions;
  out.tilts = tilts;
  for (std::size_t q = 0; q < 4; ++q) {
    out.gap_hz[q].assign(tilts.size(), std::vector<double>(positions.size(), 0.0));
    out.coupling[q] = out.gap_hz[q];
    out.center[q] = out.gap_hz[q];
  }
  const auto quad = geom.quadruplet();
  const std::vector<ModeIndex> modes(quad.begin(), quad.end());
  const double x_R = geom.rayleigh_range;
  const double K =
      2.0 * geom.reference_wavenumber * x_R - 1.0;  // singlet diagonal phase rate
  const double period = 2.0 * 3.14159265358979323846 * x_R / K;

  const std::size_t total = tilts.size() * positions.size();
  parallel_for(total, threads, [&](std::size_t idx) {
    const std::size_t ti = idx / positions.size();
    const std::size_t xi = idx % positions.size();
    MembraneConfig mem = membrane;
    mem.tilt_z = tilts[ti];
    detail::CrossingContext ctx(geom, mem, modes, method, 1e-7);
    // lens of interest sits at the singlet node nearest the requested offset
    const double x_node =
        std::round(positions[xi] / period) * period;
    std::vector<AvoidedCrossing> events;
    for (std::size_t pj : {std::size_t(1), std::size_t(3)}) {
      const int ns = 181;
      double xprev = x_node - 0.25 * period;
      double fprev = ctx.diag_diff(0, pj, xprev);
      for (int s = 1; s < ns; ++s) {
        const double x = x_node - 0.25 * period +
                         0.5 * period * static_cast<double>(s) / (ns - 1);
        const double fx = ctx.diag_diff(0, pj, x);
        if (fprev == 0.0 ? fx != 0.0 : fprev * fx < 0.0)
          events.push_back(detail::extract_crossing(ctx, 0, pj, xprev, x));
        xprev = x;
        fprev = fx;
      }
    }
    if (events.size() != 4)
      throw numerical_error("gap_map expected four crossings per lens");
    std::stable_sort(events.begin(), events.end(),
                     [](const AvoidedCrossing& a, const AvoidedCrossing& b) {
                       return a.center_position < b.center_position;
                     });
    detail::label_crossings(events, ctx);
    for (const auto& ev : events) {
      if (ev.label.empty())
        throw numerical_error("gap_map failed to label a crossing");
      const std::size_t q = GapMap::label_index(ev.label);
      out.gap_hz[q][ti][xi] = ev.gap_hz;
      out.coupling[q][ti][xi] = ev.coupling_fractional;
      out.center[q][ti][xi] = ev.center_position;
    }
  });
  return out;
}

}  // namespace mim
