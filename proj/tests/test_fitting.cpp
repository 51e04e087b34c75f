#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "mim/fitting.hpp"
#include "mim/spectra.hpp"

using namespace mim;
using Catch::Approx;

namespace {

CavityGeometry reference_cavity() { return CavityGeometry(6.7e-2, 5e-2, 1.064e-6); }

double quadratic(const std::vector<double>& p, double x) {
  return p[0] + p[1] * x + p[2] * x * x;
}

}  // namespace

TEST_CASE("linear least squares reproduces exact data", "[fitting]") {
  auto model = [](const std::vector<double>& p, double x) { return p[0] + p[1] * x; };
  std::vector<double> xs{0, 1, 2, 3, 4}, ys;
  for (double x : xs) ys.push_back(1.5 - 0.25 * x);
  FitResult fr = least_squares(model, xs, ys, {}, {0.3, 0.1}, {"intercept", "slope"});
  CHECK(fr.converged);
  CHECK(fr.parameters[0] == Approx(1.5).epsilon(1e-12));
  CHECK(fr.parameters[1] == Approx(-0.25).epsilon(1e-12));
  CHECK(fr.residual_norm < 1e-12);
  CHECK(fr.parameter("slope") == fr.parameters[1]);
  CHECK(fr.sigma("intercept") >= 0.0);
  CHECK_THROWS_AS(fr.parameter("curvature"), config_error);
}

TEST_CASE("nonlinear round trip on noiseless model data", "[fitting]") {
  std::vector<double> truth{0.5, -1.2, 2.0};
  auto xs = linspace(-1.0, 1.0, 41);
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = quadratic(truth, xs[i]);
  FitResult fr = least_squares(quadratic, xs, ys, {}, {1.0, 1.0, 1.0});
  REQUIRE(fr.converged);
  for (int j = 0; j < 3; ++j)
    CHECK(fr.parameters[j] == Approx(truth[j]).epsilon(1e-6));
  // covariance symmetric and positive on the diagonal
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k)
      CHECK(fr.covariance[j * 3 + k] == Approx(fr.covariance[k * 3 + j]).margin(1e-30));
}

TEST_CASE("estimates are invariant under uniform weight rescaling", "[fitting]") {
  auto model = [](const std::vector<double>& p, double x) { return p[0] + p[1] * x; };
  std::vector<double> xs{0, 1, 2, 3, 4}, ys{1.52, 1.24, 1.01, 0.74, 0.52};
  std::vector<double> w1(5, 1.0), w2(5, 7.3);
  FitResult a = least_squares(model, xs, ys, w1, {1.0, -0.2});
  FitResult b = least_squares(model, xs, ys, w2, {1.0, -0.2});
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  for (int j = 0; j < 2; ++j) {
    CHECK(a.parameters[j] == Approx(b.parameters[j]).margin(1e-12));
    CHECK(a.uncertainties[j] == Approx(b.uncertainties[j]).margin(1e-14));
  }
  CHECK(a.uncertainties[1] > 0.0);
}

TEST_CASE("rank-deficient model is flagged without faulting", "[fitting]") {
  // the two parameters only ever appear as a sum: a flat valley, not an error
  auto model = [](const std::vector<double>& p, double x) { return (p[0] + p[1]) * x; };
  std::vector<double> xs{0, 1, 2, 3}, ys{0, 1, 2, 3};
  FitResult fr = least_squares(model, xs, ys, {}, {0.2, 0.3});
  CHECK_FALSE(fr.converged);
  CHECK(fr.parameters[0] + fr.parameters[1] == Approx(1.0).epsilon(1e-6));
  for (double c : fr.covariance) CHECK(std::isfinite(c));
}

TEST_CASE("least squares input validation", "[fitting]") {
  auto model = [](const std::vector<double>& p, double x) { return p[0] * x; };
  CHECK_THROWS_AS(least_squares(model, {1.0}, {1.0, 2.0}, {}, {1.0}), config_error);
  CHECK_THROWS_AS(least_squares(model, {}, {}, {}, {1.0}), config_error);
  const double nan = std::nan("");
  CHECK_THROWS_AS(least_squares(model, {1.0, nan}, {1.0, 2.0}, {}, {1.0}), config_error);
  CHECK_THROWS_AS(least_squares(model, {1.0, 2.0}, {1.0, 2.0}, {1.0, -1.0}, {1.0}),
                  config_error);
  CHECK_THROWS_AS(least_squares(model, {1.0, 2.0}, {1.0, 2.0}, {}, {1.0}, {"a", "b"}),
                  config_error);
  CHECK_THROWS_AS(least_squares(model, {1.0, 2.0}, {1.0, 2.0}, {}, {1.0}, {}, {0.0}),
                  config_error);
}

TEST_CASE("reported uncertainties cover the truth in Monte-Carlo trials", "[fitting]") {
  auto xs = linspace(-1.0, 1.0, 201);
  const MonteCarloSummary mc =
      monte_carlo_coverage(quadratic, xs, {0.5, -1.2, 2.0}, 0.05, 1000, 42u, 4);
  CHECK(mc.trials == 1000);
  CHECK(mc.coverage3 >= 0.99);
  CHECK(mc.coverage3 == Approx(0.991).margin(1e-9));
  CHECK(mc.spread[0] == Approx(5.223347e-3).epsilon(1e-4));
  CHECK(mc.spread[1] == Approx(6.115677e-3).epsilon(1e-4));
  CHECK(mc.spread[2] == Approx(1.188182e-2).epsilon(1e-4));

  // one generator per trial: identical results for any thread count
  const MonteCarloSummary m1 =
      monte_carlo_coverage(quadratic, xs, {0.5, -1.2, 2.0}, 0.05, 200, 42u, 1);
  const MonteCarloSummary m8 =
      monte_carlo_coverage(quadratic, xs, {0.5, -1.2, 2.0}, 0.05, 200, 42u, 8);
  CHECK(m1.coverage3 == m8.coverage3);
  for (int j = 0; j < 3; ++j) CHECK(m1.spread[j] == m8.spread[j]);
}

TEST_CASE("hyperbola fit round trip and degenerate gap", "[fitting]") {
  auto xs = linspace(-4.0, 5.0, 101);
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    ys[i] = 0.3 + std::hypot(2.5 * (xs[i] - 0.7), 0.5 * 1.8);
  HyperbolaFit h = fit_hyperbola(xs, ys);
  REQUIRE(h.fit.converged);
  CHECK(h.slope == Approx(2.5).epsilon(1e-9));
  CHECK(h.gap == Approx(1.8).epsilon(1e-9));
  CHECK(h.center == Approx(0.7).epsilon(1e-9));
  CHECK(h.offset == Approx(0.3).epsilon(1e-9));
  CHECK(h.curvature == Approx(2.0 * 2.5 * 2.5 / 1.8).epsilon(1e-9));

  // curvature consistency with a direct second difference of the fitted curve
  const double hw = 1e-4 * 0.5 * h.gap / h.slope;
  auto m = [&](double xi) {
    return h.offset + std::hypot(h.slope * (xi - h.center), 0.5 * h.gap);
  };
  const double fd =
      (m(h.center - hw) - 2.0 * m(h.center) + m(h.center + hw)) / (hw * hw);
  CHECK(fd == Approx(h.curvature).epsilon(1e-6));

  // gap → 0 degenerates to |a·x| without faulting
  auto xv = linspace(-3.0, 2.6, 57);
  std::vector<double> yv(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = 1.7 * std::abs(xv[i]);
  HyperbolaFit v = fit_hyperbola(xv, yv);
  CHECK(v.slope == Approx(1.7).epsilon(1e-9));
  CHECK(v.gap < 1e-10);

  // preconditions
  std::vector<double> mono(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) mono[i] = xs[i];
  CHECK_THROWS_AS(fit_hyperbola(xs, mono), config_error);
  CHECK_THROWS_AS(fit_hyperbola({0, 1, 2}, {1, 0, 1}), config_error);
  CHECK_THROWS_AS(fit_hyperbola(xs, std::vector<double>(xs.size(), 2.0)), config_error);
}

TEST_CASE("hyperbola fit agrees with crossing extraction on the reference lens",
          "[fitting]") {
  CavityGeometry geom = reference_cavity();
  MembraneConfig mem;
  mem.tilt_z = 0.395e-3;
  const auto quad = geom.quadruplet();
  detail::CrossingContext ctx(geom, mem, {quad.begin(), quad.end()},
                              Method::analytic, 1e-7);

  // lower-right event of the 325 µm lens, as reported by find_crossings
  const double xc_ref = 325.104901205e-6;
  const double gap_ref = 4.86012926e6;
  const double curv_ref = 1.811293e24;  // hyperbola curvature 2a²/Δf
  const double a_ref = std::sqrt(0.5 * curv_ref * gap_ref);

  SECTION("synthetic two-level data at the crossing's parameters") {
    auto xs = linspace(xc_ref - 6e-9, xc_ref + 6e-9, 241);
    std::vector<double> ys(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      ys[i] = std::hypot(a_ref * (xs[i] - xc_ref), 0.5 * gap_ref);
    HyperbolaFit h = fit_hyperbola(xs, ys);
    REQUIRE(h.fit.converged);
    CHECK(h.gap == Approx(gap_ref).epsilon(1e-6));
    CHECK(h.slope == Approx(a_ref).epsilon(1e-6));
    CHECK(h.center == Approx(xc_ref).margin(1e-12));
    CHECK(h.gap == Approx(gap_ref).epsilon(0.02));  // the headline agreement
  }

  SECTION("raw four-mode branch separation") {
    // The neighbouring upper-branch event sits only ~5.5 nm away, so its
    // repulsion bends the wings: the fitted gap parameter absorbs part of
    // that, but the fitted curve's minimum still lands on the extracted gap.
    for (double xc : {xc_ref, 324.999337466e-6}) {
      const double gap = xc == xc_ref ? gap_ref : 4.44145109e6;
      auto xs = linspace(xc - 2e-9, xc + 2e-9, 241);
      std::vector<double> half(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto b = detail::branch_sample(ctx, 0, 1, xs[i]);
        half[i] = 0.5 * (b.hi_hz - b.lo_hz);
      }
      HyperbolaFit h = fit_hyperbola(xs, half);
      REQUIRE(h.fit.converged);
      CHECK(2.0 * (h.offset + 0.5 * h.gap) == Approx(gap).epsilon(0.02));
      CHECK(h.center == Approx(xc).margin(1.5e-9));
    }
  }
}

TEST_CASE("band phase recovers the membrane displacement", "[fitting]") {
  CavityGeometry geom = reference_cavity();
  const auto quad = geom.quadruplet();
  MembraneConfig mem;
  auto series = [&](const ModeIndex& m, double center, double shift) {
    auto xs = linspace(center - 0.7e-6, center + 0.7e-6, 241);
    BandCurve bc = diagonal_band(m, xs, mem, geom);
    for (double& x : xs) x -= shift;
    return std::make_pair(xs, bc.detuning);
  };

  SECTION("round trip at 300 µm from the waist") {
    auto [xs_s, fs_s] = series(quad[0], 300e-6, 0.0);
    auto [xs_p, fs_p] = series(quad[1], 300e-6, 0.0);
    BandPhaseFit bp = fit_band_phase(xs_s, fs_s, xs_p, fs_p, geom);
    // sub-period systematic from the fixed-cosine approximation stays small
    CHECK(bp.displacement == Approx(300e-6).margin(1e-6));
    CHECK(bp.displacement == Approx(3.003018562850e-4).margin(2e-9));
    CHECK(bp.frequency_difference == Approx(-64.3425).margin(1e-3));
    CHECK(bp.displacement_sigma > 0.0);
    CHECK(bp.displacement_sigma < 5e-9);
    CHECK(bp.singlet.converged);
    CHECK(bp.partner.converged);

    // the estimate comes from the relative phase, not the coordinate origin
    auto [xr_s, fr_s] = series(quad[0], 300e-6, 137e-6);
    auto [xr_p, fr_p] = series(quad[1], 300e-6, 137e-6);
    BandPhaseFit shifted = fit_band_phase(xr_s, fr_s, xr_p, fr_p, geom);
    CHECK(shifted.displacement == Approx(bp.displacement).margin(1e-10));
  }

  SECTION("window at the waist recovers zero") {
    auto [xs_s, fs_s] = series(quad[0], 0.0, 0.0);
    auto [xs_p, fs_p] = series(quad[1], 0.0, 0.0);
    BandPhaseFit bp = fit_band_phase(xs_s, fs_s, xs_p, fs_p, geom);
    CHECK(bp.phase_difference == 0.0);
    CHECK(bp.displacement == 0.0);
  }

  SECTION("noisy series stay within the reported uncertainty") {
    auto [xs_s, fs_s] = series(quad[0], 300e-6, 0.0);
    auto [xs_p, fs_p] = series(quad[1], 300e-6, 0.0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 2e-8);
    for (double& v : fs_s) v += g(rng);
    for (double& v : fs_p) v += g(rng);
    BandPhaseFit bp = fit_band_phase(xs_s, fs_s, xs_p, fs_p, geom);
    CHECK(std::abs(bp.displacement - 300e-6) < 3.0 * bp.displacement_sigma);
    CHECK(bp.displacement_sigma < 1e-4);
  }

  SECTION("a window under two periods is rejected") {
    auto xs = linspace(300e-6 - 0.2e-6, 300e-6 + 0.2e-6, 41);
    BandCurve bs = diagonal_band(quad[0], xs, mem, geom);
    BandCurve bt = diagonal_band(quad[1], xs, mem, geom);
    CHECK_THROWS_AS(fit_band_phase(xs, bs.detuning, xs, bt.detuning, geom),
                    config_error);
  }
}

TEST_CASE("partner splitting scales as tilt squared and inverts", "[fitting]") {
  CavityGeometry geom = reference_cavity();
  MembraneConfig mem;
  mem.position = 325e-6;

  CHECK(triplet_splitting(0.0, mem, geom) == 0.0);

  const double s_lo = triplet_splitting(0.05e-3, mem, geom);
  const double s_hi = triplet_splitting(0.30e-3, mem, geom);
  const double slope = std::log(s_hi / s_lo) / std::log(6.0);
  CHECK(slope == Approx(2.0).margin(0.05));
  CHECK(slope == Approx(1.989731).margin(1e-4));

  // the reference-lens configuration reproduces the observed splitting scale
  CHECK(triplet_splitting(0.395e-3, mem, geom) ==
        Approx(2.147682736753e7).epsilon(1e-9));

  for (double alpha : {0.1e-3, 0.25e-3, 0.395e-3, 1.0e-3}) {
    const double s = triplet_splitting(alpha, mem, geom);
    CHECK(splitting_to_tilt(s, mem, geom) == Approx(alpha).epsilon(1e-10));
  }
  CHECK(splitting_to_tilt(0.0, mem, geom) == 0.0);
  CHECK_THROWS_AS(splitting_to_tilt(-1.0, mem, geom), config_error);
  CHECK_THROWS_AS(splitting_to_tilt(1e12, mem, geom), config_error);
}

TEST_CASE("tilt-stage calibration fits conversion and residual misalignment",
          "[fitting]") {
  CHECK(kLeverArmConversion == Approx(0.0787).margin(1e-4));

  std::vector<double> q;
  for (int i = -10; i <= 10; ++i) q.push_back(2.0 * i);

  SECTION("noiseless round trip") {
    std::vector<double> al;
    for (double qi : q) al.push_back(std::hypot(0.0756 * qi, 0.16));
    TiltCalibration tc = fit_tilt_calibration(q, al);
    REQUIRE(tc.fit.converged);
    CHECK(tc.conversion == Approx(0.0756).epsilon(1e-6));
    CHECK(tc.residual_misalignment == Approx(0.16).epsilon(1e-6));
  }

  SECTION("noisy data recovered within the reported sigma") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 0.01);
    std::vector<double> al, w;
    for (double qi : q) {
      al.push_back(std::hypot(0.0756 * qi, 0.16) + g(rng));
      w.push_back(1.0 / (0.01 * 0.01));
    }
    TiltCalibration tc = fit_tilt_calibration(q, al, w);
    REQUIRE(tc.fit.converged);
    CHECK(std::abs(tc.conversion - 0.0756) < 3.0 * tc.conversion_sigma);
    CHECK(std::abs(tc.residual_misalignment - 0.16) < 3.0 * tc.misalignment_sigma);
    CHECK(tc.conversion_sigma > 0.0);
    CHECK(tc.conversion_sigma < 1e-3);
  }

  SECTION("zero residual misalignment") {
    std::vector<double> al;
    for (double qi : q) al.push_back(std::abs(0.0756 * qi));
    TiltCalibration tc = fit_tilt_calibration(q, al);
    CHECK(tc.conversion == Approx(0.0756).epsilon(1e-9));
    CHECK(tc.residual_misalignment < 1e-10);
    CHECK(std::isfinite(tc.misalignment_sigma));
  }

  SECTION("input validation") {
    CHECK_THROWS_AS(fit_tilt_calibration({1.0, 2.0}, {0.1, 0.2}), config_error);
    CHECK_THROWS_AS(fit_tilt_calibration({1, 2, 3}, {0.1, 0.2}), config_error);
    CHECK_THROWS_AS(fit_tilt_calibration({0, 0, 0}, {0.1, 0.1, 0.1}), config_error);
  }
}
