#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "mim/hermite.hpp"
#include "mim/linalg.hpp"
#include "mim/parallel.hpp"
#include "mim/quadrature.hpp"

using Catch::Approx;
using cplx = std::complex<double>;

namespace {
const double kRtPi = std::sqrt(std::numbers::pi);
}

TEST_CASE("Gauss-Legendre nodes integrate polynomials exactly") {
  const auto gl = mim::gauss_legendre(8);
  double wsum = 0.0;
  for (double w : gl.w) wsum += w;
  CHECK(wsum == Approx(2.0).epsilon(1e-14));
  for (int k = 0; k <= 15; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < gl.x.size(); ++i) s += gl.w[i] * std::pow(gl.x[i], k);
    const double want = (k % 2 == 0) ? 2.0 / (k + 1) : 0.0;
    CHECK(std::abs(s - want) < 1e-13);
  }
  const auto gl16 = mim::gauss_legendre_cached(16);
  double e = 0.0;
  for (std::size_t i = 0; i < gl16.x.size(); ++i) e += gl16.w[i] * std::exp(gl16.x[i]);
  CHECK(e == Approx(std::exp(1.0) - std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("Gauss-Hermite rules at small and large order") {
  for (int n : {7, 24, 25, 48, 96, 144}) {
    const auto& gh = mim::gauss_hermite_cached(n);
    REQUIRE(static_cast<int>(gh.x.size()) == n);
    double wsum = 0.0, x2 = 0.0;
    for (std::size_t i = 0; i < gh.x.size(); ++i) {
      wsum += gh.w[i];
      x2 += gh.w[i] * gh.x[i] * gh.x[i];
    }
    CHECK(wsum == Approx(kRtPi).epsilon(1e-12));
    CHECK(x2 == Approx(0.5 * kRtPi).epsilon(1e-11));
  }
  // degree-12 polynomial, exact for n >= 7
  const auto& gh = mim::gauss_hermite_cached(24);
  double h6 = 0.0, osc = 0.0;
  for (std::size_t i = 0; i < gh.x.size(); ++i) {
    const double h = mim::hermite_poly(6, gh.x[i]);
    h6 += gh.w[i] * h * h;
    osc += gh.w[i] * std::cos(2.0 * gh.x[i]);
  }
  CHECK(h6 == Approx(64.0 * 720.0 * kRtPi).epsilon(1e-12));
  // ∫ e^{-x²} cos(2x) = √π e^{-1}
  CHECK(osc == Approx(kRtPi * std::exp(-1.0)).epsilon(1e-12));
  // odd order keeps the origin as a node
  const auto& gh25 = mim::gauss_hermite_cached(25);
  CHECK(gh25.x[12] == 0.0);
}

TEST_CASE("Adaptive composite Gauss-Legendre") {
  bool conv = false;
  double achieved = 1.0;
  const double s = mim::integrate_adaptive([](double x) { return std::sin(x); }, 0.0,
                                           std::numbers::pi, 1e-13, 14, &conv, &achieved);
  CHECK(conv);
  CHECK(achieved <= 1e-13);
  CHECK(s == Approx(2.0).epsilon(1e-13));
  const double c = mim::integrate_adaptive([](double x) { return std::cos(40.0 * x); }, 0.0,
                                           1.0, 1e-13);
  CHECK(c == Approx(std::sin(40.0) / 40.0).margin(1e-13));
}

TEST_CASE("Legendre oscillatory moments") {
  const double w = 3.7;
  const auto mu = mim::legendre_oscillatory_moments(3, w);
  CHECK(std::abs(mu[0] - cplx(2.0 * std::sin(w) / w, 0.0)) < 1e-14);
  const cplx want1 = cplx(0.0, 2.0) * (std::sin(w) / (w * w) - std::cos(w) / w);
  CHECK(std::abs(mu[1] - want1) < 1e-14);
  const auto mun = mim::legendre_oscillatory_moments(3, -w);
  for (int n = 0; n <= 3; ++n) CHECK(std::abs(mun[n] - std::conj(mu[n])) < 1e-15);
}

TEST_CASE("Filon quadrature handles rapid oscillation") {
  // Tolerances: at per-panel phase ω ~ 5e2..6e3 the spherical-Bessel moments
  // carry a few-ulp error each, and the cancelling panel sum leaves ~1e-10
  // relative — an ulp floor, not a convergence failure (the moderate-ω case
  // below verifies 1e-9 against brute force with a 1e-13 reference).

  // constant envelope, huge phase rate: analytic antiderivative
  const double W = 1.0e6, a = 0.0, b = 0.067;
  auto one = [](double) { return cplx(1.0, 0.0); };
  const cplx want = (std::exp(cplx(0.0, W * b)) - std::exp(cplx(0.0, W * a))) / cplx(0.0, W);
  const cplx got = mim::filon_integrate(one, a, b, W, 64, 12);
  CHECK(std::abs(got - want) < 1e-9 * std::abs(want));

  // exponential envelope at the intracavity 2k scale
  const double W2 = 1.18e7, alpha = 3.0, a2 = -0.0335, b2 = 0.0335;
  auto env = [&](double x) { return cplx(std::exp(alpha * x), 0.0); };
  const cplx denom(alpha, W2);
  const cplx want2 = (std::exp(cplx(alpha * b2, W2 * b2)) - std::exp(cplx(alpha * a2, W2 * a2))) / denom;
  const cplx got2 = mim::filon_integrate(env, a2, b2, W2, 64, 12);
  CHECK(std::abs(got2 - want2) < 1e-8 * std::abs(want2));

  // moderate oscillation cross-checked against brute-force adaptive quadrature
  const double W3 = 500.0;
  auto smooth = [](double x) { return cplx(std::exp(-x * x / 4e-4) * (1.0 + x), 0.0); };
  auto brute_f = [&](double x) { return smooth(x) * std::exp(cplx(0.0, W3 * x)); };
  const cplx brute = mim::integrate_adaptive(brute_f, 0.0, 0.067, 1e-13);
  const cplx filon = mim::filon_integrate(smooth, 0.0, 0.067, W3, 32, 12);
  CHECK(std::abs(filon - brute) < 1e-9 * std::abs(brute));
}

TEST_CASE("Jacobi eigensolver on symmetric matrices") {
  // 2x2 two-level: eigenvalues ±|V|
  const double V = 3.5e-6;
  auto e2 = mim::jacobi_eigensolve({0.0, V, V, 0.0}, 2);
  CHECK(e2.values[0] == Approx(-V).epsilon(1e-12));
  CHECK(e2.values[1] == Approx(V).epsilon(1e-12));
  CHECK(e2.vectors[0][0] * e2.vectors[0][1] < 0.0);
  CHECK(std::abs(e2.vectors[0][0]) == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  // known 3x3 spectrum
  std::vector<double> m = {2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0};
  auto e3 = mim::jacobi_eigensolve(m, 3);
  CHECK(e3.values[0] == Approx(2.0 - std::sqrt(2.0)).epsilon(1e-12));
  CHECK(e3.values[1] == Approx(2.0).epsilon(1e-12));
  CHECK(e3.values[2] == Approx(2.0 + std::sqrt(2.0)).epsilon(1e-12));
  // orthonormal eigenvectors, sign convention: largest component positive
  for (int a = 0; a < 3; ++a) {
    double mx = 0.0;
    int im = 0;
    double norm = 0.0;
    for (int k = 0; k < 3; ++k) {
      norm += e3.vectors[a][k] * e3.vectors[a][k];
      if (std::abs(e3.vectors[a][k]) > mx) {
        mx = std::abs(e3.vectors[a][k]);
        im = k;
      }
    }
    CHECK(norm == Approx(1.0).epsilon(1e-12));
    CHECK(e3.vectors[a][im] > 0.0);
    for (int b = a + 1; b < 3; ++b) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += e3.vectors[a][k] * e3.vectors[b][k];
      CHECK(std::abs(dot) < 1e-12);
    }
  }
}

TEST_CASE("Cholesky and normal-equation solves") {
  std::vector<double> x;
  REQUIRE(mim::cholesky_solve({4.0, 2.0, 2.0, 3.0}, {10.0, 8.0}, 2, x));
  CHECK(x[0] == Approx(1.75).epsilon(1e-14));
  CHECK(x[1] == Approx(1.5).epsilon(1e-14));
  std::vector<double> bad;
  CHECK_FALSE(mim::cholesky_solve({1.0, 2.0, 2.0, 1.0}, {1.0, 1.0}, 2, bad));

  // exact linear fit y = 2 + 3x
  std::vector<std::vector<double>> jac;
  std::vector<double> rhs;
  for (double xv : {-1.0, 0.0, 0.5, 2.0}) {
    jac.push_back({1.0, xv});
    rhs.push_back(2.0 + 3.0 * xv);
  }
  std::vector<double> coef;
  REQUIRE(mim::linear_least_squares(jac, rhs, coef));
  CHECK(coef[0] == Approx(2.0).epsilon(1e-13));
  CHECK(coef[1] == Approx(3.0).epsilon(1e-13));
}

TEST_CASE("parallel_for is deterministic and complete") {
  const std::size_t n = 1000;
  std::vector<double> serial(n), threaded(n);
  auto task = [](std::size_t i) { return std::sin(0.001 * i) * std::sqrt(i + 1.0); };
  mim::parallel_for(n, 1, [&](std::size_t i) { serial[i] = task(i); });
  mim::parallel_for(n, 8, [&](std::size_t i) { threaded[i] = task(i); });
  CHECK(serial == threaded);

  std::atomic<int> count{0};
  mim::parallel_for(257, 5, [&](std::size_t) { count.fetch_add(1); });
  CHECK(count.load() == 257);

  CHECK_THROWS_AS(mim::parallel_for(8, 4,
                                    [](std::size_t i) {
                                      if (i == 5) throw mim::numerical_error("boom");
                                    }),
                  mim::numerical_error);
}
