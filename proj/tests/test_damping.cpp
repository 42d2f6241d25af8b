#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "qpcsim/damping.hpp"

using namespace qpcsim;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("from_angle produces unitary matrices") {
  for (double t : {0.0, 0.3, 0.7853981633974483, 1.2, 1.5707963267948966}) {
    CHECK(SMatrix2::from_angle(t).unitarity_defect() <= 1e-15);
  }
}

TEST_CASE("lambda vanishes for identical barriers") {
  const SMatrix2 s = SMatrix2::from_angle(0.3);
  const LambdaResult lam = lambda_from_smatrices(s, s, 0, 7.0);
  CHECK(std::abs(lam.real_part) <= 1e-14);
  CHECK(std::abs(lam.imag_part) <= 1e-14);
}

TEST_CASE("lambda on the default parameterization gives 1 - cos(dtheta)") {
  const SMatrix2 s_l = SMatrix2::from_angle(0.45);
  const SMatrix2 s_r = SMatrix2::from_angle(0.35);
  for (int channel : {0, 1}) {
    const LambdaResult lam = lambda_from_smatrices(s_l, s_r, channel, 1.0);
    CHECK(lam.imag_part ==
          doctest::Approx(1.0 - std::cos(0.1)).epsilon(1e-12));
    CHECK(std::abs(lam.real_part) <= 1e-14);
  }
}

TEST_CASE("lambda with an extra diagonal phase") {
  // S_L = S(theta) * diag(e^{i phi}, 1), S_R plain: the overlap becomes
  // e^{i phi} cos^2(theta) + sin^2(theta), so the damping is
  // flux * (1 - cos(phi) cos^2(theta) - sin^2(theta)).
  const double theta = 0.6, phi = 0.25;
  SMatrix2 s_l = SMatrix2::from_angle(theta);
  const std::complex<double> phase{std::cos(phi), std::sin(phi)};
  s_l.s00 *= phase;
  s_l.s10 *= phase;
  CHECK(s_l.is_unitary());
  const SMatrix2 s_r = SMatrix2::from_angle(theta);
  const double c2 = std::cos(theta) * std::cos(theta);
  const double expected = 1.0 - std::cos(phi) * c2 - (1.0 - c2);
  const LambdaResult lam = lambda_from_smatrices(s_l, s_r, 0, 1.0);
  CHECK(lam.imag_part == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("lambda rejects bad inputs") {
  SMatrix2 bad = SMatrix2::from_angle(0.4);
  bad.s00 *= 1.001;
  const SMatrix2 good = SMatrix2::from_angle(0.4);
  CHECK_THROWS_AS(lambda_from_smatrices(bad, good, 0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(lambda_from_smatrices(good, good, 2, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(lambda_from_smatrices(good, good, 0, 0.0),
                  std::invalid_argument);
}

TEST_CASE("damping_rate reference values") {
  CHECK(damping_rate({0.7, 0.7}, 5.0) == 0.0);
  CHECK(damping_rate({kPi / 2.0, 0.0}, 1.0) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(damping_rate({0.45, 0.35}, 2.0) ==
        doctest::Approx(2.0 * (1.0 - std::cos(0.1))).epsilon(1e-15));
  CHECK(2.0 * (1.0 - std::cos(0.1)) == doctest::Approx(9.9917e-3).epsilon(1e-4));
}

TEST_CASE("damping_rate equals the S-matrix computation on a grid") {
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) {
      const double tl = (kPi / 2.0) * i / 31.0;
      const double tr = (kPi / 2.0) * j / 31.0;
      const LambdaResult lam = lambda_from_smatrices(
          SMatrix2::from_angle(tl), SMatrix2::from_angle(tr), 0, 1.3);
      const double d = damping_rate({tl, tr}, 1.3);
      CHECK(std::abs(d - lam.imag_part) <= 1e-12);
      CHECK(std::abs(lam.real_part) <= 1e-12);
      CHECK(d >= 0.0);
      CHECK(d <= 2.0 * 1.3);
    }
  }
}

TEST_CASE("damping_rate is symmetric and maximal at |dtheta| = pi/2") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, kPi / 2.0);
  for (int i = 0; i < 200; ++i) {
    const double a = u(gen), c = u(gen);
    CHECK(damping_rate({a, c}, 2.0) ==
          doctest::Approx(damping_rate({c, a}, 2.0)).epsilon(1e-15));
    CHECK(damping_rate({a, c}, 2.0) <=
          damping_rate({kPi / 2.0, 0.0}, 2.0) + 1e-15);
  }
}

TEST_CASE("small-angle damping") {
  CHECK(damping_rate_small_angle({0.5, 0.5}, 3.0) == 0.0);
  CHECK(damping_rate_small_angle({0.45, 0.35}, 2.0) ==
        doctest::Approx(0.01).epsilon(1e-15));
  const double exact = damping_rate({0.45, 0.35}, 1.0);
  const double approx = damping_rate_small_angle({0.45, 0.35}, 1.0);
  CHECK(std::abs(approx - exact) / exact ==
        doctest::Approx(8.33e-4).epsilon(2e-3));
}

TEST_CASE("landauer_flux") {
  CHECK(landauer_flux(kPi, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(landauer_flux(2.0 * kPi, 1.0, 1.0) ==
        doctest::Approx(2.0).epsilon(1e-15));
  // SI: e = 1.602176634e-19 C, hbar = 1.054571817e-34 Js, V_d = 1e-4 V
  const double f = landauer_flux(1e-4, 1.602176634e-19, 1.054571817e-34);
  CHECK(f == doctest::Approx(4.836e10).epsilon(1e-3));
  CHECK_THROWS_AS(landauer_flux(-1.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(landauer_flux(1.0, 0.0, 1.0), std::invalid_argument);
}
