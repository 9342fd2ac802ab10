#include <doctest.h>

#include <cmath>
#include <random>

#include "rbms/material.hpp"
#include "support/oracles.hpp"

using namespace rbms;

TEST_CASE("linear B-H table gives constant reluctivity") {
  const auto curve = ReluctivityCurve::from_bh_table({{0.0, 0.0}, {1.0, 200.0}}, 1e3);
  for (double s : {0.0, 0.25, 0.5, 0.99}) {
    CHECK(curve.value(s) == doctest::Approx(200.0).epsilon(1e-13));
    CHECK(curve.derivative(s) == doctest::Approx(0.0).epsilon(1e-10));
  }
}

TEST_CASE("knot values are reproduced exactly") {
  std::vector<std::pair<double, double>> bh;
  for (int i = 0; i <= 10; ++i) {
    const double b = 0.1 * i;
    bh.emplace_back(b, 150.0 * b + 50.0 * b * b * b);
  }
  const auto curve = ReluctivityCurve::from_bh_table(bh, 1e4);
  for (int i = 1; i <= 10; ++i) {
    const double b = 0.1 * i;
    const double expected = (150.0 * b + 50.0 * b * b * b) / b;
    CHECK(curve.value(b) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("spline tracks the analytic curve between knots at interpolation order") {
  auto build = [](double h) {
    std::vector<std::pair<double, double>> bh;
    for (double b = 0.0; b <= 1.0 + 1e-12; b += h)
      bh.emplace_back(b, 150.0 * b + 50.0 * b * b * b);
    return ReluctivityCurve::from_bh_table(bh, 1e4);
  };
  // away from the origin, where nu1 = H(s)/s does not amplify the error
  auto max_err = [](const ReluctivityCurve& c) {
    double worst = 0.0;
    for (int k = 0; k <= 400; ++k) {
      const double s = 0.15 + 0.8 * k / 400.0;
      worst = std::max(worst, std::abs(c.value(s) - (150.0 + 50.0 * s * s)));
    }
    return worst;
  };
  const double e1 = max_err(build(0.1));
  const double e2 = max_err(build(0.05));
  CHECK(e1 < 0.05);         // absolute sanity on a curve of scale ~200
  CHECK(e1 / e2 > 3.0);     // better than second order under refinement
}

TEST_CASE("validate_curve on a constant curve returns (c, c, 3c)") {
  const auto curve = ReluctivityCurve::constant(7.5);
  const CurveBounds b = curve.validate(2.0);
  CHECK(b.nu_lb == doctest::Approx(7.5).epsilon(1e-8));
  CHECK(b.nu0 == doctest::Approx(7.5).epsilon(1e-8));
  CHECK(b.lipschitz == doctest::Approx(22.5).epsilon(1e-8));
}

TEST_CASE("default analytic curve: certified floor matches a dense scan") {
  const auto curve = ReluctivityCurve::analytic(120.0, 80.0, 2.0, 7.95e5);
  const CurveBounds b = curve.validate(1.5);
  CHECK(b.nu_lb == doctest::Approx(200.0).epsilon(1e-6));  // k1 + k2 at s = 0
  // brute-force scan with 1e6 samples
  double lo = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 1000000; k += 1) {
    const double s = 1.5 * k / 1000000.0;
    const double nu = curve.value(s);
    const double slope = curve.derivative(s) * s + nu;
    lo = std::min(lo, std::min(nu, slope));
  }
  CHECK(b.nu_lb == doctest::Approx(lo).epsilon(0.01));
  CHECK(b.nu_lb <= lo);
}

TEST_CASE("validation fails when the flux map stalls") {
  // flat B-H segment: d/ds (nu1 s) = H'(s) = 0 inside it
  const auto curve =
      ReluctivityCurve::from_bh_table({{0.0, 0.0}, {1.0, 100.0}, {2.0, 100.0}}, 1e4);
  CHECK_THROWS_WITH_AS(curve.validate(2.0), doctest::Contains("nu1*s"), Error);
}

TEST_CASE("validation rejects the clamp-adjacent slope blowup") {
  // near the nu0 clamp the exponential curve exceeds the 3*nu0 slope bound
  const auto curve = ReluctivityCurve::analytic(120.0, 80.0, 2.0, 7.95e5);
  CHECK_THROWS_AS(curve.validate(2.1), Error);
}

TEST_CASE("derivative matches central finite differences") {
  std::mt19937_64 rng(23);
  const auto analytic = ReluctivityCurve::analytic(120.0, 80.0, 2.0, 7.95e5);
  std::vector<std::pair<double, double>> bh;
  for (int i = 0; i <= 14; ++i) {
    const double b = 0.1 * i;
    bh.emplace_back(b, 130.0 * b + 40.0 * b * b * b + 5.0 * b * b * b * b * b);
  }
  const auto spline = ReluctivityCurve::from_bh_table(bh, 1e6);
  for (const ReluctivityCurve* curve : {&analytic, &spline}) {
    for (int trial = 0; trial < 20; ++trial) {
      const double s = 0.1 + 1.2 * testsup::unit_draw(rng);
      const double h = 1e-6 * (1.0 + s);
      const double fd = (curve->value(s + h) - curve->value(s - h)) / (2.0 * h);
      const double dv = curve->derivative(s);
      CHECK(std::abs(dv - fd) <= 1e-5 * std::max({std::abs(dv), std::abs(fd), 1e-3}));
    }
  }
}

TEST_CASE("certified bounds hold on random samples") {
  const auto curve = ReluctivityCurve::analytic(120.0, 80.0, 2.0, 7.95e5);
  const CurveBounds b = curve.validate(1.5);
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 500; ++trial) {
    const double s = 1.5 * testsup::unit_draw(rng);
    const double nu = curve.value(s);
    CHECK(nu >= b.nu_lb);
    CHECK(nu <= b.nu0);
  }
}

TEST_CASE("monotone flux map secants stay within the certified interval") {
  const auto curve = ReluctivityCurve::analytic(120.0, 80.0, 2.0, 7.95e5);
  const CurveBounds b = curve.validate(1.5);
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const double s = 1.5 * testsup::unit_draw(rng);
    double t = 1.5 * testsup::unit_draw(rng);
    if (s == t) t = 0.5 * s + 1e-3;
    const double secant = (curve.value(s) * s - curve.value(t) * t) / (s - t);
    CHECK(secant >= b.nu_lb * (1.0 - 1e-12));
    CHECK(secant <= b.lipschitz * (1.0 + 1e-12));
  }
}

TEST_CASE("table preconditions are enforced") {
  CHECK_THROWS_AS(ReluctivityCurve::from_bh_table({{0.0, 0.0}, {1.0, -5.0}}, 1e3), Error);
  CHECK_THROWS_AS(ReluctivityCurve::from_bh_table({{0.0, 0.0}, {1.0, 10.0}, {0.5, 20.0}}, 1e3),
                  Error);
  // ratio H/B above the clamp
  CHECK_THROWS_AS(ReluctivityCurve::from_bh_table({{0.0, 0.0}, {1.0, 10.0}}, 5.0), Error);
}

TEST_CASE("sources vanish on iron") {
  const Sources s = testsup::toy_sources(3.0);
  CHECK(s.j_e_of(Region::coil) == 3.0);
  CHECK(s.j_e_of(Region::iron) == 0.0);
  CHECK(s.h_pm_of(Region::iron).norm() == 0.0);
  CHECK_FALSE(s.all_zero());
  CHECK(Sources{}.all_zero());
}
