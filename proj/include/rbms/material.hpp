#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "rbms/geometry.hpp"
#include "rbms/types.hpp"

namespace rbms {

// Certified constants of a reluctivity curve on [0, s_max]:
// nu_lb <= nu1(s) and nu_lb <= d/ds(nu1(s)·s), nu1(s) <= nu0 and
// d/ds(nu1(s)·s) <= 3·nu0 = lipschitz.
struct CurveBounds {
  double nu_lb = 0.0;
  double nu0 = 0.0;
  double lipschitz = 0.0;  // = 3*nu0
  double s_max = 0.0;
};

// Nonlinear reluctivity nu1(s) of the iron, s = |flux density|. Either the
// analytic exponential-type curve k1 + k2*exp(k3*s^2), clamped at nu0, or a
// monotone cubic (Fritsch-Carlson) interpolant of a B-H table. Evaluation
// beyond the table is linear in s and clamped at nu0.
class ReluctivityCurve {
 public:
  enum class Kind : int { analytic = 0, spline = 1 };

  static ReluctivityCurve analytic(double k1, double k2, double k3, double nu0_clamp);
  static ReluctivityCurve from_bh_table(const std::vector<std::pair<double, double>>& bh,
                                        double nu0_clamp);
  static ReluctivityCurve constant(double c) { return analytic(c, 0.0, 0.0, c); }

  double value(double s) const;       // nu1(s)
  double derivative(double s) const;  // nu1'(s)

  // Dense-grid certification; throws Error naming the offending s on a
  // positivity/upper-bound violation.
  CurveBounds validate(double s_max, int n_check = 2000) const;

  Kind kind() const { return kind_; }
  double clamp_nu0() const { return nu0_clamp_; }
  // analytic parameters (k1,k2,k3); spline data for serialization
  std::array<double, 3> analytic_params() const { return {k1_, k2_, k3_}; }
  const std::vector<double>& knots_b() const { return b_; }
  const std::vector<double>& knots_h() const { return h_; }

 private:
  Kind kind_ = Kind::analytic;
  double nu0_clamp_ = 0.0;
  double k1_ = 0.0, k2_ = 0.0, k3_ = 0.0;
  // pchip data for H(B)
  std::vector<double> b_, h_, slope_;
  double hb_at(double s) const;        // interpolated H(s)
  double hb_derivative(double s) const;
};

std::vector<std::pair<double, double>> load_bh_table(const std::string& path);

// Region-wise material data: the nonlinear curve on iron with its certified
// bounds, constants nu2 elsewhere.
struct Materials {
  ReluctivityCurve curve = ReluctivityCurve::constant(1.0);
  CurveBounds bounds;
  std::array<double, 3> nu2{};  // indexed by Region air/magnet/coil

  double nu2_of(Region r) const;
  double nu_of(Region r, double s) const {
    return r == Region::iron ? curve.value(s) : nu2_of(r);
  }

  // Bounds of the full reluctivity function (curve and region constants):
  // the monotonicity floor enters the error estimator, sup_nu the Lipschitz
  // constant 3*nu0 of the form.
  double monotonicity_floor() const;
  double sup_nu() const;
};

// Current density (coil) and permanent-magnet field components per region;
// both vanish on iron.
struct Sources {
  std::array<double, 3> j_e{};               // air/magnet/coil
  std::array<std::array<double, 2>, 3> h_pm{};  // (H_pm1, H_pm2) per region

  double j_e_of(Region r) const;
  Vec2 h_pm_of(Region r) const;
  bool all_zero() const;
};

}  // namespace rbms
