#include "rbms/material.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rbms {

ReluctivityCurve ReluctivityCurve::analytic(double k1, double k2, double k3, double nu0_clamp) {
  if (nu0_clamp <= 0.0) throw Error("reluctivity curve: nu0 clamp must be positive");
  if (k1 + k2 <= 0.0) throw Error("reluctivity curve: k1 + k2 must be positive");
  ReluctivityCurve c;
  c.kind_ = Kind::analytic;
  c.k1_ = k1;
  c.k2_ = k2;
  c.k3_ = k3;
  c.nu0_clamp_ = nu0_clamp;
  return c;
}

ReluctivityCurve ReluctivityCurve::from_bh_table(
    const std::vector<std::pair<double, double>>& bh, double nu0_clamp) {
  if (nu0_clamp <= 0.0) throw Error("reluctivity curve: nu0 clamp must be positive");
  if (bh.size() < 2) throw Error("B-H table needs at least two samples");
  ReluctivityCurve c;
  c.kind_ = Kind::spline;
  c.nu0_clamp_ = nu0_clamp;
  for (const auto& [b, h] : bh) {
    if (h < 0.0) throw Error("B-H table: negative H at B=" + std::to_string(b));
    c.b_.push_back(b);
    c.h_.push_back(h);
  }
  if (c.b_.front() != 0.0) {
    if (c.b_.front() < 0.0) throw Error("B-H table: negative B");
    c.b_.insert(c.b_.begin(), 0.0);
    c.h_.insert(c.h_.begin(), 0.0);
  } else if (c.h_.front() != 0.0) {
    throw Error("B-H table: H(0) must be 0");
  }
  const std::size_t n = c.b_.size();
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(c.b_[i] < c.b_[i + 1])) throw Error("B-H table: B must be strictly increasing");
  for (std::size_t i = 1; i < n; ++i) {
    const double ratio = c.h_[i] / c.b_[i];
    if (!(ratio > 0.0) || ratio > nu0_clamp)
      throw Error("B-H table: H/B ratio outside (0, nu0] at B=" + std::to_string(c.b_[i]));
  }

  // Fritsch-Carlson shape-preserving slopes for H(B).
  std::vector<double> dx(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    dx[i] = c.b_[i + 1] - c.b_[i];
    delta[i] = (c.h_[i + 1] - c.h_[i]) / dx[i];
  }
  c.slope_.assign(n, 0.0);
  auto edge_slope = [](double dx0, double dx1, double d0, double d1) {
    double m = ((2.0 * dx0 + dx1) * d0 - dx0 * d1) / (dx0 + dx1);
    if (m * d0 <= 0.0)
      m = 0.0;
    else if (d0 * d1 < 0.0 && std::abs(m) > 3.0 * std::abs(d0))
      m = 3.0 * d0;
    return m;
  };
  if (n == 2) {
    c.slope_[0] = c.slope_[1] = delta[0];
  } else {
    c.slope_[0] = edge_slope(dx[0], dx[1], delta[0], delta[1]);
    c.slope_[n - 1] = edge_slope(dx[n - 2], dx[n - 3], delta[n - 2], delta[n - 3]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0.0) {
        c.slope_[i] = 0.0;
      } else {
        const double w1 = 2.0 * dx[i] + dx[i - 1];
        const double w2 = dx[i] + 2.0 * dx[i - 1];
        c.slope_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
      }
    }
  }
  return c;
}

double ReluctivityCurve::hb_at(double s) const {
  const std::size_t n = b_.size();
  const auto it = std::upper_bound(b_.begin(), b_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - b_.begin());
  if (i == 0) i = 1;
  if (i >= n) i = n - 1;
  const double dx = b_[i] - b_[i - 1];
  const double t = s - b_[i - 1];
  const double d = (h_[i] - h_[i - 1]) / dx;
  const double c2 = (3.0 * d - 2.0 * slope_[i - 1] - slope_[i]) / dx;
  const double c3 = (slope_[i - 1] + slope_[i] - 2.0 * d) / (dx * dx);
  return h_[i - 1] + t * (slope_[i - 1] + t * (c2 + t * c3));
}

double ReluctivityCurve::hb_derivative(double s) const {
  const std::size_t n = b_.size();
  const auto it = std::upper_bound(b_.begin(), b_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - b_.begin());
  if (i == 0) i = 1;
  if (i >= n) i = n - 1;
  const double dx = b_[i] - b_[i - 1];
  const double t = s - b_[i - 1];
  const double d = (h_[i] - h_[i - 1]) / dx;
  const double c2 = (3.0 * d - 2.0 * slope_[i - 1] - slope_[i]) / dx;
  const double c3 = (slope_[i - 1] + slope_[i] - 2.0 * d) / (dx * dx);
  return slope_[i - 1] + t * (2.0 * c2 + t * 3.0 * c3);
}

double ReluctivityCurve::value(double s) const {
  if (s < 0.0) throw Error("reluctivity curve: s must be >= 0");
  if (kind_ == Kind::analytic) {
    const double v = k1_ + k2_ * std::exp(k3_ * s * s);
    return std::min(v, nu0_clamp_);
  }
  const double bn = b_.back();
  double v;
  if (s <= 1e-14 * std::max(1.0, bn)) {
    v = slope_[0];
  } else if (s <= bn) {
    v = hb_at(s) / s;
  } else {
    // linear extension of nu1 in s beyond the last sample
    const double nu_n = h_.back() / bn;
    const double dnu_n = (hb_derivative(bn) * bn - h_.back()) / (bn * bn);
    v = nu_n + dnu_n * (s - bn);
  }
  return std::min(v, nu0_clamp_);
}

double ReluctivityCurve::derivative(double s) const {
  if (s < 0.0) throw Error("reluctivity curve: s must be >= 0");
  if (kind_ == Kind::analytic) {
    const double v = k1_ + k2_ * std::exp(k3_ * s * s);
    if (v >= nu0_clamp_) return 0.0;
    return 2.0 * k3_ * k2_ * s * std::exp(k3_ * s * s);
  }
  const double bn = b_.back();
  if (value(s) >= nu0_clamp_) return 0.0;
  if (s <= 1e-14 * std::max(1.0, bn)) {
    // nu1(s) = H(s)/s with H cubic: the limit slope is half the curvature
    const double dx = b_[1] - b_[0];
    const double d = (h_[1] - h_[0]) / dx;
    return (3.0 * d - 2.0 * slope_[0] - slope_[1]) / dx;
  }
  if (s <= bn) return (hb_derivative(s) * s - hb_at(s)) / (s * s);
  return (hb_derivative(bn) * bn - h_.back()) / (bn * bn);
}

CurveBounds ReluctivityCurve::validate(double s_max, int n_check) const {
  if (!(s_max > 0.0)) throw Error("validate_curve: s_max must be positive");
  n_check = std::max(n_check, 100);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (int k = 0; k <= n_check; ++k) {
    const double s = s_max * static_cast<double>(k) / n_check;
    const double nu = value(s);
    const double flux_slope = derivative(s) * s + nu;  // d/ds (nu1(s)·s)
    if (!(nu > 0.0) || nu > nu0_clamp_ * (1.0 + 1e-12))
      throw Error("validate_curve: nu1 outside (0, nu0] at s=" + std::to_string(s));
    if (!(flux_slope > 0.0) || flux_slope > 3.0 * nu0_clamp_ * (1.0 + 1e-12))
      throw Error("validate_curve: d/ds(nu1*s) outside (0, 3*nu0] at s=" + std::to_string(s));
    lo = std::min(lo, std::min(nu, flux_slope));
    hi = std::max(hi, std::max(nu, flux_slope / 3.0));
  }
  CurveBounds b;
  b.nu_lb = lo * (1.0 - 1e-9);
  b.nu0 = hi * (1.0 + 1e-9);
  b.lipschitz = 3.0 * b.nu0;
  b.s_max = s_max;
  return b;
}

std::vector<std::pair<double, double>> load_bh_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open B-H table '" + path + "'");
  std::vector<std::pair<double, double>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto h = line.find('#');
    if (h != std::string::npos) line.erase(h);
    std::istringstream is(line);
    double b, hh;
    if (is >> b >> hh)
      out.emplace_back(b, hh);
    else if (!line.empty() && line.find_first_not_of(" \t\r\n") != std::string::npos)
      throw Error("B-H table '" + path + "', line " + std::to_string(lineno) + ": parse error");
  }
  return out;
}

double Materials::nu2_of(Region r) const {
  if (r == Region::iron) throw Error("nu2 requested for the iron region");
  return nu2[static_cast<std::size_t>(r)];
}

double Materials::monotonicity_floor() const {
  double lo = bounds.nu_lb;
  for (const double v : nu2) lo = std::min(lo, v);
  return lo;
}

double Materials::sup_nu() const {
  double hi = bounds.nu0;
  for (const double v : nu2) hi = std::max(hi, v);
  return hi;
}

double Sources::j_e_of(Region r) const {
  if (r == Region::iron) return 0.0;
  return j_e[static_cast<std::size_t>(r)];
}

Vec2 Sources::h_pm_of(Region r) const {
  if (r == Region::iron) return Vec2::Zero();
  const auto& h = h_pm[static_cast<std::size_t>(r)];
  return Vec2(h[0], h[1]);
}

bool Sources::all_zero() const {
  for (const double v : j_e)
    if (v != 0.0) return false;
  for (const auto& h : h_pm)
    if (h[0] != 0.0 || h[1] != 0.0) return false;
  return true;
}

}  // namespace rbms
