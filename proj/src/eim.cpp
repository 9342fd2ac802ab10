#include "rbms/eim.hpp"

#include <cmath>

namespace rbms {

namespace {

// Interpolation residual of a field against the leading m basis functions.
Vec residual_m(const Mat& q, const Mat& B, const std::vector<int>& magic, int m,
               const Vec& field) {
  if (m == 0) return field;
  Vec rhs(m);
  for (int i = 0; i < m; ++i) rhs[i] = field[magic[static_cast<std::size_t>(i)]];
  Vec phi(m);
  for (int i = 0; i < m; ++i) {
    double acc = rhs[i];
    for (int j = 0; j < i; ++j) acc -= B(i, j) * phi[j];
    phi[i] = acc;
  }
  return field - q.leftCols(m) * phi;
}

}  // namespace

EimApproximation eim_build(const std::vector<NonlinearityField>& fields, double eps_eim,
                           int m_max) {
  if (fields.empty()) throw Error("eim_build: no training fields");
  if (!(eps_eim >= 0.0)) throw Error("eim_build: eps_eim must be >= 0");
  if (m_max < 1) throw Error("eim_build: m_max must be >= 1");
  const Index n_pts = fields.front().values.size();
  for (const auto& f : fields)
    if (f.values.size() != n_pts) throw Error("eim_build: field length mismatch");

  double scale = 0.0;
  for (const auto& f : fields) scale = std::max(scale, f.values.cwiseAbs().maxCoeff());

  EimApproximation eim;
  eim.q = Mat::Zero(n_pts, 0);
  eim.B = Mat::Zero(0, 0);

  for (int m = 0; m <= m_max; ++m) {
    // Best-approximation error surrogate over the training set.
    double best = -1.0;
    int best_f = -1;
    Vec best_res;
    for (std::size_t fi = 0; fi < fields.size(); ++fi) {
      Vec res = residual_m(eim.q, eim.B, eim.magic, m, fields[fi].values);
      const double err = res.cwiseAbs().maxCoeff();
      if (err > best) {
        best = err;
        best_f = static_cast<int>(fi);
        best_res = std::move(res);
      }
    }
    eim.history.push_back(best);
    if (best <= eps_eim) {
      eim.converged = true;
      break;
    }
    if (m == m_max) break;
    if (best <= 1e-14 * std::max(scale, 1.0)) break;  // residual numerically zero everywhere

    // Magic point: argmax of |residual|, smallest index on ties.
    int pt = 0;
    double amax = -1.0;
    for (Index k = 0; k < n_pts; ++k) {
      const double a = std::abs(best_res[k]);
      if (a > amax) {
        amax = a;
        pt = static_cast<int>(k);
      }
    }
    const Vec qm = best_res / best_res[pt];

    const int mo = m;
    eim.q.conservativeResize(Eigen::NoChange, mo + 1);
    eim.q.col(mo) = qm;
    Mat Bn = Mat::Zero(mo + 1, mo + 1);
    Bn.topLeftCorner(mo, mo) = eim.B;
    for (int j = 0; j <= mo; ++j) Bn(mo, j) = eim.q(pt, j);  // exactly 1 on the diagonal
    eim.B = std::move(Bn);
    eim.magic.push_back(pt);
    eim.params.push_back(fields[static_cast<std::size_t>(best_f)].p);
  }
  return eim;
}

Vec eim_coefficients(const EimApproximation& eim, const Vec& point_values) {
  const int m = eim.M();
  if (point_values.size() != m) throw Error("eim_coefficients: length mismatch");
  Vec phi(m);
  for (int i = 0; i < m; ++i) {
    double acc = point_values[i];
    for (int j = 0; j < i; ++j) acc -= eim.B(i, j) * phi[j];
    phi[i] = acc;
  }
  return phi;
}

Vec eim_interpolant(const EimApproximation& eim, const Vec& field_values) {
  if (field_values.size() != eim.n_points()) throw Error("eim_interpolant: length mismatch");
  if (eim.M() == 0) return Vec::Zero(field_values.size());
  Vec pts(eim.M());
  for (int i = 0; i < eim.M(); ++i) pts[i] = field_values[eim.magic[static_cast<std::size_t>(i)]];
  return eim.q * eim_coefficients(eim, pts);
}

double eim_interpolation_error(const EimApproximation& eim, const Vec& field_values) {
  return (field_values - eim_interpolant(eim, field_values)).cwiseAbs().maxCoeff();
}

EimApproximation eim_truncate(const EimApproximation& eim, int m) {
  if (m < 1 || m > eim.M()) throw Error("eim_truncate: invalid dimension");
  EimApproximation out;
  out.q = eim.q.leftCols(m);
  out.B = eim.B.topLeftCorner(m, m);
  out.magic.assign(eim.magic.begin(), eim.magic.begin() + m);
  out.params.assign(eim.params.begin(), eim.params.begin() + m);
  out.history.assign(eim.history.begin(),
                     eim.history.begin() + std::min<std::size_t>(eim.history.size(),
                                                                 static_cast<std::size_t>(m) + 1));
  out.converged = (m == eim.M()) && eim.converged;
  return out;
}

}  // namespace rbms
