#pragma once

#include <vector>

#include "rbms/types.hpp"

namespace rbms {

// Nonlinearity snapshot: nu1(|J^{-T} grad û|) at the iron barycenters.
struct NonlinearityField {
  Vec values;  // length N_T, mesh.iron_tris order
  Vec p;
};

// Greedy empirical interpolation of the reluctivity field. q holds the basis
// over the iron barycenters, magic the interpolation point indices, and B the
// interpolation matrix B_ij = q_j(x_i): lower triangular with unit diagonal
// and off-diagonal magnitudes <= 1 by construction.
struct EimApproximation {
  Mat q;                    // N_T x M
  Mat B;                    // M x M
  std::vector<int> magic;   // barycenter indices
  std::vector<Vec> params;  // generating parameters, selection order
  std::vector<double> history;  // delta_max with 0,1,...,M basis functions
  bool converged = false;   // reached eps_eim (vs cap or residual stall)

  int M() const { return static_cast<int>(B.rows()); }
  Index n_points() const { return q.rows(); }
};

// Greedy build: at each step the training field with the largest
// interpolation residual (max norm over barycenters) is selected, its
// residual normalized at the new magic point. Ties break to the smallest
// index. Stops at eps_eim, at m_max, or when the best residual is numerically
// zero (duplicate magic point guard).
EimApproximation eim_build(const std::vector<NonlinearityField>& fields, double eps_eim,
                           int m_max);

// Solves B phi = point_values by forward substitution (unit diagonal).
Vec eim_coefficients(const EimApproximation& eim, const Vec& point_values);

// Interpolant of the given field from its own magic-point values.
Vec eim_interpolant(const EimApproximation& eim, const Vec& field_values);

// delta = max_j |field_j - interpolant_j| over all barycenters.
double eim_interpolation_error(const EimApproximation& eim, const Vec& field_values);

// Leading-m sub-approximation (the greedy is nested).
EimApproximation eim_truncate(const EimApproximation& eim, int m);

}  // namespace rbms
