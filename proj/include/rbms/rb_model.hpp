#pragma once

#include <string>
#include <vector>

#include "rbms/assembly.hpp"
#include "rbms/eim.hpp"
#include "rbms/geometry.hpp"
#include "rbms/material.hpp"
#include "rbms/types.hpp"

namespace rbms {

enum class NuLbMode : int { certified_floor = 0, heuristic = 1 };
enum class JacobianMode : int { picard = 0, full = 1 };

// Offline-built reduced model. Everything the online phase needs is stored:
// the problem definition (to rebuild maps and, for lifting/verification, the
// mesh), the X̂-orthonormal basis, the EIM approximation, the
// parameter-separable operator/load tensors, the residual Riesz Gram matrix,
// and the per-point data for the delta_M sweep.
//
// Residual piece layout (row/column order of G_r): the Q_f load pieces first,
// then one block of size M + 4*M*L1 + 4*L2 per basis function n:
//   [m]          reference-metric iron pieces  ∫_Ω̂¹ q_m ∇ζ_n·∇v̂
//   [m, a, i, j] geometry pieces               ∫_Ω̂¹_{d(a)} q_m ∂_i ζ_n ∂_j v̂
//   [a, i, j]    linear pieces                 ∫_Ω̂²_{d(a)} ∂_i ζ_n ∂_j v̂
// The recombination coefficients carry |det C_d| G_d(p) - I for the geometry
// pieces, so the total piece count matches Q_r = Q_f + N(M + 4ML1 + 4L2)
// while the expansion stays exact.
struct RbModel {
  // problem definition
  MacroDecomposition decomp;
  int level = 0;
  bool all_dirichlet = false;
  Materials materials;
  Sources sources;

  // reduced basis
  Mat basis;  // n_free x N
  std::vector<Vec> selected_params;
  std::vector<double> eps_history;
  bool greedy_converged = false;

  // EIM and magic-point data
  EimApproximation eim;
  std::vector<int> magic_tri;    // fine-triangle index per magic point
  std::vector<int> magic_macro;  // macro-triangle index per magic point
  Mat magic_gradx, magic_grady;  // M x N, grad of the basis at the magic points

  // iron barycenter data for the delta_M sweep
  std::vector<int> iron_macro;  // N_T
  Mat iron_gradx, iron_grady;   // N_T x N

  // separable tensors
  std::vector<int> iron_d;    // macro indices of the iron subdomain (L1)
  std::vector<int> other_d;   // macro indices of the rest (L2)
  std::vector<Mat> nl_blocks;   // [(m*L1 + a)*4 + 2*i + j], N x N
  std::vector<Mat> lin_blocks;  // [a*4 + 2*i + j], N x N
  std::vector<Vec> load_blocks; // Q_f reduced load pieces
  std::vector<LoadPieceMeta> load_meta;

  // residual Riesz Gram matrix, Q_r x Q_r
  Mat G_r;

  // estimator configuration
  NuLbMode nu_lb_mode = NuLbMode::certified_floor;

  int N() const { return static_cast<int>(basis.cols()); }
  int M() const { return eim.M(); }
  int L1() const { return static_cast<int>(iron_d.size()); }
  int L2() const { return static_cast<int>(other_d.size()); }
  int Q_f() const { return static_cast<int>(load_blocks.size()); }
  int pieces_per_basis() const { return M() + 4 * M() * L1() + 4 * L2(); }
  Index Q_r() const { return Q_f() + static_cast<Index>(N()) * pieces_per_basis(); }
  double nu_lb_floor() const { return materials.monotonicity_floor(); }
};

// Residual expansion coefficients Phi^r(p) for the layout above, given the
// reduced coefficients and the EIM coefficients phi at the solution.
Vec residual_phi(const RbModel& model, const AffineMapSet& maps, const Vec& coeffs,
                 const Vec& phi);

// Lossless, versioned binary container.
void save_model(const RbModel& model, const std::string& path);
RbModel load_model(const std::string& path);

// Leading (N', M') sub-model; greedy and EIM nesting make this exact.
RbModel truncate_model(const RbModel& model, int n_new, int m_new);

}  // namespace rbms
