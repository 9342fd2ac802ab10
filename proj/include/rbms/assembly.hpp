#pragma once

#include <vector>

#include "rbms/geometry.hpp"
#include "rbms/material.hpp"
#include "rbms/mesh.hpp"
#include "rbms/space.hpp"
#include "rbms/types.hpp"

namespace rbms {

// Reference-domain gradient of the P1 function per fine triangle (n_tris x 2).
Mat triangle_gradients(const Triangulation& mesh, const TruthSpace& space, const Vec& u_free);

// s_T = |C_d^{-T} grad û| at the barycenters, one value per fine triangle.
Vec pulled_gradient_norms(const Triangulation& mesh, const AffineMapSet& maps,
                          const Mat& ref_grads);

// nu1(s_T) over the iron triangles (mesh.iron_tris order).
Vec iron_nonlinearity(const Triangulation& mesh, const AffineMapSet& maps,
                      const Materials& materials, const Mat& ref_grads);

// Pulled-back stiffness with a prescribed coefficient per fine triangle:
// sum_T nu_T |det C_d| area_T (grad w)ᵀ G_d (grad v). One-point quadrature,
// exact for P1.
SpMat assemble_operator_coeff(const Triangulation& mesh, const TruthSpace& space,
                              const AffineMapSet& maps, const Vec& nu_per_tri);

// Coefficient from the current state: nu1(s_T) on iron, nu2(region) elsewhere.
SpMat assemble_operator(const Triangulation& mesh, const TruthSpace& space,
                        const AffineMapSet& maps, const Materials& materials, const Vec& u_free);

// Operator plus the quasilinear rank-one term
// (nu1'(s)/s) (J^{-T}∇û · J^{-T}∇φ_j)(J^{-T}∇û · J^{-T}∇φ_i) |det| per iron
// triangle; the s -> 0 limit drops the term (nu1'(s) = O(s) for our curves).
SpMat assemble_newton_jacobian(const Triangulation& mesh, const TruthSpace& space,
                               const AffineMapSet& maps, const Materials& materials,
                               const Vec& u_free);

// A(u)·u assembled directly as a vector (no matrix).
Vec apply_operator(const Triangulation& mesh, const TruthSpace& space, const AffineMapSet& maps,
                   const Materials& materials, const Vec& u_free);

// ---------------------------------------------------------------------------
// Parameter-separable load f(v̂;p) = sum_q Phi_q(p) f_q(v̂): one mass-type
// piece per coil macro-triangle, and per magnet macro-triangle one gradient
// piece per coordinate for each nonzero H_pm component. Source constants are
// folded into the vectors, geometry factors into Phi.
// ---------------------------------------------------------------------------

struct LoadPieceMeta {
  enum class Kind : int { je = 0, hpm1 = 1, hpm2 = 2 };
  Kind kind = Kind::je;
  int macro_d = 0;
  int i = 0;  // derivative direction for the gradient pieces (0 or 1)
};

struct LoadExpansion {
  std::vector<Vec> pieces;  // on free DOFs
  std::vector<LoadPieceMeta> meta;
  int Q_f() const { return static_cast<int>(pieces.size()); }
};

LoadExpansion build_load_expansion(const Triangulation& mesh, const TruthSpace& space,
                                   const Sources& sources);

double load_phi(const LoadPieceMeta& meta, const AffineMapSet& maps);

Vec assemble_load(const LoadExpansion& load, const AffineMapSet& maps, Index n_free);

// ---------------------------------------------------------------------------
// Truth Newton solver
// ---------------------------------------------------------------------------

struct TruthSolution {
  Vec u;
  Vec p;
  int iterations = 0;
  double residual_norm = 0.0;
  std::vector<double> residual_history;
};

struct NewtonOptions {
  double tol = 1e-4;
  int max_iter = 50;
  int max_halvings = 20;
  Vec u0;  // empty = zero initial guess
};

struct NewtonFailure : Error {
  NewtonFailure(const std::string& msg, Vec last, std::vector<double> hist)
      : Error(msg), last_iterate(std::move(last)), residual_history(std::move(hist)) {}
  Vec last_iterate;
  std::vector<double> residual_history;
};

// Damped Newton on the constrained algebraic system; the residual norm is the
// Euclidean norm of the free-DOF residual F - A(u)u. Backtracking halving
// engages only when the full step fails to reduce the residual.
TruthSolution newton_solve(const Triangulation& mesh, const TruthSpace& space,
                           const AffineMapSet& maps, const Materials& materials,
                           const Sources& sources, const NewtonOptions& opts = {});

}  // namespace rbms
