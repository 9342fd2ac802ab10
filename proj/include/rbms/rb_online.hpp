#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "rbms/rb_model.hpp"
#include "rbms/types.hpp"

namespace rbms {

struct ReducedSolution {
  Vec coeffs;  // û_{N,M} in the reduced basis
  Vec p;
  int iterations = 0;
  double residual_norm = 0.0;
  JacobianMode mode = JacobianMode::picard;
  double solve_ms = 0.0;
};

struct ErrorCertificate {
  double delta = 0.0;      // = delta_rb + delta_eim
  double delta_rb = 0.0;
  double delta_eim = 0.0;
  double dual_norm = 0.0;  // ||r_M||_X̂'
  double delta_m = 0.0;    // EIM error at the solution (barycenter sup)
  double c1 = 0.0, c2 = 0.0;
  double nu_lb_used = 0.0;
  double nu_min_observed = 0.0;  // min barycenter reluctivity at the solution
  bool delta_m_skipped = false;
  double estimate_ms = 0.0;
};

// Per-parameter recombined online system: the M nonlinear blocks
// Ahat_m(p) = sum_{d,i,j} [|det C_d| G_d]_ij a^{ij}_{m,d}, the linear part,
// and the reduced load. Cost O(4 L M N^2), independent of the truth dimension.
struct OnlineSystem {
  AffineMapSet maps;
  std::vector<Mat> Ahat;  // M blocks, N x N
  Mat A2;                 // N x N
  Vec F;                  // N
  double c1 = 0.0, c2 = 0.0;
};

OnlineSystem online_setup(const RbModel& model, const Vec& p);

// EIM coefficients of the nonlinearity at the reduced state (magic-point path).
Vec online_phi_eim(const RbModel& model, const AffineMapSet& maps, const Vec& coeffs);

struct DeltaM {
  double delta = 0.0;
  double nu_min = std::numeric_limits<double>::infinity();
};

// One full nonlinearity evaluation over the iron barycenters; O(N_T (N + M)).
DeltaM delta_m_sweep(const RbModel& model, const AffineMapSet& maps, const Vec& coeffs,
                     const Vec& phi);

struct ReducedOptions {
  double tol = 1e-5;
  int max_iter = 50;
  int max_halvings = 20;
  JacobianMode mode = JacobianMode::picard;
};

// Damped Newton on the reduced system; picard mode drops the E^N term.
ReducedSolution reduced_newton(const RbModel& model, const Vec& p,
                               const ReducedOptions& opts = {});
ReducedSolution reduced_newton(const RbModel& model, const OnlineSystem& sys,
                               const ReducedOptions& opts = {});

// Running minimum used by the heuristic nu_LB mode (sequential updates).
struct NuLbTracker {
  double current = std::numeric_limits<double>::infinity();
};

struct EstimateOptions {
  bool skip_delta_m = false;  // report the non-certified Delta^RB only
  NuLbTracker* tracker = nullptr;
};

ErrorCertificate estimate_error(const RbModel& model, const ReducedSolution& sol,
                                const EstimateOptions& opts = {});

// Truth-length coefficient vector of the reduced solution.
Vec lift(const RbModel& model, const Vec& coeffs);

struct Effectivity {
  double eta = 0.0;
  double true_error = 0.0;
  bool exact_within_precision = false;  // ||e|| below the division guard
};

Effectivity effectivity(const ErrorCertificate& cert, double true_error_xnorm);

}  // namespace rbms
