#include "rbms/rb_online.hpp"

#include <Eigen/Dense>

#include "rbms/compensated.hpp"

#include <chrono>
#include <cmath>

namespace rbms {

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

OnlineSystem online_setup(const RbModel& model, const Vec& p) {
  if (!model.decomp.box.contains(p))
    throw Error("online_setup: parameter outside the box");
  if (model.N() == 0) throw Error("online_setup: empty reduced model");
  OnlineSystem sys;
  sys.maps = build_affine_maps(model.decomp, p);
  const auto [c1, c2] = geometric_constants(sys.maps);
  sys.c1 = c1;
  sys.c2 = c2;

  const int N = model.N(), M = model.M(), L1 = model.L1(), L2 = model.L2();
  sys.Ahat.assign(static_cast<std::size_t>(M), Mat::Zero(N, N));
  for (int m = 0; m < M; ++m) {
    Mat& A = sys.Ahat[static_cast<std::size_t>(m)];
    for (int a = 0; a < L1; ++a) {
      const auto& map = sys.maps.maps[static_cast<std::size_t>(model.iron_d[static_cast<std::size_t>(a)])];
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          A += (map.adet * map.G(i, j)) *
               model.nl_blocks[static_cast<std::size_t>((m * L1 + a) * 4 + 2 * i + j)];
    }
  }
  sys.A2 = Mat::Zero(N, N);
  for (int a = 0; a < L2; ++a) {
    const int d = model.other_d[static_cast<std::size_t>(a)];
    const auto& map = sys.maps.maps[static_cast<std::size_t>(d)];
    const double nu2 =
        model.materials.nu2_of(model.decomp.triangles[static_cast<std::size_t>(d)].region);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        sys.A2 += (nu2 * map.adet * map.G(i, j)) *
                  model.lin_blocks[static_cast<std::size_t>(a * 4 + 2 * i + j)];
  }
  sys.F = Vec::Zero(N);
  for (int q = 0; q < model.Q_f(); ++q)
    sys.F += load_phi(model.load_meta[static_cast<std::size_t>(q)], sys.maps) *
             model.load_blocks[static_cast<std::size_t>(q)];
  return sys;
}

Vec online_phi_eim(const RbModel& model, const AffineMapSet& maps, const Vec& coeffs) {
  const int M = model.M();
  const Vec gx = model.magic_gradx * coeffs;
  const Vec gy = model.magic_grady * coeffs;
  Vec nu(M);
  for (int m = 0; m < M; ++m) {
    const auto& map = maps.maps[static_cast<std::size_t>(model.magic_macro[static_cast<std::size_t>(m)])];
    const double s = (map.Cinv.transpose() * Vec2(gx[m], gy[m])).norm();
    nu[m] = model.materials.curve.value(s);
  }
  return eim_coefficients(model.eim, nu);
}

DeltaM delta_m_sweep(const RbModel& model, const AffineMapSet& maps, const Vec& coeffs,
                     const Vec& phi) {
  const Vec gx = model.iron_gradx * coeffs;
  const Vec gy = model.iron_grady * coeffs;
  const Vec interp = model.eim.q * phi;
  DeltaM out;
  for (Index b = 0; b < gx.size(); ++b) {
    const auto& map = maps.maps[static_cast<std::size_t>(model.iron_macro[static_cast<std::size_t>(b)])];
    const double s = (map.Cinv.transpose() * Vec2(gx[b], gy[b])).norm();
    const double nu = model.materials.curve.value(s);
    out.delta = std::max(out.delta, std::abs(nu - interp[b]));
    out.nu_min = std::min(out.nu_min, nu);
  }
  return out;
}

ReducedSolution reduced_newton(const RbModel& model, const Vec& p, const ReducedOptions& opts) {
  return reduced_newton(model, online_setup(model, p), opts);
}

ReducedSolution reduced_newton(const RbModel& model, const OnlineSystem& sys,
                               const ReducedOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const int N = model.N(), M = model.M();
  if (N == 0) throw Error("reduced_newton: empty reduced model");
  if (!(opts.tol > 0.0)) throw Error("reduced_newton: tolerance must be positive");

  Vec u = Vec::Zero(N);

  auto nonlinear_residual = [&](const Vec& v, Vec& phi_out) -> Vec {
    phi_out = online_phi_eim(model, sys.maps, v);
    Vec Au = sys.A2 * v;
    for (int m = 0; m < M; ++m) Au += phi_out[m] * (sys.Ahat[static_cast<std::size_t>(m)] * v);
    return sys.F - Au;
  };

  Vec phi;
  Vec r = nonlinear_residual(u, phi);
  double rn = r.norm();
  ReducedSolution sol;
  sol.p = sys.maps.p;
  sol.mode = opts.mode;

  for (int it = 0; it < opts.max_iter && rn > opts.tol; ++it) {
    Mat J = sys.A2;
    for (int m = 0; m < M; ++m) J += phi[m] * sys.Ahat[static_cast<std::size_t>(m)];
    if (opts.mode == JacobianMode::full) {
      // E^N term: W(:,m) = Ahat_m u, X = W B^{-1}, Ghat(m,j) = g^j_m / s_m
      Mat W(N, M);
      for (int m = 0; m < M; ++m) W.col(m) = sys.Ahat[static_cast<std::size_t>(m)] * u;
      Mat X = model.eim.B.transpose()
                  .triangularView<Eigen::Upper>()
                  .solve(W.transpose())
                  .transpose();
      const Vec gx = model.magic_gradx * u;
      const Vec gy = model.magic_grady * u;
      Mat Ghat = Mat::Zero(M, N);
      for (int m = 0; m < M; ++m) {
        const auto& map =
            sys.maps.maps[static_cast<std::size_t>(model.magic_macro[static_cast<std::size_t>(m)])];
        const Vec2 y = map.Cinv.transpose() * Vec2(gx[m], gy[m]);
        const double s = y.norm();
        if (s < 1e-12) continue;
        const double fac = model.materials.curve.derivative(s) / s;
        for (int j = 0; j < N; ++j) {
          const Vec2 zj = map.Cinv.transpose() * Vec2(model.magic_gradx(m, j), model.magic_grady(m, j));
          Ghat(m, j) = fac * y.dot(zj);
        }
      }
      J += X * Ghat;
    }

    const Vec delta = J.partialPivLu().solve(r);
    double step = 1.0;
    Vec phi_try;
    Vec u_try = u + delta;
    Vec r_try = nonlinear_residual(u_try, phi_try);
    double rn_try = r_try.norm();
    int halvings = 0;
    while (rn_try >= rn && halvings < opts.max_halvings) {
      step *= 0.5;
      ++halvings;
      u_try = u + step * delta;
      r_try = nonlinear_residual(u_try, phi_try);
      rn_try = r_try.norm();
    }
    if (rn_try >= rn)
      throw Error("reduced_newton: line search stagnated at residual " + std::to_string(rn));
    u = u_try;
    r = r_try;
    phi = phi_try;
    rn = rn_try;
    sol.iterations = it + 1;
  }
  if (rn > opts.tol)
    throw Error("reduced_newton: no convergence after " + std::to_string(opts.max_iter) +
                " iterations (residual " + std::to_string(rn) + ")");
  sol.coeffs = u;
  sol.residual_norm = rn;
  sol.solve_ms = ms_since(t0);
  return sol;
}

ErrorCertificate estimate_error(const RbModel& model, const ReducedSolution& sol,
                                const EstimateOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const AffineMapSet maps = build_affine_maps(model.decomp, sol.p);
  const auto [c1, c2] = geometric_constants(maps);

  ErrorCertificate cert;
  cert.c1 = c1;
  cert.c2 = c2;

  const Vec phi = online_phi_eim(model, maps, sol.coeffs);
  const Vec phir = residual_phi(model, maps, sol.coeffs, phi);
  const double quad = quadform_compensated(model.G_r, phir);
  const double scale = std::max(1.0, model.G_r.diagonal().maxCoeff() * phir.squaredNorm());
  if (quad < -1e-12 * scale)
    throw Error("estimate_error: negative residual dual norm (G_r corrupt)");
  cert.dual_norm = std::sqrt(std::max(quad, 0.0));

  DeltaM dm;
  if (!opts.skip_delta_m) {
    dm = delta_m_sweep(model, maps, sol.coeffs, phi);
    cert.delta_m = dm.delta;
    cert.nu_min_observed = dm.nu_min;
  } else {
    cert.delta_m_skipped = true;
  }

  double nu_lb = model.nu_lb_floor();
  if (model.nu_lb_mode == NuLbMode::heuristic && !opts.skip_delta_m) {
    nu_lb = dm.nu_min;
    if (opts.tracker) {
      nu_lb = std::min(opts.tracker->current, nu_lb);
      opts.tracker->current = nu_lb;
    }
  }
  cert.nu_lb_used = nu_lb;

  // ||û||_X̂ equals the Euclidean coefficient norm for the orthonormal basis.
  const double u_norm = sol.coeffs.norm();
  cert.delta_rb = cert.dual_norm / (nu_lb * c1);
  cert.delta_eim = opts.skip_delta_m ? 0.0 : c2 * cert.delta_m * u_norm / (nu_lb * c1);
  cert.delta = cert.delta_rb + cert.delta_eim;
  cert.estimate_ms = ms_since(t0);
  return cert;
}

Vec lift(const RbModel& model, const Vec& coeffs) {
  if (coeffs.size() != model.N()) throw Error("lift: coefficient length mismatch");
  return model.basis * coeffs;
}

Effectivity effectivity(const ErrorCertificate& cert, double true_error_xnorm) {
  Effectivity out;
  out.true_error = true_error_xnorm;
  if (true_error_xnorm < 1e-14) {
    out.exact_within_precision = true;
    out.eta = 0.0;
    return out;
  }
  out.eta = cert.delta / true_error_xnorm;
  return out;
}

}  // namespace rbms
