#include "rbms/assembly.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <cmath>

namespace rbms {

Mat triangle_gradients(const Triangulation& mesh, const TruthSpace& space, const Vec& u_free) {
  const Vec u = space.expand(u_free);
  Mat g(mesh.n_tris(), 2);
  for (Index t = 0; t < mesh.n_tris(); ++t) {
    Eigen::Vector3d loc(u[mesh.tris(t, 0)], u[mesh.tris(t, 1)], u[mesh.tris(t, 2)]);
    g.row(t) = (mesh.gradop[static_cast<std::size_t>(t)] * loc).transpose();
  }
  return g;
}

Vec pulled_gradient_norms(const Triangulation& mesh, const AffineMapSet& maps,
                          const Mat& ref_grads) {
  Vec s(mesh.n_tris());
  for (Index t = 0; t < mesh.n_tris(); ++t) {
    const auto& m = maps.maps[static_cast<std::size_t>(mesh.macro_of[t])];
    s[t] = (m.Cinv.transpose() * ref_grads.row(t).transpose()).norm();
  }
  return s;
}

Vec iron_nonlinearity(const Triangulation& mesh, const AffineMapSet& maps,
                      const Materials& materials, const Mat& ref_grads) {
  Vec out(static_cast<Index>(mesh.iron_tris.size()));
  for (std::size_t k = 0; k < mesh.iron_tris.size(); ++k) {
    const Index t = mesh.iron_tris[k];
    const auto& m = maps.maps[static_cast<std::size_t>(mesh.macro_of[t])];
    const double s = (m.Cinv.transpose() * ref_grads.row(t).transpose()).norm();
    out[static_cast<Index>(k)] = materials.curve.value(s);
  }
  return out;
}

namespace {

Vec coefficient_field(const Triangulation& mesh, const AffineMapSet& maps,
                      const Materials& materials, const Mat& ref_grads) {
  Vec nu(mesh.n_tris());
  for (Index t = 0; t < mesh.n_tris(); ++t) {
    const Region r = mesh.region_of[static_cast<std::size_t>(t)];
    if (r == Region::iron) {
      const auto& m = maps.maps[static_cast<std::size_t>(mesh.macro_of[t])];
      const double s = (m.Cinv.transpose() * ref_grads.row(t).transpose()).norm();
      nu[t] = materials.curve.value(s);
    } else {
      nu[t] = materials.nu2_of(r);
    }
  }
  return nu;
}

}  // namespace

SpMat assemble_operator_coeff(const Triangulation& mesh, const TruthSpace& space,
                              const AffineMapSet& maps, const Vec& nu_per_tri) {
  if (nu_per_tri.size() != mesh.n_tris())
    throw Error("assemble_operator_coeff: coefficient length mismatch");
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(9 * mesh.n_tris()));
  for (Index t = 0; t < mesh.n_tris(); ++t) {
    const auto& m = maps.maps[static_cast<std::size_t>(mesh.macro_of[t])];
    const Mat23& g = mesh.gradop[static_cast<std::size_t>(t)];
    const Mat23 Gg = m.G * g;
    const double w = nu_per_tri[t] * m.adet * mesh.area[t];
    for (int i = 0; i < 3; ++i) {
      const int di = space.node_dof[static_cast<std::size_t>(mesh.tris(t, i))];
      if (di < 0) continue;
      const double si = space.node_sign[static_cast<std::size_t>(mesh.tris(t, i))];
      for (int j = 0; j < 3; ++j) {
        const int dj = space.node_dof[static_cast<std::size_t>(mesh.tris(t, j))];
        if (dj < 0) continue;
        const double sj = space.node_sign[static_cast<std::size_t>(mesh.tris(t, j))];
        trip.emplace_back(di, dj, si * sj * w * g.col(i).dot(Gg.col(j)));
      }
    }
  }
  SpMat A(space.n_free, space.n_free);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

SpMat assemble_operator(const Triangulation& mesh, const TruthSpace& space,
                        const AffineMapSet& maps, const Materials& materials,
                        const Vec& u_free) {
  const Mat g = triangle_gradients(mesh, space, u_free);
  return assemble_operator_coeff(mesh, space, maps, coefficient_field(mesh, maps, materials, g));
}

SpMat assemble_newton_jacobian(const Triangulation& mesh, const TruthSpace& space,
                               const AffineMapSet& maps, const Materials& materials,
                               const Vec& u_free) {
  const Mat grads = triangle_gradients(mesh, space, u_free);
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(9 * mesh.n_tris()));
  for (Index t = 0; t < mesh.n_tris(); ++t) {
    const auto& m = maps.maps[static_cast<std::size_t>(mesh.macro_of[t])];
    const Mat23& g = mesh.gradop[static_cast<std::size_t>(t)];
    const Region reg = mesh.region_of[static_cast<std::size_t>(t)];
    const Mat23 Jg = m.Cinv.transpose() * g;  // J^{-T} grad of the 3 hats
    const Vec2 y = m.Cinv.transpose() * grads.row(t).transpose();
    const double s = y.norm();
    const double nu = (reg == Region::iron) ? materials.curve.value(s) : materials.nu2_of(reg);
    const double w = m.adet * mesh.area[t];

    Eigen::Matrix3d loc = nu * w * (Jg.transpose() * Jg);
    if (reg == Region::iron && s >= 1e-12) {
      const Eigen::Vector3d proj = Jg.transpose() * y;
      loc += (materials.curve.derivative(s) / s) * w * (proj * proj.transpose());
    }
    for (int i = 0; i < 3; ++i) {
      const int di = space.node_dof[static_cast<std::size_t>(mesh.tris(t, i))];
      if (di < 0) continue;
      const double si = space.node_sign[static_cast<std::size_t>(mesh.tris(t, i))];
      for (int j = 0; j < 3; ++j) {
        const int dj = space.node_dof[static_cast<std::size_t>(mesh.tris(t, j))];
        if (dj < 0) continue;
        const double sj = space.node_sign[static_cast<std::size_t>(mesh.tris(t, j))];
        trip.emplace_back(di, dj, si * sj * loc(i, j));
      }
    }
  }
  SpMat D(space.n_free, space.n_free);
  D.setFromTriplets(trip.begin(), trip.end());
  return D;
}

Vec apply_operator(const Triangulation& mesh, const TruthSpace& space, const AffineMapSet& maps,
                   const Materials& materials, const Vec& u_free) {
  const Mat grads = triangle_gradients(mesh, space, u_free);
  const Vec nu = coefficient_field(mesh, maps, materials, grads);
  Vec out = Vec::Zero(space.n_free);
  for (Index t = 0; t < mesh.n_tris(); ++t) {
    const auto& m = maps.maps[static_cast<std::size_t>(mesh.macro_of[t])];
    const Mat23& g = mesh.gradop[static_cast<std::size_t>(t)];
    const Vec2 Ggu = m.G * grads.row(t).transpose();
    const double w = nu[t] * m.adet * mesh.area[t];
    for (int i = 0; i < 3; ++i) {
      const int di = space.node_dof[static_cast<std::size_t>(mesh.tris(t, i))];
      if (di < 0) continue;
      out[di] += space.node_sign[static_cast<std::size_t>(mesh.tris(t, i))] * w *
                 g.col(i).dot(Ggu);
    }
  }
  return out;
}

LoadExpansion build_load_expansion(const Triangulation& mesh, const TruthSpace& space,
                                   const Sources& sources) {
  LoadExpansion out;
  const int n_macro =
      mesh.n_tris() == 0 ? 0 : (mesh.macro_of.maxCoeff() + 1);

  for (int d = 0; d < n_macro; ++d) {
    Region reg = Region::air;
    bool seen = false;
    std::vector<Index> tris_d;
    for (Index t = 0; t < mesh.n_tris(); ++t) {
      if (mesh.macro_of[t] != d) continue;
      reg = mesh.region_of[static_cast<std::size_t>(t)];
      seen = true;
      tris_d.push_back(t);
    }
    if (!seen || reg == Region::iron) continue;

    const double je = sources.j_e_of(reg);
    if (je != 0.0) {
      Vec piece = Vec::Zero(mesh.n_nodes());
      for (const Index t : tris_d) {
        const double w = je * mesh.area[t] / 3.0;
        for (int k = 0; k < 3; ++k) piece[mesh.tris(t, k)] += w;
      }
      out.pieces.push_back(space.fold(piece));
      out.meta.push_back({LoadPieceMeta::Kind::je, d, 0});
    }
    const Vec2 hpm = sources.h_pm_of(reg);
    for (int comp = 0; comp < 2; ++comp) {
      if (hpm[comp] == 0.0) continue;
      for (int i = 0; i < 2; ++i) {
        Vec piece = Vec::Zero(mesh.n_nodes());
        for (const Index t : tris_d) {
          const Mat23& g = mesh.gradop[static_cast<std::size_t>(t)];
          const double w = hpm[comp] * mesh.area[t];
          for (int k = 0; k < 3; ++k) piece[mesh.tris(t, k)] += w * g(i, k);
        }
        out.pieces.push_back(space.fold(piece));
        out.meta.push_back(
            {comp == 0 ? LoadPieceMeta::Kind::hpm1 : LoadPieceMeta::Kind::hpm2, d, i});
      }
    }
  }
  return out;
}

double load_phi(const LoadPieceMeta& meta, const AffineMapSet& maps) {
  const auto& m = maps.maps[static_cast<std::size_t>(meta.macro_d)];
  switch (meta.kind) {
    case LoadPieceMeta::Kind::je:
      return m.adet;
    case LoadPieceMeta::Kind::hpm1:
      // +H_pm,1 ∂v/∂x_2 term: row 2 of C^{-T}
      return m.adet * m.Cinv(meta.i, 1);
    case LoadPieceMeta::Kind::hpm2:
      // -H_pm,2 ∂v/∂x_1 term: row 1 of C^{-T}
      return -m.adet * m.Cinv(meta.i, 0);
  }
  return 0.0;
}

Vec assemble_load(const LoadExpansion& load, const AffineMapSet& maps, Index n_free) {
  Vec F = Vec::Zero(n_free);
  for (std::size_t q = 0; q < load.pieces.size(); ++q)
    F += load_phi(load.meta[q], maps) * load.pieces[q];
  return F;
}

TruthSolution newton_solve(const Triangulation& mesh, const TruthSpace& space,
                           const AffineMapSet& maps, const Materials& materials,
                           const Sources& sources, const NewtonOptions& opts) {
  if (!(opts.tol > 0.0)) throw Error("newton_solve: tolerance must be positive");
  const LoadExpansion load = build_load_expansion(mesh, space, sources);
  const Vec F = assemble_load(load, maps, space.n_free);

  Vec u = opts.u0.size() ? opts.u0 : Vec::Zero(space.n_free);
  if (u.size() != space.n_free) throw Error("newton_solve: initial guess length mismatch");

  auto residual = [&](const Vec& v) -> Vec {
    return F - apply_operator(mesh, space, maps, materials, v);
  };

  TruthSolution sol;
  sol.p = maps.p;
  Vec r = residual(u);
  double rn = r.norm();
  sol.residual_history.push_back(rn);

  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool analyzed = false;
  for (int it = 0; it < opts.max_iter && rn > opts.tol; ++it) {
    const SpMat D = assemble_newton_jacobian(mesh, space, maps, materials, u);
    if (!analyzed) {
      ldlt.analyzePattern(D);
      analyzed = true;
    }
    ldlt.factorize(D);
    Vec delta;
    if (ldlt.info() == Eigen::Success) {
      delta = ldlt.solve(r);
    } else {
      Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg(D);
      cg.setTolerance(1e-14);
      delta = cg.solve(r);
      if (cg.info() != Eigen::Success)
        throw NewtonFailure("newton_solve: singular linear solve", u, sol.residual_history);
    }

    double step = 1.0;
    Vec u_try = u + delta;
    Vec r_try = residual(u_try);
    double rn_try = r_try.norm();
    int halvings = 0;
    while (rn_try >= rn && halvings < opts.max_halvings) {
      step *= 0.5;
      ++halvings;
      u_try = u + step * delta;
      r_try = residual(u_try);
      rn_try = r_try.norm();
    }
    if (rn_try >= rn)
      throw NewtonFailure("newton_solve: line search stagnated at residual " + std::to_string(rn),
                          u, sol.residual_history);
    u = u_try;
    r = r_try;
    rn = rn_try;
    sol.residual_history.push_back(rn);
    sol.iterations = it + 1;
  }
  if (rn > opts.tol)
    throw NewtonFailure("newton_solve: no convergence after " + std::to_string(opts.max_iter) +
                            " iterations (residual " + std::to_string(rn) + ")",
                        u, sol.residual_history);
  sol.u = u;
  sol.residual_norm = rn;
  return sol;
}

}  // namespace rbms
