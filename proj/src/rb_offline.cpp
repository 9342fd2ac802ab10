#include "rbms/rb_offline.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "rbms/compensated.hpp"
#include "rbms/parallel.hpp"

namespace rbms {

// ---------------------------------------------------------------------------
// Snapshot store
// ---------------------------------------------------------------------------

namespace {

bool same_param(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * 8) == 0;
}

}  // namespace

const SnapshotRecord* SnapshotStore::find(const Vec& p) const {
  for (const auto& rec : records_)
    if (same_param(rec.p, p)) return &rec;
  return nullptr;
}

void SnapshotStore::insert(SnapshotRecord rec) {
  if (find(rec.p)) return;
  records_.push_back(std::move(rec));
}

void SnapshotStore::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write snapshot store '" + path + "'");
  const char magic[8] = {'R', 'B', 'M', 'S', 'S', 'N', 'P', '1'};
  f.write(magic, 8);
  auto w64 = [&f](std::int64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  auto wf = [&f](double v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  w64(static_cast<std::int64_t>(records_.size()));
  for (const auto& rec : records_) {
    w64(rec.p.size());
    for (Index i = 0; i < rec.p.size(); ++i) wf(rec.p[i]);
    w64(rec.u.size());
    for (Index i = 0; i < rec.u.size(); ++i) wf(rec.u[i]);
    w64(rec.iterations);
    wf(rec.residual_norm);
  }
}

SnapshotStore SnapshotStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open snapshot store '" + path + "'");
  char magic[8];
  f.read(magic, 8);
  if (f.gcount() != 8 || std::memcmp(magic, "RBMSSNP1", 8) != 0)
    throw Error("snapshot store: bad magic");
  auto r64 = [&f]() {
    std::int64_t v;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (f.gcount() != 8) throw Error("snapshot store: truncated");
    return v;
  };
  auto rf = [&f]() {
    double v;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (f.gcount() != 8) throw Error("snapshot store: truncated");
    return v;
  };
  SnapshotStore out;
  const std::int64_t n = r64();
  for (std::int64_t k = 0; k < n; ++k) {
    SnapshotRecord rec;
    rec.p = Vec(r64());
    for (Index i = 0; i < rec.p.size(); ++i) rec.p[i] = rf();
    rec.u = Vec(r64());
    for (Index i = 0; i < rec.u.size(); ++i) rec.u[i] = rf();
    rec.iterations = static_cast<int>(r64());
    rec.residual_norm = rf();
    out.records_.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Context
// ---------------------------------------------------------------------------

OfflineContext make_offline_context(const MacroDecomposition& decomp, int level,
                                    bool all_dirichlet, const Materials& materials,
                                    const Sources& sources, const NewtonOptions& newton,
                                    int jobs) {
  OfflineContext ctx;
  ctx.decomp = decomp;
  ctx.level = level;
  ctx.all_dirichlet = all_dirichlet;
  ctx.mesh = generate_mesh(decomp, level);
  ctx.space = build_truth_space(ctx.mesh, all_dirichlet);
  ctx.materials = materials;
  ctx.sources = sources;
  ctx.load = build_load_expansion(ctx.mesh, ctx.space, sources);
  ctx.Kfact = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
  ctx.Kfact->compute(ctx.space.K);
  if (ctx.Kfact->info() != Eigen::Success)
    throw Error("make_offline_context: K factorization failed");
  ctx.newton = newton;
  ctx.jobs = jobs;
  return ctx;
}

OfflineContext context_for_model(const RbModel& model, int jobs) {
  return make_offline_context(model.decomp, model.level, model.all_dirichlet, model.materials,
                              model.sources, {}, jobs);
}

namespace {

void track_flux_range(OfflineContext& ctx, const AffineMapSet& maps, const Vec& u_free) {
  const Mat g = triangle_gradients(ctx.mesh, ctx.space, u_free);
  const Vec s = pulled_gradient_norms(ctx.mesh, maps, g);
  ctx.max_s_seen = std::max(ctx.max_s_seen, s.maxCoeff());
  if (2.0 * ctx.max_s_seen > ctx.materials.bounds.s_max)
    ctx.materials.bounds = ctx.materials.curve.validate(2.0 * ctx.max_s_seen);
}

}  // namespace

TruthSolution offline_truth_solve(OfflineContext& ctx, const Vec& p, SnapshotStore* store) {
  if (store) {
    if (const SnapshotRecord* rec = store->find(p)) {
      TruthSolution sol;
      sol.u = rec->u;
      sol.p = rec->p;
      sol.iterations = rec->iterations;
      sol.residual_norm = rec->residual_norm;
      return sol;
    }
  }
  const AffineMapSet maps = build_affine_maps(ctx.decomp, p);
  NewtonOptions opts = ctx.newton;
  TruthSolution sol = newton_solve(ctx.mesh, ctx.space, maps, ctx.materials, ctx.sources, opts);
  track_flux_range(ctx, maps, sol.u);
  if (store) store->insert({sol.p, sol.u, sol.iterations, sol.residual_norm});
  return sol;
}

NonlinearityField nonlinearity_snapshot(const OfflineContext& ctx, const Vec& p,
                                        const Vec& u_free) {
  const AffineMapSet maps = build_affine_maps(ctx.decomp, p);
  NonlinearityField f;
  f.p = p;
  f.values = iron_nonlinearity(ctx.mesh, maps, ctx.materials,
                               triangle_gradients(ctx.mesh, ctx.space, u_free));
  return f;
}

// ---------------------------------------------------------------------------
// Basis
// ---------------------------------------------------------------------------

bool gram_schmidt_insert(const SpMat& K, Mat& basis, const Vec& snapshot, double defect_tol) {
  const double norm0 = std::sqrt(snapshot.dot(K * snapshot));
  if (!(norm0 > 0.0)) return false;
  Vec v = snapshot;
  for (int pass = 0; pass < 2; ++pass) {
    const Vec Kv = K * v;
    for (Index i = 0; i < basis.cols(); ++i) v -= basis.col(i).dot(Kv) * basis.col(i);
  }
  const double norm1 = std::sqrt(v.dot(K * v));
  if (norm1 <= defect_tol * norm0) return false;
  basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
  basis.col(basis.cols() - 1) = v / norm1;
  return true;
}

// ---------------------------------------------------------------------------
// Separable tensors
// ---------------------------------------------------------------------------

namespace {

// Per-triangle gradient components of every basis function (n_tris x N each).
std::pair<Mat, Mat> basis_gradients(const OfflineContext& ctx, const Mat& basis) {
  const Index nt = ctx.mesh.n_tris();
  Mat gx(nt, basis.cols()), gy(nt, basis.cols());
  for (Index n = 0; n < basis.cols(); ++n) {
    const Vec nodal = ctx.space.expand(basis.col(n));
    for (Index t = 0; t < nt; ++t) {
      Eigen::Vector3d loc(nodal[ctx.mesh.tris(t, 0)], nodal[ctx.mesh.tris(t, 1)],
                          nodal[ctx.mesh.tris(t, 2)]);
      const Vec2 g = ctx.mesh.gradop[static_cast<std::size_t>(t)] * loc;
      gx(t, n) = g.x();
      gy(t, n) = g.y();
    }
  }
  return {std::move(gx), std::move(gy)};
}

std::vector<std::vector<Index>> tris_of_macro(const Triangulation& mesh, int n_macro) {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n_macro));
  for (Index t = 0; t < mesh.n_tris(); ++t)
    out[static_cast<std::size_t>(mesh.macro_of[t])].push_back(t);
  return out;
}

}  // namespace

void rebuild_separable_tensors(RbModel& model, const OfflineContext& ctx) {
  const int N = model.N();
  const int M = model.M();
  model.iron_d = ctx.decomp.iron_macros();
  model.other_d = ctx.decomp.other_macros();
  const int L1 = model.L1(), L2 = model.L2();
  const auto [gx, gy] = basis_gradients(ctx, model.basis);

  // position of each iron fine triangle in the iron list
  std::vector<Index> iron_pos(static_cast<std::size_t>(ctx.mesh.n_tris()), -1);
  for (std::size_t b = 0; b < ctx.mesh.iron_tris.size(); ++b)
    iron_pos[static_cast<std::size_t>(ctx.mesh.iron_tris[b])] = static_cast<Index>(b);

  // magic-point data
  model.magic_tri.resize(static_cast<std::size_t>(M));
  model.magic_macro.resize(static_cast<std::size_t>(M));
  model.magic_gradx = Mat(M, N);
  model.magic_grady = Mat(M, N);
  for (int m = 0; m < M; ++m) {
    const int t = ctx.mesh.iron_tris[static_cast<std::size_t>(model.eim.magic[static_cast<std::size_t>(m)])];
    model.magic_tri[static_cast<std::size_t>(m)] = t;
    model.magic_macro[static_cast<std::size_t>(m)] = ctx.mesh.macro_of[t];
    model.magic_gradx.row(m) = gx.row(t);
    model.magic_grady.row(m) = gy.row(t);
  }

  // iron barycenter data
  const Index nT = static_cast<Index>(ctx.mesh.iron_tris.size());
  model.iron_macro.resize(static_cast<std::size_t>(nT));
  model.iron_gradx = Mat(nT, N);
  model.iron_grady = Mat(nT, N);
  for (Index b = 0; b < nT; ++b) {
    const int t = ctx.mesh.iron_tris[static_cast<std::size_t>(b)];
    model.iron_macro[static_cast<std::size_t>(b)] = ctx.mesh.macro_of[t];
    model.iron_gradx.row(b) = gx.row(t);
    model.iron_grady.row(b) = gy.row(t);
  }

  const auto macro_tris = tris_of_macro(ctx.mesh, static_cast<int>(ctx.decomp.triangles.size()));

  // nonlinear blocks a^{ij}_{m,d}(zeta_J, zeta_I) = sum_t q_m area d_i zeta_J d_j zeta_I
  model.nl_blocks.assign(static_cast<std::size_t>(M * L1 * 4), Mat());
  for (int a = 0; a < L1; ++a) {
    const auto& tris = macro_tris[static_cast<std::size_t>(model.iron_d[static_cast<std::size_t>(a)])];
    const Index ntd = static_cast<Index>(tris.size());
    Mat Gx(ntd, N), Gy(ntd, N);
    Vec area(ntd);
    Mat q_rows(ntd, M);
    for (Index k = 0; k < ntd; ++k) {
      const Index t = tris[static_cast<std::size_t>(k)];
      Gx.row(k) = gx.row(t);
      Gy.row(k) = gy.row(t);
      area[k] = ctx.mesh.area[t];
      q_rows.row(k) = model.eim.q.row(iron_pos[static_cast<std::size_t>(t)]);
    }
    for (int m = 0; m < M; ++m) {
      const Vec w = q_rows.col(m).cwiseProduct(area);
      const Mat Gxw = w.asDiagonal() * Gx;
      const Mat Gyw = w.asDiagonal() * Gy;
      // block^{ij}[I,J]: trial derivative i on column J, test derivative j on row I
      model.nl_blocks[static_cast<std::size_t>((m * L1 + a) * 4 + 0)] = Gx.transpose() * Gxw;  // i=0,j=0
      model.nl_blocks[static_cast<std::size_t>((m * L1 + a) * 4 + 1)] = Gy.transpose() * Gxw;  // i=0,j=1
      model.nl_blocks[static_cast<std::size_t>((m * L1 + a) * 4 + 2)] = Gx.transpose() * Gyw;  // i=1,j=0
      model.nl_blocks[static_cast<std::size_t>((m * L1 + a) * 4 + 3)] = Gy.transpose() * Gyw;  // i=1,j=1
    }
  }

  model.lin_blocks.assign(static_cast<std::size_t>(L2 * 4), Mat());
  for (int a = 0; a < L2; ++a) {
    const auto& tris = macro_tris[static_cast<std::size_t>(model.other_d[static_cast<std::size_t>(a)])];
    const Index ntd = static_cast<Index>(tris.size());
    Mat Gx(ntd, N), Gy(ntd, N);
    Vec area(ntd);
    for (Index k = 0; k < ntd; ++k) {
      const Index t = tris[static_cast<std::size_t>(k)];
      Gx.row(k) = gx.row(t);
      Gy.row(k) = gy.row(t);
      area[k] = ctx.mesh.area[t];
    }
    const Mat Gxw = area.asDiagonal() * Gx;
    const Mat Gyw = area.asDiagonal() * Gy;
    model.lin_blocks[static_cast<std::size_t>(a * 4 + 0)] = Gx.transpose() * Gxw;
    model.lin_blocks[static_cast<std::size_t>(a * 4 + 1)] = Gy.transpose() * Gxw;
    model.lin_blocks[static_cast<std::size_t>(a * 4 + 2)] = Gx.transpose() * Gyw;
    model.lin_blocks[static_cast<std::size_t>(a * 4 + 3)] = Gy.transpose() * Gyw;
  }

  model.load_blocks.clear();
  model.load_meta = ctx.load.meta;
  for (const auto& piece : ctx.load.pieces) model.load_blocks.push_back(model.basis.transpose() * piece);
}

// ---------------------------------------------------------------------------
// Residual Riesz Gram matrix
// ---------------------------------------------------------------------------

namespace {

// The piece columns of one basis function, ordered like residual_phi.
Mat residual_piece_columns(const RbModel& model, const OfflineContext& ctx, int n) {
  const int M = model.M(), L1 = model.L1(), L2 = model.L2();
  const Index stride = model.pieces_per_basis();
  Mat out = Mat::Zero(ctx.space.n_free, stride);

  const Vec nodal = ctx.space.expand(model.basis.col(n));
  std::vector<Index> iron_pos(static_cast<std::size_t>(ctx.mesh.n_tris()), -1);
  for (std::size_t b = 0; b < ctx.mesh.iron_tris.size(); ++b)
    iron_pos[static_cast<std::size_t>(ctx.mesh.iron_tris[b])] = static_cast<Index>(b);
  std::vector<int> iron_a(ctx.decomp.triangles.size(), -1), other_a(ctx.decomp.triangles.size(), -1);
  for (int a = 0; a < L1; ++a) iron_a[static_cast<std::size_t>(model.iron_d[static_cast<std::size_t>(a)])] = a;
  for (int a = 0; a < L2; ++a) other_a[static_cast<std::size_t>(model.other_d[static_cast<std::size_t>(a)])] = a;

  for (Index t = 0; t < ctx.mesh.n_tris(); ++t) {
    const Mat23& gop = ctx.mesh.gradop[static_cast<std::size_t>(t)];
    Eigen::Vector3d loc(nodal[ctx.mesh.tris(t, 0)], nodal[ctx.mesh.tris(t, 1)],
                        nodal[ctx.mesh.tris(t, 2)]);
    const Vec2 g = gop * loc;
    const double area = ctx.mesh.area[t];
    const int macro = ctx.mesh.macro_of[t];
    const int dofs[3] = {ctx.space.node_dof[static_cast<std::size_t>(ctx.mesh.tris(t, 0))],
                         ctx.space.node_dof[static_cast<std::size_t>(ctx.mesh.tris(t, 1))],
                         ctx.space.node_dof[static_cast<std::size_t>(ctx.mesh.tris(t, 2))]};
    const double signs[3] = {ctx.space.node_sign[static_cast<std::size_t>(ctx.mesh.tris(t, 0))],
                             ctx.space.node_sign[static_cast<std::size_t>(ctx.mesh.tris(t, 1))],
                             ctx.space.node_sign[static_cast<std::size_t>(ctx.mesh.tris(t, 2))]};

    if (iron_a[static_cast<std::size_t>(macro)] >= 0) {
      const int a = iron_a[static_cast<std::size_t>(macro)];
      const Index brow = iron_pos[static_cast<std::size_t>(t)];
      for (int m = 0; m < M; ++m) {
        const double w = model.eim.q(brow, m) * area;
        // reference-metric piece
        for (int k = 0; k < 3; ++k) {
          if (dofs[k] < 0) continue;
          out(dofs[k], m) += signs[k] * w * (g.x() * gop(0, k) + g.y() * gop(1, k));
        }
        // geometry pieces (i = trial derivative on zeta_n, j = test derivative)
        const Index base = M + static_cast<Index>(m * L1 + a) * 4;
        for (int i = 0; i < 2; ++i) {
          const double gi = (i == 0) ? g.x() : g.y();
          for (int j = 0; j < 2; ++j) {
            const Index col = base + 2 * i + j;
            for (int k = 0; k < 3; ++k) {
              if (dofs[k] < 0) continue;
              out(dofs[k], col) += signs[k] * w * gi * gop(j, k);
            }
          }
        }
      }
    } else {
      const int a = other_a[static_cast<std::size_t>(macro)];
      const Index base = M + static_cast<Index>(4 * M * L1) + static_cast<Index>(a) * 4;
      for (int i = 0; i < 2; ++i) {
        const double gi = (i == 0) ? g.x() : g.y();
        for (int j = 0; j < 2; ++j) {
          const Index col = base + 2 * i + j;
          for (int k = 0; k < 3; ++k) {
            if (dofs[k] < 0) continue;
            out(dofs[k], col) += signs[k] * area * gi * gop(j, k);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

void extend_residual_riesz(RbModel& model, const OfflineContext& ctx, RieszWorkspace& ws,
                           int n_old) {
  const Index q_old = ws.R.cols();
  const Index stride = model.pieces_per_basis();
  const Index q_expected = model.Q_f() + static_cast<Index>(n_old) * stride;
  if (n_old == 0) {
    ws.R = Mat(ctx.space.n_free, 0);
    ws.Z = Mat(ctx.space.n_free, 0);
    model.G_r = Mat(0, 0);
  } else if (q_old != q_expected) {
    throw Error("extend_residual_riesz: workspace out of sync");
  }

  const Index q0 = ws.R.cols();
  const Index q_new = model.Q_r();
  const Index k = q_new - q0;
  if (k == 0) return;

  Mat Rn(ctx.space.n_free, k);
  Index col = 0;
  if (n_old == 0)
    for (const auto& piece : ctx.load.pieces) Rn.col(col++) = piece;
  for (int n = n_old; n < model.N(); ++n) {
    Rn.middleCols(col, stride) = residual_piece_columns(model, ctx, n);
    col += stride;
  }

  // Riesz representatives with compensated-defect iterative refinement:
  // G_r entries feed a heavily cancelling quadratic form, so the solves need
  // forward errors well below eps*kappa(K).
  Mat Zn = ctx.Kfact->solve(Rn);
  for (Index col_i = 0; col_i < Zn.cols(); ++col_i) {
    Vec z = Zn.col(col_i);
    for (int step = 0; step < 2; ++step) {
      const Vec defect = sparse_defect_compensated(ctx.space.K, z, Rn.col(col_i));
      z += ctx.Kfact->solve(defect);
    }
    Zn.col(col_i) = z;
  }

  // compensated Gram entries: the online quadratic form cancels heavily and
  // needs the entries at full working precision
  model.G_r.conservativeResize(q_new, q_new);
  const Index n_rows = ctx.space.n_free;
  if (q0 > 0) {
    parallel_for(q0, ctx.jobs, [&](Index a) {
      for (Index b = 0; b < k; ++b) {
        const double v = dot_compensated(ws.Z.col(a).data(), Rn.col(b).data(), n_rows);
        model.G_r(a, q0 + b) = v;
        model.G_r(q0 + b, a) = v;
      }
    });
  }
  parallel_for(k, ctx.jobs, [&](Index a) {
    for (Index b = a; b < k; ++b) {
      const double v = dot_compensated(Zn.col(a).data(), Rn.col(b).data(), n_rows);
      model.G_r(q0 + a, q0 + b) = v;
      model.G_r(q0 + b, q0 + a) = v;
    }
  });

  ws.R.conservativeResize(Eigen::NoChange, q_new);
  ws.R.rightCols(k) = Rn;
  ws.Z.conservativeResize(Eigen::NoChange, q_new);
  ws.Z.rightCols(k) = Zn;
}

void assemble_residual_riesz(RbModel& model, const OfflineContext& ctx) {
  RieszWorkspace ws;
  extend_residual_riesz(model, ctx, ws, 0);
}

// ---------------------------------------------------------------------------
// Estimator sweep
// ---------------------------------------------------------------------------

SweepResult estimator_sweep(const RbModel& model, const std::vector<Vec>& params, int jobs,
                            const ReducedOptions& reduced, NuLbTracker* tracker) {
  SweepResult out;
  const Index P = static_cast<Index>(params.size());
  out.solutions.resize(static_cast<std::size_t>(P));
  out.certificates.resize(static_cast<std::size_t>(P));

  std::vector<std::string> errors(static_cast<std::size_t>(P));
  parallel_for(P, jobs, [&](Index j) {
    try {
      out.solutions[static_cast<std::size_t>(j)] =
          reduced_newton(model, params[static_cast<std::size_t>(j)], reduced);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(j)] = e.what();
    }
  });
  for (Index j = 0; j < P; ++j)
    if (!errors[static_cast<std::size_t>(j)].empty())
      throw Error("estimator sweep failed at parameter index " + std::to_string(j) + ": " +
                  errors[static_cast<std::size_t>(j)]);

  Mat Phi(model.Q_r(), P);
  std::vector<DeltaM> dms(static_cast<std::size_t>(P));
  std::vector<std::pair<double, double>> c12(static_cast<std::size_t>(P));
  parallel_for(P, jobs, [&](Index j) {
    const auto& sol = out.solutions[static_cast<std::size_t>(j)];
    const AffineMapSet maps = build_affine_maps(model.decomp, sol.p);
    c12[static_cast<std::size_t>(j)] = geometric_constants(maps);
    const Vec phi = online_phi_eim(model, maps, sol.coeffs);
    Phi.col(j) = residual_phi(model, maps, sol.coeffs, phi);
    dms[static_cast<std::size_t>(j)] = delta_m_sweep(model, maps, sol.coeffs, phi);
  });

  const Mat Y = model.G_r.selfadjointView<Eigen::Upper>() * Phi;

  double nu_frozen = std::numeric_limits<double>::infinity();
  if (model.nu_lb_mode == NuLbMode::heuristic) {
    double sweep_min = std::numeric_limits<double>::infinity();
    for (const auto& dm : dms) sweep_min = std::min(sweep_min, dm.nu_min);
    nu_frozen = tracker ? std::min(tracker->current, sweep_min) : sweep_min;
    if (tracker) tracker->current = nu_frozen;
  }

  for (Index j = 0; j < P; ++j) {
    ErrorCertificate cert;
    cert.c1 = c12[static_cast<std::size_t>(j)].first;
    cert.c2 = c12[static_cast<std::size_t>(j)].second;
    cert.dual_norm = std::sqrt(std::max(Phi.col(j).dot(Y.col(j)), 0.0));
    cert.delta_m = dms[static_cast<std::size_t>(j)].delta;
    cert.nu_min_observed = dms[static_cast<std::size_t>(j)].nu_min;
    cert.nu_lb_used =
        (model.nu_lb_mode == NuLbMode::heuristic) ? nu_frozen : model.nu_lb_floor();
    const double u_norm = out.solutions[static_cast<std::size_t>(j)].coeffs.norm();
    cert.delta_rb = cert.dual_norm / (cert.nu_lb_used * cert.c1);
    cert.delta_eim = cert.c2 * cert.delta_m * u_norm / (cert.nu_lb_used * cert.c1);
    cert.delta = cert.delta_rb + cert.delta_eim;
    out.certificates[static_cast<std::size_t>(j)] = cert;
    if (cert.delta > out.max_delta) {
      out.max_delta = cert.delta;
      out.argmax = static_cast<int>(j);
    }
  }
  if (out.argmax < 0 && P > 0) out.argmax = 0;
  return out;
}

// ---------------------------------------------------------------------------
// Greedy
// ---------------------------------------------------------------------------

RbModel greedy_build(OfflineContext& ctx, const std::vector<Vec>& train,
                     const EimApproximation& eim, const GreedyOptions& opts,
                     SnapshotStore& store, GreedyInfo* info) {
  if (train.empty()) throw Error("greedy_build: empty training set");
  if (!(opts.eps_rb > 0.0)) throw Error("greedy_build: eps_rb must be positive");

  RbModel model;
  model.decomp = ctx.decomp;
  model.level = ctx.level;
  model.all_dirichlet = ctx.all_dirichlet;
  model.materials = ctx.materials;
  model.sources = ctx.sources;
  model.eim = eim;
  model.nu_lb_mode = opts.nu_lb_mode;
  model.basis = Mat(ctx.space.n_free, 0);

  GreedyInfo local;
  GreedyInfo& gi = info ? *info : local;

  RieszWorkspace ws;
  auto add_snapshot = [&](const Vec& p) -> bool {
    const TruthSolution truth = offline_truth_solve(ctx, p, &store);
    const int n_old = model.N();
    if (!gram_schmidt_insert(ctx.space.K, model.basis, truth.u, opts.gs_defect_tol)) return false;
    model.selected_params.push_back(p);
    rebuild_separable_tensors(model, ctx);
    extend_residual_riesz(model, ctx, ws, n_old);
    model.materials = ctx.materials;  // pick up re-certified bounds
    return true;
  };

  // Arbitrary first parameter: the box midpoint.
  if (!add_snapshot(ctx.decomp.box.midpoint()))
    throw Error("greedy_build: first snapshot has zero norm (zero-source problem?)");

  NuLbTracker tracker;
  std::vector<bool> excluded(train.size(), false);
  for (;;) {
    const SweepResult sweep =
        estimator_sweep(model, train, ctx.jobs, opts.reduced,
                        opts.nu_lb_mode == NuLbMode::heuristic ? &tracker : nullptr);
    gi.eps_history.push_back(sweep.max_delta);
    if (sweep.max_delta <= opts.eps_rb) {
      gi.converged = true;
      break;
    }
    if (model.N() >= opts.n_max) {
      gi.warnings.push_back("reached n_max with estimator above tolerance");
      break;
    }

    // candidates by descending estimator, smallest index on ties
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return sweep.certificates[static_cast<std::size_t>(a)].delta >
             sweep.certificates[static_cast<std::size_t>(b)].delta;
    });
    bool inserted = false;
    bool stagnated = false;
    for (int idx : order) {
      if (excluded[static_cast<std::size_t>(idx)]) continue;
      try {
        if (add_snapshot(train[static_cast<std::size_t>(idx)])) {
          gi.selected.push_back(train[static_cast<std::size_t>(idx)]);
          inserted = true;
        } else {
          gi.warnings.push_back("snapshot at train index " + std::to_string(idx) +
                                " numerically in span; stopping (stagnation)");
          stagnated = true;
        }
      } catch (const NewtonFailure& e) {
        gi.warnings.push_back("truth solve failed at train index " + std::to_string(idx) + ": " +
                              e.what());
        excluded[static_cast<std::size_t>(idx)] = true;
        continue;
      }
      break;
    }
    if (stagnated || !inserted) {
      if (!inserted && !stagnated)
        gi.warnings.push_back("no usable training parameter left; stopping");
      break;
    }
  }

  model.eps_history = gi.eps_history;
  model.greedy_converged = gi.converged;
  model.materials = ctx.materials;
  return model;
}

// ---------------------------------------------------------------------------
// Two-stage pipeline
// ---------------------------------------------------------------------------

namespace {

std::vector<NonlinearityField> truth_fields(OfflineContext& ctx, const std::vector<Vec>& params,
                                            SnapshotStore& store) {
  const Index P = static_cast<Index>(params.size());
  std::vector<TruthSolution> sols(static_cast<std::size_t>(P));
  std::vector<int> cached(static_cast<std::size_t>(P), 0);
  for (Index j = 0; j < P; ++j) {
    if (const SnapshotRecord* rec = store.find(params[static_cast<std::size_t>(j)])) {
      sols[static_cast<std::size_t>(j)].u = rec->u;
      sols[static_cast<std::size_t>(j)].p = rec->p;
      cached[static_cast<std::size_t>(j)] = 1;
    }
  }
  std::vector<std::string> errors(static_cast<std::size_t>(P));
  parallel_for(P, ctx.jobs, [&](Index j) {
    if (cached[static_cast<std::size_t>(j)]) return;
    try {
      const Vec& p = params[static_cast<std::size_t>(j)];
      const AffineMapSet maps = build_affine_maps(ctx.decomp, p);
      sols[static_cast<std::size_t>(j)] =
          newton_solve(ctx.mesh, ctx.space, maps, ctx.materials, ctx.sources, ctx.newton);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(j)] = e.what();
    }
  });
  for (Index j = 0; j < P; ++j)
    if (!errors[static_cast<std::size_t>(j)].empty())
      throw Error("truth solve failed at EIM training parameter " + std::to_string(j) + ": " +
                  errors[static_cast<std::size_t>(j)]);
  // sequential merge keeps flux tracking and the store deterministic
  std::vector<NonlinearityField> fields;
  fields.reserve(static_cast<std::size_t>(P));
  for (Index j = 0; j < P; ++j) {
    auto& sol = sols[static_cast<std::size_t>(j)];
    if (!cached[static_cast<std::size_t>(j)]) {
      const AffineMapSet maps = build_affine_maps(ctx.decomp, sol.p);
      track_flux_range(ctx, maps, sol.u);
      store.insert({sol.p, sol.u, sol.iterations, sol.residual_norm});
    }
    fields.push_back(nonlinearity_snapshot(ctx, sol.p, sol.u));
  }
  return fields;
}

std::vector<NonlinearityField> reduced_fields(OfflineContext& ctx, const RbModel& model,
                                              const std::vector<Vec>& params,
                                              const ReducedOptions& reduced) {
  const Index P = static_cast<Index>(params.size());
  std::vector<Vec> lifted(static_cast<std::size_t>(P));
  std::vector<std::string> errors(static_cast<std::size_t>(P));
  parallel_for(P, ctx.jobs, [&](Index j) {
    try {
      const ReducedSolution sol = reduced_newton(model, params[static_cast<std::size_t>(j)], reduced);
      lifted[static_cast<std::size_t>(j)] = lift(model, sol.coeffs);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(j)] = e.what();
    }
  });
  for (Index j = 0; j < P; ++j)
    if (!errors[static_cast<std::size_t>(j)].empty())
      throw Error("reduced solve failed at EIM training parameter " + std::to_string(j) + ": " +
                  errors[static_cast<std::size_t>(j)]);
  std::vector<NonlinearityField> fields;
  fields.reserve(static_cast<std::size_t>(P));
  for (Index j = 0; j < P; ++j) {
    const Vec& p = params[static_cast<std::size_t>(j)];
    const AffineMapSet maps = build_affine_maps(ctx.decomp, p);
    track_flux_range(ctx, maps, lifted[static_cast<std::size_t>(j)]);
    fields.push_back(nonlinearity_snapshot(ctx, p, lifted[static_cast<std::size_t>(j)]));
  }
  return fields;
}

StageSummary summarize(const EimApproximation& eim, const GreedyInfo& gi, int N) {
  StageSummary s;
  s.eim_history = eim.history;
  s.eim_params = eim.params;
  s.eim_magic = eim.magic;
  s.eim_M = eim.M();
  s.eim_converged = eim.converged;
  s.greedy = gi;
  s.N = N;
  s.final_sweep = gi.eps_history.empty() ? 0.0 : gi.eps_history.back();
  return s;
}

}  // namespace

PipelineResult run_offline_pipeline(OfflineContext& ctx, const PipelineOptions& opts,
                                    SnapshotStore& store) {
  // Stage 1: truth-trained EIM, then greedy.
  const auto fields1 = truth_fields(ctx, opts.eim1_train, store);
  const EimApproximation eim1 = eim_build(fields1, opts.eps_eim, opts.m_max);
  GreedyInfo gi1;
  RbModel model1 = greedy_build(ctx, opts.train, eim1, opts.greedy, store, &gi1);

  // Stage 2: EIM retrained on reduced solutions over the full train set and
  // grown to the full dimension m_max (the refresh targets the dimension, not
  // the tolerance); the tolerance is recorded as met or missed.
  const auto fields2 = reduced_fields(ctx, model1, opts.train, opts.greedy.reduced);
  EimApproximation eim2 = eim_build(fields2, 0.0, opts.m_max);
  eim2.converged = !eim2.history.empty() && eim2.history.back() <= opts.eps_eim;
  GreedyInfo gi2;
  RbModel model2 = greedy_build(ctx, opts.train, eim2, opts.greedy, store, &gi2);

  PipelineResult out;
  out.stage1 = summarize(eim1, gi1, model1.N());
  out.stage2 = summarize(eim2, gi2, model2.N());
  out.model = std::move(model2);
  out.stage1_model = std::move(model1);
  return out;
}

}  // namespace rbms
