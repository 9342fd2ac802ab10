#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <filesystem>
#include <fstream>

#include "rbms/rb_offline.hpp"
#include "rbms/rb_online.hpp"
#include "support/oracles.hpp"

using namespace rbms;

using testsup::eim_form_operator;

TEST_CASE("gram-schmidt: normalization, rejection, orthonormality") {
  const MacroDecomposition g = testsup::toy_cell();
  const Triangulation mesh = generate_mesh(g, 3);
  const TruthSpace space = build_truth_space(mesh, true);
  std::mt19937_64 rng(79);

  Mat basis(space.n_free, 0);
  const Vec v = testsup::random_vec(space.n_free, rng);
  REQUIRE(gram_schmidt_insert(space.K, basis, v));
  CHECK(basis.cols() == 1);
  CHECK(x_norm(space, basis.col(0)) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(x_norm(space, v / x_norm(space, v) - basis.col(0)) <= 1e-13);

  // re-inserting the same snapshot is rejected
  CHECK_FALSE(gram_schmidt_insert(space.K, basis, 2.5 * v));
  CHECK(basis.cols() == 1);

  for (int k = 0; k < 4; ++k)
    REQUIRE(gram_schmidt_insert(space.K, basis, testsup::random_vec(space.n_free, rng)));
  const Mat gram = basis.transpose() * space.K * basis;
  CHECK((gram - Mat::Identity(5, 5)).norm() <= 1e-10);
}

TEST_CASE("separable tensors recombine to the direct Galerkin projection") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const RbModel& model = toy.model;
  REQUIRE(model.N() >= 2);
  std::mt19937_64 rng(83);

  std::vector<Vec> probes{toy.ctx.decomp.ref_param};
  for (int k = 0; k < 3; ++k)
    probes.push_back(Vec::Constant(1, testsup::unit_draw(rng)));

  for (const auto& p : probes) {
    const OnlineSystem sys = online_setup(model, p);
    const Vec w = testsup::random_vec(model.N(), rng, 0.3);
    const Vec phi = online_phi_eim(model, sys.maps, w);

    Mat reduced = sys.A2;
    for (int m = 0; m < model.M(); ++m) reduced += phi[m] * sys.Ahat[static_cast<std::size_t>(m)];

    const SpMat A_truth = eim_form_operator(toy.ctx, model, sys.maps, phi);
    const Mat projected = model.basis.transpose() * A_truth * model.basis;
    CHECK((reduced - projected).norm() <= 1e-11 * projected.norm());

    // reduced load against the direct projection
    const Vec F_truth = assemble_load(toy.ctx.load, sys.maps, toy.ctx.space.n_free);
    CHECK((sys.F - model.basis.transpose() * F_truth).norm() <= 1e-12 * F_truth.norm());
  }
}

TEST_CASE("tensor block with a constant q equals the per-triangle closed form") {
  // N = 1, M = 1 with q == 1: a^{ij}_{1,1} = sum_t area_t d_i zeta d_j zeta
  OfflineContext ctx = make_offline_context(testsup::toy_cell(), 2, true,
                                            testsup::toy_materials(), testsup::toy_sources(), {}, 1);
  RbModel model;
  model.decomp = ctx.decomp;
  model.level = ctx.level;
  model.all_dirichlet = true;
  model.materials = ctx.materials;
  model.sources = ctx.sources;
  model.basis = Mat(ctx.space.n_free, 0);
  std::mt19937_64 rng(991);
  REQUIRE(gram_schmidt_insert(ctx.space.K, model.basis, testsup::random_vec(ctx.space.n_free, rng)));
  NonlinearityField constant_field;
  constant_field.p = ctx.decomp.ref_param;
  constant_field.values = Vec::Constant(static_cast<Index>(ctx.mesh.iron_tris.size()), 1.77);
  model.eim = eim_build({constant_field}, 1e-12, 1);
  REQUIRE(model.eim.M() == 1);
  rebuild_separable_tensors(model, ctx);

  const Vec nodal = ctx.space.expand(model.basis.col(0));
  Mat2 expected = Mat2::Zero();
  for (const int t : ctx.mesh.iron_tris) {
    Eigen::Vector3d loc(nodal[ctx.mesh.tris(t, 0)], nodal[ctx.mesh.tris(t, 1)],
                        nodal[ctx.mesh.tris(t, 2)]);
    const Vec2 grad = ctx.mesh.gradop[static_cast<std::size_t>(t)] * loc;
    // q_1 == 1 after the EIM normalization of a constant field
    expected += ctx.mesh.area[t] * grad * grad.transpose();
  }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(model.nl_blocks[static_cast<std::size_t>(2 * i + j)](0, 0) ==
            doctest::Approx(expected(i, j)).epsilon(1e-12));
}

TEST_CASE("residual Riesz Gram matrix: structure and count") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const RbModel& model = toy.model;
  const Index qr = model.Q_r();
  CHECK(qr == model.Q_f() +
                  static_cast<Index>(model.N()) *
                      (model.M() + 4 * model.M() * model.L1() + 4 * model.L2()));
  CHECK(model.G_r.rows() == qr);
  CHECK((model.G_r - model.G_r.transpose()).norm() == 0.0);
  Eigen::SelfAdjointEigenSolver<Mat> es(model.G_r);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
}

TEST_CASE("dual norm via G_r equals a direct Riesz solve") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const RbModel& model = toy.model;
  Eigen::SimplicialLDLT<SpMat>& Kfact = *toy.ctx.Kfact;
  std::mt19937_64 rng(89);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec p = Vec::Constant(1, testsup::unit_draw(rng));
    ReducedOptions ropts;
    ropts.tol = 1e-11;
    const ReducedSolution sol = reduced_newton(model, p, ropts);
    const ErrorCertificate cert = estimate_error(model, sol);

    const AffineMapSet maps = build_affine_maps(model.decomp, p);
    const Vec phi = online_phi_eim(model, maps, sol.coeffs);
    const Vec lifted = lift(model, sol.coeffs);
    const Vec r = assemble_load(toy.ctx.load, maps, toy.ctx.space.n_free) -
                  eim_form_operator(toy.ctx, model, maps, phi) * lifted;
    const double direct = std::sqrt(r.dot(Kfact.solve(r)));
    CHECK(cert.dual_norm == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("full Riesz rebuild reproduces the incrementally grown Gram matrix") {
  testsup::ToyModel toy = testsup::build_toy_model();
  RbModel rebuilt = toy.model;
  rebuilt.G_r = Mat(0, 0);
  assemble_residual_riesz(rebuilt, toy.ctx);
  REQUIRE(rebuilt.G_r.rows() == toy.model.G_r.rows());
  CHECK(rebuilt.G_r == toy.model.G_r);  // entrywise identical computations
}

TEST_CASE("dual norm consistency survives model truncation") {
  testsup::ToyModel toy = testsup::build_toy_model(3, 7, 1e-12, 5, 1e-12, 6);
  const RbModel& model = toy.model;
  REQUIRE(model.N() >= 3);
  REQUIRE(model.M() >= 3);
  const RbModel sub = truncate_model(model, 2, 2);
  std::mt19937_64 rng(97);
  for (int trial = 0; trial < 3; ++trial) {
    const Vec p = Vec::Constant(1, testsup::unit_draw(rng));
    ReducedOptions ropts;
    ropts.tol = 1e-11;
    const ReducedSolution sol = reduced_newton(sub, p, ropts);
    const ErrorCertificate cert = estimate_error(sub, sol);

    const AffineMapSet maps = build_affine_maps(sub.decomp, p);
    const Vec phi = online_phi_eim(sub, maps, sol.coeffs);
    const Vec lifted = lift(sub, sol.coeffs);
    const Vec r = assemble_load(toy.ctx.load, maps, toy.ctx.space.n_free) -
                  eim_form_operator(toy.ctx, sub, maps, phi) * lifted;
    const double direct = std::sqrt(r.dot(toy.ctx.Kfact->solve(r)));
    CHECK(cert.dual_norm == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("greedy with a single training parameter stops at N = 1") {
  testsup::ToyModel toy;
  toy.ctx = make_offline_context(testsup::toy_cell(), 3, true, testsup::toy_materials(),
                                 testsup::toy_sources(), {}, 1);
  toy.ctx.newton.tol = 1e-10;
  const Vec mid = toy.ctx.decomp.box.midpoint();
  std::vector<NonlinearityField> fields;
  const TruthSolution sol = offline_truth_solve(toy.ctx, mid, &toy.store);
  fields.push_back(nonlinearity_snapshot(toy.ctx, mid, sol.u));
  const EimApproximation eim = eim_build(fields, 1e-10, 4);
  GreedyOptions opts;
  opts.eps_rb = 1e-3;
  opts.n_max = 3;
  opts.reduced.tol = 1e-11;
  GreedyInfo info;
  const RbModel model = greedy_build(toy.ctx, {mid}, eim, opts, toy.store, &info);
  CHECK(model.N() == 1);
  CHECK(info.converged);
  // the estimator at the seed is dominated by the EIM contribution
  const ReducedSolution rsol = reduced_newton(model, mid);
  const ErrorCertificate cert = estimate_error(model, rsol);
  CHECK(cert.delta_rb <= 1e-3 * std::max(1.0, cert.delta));
}

TEST_CASE("linear problem: greedy captures the manifold and bounds the error") {
  testsup::ToyModel toy;
  toy.ctx = make_offline_context(testsup::toy_cell(), 3, true, testsup::toy_materials(),
                                 testsup::toy_sources(), {}, 1);
  Materials lin = toy.ctx.materials;
  lin.curve = ReluctivityCurve::constant(3.0);
  lin.bounds = lin.curve.validate(3.0);
  toy.ctx.materials = lin;
  toy.ctx.newton.tol = 1e-11;
  toy.train = regular_grid(toy.ctx.decomp.box, {9});
  // constant field: EIM with one basis function is exact
  const TruthSolution sol = offline_truth_solve(toy.ctx, toy.train[0], &toy.store);
  std::vector<NonlinearityField> fields{nonlinearity_snapshot(toy.ctx, toy.train[0], sol.u)};
  const EimApproximation eim = eim_build(fields, 1e-12, 1);
  REQUIRE(eim.M() == 1);
  GreedyOptions opts;
  opts.eps_rb = 1e-8;
  opts.n_max = 8;
  opts.reduced.tol = 1e-12;
  GreedyInfo info;
  const RbModel model = greedy_build(toy.ctx, toy.train, eim, opts, toy.store, &info);
  CHECK(info.converged);
  for (const auto& p : toy.train) {
    const ReducedSolution rsol = reduced_newton(model, p);
    const ErrorCertificate cert = estimate_error(model, rsol);
    const TruthSolution truth = offline_truth_solve(toy.ctx, p, &toy.store);
    const double err = x_norm(toy.ctx.space, truth.u - lift(model, rsol.coeffs));
    CHECK(err <= cert.delta + 1e-12);
  }
}

TEST_CASE("basis orthonormality is assertable from the stored model") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const Mat gram = toy.model.basis.transpose() * toy.ctx.space.K * toy.model.basis;
  CHECK((gram - Mat::Identity(toy.model.N(), toy.model.N())).norm() <= 1e-10);
}

TEST_CASE("model container round-trips losslessly") {
  namespace fs = std::filesystem;
  testsup::ToyModel toy = testsup::build_toy_model();
  const std::string p1 = (fs::temp_directory_path() / "rbms_model_a.rbm").string();
  const std::string p2 = (fs::temp_directory_path() / "rbms_model_b.rbm").string();
  save_model(toy.model, p1);
  const RbModel loaded = load_model(p1);
  save_model(loaded, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(b1.size() > 0);

  // online solve from the loaded model is bitwise identical
  const Vec p = Vec::Constant(1, 0.37);
  const ReducedSolution s1 = reduced_newton(toy.model, p);
  const ReducedSolution s2 = reduced_newton(loaded, p);
  CHECK(s1.coeffs == s2.coeffs);
  const ErrorCertificate c1 = estimate_error(toy.model, s1);
  const ErrorCertificate c2 = estimate_error(loaded, s2);
  CHECK(c1.delta == c2.delta);

  // truncated container corruption is diagnosed
  std::ofstream trunc(p2, std::ios::binary | std::ios::trunc);
  trunc.write(b1.data(), static_cast<std::streamsize>(b1.size() / 2));
  trunc.close();
  CHECK_THROWS_AS(load_model(p2), Error);
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("snapshot store caches by exact parameter") {
  testsup::ToyModel toy = testsup::build_toy_model(2, 3, 1e-9, 2);
  const std::size_t before = toy.store.size();
  // the greedy already solved these; a repeat must be a cache hit
  const Vec p = toy.model.selected_params.front();
  (void)offline_truth_solve(toy.ctx, p, &toy.store);
  CHECK(toy.store.size() == before);

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "rbms_snaps.bin").string();
  toy.store.save(path);
  const SnapshotStore loaded = SnapshotStore::load(path);
  CHECK(loaded.size() == toy.store.size());
  REQUIRE(loaded.find(p) != nullptr);
  CHECK(loaded.find(p)->u == toy.store.find(p)->u);
  fs::remove(path);
}

TEST_CASE("results are independent of the worker thread count") {
  namespace fs = std::filesystem;
  std::vector<std::string> blobs;
  for (int jobs : {1, 2}) {
    OfflineContext ctx = make_offline_context(testsup::toy_cell(), 3, true,
                                              testsup::toy_materials(), testsup::toy_sources(),
                                              {}, jobs);
    ctx.newton.tol = 1e-10;
    PipelineOptions opts;
    opts.eim1_train = regular_grid(ctx.decomp.box, {3});
    opts.train = regular_grid(ctx.decomp.box, {5});
    opts.eps_eim = 1e-4;
    opts.m_max = 5;
    opts.greedy.eps_rb = 1e-7;
    opts.greedy.n_max = 4;
    opts.greedy.reduced.tol = 1e-11;
    SnapshotStore store;
    const PipelineResult res = run_offline_pipeline(ctx, opts, store);
    const std::string path =
        (fs::temp_directory_path() / ("rbms_jobs_" + std::to_string(jobs) + ".rbm")).string();
    save_model(res.model, path);
    std::ifstream f(path, std::ios::binary);
    blobs.emplace_back((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    fs::remove(path);
  }
  CHECK(blobs[0] == blobs[1]);
}

TEST_CASE("flux range growth re-certifies the curve") {
  OfflineContext ctx = make_offline_context(testsup::toy_cell(), 3, true,
                                            testsup::toy_materials(), testsup::toy_sources(), {}, 1);
  ctx.materials.bounds = ctx.materials.curve.validate(1e-3);  // deliberately narrow
  const double s_before = ctx.materials.bounds.s_max;
  const TruthSolution sol = offline_truth_solve(ctx, ctx.decomp.box.midpoint());
  (void)sol;
  CHECK(ctx.max_s_seen > 0.0);
  CHECK(ctx.materials.bounds.s_max >= 2.0 * ctx.max_s_seen);
  CHECK(ctx.materials.bounds.s_max > s_before);
}

TEST_CASE("greedy skips failing truth solves and stops gracefully") {
  testsup::ToyModel toy;
  toy.ctx = make_offline_context(testsup::toy_cell(), 3, true, testsup::toy_materials(),
                                 testsup::toy_sources(), {}, 1);
  toy.ctx.newton.tol = 1e-10;
  toy.train = regular_grid(toy.ctx.decomp.box, {4});
  // seed the cache with the midpoint snapshot, then forbid further solves
  const Vec mid = toy.ctx.decomp.box.midpoint();
  (void)offline_truth_solve(toy.ctx, mid, &toy.store);
  std::vector<NonlinearityField> fields{
      nonlinearity_snapshot(toy.ctx, mid, toy.store.find(mid)->u)};
  const EimApproximation eim = eim_build(fields, 1e-10, 2);
  toy.ctx.newton.max_iter = 0;  // every fresh solve now fails
  GreedyOptions opts;
  opts.eps_rb = 1e-12;  // unreachable: the greedy must try to enrich
  opts.n_max = 4;
  GreedyInfo info;
  const RbModel model = greedy_build(toy.ctx, toy.train, eim, opts, toy.store, &info);
  CHECK(model.N() == 1);
  CHECK_FALSE(info.converged);
  // all four candidates were tried, failed and excluded
  CHECK(info.warnings.size() >= toy.train.size());
}

TEST_CASE("two-stage refresh on saturated basis reproduces the magic points") {
  testsup::ToyModel toy;
  toy.ctx = make_offline_context(testsup::toy_cell(), 3, true, testsup::toy_materials(),
                                 testsup::toy_sources(), {}, 1);
  toy.ctx.newton.tol = 1e-12;
  PipelineOptions opts;
  opts.eim1_train = regular_grid(toy.ctx.decomp.box, {4});
  opts.train = opts.eim1_train;  // same set: stage-2 RB solves hit the snapshots
  opts.eps_eim = 1e-10;
  opts.m_max = 4;
  opts.greedy.eps_rb = 1e-12;
  opts.greedy.n_max = 4;  // saturate: every training snapshot enters the basis
  opts.greedy.reduced.tol = 1e-13;
  SnapshotStore store;
  const PipelineResult res = run_offline_pipeline(toy.ctx, opts, store);
  REQUIRE(res.stage1.eim_M >= 1);
  // the stage-2 build targets the dimension cap, so compare the common
  // greedy prefix: identical inputs give identical selections
  const std::size_t common = std::min(res.stage1.eim_magic.size(), res.stage2.eim_magic.size());
  REQUIRE(common >= 1);
  for (std::size_t m = 0; m < common; ++m) {
    CHECK(res.stage2.eim_magic[m] == res.stage1.eim_magic[m]);
    CHECK(res.stage2.eim_params[m] == res.stage1.eim_params[m]);
  }
}
