#include <doctest.h>

#include <Eigen/Dense>

#include "rbms/rb_offline.hpp"
#include "rbms/rb_online.hpp"
#include "support/oracles.hpp"

using namespace rbms;

TEST_CASE("lift identities") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const RbModel& model = toy.model;
  CHECK(lift(model, Vec::Zero(model.N())).norm() == 0.0);
  Vec e1 = Vec::Zero(model.N());
  e1[0] = 1.0;
  CHECK((lift(model, e1) - model.basis.col(0)).norm() == 0.0);
  std::mt19937_64 rng(101);
  const Vec w = testsup::random_vec(model.N(), rng);
  CHECK(x_norm(toy.ctx.space, lift(model, w)) == doctest::Approx(w.norm()).epsilon(1e-10));
}

TEST_CASE("reduced solve at a greedy parameter reproduces the snapshot") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const RbModel& model = toy.model;
  for (const auto& p : model.selected_params) {
    ReducedOptions opts;
    opts.tol = 1e-11;
    const ReducedSolution sol = reduced_newton(model, p, opts);
    const ErrorCertificate cert = estimate_error(model, sol);
    const SnapshotRecord* rec = toy.store.find(p);
    REQUIRE(rec != nullptr);
    const double err = x_norm(toy.ctx.space, rec->u - lift(model, sol.coeffs));
    // the snapshot is in the basis: the error is EIM-induced (plus solver noise)
    CHECK(err <= 10.0 * cert.delta_eim + 100.0 * cert.delta_rb + 1e-12);
  }
}

TEST_CASE("linear problem: one reduced Newton step equals the dense solve") {
  testsup::ToyModel toy;
  toy.ctx = make_offline_context(testsup::toy_cell(), 3, true, testsup::toy_materials(),
                                 testsup::toy_sources(), {}, 1);
  Materials lin = toy.ctx.materials;
  lin.curve = ReluctivityCurve::constant(3.0);
  lin.bounds = lin.curve.validate(3.0);
  toy.ctx.materials = lin;
  toy.ctx.newton.tol = 1e-11;
  toy.train = regular_grid(toy.ctx.decomp.box, {5});
  const TruthSolution sol0 = offline_truth_solve(toy.ctx, toy.train[2], &toy.store);
  const EimApproximation eim =
      eim_build({nonlinearity_snapshot(toy.ctx, toy.train[2], sol0.u)}, 1e-12, 1);
  GreedyOptions gopts;
  gopts.eps_rb = 1e-8;
  gopts.n_max = 6;
  gopts.reduced.tol = 1e-12;
  const RbModel model = greedy_build(toy.ctx, toy.train, eim, gopts, toy.store, nullptr);

  const Vec p = Vec::Constant(1, 0.81);
  const ReducedSolution sol = reduced_newton(model, p);
  CHECK(sol.iterations == 1);
  const OnlineSystem sys = online_setup(model, p);
  Mat A = sys.A2;
  const Vec phi = online_phi_eim(model, sys.maps, Vec::Zero(model.N()));
  for (int m = 0; m < model.M(); ++m) A += phi[m] * sys.Ahat[static_cast<std::size_t>(m)];
  const Vec direct = A.partialPivLu().solve(sys.F);
  CHECK((sol.coeffs - direct).norm() <= 1e-10 * direct.norm());
}

TEST_CASE("full and picard Newton modes share the same limit") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const RbModel& model = toy.model;
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec p = Vec::Constant(1, testsup::unit_draw(rng));
    ReducedOptions a;
    a.tol = 1e-12;
    a.mode = JacobianMode::picard;
    ReducedOptions b = a;
    b.mode = JacobianMode::full;
    const ReducedSolution sa = reduced_newton(model, p, a);
    const ReducedSolution sb = reduced_newton(model, p, b);
    CHECK((sa.coeffs - sb.coeffs).norm() <= 1e-8 * std::max(1.0, sa.coeffs.norm()));
  }
}

TEST_CASE("manufactured zero-source model gives an exactly zero certificate") {
  testsup::ToyModel toy = testsup::build_toy_model();
  RbModel model = toy.model;
  // zero out the load expansion: the reduced problem becomes homogeneous
  model.load_blocks.clear();
  model.load_meta.clear();
  const Index stride = model.pieces_per_basis();
  const Index qr_new = static_cast<Index>(model.N()) * stride;
  Mat G = Mat::Zero(qr_new, qr_new);
  const Index off = toy.model.Q_f();
  G = toy.model.G_r.block(off, off, qr_new, qr_new);
  model.G_r = G;
  REQUIRE(model.Q_r() == qr_new);

  const Vec p = Vec::Constant(1, 0.42);
  const ReducedSolution sol = reduced_newton(model, p);
  CHECK(sol.coeffs.norm() == 0.0);
  CHECK(sol.iterations == 0);
  const ErrorCertificate cert = estimate_error(model, sol);
  CHECK(cert.delta == 0.0);
  CHECK(cert.delta_rb == 0.0);
  CHECK(cert.delta_eim == 0.0);
}

TEST_CASE("certificates dominate the true error on random test parameters") {
  testsup::ToyModel toy = testsup::build_toy_model(3, 5, 1e-7, 3);
  const RbModel& model = toy.model;
  std::mt19937_64 rng(107);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec p = Vec::Constant(1, testsup::unit_draw(rng));
    const ReducedSolution sol = reduced_newton(model, p);
    const ErrorCertificate cert = estimate_error(model, sol);
    NewtonOptions topts = toy.ctx.newton;
    topts.tol = 1e-11;
    const AffineMapSet maps = build_affine_maps(toy.ctx.decomp, p);
    const TruthSolution truth = newton_solve(toy.ctx.mesh, toy.ctx.space, maps,
                                             toy.ctx.materials, toy.ctx.sources, topts);
    const double err = x_norm(toy.ctx.space, truth.u - lift(model, sol.coeffs));
    CHECK(cert.delta >= err);
    CHECK(cert.delta == cert.delta_rb + cert.delta_eim);  // bitwise split
    CHECK(cert.delta_rb >= 0.0);
    CHECK(cert.delta_eim >= 0.0);
  }
}

TEST_CASE("empty reduced model is rejected") {
  RbModel empty;
  empty.decomp = testsup::toy_cell();
  empty.basis = Mat(10, 0);
  CHECK_THROWS_AS(reduced_newton(empty, empty.decomp.box.midpoint()), Error);
}

TEST_CASE("effectivity division guard") {
  ErrorCertificate cert;
  cert.delta = 1e-3;
  const Effectivity a = effectivity(cert, 1e-16);
  CHECK(a.exact_within_precision);
  const Effectivity b = effectivity(cert, 5e-6);
  CHECK_FALSE(b.exact_within_precision);
  CHECK(b.eta == doctest::Approx(200.0));
}

TEST_CASE("delta_m sweep matches the EIM error of the lifted field") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const RbModel& model = toy.model;
  std::mt19937_64 rng(109);
  const Vec p = Vec::Constant(1, testsup::unit_draw(rng));
  const ReducedSolution sol = reduced_newton(model, p);
  const AffineMapSet maps = build_affine_maps(model.decomp, p);
  const Vec phi = online_phi_eim(model, maps, sol.coeffs);
  const DeltaM dm = delta_m_sweep(model, maps, sol.coeffs, phi);
  // oracle: evaluate the nonlinearity field of the lifted solution directly
  const NonlinearityField field = nonlinearity_snapshot(toy.ctx, p, lift(model, sol.coeffs));
  const Vec interp = model.eim.q * phi;
  const double direct = (field.values - interp).cwiseAbs().maxCoeff();
  CHECK(dm.delta == doctest::Approx(direct).epsilon(1e-12));
  CHECK(dm.nu_min == doctest::Approx(field.values.minCoeff()).epsilon(1e-12));
}

TEST_CASE("estimator nu_lb modes report what they used") {
  testsup::ToyModel toy = testsup::build_toy_model();
  RbModel model = toy.model;
  const Vec p = Vec::Constant(1, 0.3);
  const ReducedSolution sol = reduced_newton(model, p);

  model.nu_lb_mode = NuLbMode::certified_floor;
  const ErrorCertificate floor_cert = estimate_error(model, sol);
  CHECK(floor_cert.nu_lb_used == model.nu_lb_floor());

  model.nu_lb_mode = NuLbMode::heuristic;
  NuLbTracker tracker;
  EstimateOptions opts;
  opts.tracker = &tracker;
  const ErrorCertificate h1 = estimate_error(model, sol, opts);
  CHECK(h1.nu_lb_used == h1.nu_min_observed);
  CHECK(tracker.current == h1.nu_lb_used);
  // the heuristic floor only decreases across calls
  const ErrorCertificate h2 = estimate_error(model, sol, opts);
  CHECK(h2.nu_lb_used <= h1.nu_lb_used);
  // conservative floor mode gives the larger (more conservative) bound
  CHECK(floor_cert.delta >= h1.delta * (1.0 - 1e-12));
}

TEST_CASE("skip_delta_m reports a non-certified RB-only bound") {
  testsup::ToyModel toy = testsup::build_toy_model();
  const Vec p = Vec::Constant(1, 0.64);
  const ReducedSolution sol = reduced_newton(toy.model, p);
  EstimateOptions opts;
  opts.skip_delta_m = true;
  const ErrorCertificate cert = estimate_error(toy.model, sol, opts);
  CHECK(cert.delta_m_skipped);
  CHECK(cert.delta_eim == 0.0);
  CHECK(cert.delta == cert.delta_rb);
}

TEST_CASE("estimator sweep equals per-parameter certificates") {
  // keep the model away from its convergence floor so the residual dual norm
  // is not pure cancellation noise
  testsup::ToyModel toy = testsup::build_toy_model(3, 5, 2e-4, 2);
  const RbModel& model = toy.model;
  std::vector<Vec> params;
  for (int k = 0; k < 7; ++k) params.push_back(Vec::Constant(1, 0.1 + 0.1 * k));
  ReducedOptions ropts;
  const SweepResult sweep = estimator_sweep(model, params, 2, ropts);
  for (std::size_t j = 0; j < params.size(); ++j) {
    const ReducedSolution sol = reduced_newton(model, params[j], ropts);
    const ErrorCertificate cert = estimate_error(model, sol);
    CHECK(sweep.certificates[j].delta ==
          doctest::Approx(cert.delta).epsilon(1e-8));
  }
  // argmax: smallest index on exact ties is guaranteed by the strict compare
  CHECK(sweep.argmax >= 0);
  CHECK(sweep.max_delta >= sweep.certificates[0].delta);
}
