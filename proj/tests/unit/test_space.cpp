#include <doctest.h>

#include <Eigen/SparseCholesky>

#include "rbms/assembly.hpp"
#include "rbms/space.hpp"
#include "support/oracles.hpp"

using namespace rbms;

TEST_CASE("all-Dirichlet unit square level 1 has one free DOF") {
  const MacroDecomposition g = testsup::unit_square();
  const Triangulation mesh = generate_mesh(g, 1);
  const TruthSpace space = build_truth_space(mesh, /*all_dirichlet=*/true);
  CHECK(space.n_free == 1);  // 3x3 nodes, single interior node
}

TEST_CASE("anti-periodic pairing: +1 at a master gives -1 at the slave") {
  const MacroDecomposition g = benchmark_cell();
  const Triangulation mesh = generate_mesh(g, 2);
  const TruthSpace space = build_truth_space(mesh);
  bool found = false;
  for (Index i = 0; i < mesh.n_nodes(); ++i) {
    if (!(mesh.node_marker[static_cast<std::size_t>(i)] & kBndAB)) continue;
    if (space.node_dof[static_cast<std::size_t>(i)] < 0) continue;
    Vec u = Vec::Zero(space.n_free);
    u[space.node_dof[static_cast<std::size_t>(i)]] = 1.0;
    const Vec nodal = space.expand(u);
    // the partner sits at (x, H) with the same x
    for (Index j = 0; j < mesh.n_nodes(); ++j) {
      if (!(mesh.node_marker[static_cast<std::size_t>(j)] & kBndCD)) continue;
      if (std::abs(mesh.nodes(j, 0) - mesh.nodes(i, 0)) < 1e-12) {
        CHECK(nodal[j] == -1.0);
        found = true;
      }
    }
    break;
  }
  CHECK(found);
}

TEST_CASE("constraint consistency for arbitrary assembled functions") {
  const MacroDecomposition g = benchmark_cell();
  const Triangulation mesh = generate_mesh(g, 2);
  const TruthSpace space = build_truth_space(mesh);
  std::mt19937_64 rng(5);
  const Vec nodal = space.expand(testsup::random_vec(space.n_free, rng));
  for (Index i = 0; i < mesh.n_nodes(); ++i) {
    const unsigned m = mesh.node_marker[static_cast<std::size_t>(i)];
    if (m & (kBndBC | kBndDA)) CHECK(nodal[i] == 0.0);
  }
  for (Index i = 0; i < mesh.n_nodes(); ++i) {
    if (!(mesh.node_marker[static_cast<std::size_t>(i)] & kBndAB)) continue;
    for (Index j = 0; j < mesh.n_nodes(); ++j) {
      if (!(mesh.node_marker[static_cast<std::size_t>(j)] & kBndCD)) continue;
      if (std::abs(mesh.nodes(j, 0) - mesh.nodes(i, 0)) < 1e-12) CHECK(nodal[j] == -nodal[i]);
    }
  }
}

TEST_CASE("K agrees with a dense assembly oracle") {
  const MacroDecomposition g = benchmark_cell();
  const Triangulation mesh = generate_mesh(g, 1);
  const TruthSpace space = build_truth_space(mesh);
  const AffineMapSet maps = build_affine_maps(g, g.ref_param);
  const Mat dense =
      testsup::dense_operator_oracle(mesh, space, maps, Vec::Ones(mesh.n_tris()));
  const Mat K = Mat(space.K);
  CHECK((K - dense).norm() <= 1e-13 * dense.norm());
}

TEST_CASE("K is positive definite (inverse power iteration)") {
  const MacroDecomposition g = benchmark_cell();
  const Triangulation mesh = generate_mesh(g, 2);
  const TruthSpace space = build_truth_space(mesh);
  Eigen::SimplicialLDLT<SpMat> ldlt(space.K);
  REQUIRE(ldlt.info() == Eigen::Success);
  std::mt19937_64 rng(9);
  Vec v = testsup::random_vec(space.n_free, rng);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 8; ++it) {
    v = ldlt.solve(v);
    v.normalize();
    lambda = v.dot(space.K * v);
  }
  CHECK(lambda > 0.0);
}

TEST_CASE("x_norm basics and quadrature oracle") {
  const MacroDecomposition g = benchmark_cell();
  const Triangulation mesh = generate_mesh(g, 2);
  const TruthSpace space = build_truth_space(mesh);
  CHECK(x_norm(space, Vec::Zero(space.n_free)) == 0.0);
  Vec e = Vec::Zero(space.n_free);
  e[3] = 1.0;
  CHECK(x_norm(space, e) == doctest::Approx(std::sqrt(space.K.coeff(3, 3))).epsilon(1e-14));

  std::mt19937_64 rng(13);
  const Vec v = testsup::random_vec(space.n_free, rng);
  // per-triangle quadrature: integral of |grad v|^2 with local gradients
  const Vec nodal = space.expand(v);
  double acc = 0.0;
  for (Index t = 0; t < mesh.n_tris(); ++t) {
    Eigen::Vector3d loc(nodal[mesh.tris(t, 0)], nodal[mesh.tris(t, 1)], nodal[mesh.tris(t, 2)]);
    acc += mesh.area[t] * (mesh.gradop[static_cast<std::size_t>(t)] * loc).squaredNorm();
  }
  CHECK(x_norm(space, v) == doctest::Approx(std::sqrt(acc)).epsilon(1e-12));

  CHECK_THROWS_AS(x_norm(space, Vec::Zero(space.n_free + 1)), Error);
}

TEST_CASE("norm sandwich between C1 and C2") {
  const MacroDecomposition g = benchmark_cell();
  const Triangulation mesh = generate_mesh(g, 1);
  const TruthSpace space = build_truth_space(mesh);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Vec p(3);
    for (int i = 0; i < 3; ++i)
      p[i] = g.box.lower[i] + (g.box.upper[i] - g.box.lower[i]) * testsup::unit_draw(rng);
    const AffineMapSet maps = build_affine_maps(g, p);
    const auto [c1, c2] = geometric_constants(maps);
    const SpMat Ap = assemble_operator_coeff(mesh, space, maps, Vec::Ones(mesh.n_tris()));
    const Vec v = testsup::random_vec(space.n_free, rng);
    const double ref = v.dot(space.K * v);
    const double mapped = v.dot(Ap * v);
    CHECK(mapped >= c1 * ref * (1.0 - 1e-12));
    CHECK(mapped <= c2 * ref * (1.0 + 1e-12));
  }
}

TEST_CASE("mismatched anti-periodic pairing is diagnosed") {
  // bottom chain split into two macro edges, top chain a single edge: node
  // counts cannot match
  MacroDecomposition g;
  g.box.lower = Vec::Constant(1, 0.0);
  g.box.upper = Vec::Constant(1, 1.0);
  g.ref_param = g.box.midpoint();
  auto fixed = [](double x, double y) {
    VertexFunction f;
    f.offset = Vec2(x, y);
    f.coeff = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 1);
    return f;
  };
  g.vertex_fn = {fixed(0, 0), fixed(0.5, 0), fixed(1, 0), fixed(1, 1), fixed(0, 1)};
  for (const auto& f : g.vertex_fn) g.ref_vertices.push_back(f.at(g.ref_param));
  auto tri = [&g](int a, int b, int c) {
    MacroTriangle t;
    t.v = {a, b, c};
    t.iron = false;
    t.region = Region::air;
    g.triangles.push_back(t);
  };
  tri(0, 1, 4);
  tri(1, 3, 4);
  tri(1, 2, 3);
  g.boundary = {{"AB", 0, 1}, {"AB", 1, 2}, {"BC", 2, 3}, {"CD", 3, 4}, {"DA", 4, 0}};
  const Triangulation mesh = generate_mesh(g, 1);
  CHECK_THROWS_WITH_AS(build_truth_space(mesh), doctest::Contains("anti-periodic"), Error);
}
