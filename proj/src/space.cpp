#include "rbms/space.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace rbms {

Vec TruthSpace::expand(const Vec& u_free) const {
  if (u_free.size() != n_free) throw Error("expand: coefficient length mismatch");
  Vec out = Vec::Zero(static_cast<Index>(node_dof.size()));
  for (std::size_t i = 0; i < node_dof.size(); ++i)
    if (node_dof[i] >= 0) out[static_cast<Index>(i)] = node_sign[i] * u_free[node_dof[i]];
  return out;
}

Vec TruthSpace::fold(const Vec& f_nodes) const {
  if (f_nodes.size() != static_cast<Index>(node_dof.size()))
    throw Error("fold: nodal length mismatch");
  Vec out = Vec::Zero(n_free);
  for (std::size_t i = 0; i < node_dof.size(); ++i)
    if (node_dof[i] >= 0) out[node_dof[i]] += node_sign[i] * f_nodes[static_cast<Index>(i)];
  return out;
}

TruthSpace build_truth_space(const Triangulation& mesh, bool all_dirichlet) {
  const Index n_nodes = mesh.n_nodes();
  TruthSpace sp;
  sp.node_dof.assign(static_cast<std::size_t>(n_nodes), -2);  // -2 = unassigned
  sp.node_sign.assign(static_cast<std::size_t>(n_nodes), 1.0);

  const unsigned dirichlet_bits =
      all_dirichlet ? (kBndAB | kBndBC | kBndCD | kBndDA) : (kBndBC | kBndDA);
  for (Index i = 0; i < n_nodes; ++i)
    if (mesh.node_marker[static_cast<std::size_t>(i)] & dirichlet_bits)
      sp.node_dof[static_cast<std::size_t>(i)] = -1;

  if (!all_dirichlet) {
    // Pair AB and CD nodes by chain arc length, the CD chain reversed.
    std::vector<std::pair<double, int>> ab, cd;
    for (Index i = 0; i < n_nodes; ++i) {
      if (sp.node_dof[static_cast<std::size_t>(i)] == -1) continue;  // Dirichlet wins
      const unsigned m = mesh.node_marker[static_cast<std::size_t>(i)];
      if (m & kBndAB) ab.emplace_back(mesh.arc_ab[static_cast<std::size_t>(i)], static_cast<int>(i));
      if (m & kBndCD)
        cd.emplace_back(1.0 - mesh.arc_cd[static_cast<std::size_t>(i)], static_cast<int>(i));
    }
    std::sort(ab.begin(), ab.end());
    std::sort(cd.begin(), cd.end());
    if (ab.size() != cd.size())
      throw Error("build_truth_space: anti-periodic segments have " + std::to_string(ab.size()) +
                  " vs " + std::to_string(cd.size()) + " free nodes");
    for (std::size_t k = 0; k < ab.size(); ++k) {
      if (std::abs(ab[k].first - cd[k].first) > 1e-9)
        throw Error("build_truth_space: unpaired anti-periodic nodes " +
                    std::to_string(ab[k].second) + " (AB) and " + std::to_string(cd[k].second) +
                    " (CD): arc mismatch");
      // master on AB keeps its DOF; the CD partner folds in with sign -1
      sp.node_dof[static_cast<std::size_t>(cd[k].second)] = -3 - ab[k].second;  // defer
    }
  }

  Index next = 0;
  for (Index i = 0; i < n_nodes; ++i) {
    auto& d = sp.node_dof[static_cast<std::size_t>(i)];
    if (d == -2) d = static_cast<int>(next++);
  }
  for (Index i = 0; i < n_nodes; ++i) {
    auto& d = sp.node_dof[static_cast<std::size_t>(i)];
    if (d <= -3) {
      const int master = -(d + 3);
      d = sp.node_dof[static_cast<std::size_t>(master)];
      sp.node_sign[static_cast<std::size_t>(i)] = -1.0;
    }
  }
  sp.n_free = next;
  if (sp.n_free == 0) throw Error("build_truth_space: no free DOFs");

  // Assemble K = ∫ ∇φ_i · ∇φ_j directly on the free DOFs; one-point
  // quadrature is exact for the constant P1 gradients.
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(9 * mesh.n_tris()));
  for (Index t = 0; t < mesh.n_tris(); ++t) {
    const Mat23& g = mesh.gradop[static_cast<std::size_t>(t)];
    const double a = mesh.area[t];
    for (int i = 0; i < 3; ++i) {
      const int ni = mesh.tris(t, i);
      const int di = sp.node_dof[static_cast<std::size_t>(ni)];
      if (di < 0) continue;
      const double si = sp.node_sign[static_cast<std::size_t>(ni)];
      for (int j = 0; j < 3; ++j) {
        const int nj = mesh.tris(t, j);
        const int dj = sp.node_dof[static_cast<std::size_t>(nj)];
        if (dj < 0) continue;
        const double sj = sp.node_sign[static_cast<std::size_t>(nj)];
        trip.emplace_back(di, dj, si * sj * a * g.col(i).dot(g.col(j)));
      }
    }
  }
  sp.K.resize(sp.n_free, sp.n_free);
  sp.K.setFromTriplets(trip.begin(), trip.end());
  return sp;
}

double x_norm(const TruthSpace& space, const Vec& v) {
  if (v.size() != space.n_free) throw Error("x_norm: coefficient length mismatch");
  return std::sqrt(v.dot(space.K * v));
}

void save_field(const Triangulation& mesh, const TruthSpace& space, const Vec& u_free,
                const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write field file '" + path + "'");
  const Vec u = space.expand(u_free);
  f << "x,y,u\n";
  char buf[100];
  for (Index i = 0; i < mesh.n_nodes(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", mesh.nodes(i, 0), mesh.nodes(i, 1), u[i]);
    f << buf << "\n";
  }
}

}  // namespace rbms
