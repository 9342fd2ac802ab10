#pragma once

#include <vector>

#include "rbms/mesh.hpp"
#include "rbms/types.hpp"

namespace rbms {

// Constrained P1 space on the reference mesh: Dirichlet nodes (BC, DA)
// eliminated, anti-periodic partners (AB <-> CD) identified with sign -1
// (slave folded into master). K is the X̂ Gram matrix on the free DOFs.
struct TruthSpace {
  Index n_free = 0;                // 𝒩
  std::vector<int> node_dof;       // per node: free DOF index, -1 if Dirichlet
  std::vector<double> node_sign;   // +1 master/interior, -1 slave
  SpMat K;                         // n_free x n_free, SPD

  // u at the mesh nodes from free coefficients (applies constraints).
  Vec expand(const Vec& u_free) const;
  // Pᵀ-fold of a nodal functional/load vector onto the free DOFs.
  Vec fold(const Vec& f_nodes) const;
};

// Builds the constraint map and assembles K. With all_dirichlet, the AB/CD
// segments are clamped instead of paired (debugging variant).
TruthSpace build_truth_space(const Triangulation& mesh, bool all_dirichlet = false);

// sqrt(vᵀ K v)
double x_norm(const TruthSpace& space, const Vec& v);

// Per-node solution export (x, y, u) for external contour plotting.
void save_field(const Triangulation& mesh, const TruthSpace& space, const Vec& u_free,
                const std::string& path);

}  // namespace rbms
