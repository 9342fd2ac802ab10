#pragma once

#include <vector>

#include "rbms/geometry.hpp"
#include "rbms/types.hpp"

namespace rbms {

// Boundary tag bits carried per node.
enum BoundaryBit : unsigned {
  kBndAB = 1u,
  kBndBC = 2u,
  kBndCD = 4u,
  kBndDA = 8u,
};

// Fine triangulation, nested in the macro-decomposition: every fine triangle
// lies in exactly one macro-triangle and the per-triangle Jacobian of the
// geometry map is the macro one. P1 gradients and areas are cached.
struct Triangulation {
  Mat nodes;                    // n_nodes x 2, reference coordinates
  Eigen::MatrixX3i tris;        // n_tris x 3, CCW
  VecXi macro_of;               // n_tris
  std::vector<Region> region_of;  // n_tris
  Vec area;                     // n_tris
  Mat bary;                     // n_tris x 2
  std::vector<Mat23> gradop;    // n_tris; columns are grad of the 3 nodal hats

  std::vector<unsigned> node_marker;  // boundary tag bits per node
  // Arc parameter in [0,1] along the AB / CD boundary chains (chain direction
  // = declaration order of the tagged segments); used for the anti-periodic
  // node pairing. Meaningful only where the marker bit is set.
  std::vector<double> arc_ab;
  std::vector<double> arc_cd;

  std::vector<int> iron_tris;   // fine triangles in the iron subdomain, mesh order
  int refinement_level = 0;

  Index n_nodes() const { return nodes.rows(); }
  Index n_tris() const { return tris.rows(); }
};

// Splits every macro-triangle into 4^level congruent sub-triangles. Nodes on
// shared macro edges and vertices are identified topologically, so the mesh
// is conforming by construction.
Triangulation generate_mesh(const MacroDecomposition& decomp, int level);

// Plain-text node/element export (nodes with markers, elements with tags).
void save_mesh(const Triangulation& mesh, const std::string& path);

}  // namespace rbms
