#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "rbms/parameter.hpp"
#include "rbms/types.hpp"

namespace rbms {

enum class Region : int { air = 0, magnet = 1, coil = 2, iron = 3 };

Region region_from_string(const std::string& s);
std::string to_string(Region r);

// Vertex position as an affine function of the parameter: x(p) = offset + coeff*p.
struct VertexFunction {
  Vec2 offset = Vec2::Zero();
  Eigen::Matrix<double, 2, Eigen::Dynamic> coeff;  // 2 x dims

  Vec2 at(const Vec& p) const { return offset + coeff * p; }
};

struct MacroTriangle {
  std::array<int, 3> v{};  // CCW vertex indices
  bool iron = false;       // material class: iron subdomain vs the rest
  Region region = Region::air;
};

// Tagged macro edge on the outer boundary, named by the cross-section's
// corner labels: BC and DA carry homogeneous Dirichlet data, AB and CD are
// anti-periodic partners.
struct BoundarySegment {
  std::string tag;  // "AB" | "BC" | "CD" | "DA"
  int v0 = -1, v1 = -1;
};

// Reference macro-triangulation of the computational cell together with the
// parameter-dependent vertex positions. Reference vertices are the positions
// at the reference parameter, which is the parameter box midpoint.
struct MacroDecomposition {
  ParameterBox box;
  Vec ref_param;
  std::vector<Vec2> ref_vertices;
  std::vector<VertexFunction> vertex_fn;
  std::vector<MacroTriangle> triangles;
  std::vector<BoundarySegment> boundary;

  int count_iron() const;   // L1
  int count_other() const;  // L2
  // Iron macro-triangles first, then the rest; both in declaration order.
  std::vector<int> iron_macros() const;
  std::vector<int> other_macros() const;
};

// Affine map of one macro-triangle, x = C x̂ + z, with the cached quantities
// entering the pulled-back forms: Cinv = C^{-1}, G = C^{-1} C^{-T} and
// adet = |det C|.
struct AffineMap {
  Mat2 C;
  Vec2 z;
  Mat2 Cinv;
  Mat2 G;
  double adet = 0.0;
};

struct AffineMapSet {
  std::vector<AffineMap> maps;
  Vec p;
};

// Closed-form eigenvalues (min, max) of a symmetric 2x2 matrix.
std::pair<double, double> spd_eigenvalues(const Mat2& G);

// Solves the 3-point vertex correspondence for every macro-triangle.
// Throws on a degenerate triangle, identifying it.
AffineMapSet build_affine_maps(const MacroDecomposition& decomp, const Vec& p);

// C1 = min_d lambda_min(G_d)|det C_d|, C2 = max_d lambda_max(G_d)|det C_d|.
std::pair<double, double> geometric_constants(const AffineMapSet& maps);

struct DecompositionReport {
  bool pass = true;
  std::vector<std::string> failures;
};

// Report-only checks: positive orientation and non-degeneracy at every sample,
// continuity of coincident vertices across the parameter samples, edge
// conformity and boundary tagging. Never throws.
DecompositionReport validate_decomposition(const MacroDecomposition& decomp,
                                           const std::vector<Vec>& samples);

// Built-in benchmark: a 30x20 mm cell (meter coordinates) with a buried
// magnet block, iron pole pieces above and below, and air flux barriers at
// the magnet ends; L = 12 macro-triangles, parameter box [18,19]x[4,5]x[7,8] mm.
MacroDecomposition benchmark_cell();

MacroDecomposition load_geometry(const std::string& path);
void save_geometry(const MacroDecomposition& decomp, const std::string& path);

}  // namespace rbms
