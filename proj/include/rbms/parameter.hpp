#pragma once

#include <cstdint>
#include <vector>

#include "rbms/types.hpp"

namespace rbms {

// Axis-aligned parameter domain; the benchmark box is three dimensional
// (magnet width/height/offset in mm) but any dimension is supported.
struct ParameterBox {
  Vec lower;
  Vec upper;

  Index dims() const { return lower.size(); }
  Vec midpoint() const { return 0.5 * (lower + upper); }
  bool contains(const Vec& p, double rtol = 1e-12) const;
  void validate() const;  // throws unless lower[i] < upper[i] for all i
};

// Tensor-product grid with n[d] equispaced points per axis (endpoints
// included; a single point collapses to the axis midpoint). Lexicographic
// order, last axis fastest.
std::vector<Vec> regular_grid(const ParameterBox& box, const std::vector<int>& n);

// Cell-stratified random grid: axis d is split into n[d] intervals and one
// uniform draw is taken per interval, then the tensor product is formed.
// Fully determined by the seed.
std::vector<Vec> stratified_grid(const ParameterBox& box, const std::vector<int>& n,
                                 std::uint64_t seed);

// All 2^dims corner points, lexicographic.
std::vector<Vec> box_corners(const ParameterBox& box);

}  // namespace rbms
