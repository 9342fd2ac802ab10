#include "rbms/parameter.hpp"

#include <random>

namespace rbms {

bool ParameterBox::contains(const Vec& p, double rtol) const {
  if (p.size() != dims()) return false;
  for (Index i = 0; i < dims(); ++i) {
    const double slack = rtol * (upper[i] - lower[i]);
    if (p[i] < lower[i] - slack || p[i] > upper[i] + slack) return false;
  }
  return true;
}

void ParameterBox::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size())
    throw Error("parameter box: empty or mismatched bounds");
  for (Index i = 0; i < dims(); ++i)
    if (!(lower[i] < upper[i]))
      throw Error("parameter box: lower >= upper in dimension " + std::to_string(i));
}

namespace {

std::vector<Vec> tensor_product(const std::vector<std::vector<double>>& axes) {
  const std::size_t d = axes.size();
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.size();
  std::vector<Vec> out;
  out.reserve(total);
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t k = 0; k < total; ++k) {
    Vec p(static_cast<Index>(d));
    for (std::size_t a = 0; a < d; ++a) p[static_cast<Index>(a)] = axes[a][idx[a]];
    out.push_back(std::move(p));
    for (std::size_t a = d; a-- > 0;) {
      if (++idx[a] < axes[a].size()) break;
      idx[a] = 0;
    }
  }
  return out;
}

// Uniform draw in [0,1) pinned to the raw engine output so results do not
// depend on the standard library's distribution implementation.
double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::vector<Vec> regular_grid(const ParameterBox& box, const std::vector<int>& n) {
  box.validate();
  if (static_cast<Index>(n.size()) != box.dims())
    throw Error("regular_grid: dimension count mismatch");
  std::vector<std::vector<double>> axes(n.size());
  for (std::size_t d = 0; d < n.size(); ++d) {
    if (n[d] < 1) throw Error("regular_grid: grid dims must be >= 1");
    const double lo = box.lower[static_cast<Index>(d)];
    const double hi = box.upper[static_cast<Index>(d)];
    if (n[d] == 1) {
      axes[d] = {0.5 * (lo + hi)};
    } else {
      axes[d].resize(static_cast<std::size_t>(n[d]));
      for (int i = 0; i < n[d]; ++i)
        axes[d][static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (n[d] - 1);
    }
  }
  return tensor_product(axes);
}

std::vector<Vec> stratified_grid(const ParameterBox& box, const std::vector<int>& n,
                                 std::uint64_t seed) {
  box.validate();
  if (static_cast<Index>(n.size()) != box.dims())
    throw Error("stratified_grid: dimension count mismatch");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> axes(n.size());
  for (std::size_t d = 0; d < n.size(); ++d) {
    if (n[d] < 1) throw Error("stratified_grid: grid dims must be >= 1");
    const double lo = box.lower[static_cast<Index>(d)];
    const double w = (box.upper[static_cast<Index>(d)] - lo) / n[d];
    axes[d].resize(static_cast<std::size_t>(n[d]));
    for (int c = 0; c < n[d]; ++c)
      axes[d][static_cast<std::size_t>(c)] = lo + (c + unit_draw(rng)) * w;
  }
  return tensor_product(axes);
}

std::vector<Vec> box_corners(const ParameterBox& box) {
  box.validate();
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(box.dims()));
  for (Index d = 0; d < box.dims(); ++d)
    axes[static_cast<std::size_t>(d)] = {box.lower[d], box.upper[d]};
  return tensor_product(axes);
}

}  // namespace rbms
