#pragma once

#include <cmath>

#include "rbms/types.hpp"

namespace rbms {

// Compensated (fma-split) dot product. The residual dual norm is a heavily
// cancelling quadratic form: its terms exceed the result by up to ~1e9, so
// plain double accumulation loses most digits. Splitting each product with
// fma and carrying a Neumaier-style compensation keeps the error at the
// eps^2-level of the term magnitudes.
inline double dot_compensated(const double* a, const double* b, Index n) {
  double sum = 0.0;
  double comp = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double prod = a[i] * b[i];
    const double prod_err = std::fma(a[i], b[i], -prod);
    const double t = sum + prod;
    if (std::abs(sum) >= std::abs(prod))
      comp += (sum - t) + prod;
    else
      comp += (prod - t) + sum;
    sum = t;
    comp += prod_err;
  }
  return sum + comp;
}

inline double dot_compensated(const Vec& a, const Vec& b) {
  return dot_compensated(a.data(), b.data(), a.size());
}

// phi' G phi for symmetric G with compensated row sums and outer sum.
inline double quadform_compensated(const Mat& G, const Vec& phi) {
  const Index n = phi.size();
  Vec y(n);
  for (Index i = 0; i < n; ++i) y[i] = dot_compensated(G.col(i).data(), phi.data(), n);
  return dot_compensated(y, phi);
}

// r - K z with fma-split products and per-row compensation; feeding this
// defect to iterative refinement pushes the solve's forward error below the
// plain eps*kappa(K) level.
inline Vec sparse_defect_compensated(const SpMat& K, const Vec& z, const Vec& r) {
  const Index n = r.size();
  Vec sum = Vec::Zero(n), comp = Vec::Zero(n);
  for (Index col = 0; col < K.outerSize(); ++col) {
    const double zc = z[col];
    for (SpMat::InnerIterator it(K, col); it; ++it) {
      const Index i = it.row();
      const double prod = it.value() * zc;
      const double prod_err = std::fma(it.value(), zc, -prod);
      const double t = sum[i] + prod;
      if (std::abs(sum[i]) >= std::abs(prod))
        comp[i] += (sum[i] - t) + prod;
      else
        comp[i] += (prod - t) + sum[i];
      sum[i] = t;
      comp[i] += prod_err;
    }
  }
  Vec defect(n);
  for (Index i = 0; i < n; ++i) defect[i] = (r[i] - sum[i]) - comp[i];
  return defect;
}

}  // namespace rbms
