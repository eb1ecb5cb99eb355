#pragma once

#include <algorithm>
#include <functional>

#include "mmlab/matrix.hpp"

namespace mmlab {

// Euclidean projection onto {v >= 0, sum v = s}; s = 0 maps to the zero row.
inline void project_scaled_simplex(Vec& v, double s) {
  if (!(s > 0.0)) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  Vec u = v;
  for (double& e : u) e /= s;
  Vec sorted = u;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cum += sorted[i];
    double cand = (cum - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - cand > 0.0) tau = cand;
  }
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = s * std::max(0.0, u[i] - tau);
}

}  // namespace mmlab
