#pragma once

#include <functional>
#include <string>

#include "mmlab/prob.hpp"

namespace mmlab {

// Metric evaluated on a joint input/output distribution rather than per
// letter.  `value` takes a JxK joint table (summing to 1).  `gradient` is
// optional; when absent, optimizers fall back to a gradient-free search and
// flag it.  `convex_in_channel` declares convexity in P_{Y|X} for fixed P_X,
// which is what makes minimizations over adversary polytopes certifiable.
struct TypeDependentMetric {
  std::size_t input_size = 0;
  std::size_t output_size = 0;
  std::function<double(const Mat&)> value;
  std::function<Mat(const Mat&)> gradient;  // same shape as the joint
  bool convex_in_channel = false;
  std::string name;

  // E[q(X,Y)] under the joint; reduces every type-dependent code path to the
  // per-letter metric.
  static TypeDependentMetric additive(const Metric& q);

  // Mutual information of the joint, in bits.
  static TypeDependentMetric max_mutual_information(std::size_t input_size,
                                                    std::size_t output_size);
};

}  // namespace mmlab
