#include "mmlab/td_metric.hpp"

#include <cmath>

namespace mmlab {

TypeDependentMetric TypeDependentMetric::additive(const Metric& q) {
  TypeDependentMetric m;
  m.input_size = q.input_size();
  m.output_size = q.output_size();
  Mat values = q.values();
  m.value = [values](const Mat& joint) {
    double s = 0.0;
    for (std::size_t j = 0; j < joint.rows(); ++j)
      for (std::size_t k = 0; k < joint.cols(); ++k) s += joint(j, k) * values(j, k);
    return s;
  };
  m.gradient = [values](const Mat&) { return values; };
  m.convex_in_channel = true;
  m.name = "additive";
  return m;
}

TypeDependentMetric TypeDependentMetric::max_mutual_information(std::size_t input_size,
                                                                std::size_t output_size) {
  TypeDependentMetric m;
  m.input_size = input_size;
  m.output_size = output_size;
  m.value = [](const Mat& joint) {
    std::size_t nj = joint.rows(), nk = joint.cols();
    Vec px(nj, 0.0), py(nk, 0.0);
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t k = 0; k < nk; ++k) {
        px[j] += joint(j, k);
        py[k] += joint(j, k);
      }
    double mi = 0.0;
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t k = 0; k < nk; ++k) {
        double p = joint(j, k);
        if (p > 0.0) mi += p * std::log2(p / (px[j] * py[k]));
      }
    return mi < 0.0 ? 0.0 : mi;
  };
  m.gradient = [](const Mat& joint) {
    std::size_t nj = joint.rows(), nk = joint.cols();
    Vec px(nj, 0.0), py(nk, 0.0);
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t k = 0; k < nk; ++k) {
        px[j] += joint(j, k);
        py[k] += joint(j, k);
      }
    // d/dP [sum P log2 P/(Px Py)] = log2(P/(Px Py)) - 1/ln 2; entries clamped
    // away from the log singularity at zero mass.
    Mat g(nj, nk, 0.0);
    constexpr double kFloor = 1e-300;
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t k = 0; k < nk; ++k) {
        double p = std::max(joint(j, k), kFloor);
        double d = std::max(px[j], kFloor) * std::max(py[k], kFloor);
        g(j, k) = std::log2(p / d) - 1.0 / std::log(2.0);
      }
    return g;
  };
  m.convex_in_channel = true;
  m.name = "mmi";
  return m;
}

}  // namespace mmlab
