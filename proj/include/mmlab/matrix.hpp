#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mmlab {

using Vec = std::vector<double>;

// Dense row-major matrix, sized for small alphabets.
class Mat {
 public:
  Mat() : rows_(0), cols_(0) {}
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, Vec values)
      : rows_(rows), cols_(cols), a_(std::move(values)) {
    if (a_.size() != rows * cols) throw std::invalid_argument("Mat: size mismatch");
  }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const Vec& data() const { return a_; }
  Vec& data() { return a_; }

  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += a_[i * cols_ + j];
    return s;
  }
  double col_sum(std::size_t j) const {
    double s = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) s += a_[i * cols_ + j];
    return s;
  }

  bool operator==(const Mat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && a_ == o.a_;
  }

 private:
  std::size_t rows_, cols_;
  Vec a_;
};

inline double max_abs_diff(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
    if (d > m) m = d;
  }
  return m;
}

}  // namespace mmlab
