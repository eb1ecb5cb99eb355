#pragma once

#include <limits>
#include <string>
#include <vector>

#include "mmlab/matrix.hpp"

namespace mmlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Probability vector over a finite alphabet.  Entries must be nonnegative
/// (values above -1e-12 are clamped to zero) and sum to 1 within 1e-12.
class Distribution {
 public:
  Distribution() = default;
  explicit Distribution(Vec probs, const std::string& what = "distribution");

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  const Vec& probs() const { return p_; }

  static Distribution uniform(std::size_t n);
  static Distribution point_mass(std::size_t n, std::size_t at);

 private:
  Vec p_;
};

/// Conditional distribution: one row per input letter, each row a
/// distribution over the output alphabet.
class Channel {
 public:
  Channel() = default;
  explicit Channel(Mat rows, const std::string& what = "channel");

  std::size_t input_size() const { return rows_.rows(); }
  std::size_t output_size() const { return rows_.cols(); }
  double operator()(std::size_t j, std::size_t k) const { return rows_(j, k); }
  const Mat& rows() const { return rows_; }
  Distribution row(std::size_t j) const;

  /// Output distribution induced by an input distribution.
  Distribution output_marginal(const Distribution& px) const;

 private:
  Mat rows_;
};

/// Joint conditional law of a pair of outputs given the input: for each input
/// letter a KxK table over (y, yhat) summing to 1.
class Coupling {
 public:
  Coupling() = default;
  Coupling(std::vector<Mat> per_input, const std::string& what = "coupling");

  std::size_t input_size() const { return t_.size(); }
  std::size_t output_size() const { return t_.empty() ? 0 : t_[0].rows(); }
  const Mat& table(std::size_t j) const { return t_[j]; }
  const std::vector<Mat>& tables() const { return t_; }

  /// Coupling with yhat = y, i.e. table(j) = diag of the channel row.
  static Coupling diagonal(const Channel& w);

 private:
  std::vector<Mat> t_;
};

/// Per-letter decoding metric; any finite real values.
class Metric {
 public:
  Metric() = default;
  explicit Metric(Mat values, const std::string& what = "metric");

  std::size_t input_size() const { return v_.rows(); }
  std::size_t output_size() const { return v_.cols(); }
  double operator()(std::size_t j, std::size_t k) const { return v_(j, k); }
  const Mat& values() const { return v_; }
  double min_value() const;
  double max_value() const;

 private:
  Mat v_;
};

/// Shannon entropy in bits; 0 log 0 = 0.
double entropy(const Distribution& p);

/// I(px; ch) in bits.
double mutual_information(const Distribution& px, const Channel& ch);

/// Sum_x px(x) D(py_prime(.|x) || py(.|x)) in bits.  Returns +inf when some
/// positive-probability row puts mass where the reference row has none.
double conditional_kl(const Channel& py_prime, const Channel& py, const Distribution& px);

/// First-output marginal of a coupling: row j maps to sum over yhat.
Channel marginal_y(const Coupling& c);
/// Second-output marginal of a coupling: row j maps to sum over y.
Channel marginal_yhat(const Coupling& c);

/// All lattice points {n / G : n in Z^j, n >= 0, sum n = G} of the
/// j-simplex, G = round(1 / step).  Boundary included; lexicographic order.
std::vector<Distribution> simplex_grid(std::size_t j, double step);

struct CapacityResult {
  double bits = 0.0;          // certified lower value; within tol of capacity
  Distribution input;         // attains bits
  double gap = 0.0;           // upper bound minus lower bound at the stop
  int iterations = 0;
};

/// Capacity via alternating maximization.  Stops when the max row divergence
/// (an upper bound) is within tol of the achieved mutual information.
CapacityResult blahut_arimoto_capacity(const Channel& ch, double tol = 1e-9,
                                       int max_iterations = 2000000);

}  // namespace mmlab
