#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mmlab/prob.hpp"

namespace mmlab {

/// Empirical distribution of a length-n sequence, kept as integer counts.
struct TypeVector {
  std::vector<long long> counts;
  long long n = 0;
};

TypeVector sequence_type(const std::vector<std::size_t>& x, std::size_t alphabet);

/// Integer count table over a 2- or 3-way product alphabet; counts sum to n.
struct JointType {
  std::vector<std::size_t> shape;
  std::vector<long long> counts;  // row-major over shape
  long long n = 0;

  std::size_t flat(std::size_t i, std::size_t j) const { return i * shape[1] + j; }
  std::size_t flat(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * shape[1] + j) * shape[2] + k;
  }
  double prob(std::size_t cell) const {
    return static_cast<double>(counts[cell]) / static_cast<double>(n);
  }
};

/// Counts marginalized onto two axes of a 3-way joint type, axis order kept.
Mat pair_marginal_counts(const JointType& t, std::size_t axis_a, std::size_t axis_b);

/// Convex combination of joint types; weights sum to 1.
struct TypeDecomposition {
  std::vector<double> weights;
  std::vector<JointType> components;

  /// max-abs distance between sum_i w_i * component_i (as distributions) and p.
  double recombination_error(const Vec& p) const;
};

/// All compositions of n into `alphabet` parts.  Throws when the count
/// C(n+alphabet-1, alphabet-1) would exceed cap.
std::vector<TypeVector> enumerate_types(long long n, std::size_t alphabet,
                                        std::uint64_t cap = 20000000);

/// Multinomial n! / prod(counts!).  Throws std::overflow_error past 64 bits;
/// the log form below is always available.
unsigned long long type_class_size(const TypeVector& t);
double type_class_log2_size(const TypeVector& t);

/// Conditional type of y given x with the uniform-fill convention: rows of x
/// letters absent from the sequence are filled with 1/|Y|.
Channel conditional_type(const std::vector<std::size_t>& y, std::size_t y_alphabet,
                         const std::vector<std::size_t>& x, std::size_t x_alphabet);

/// Joint conditional type of (y, yhat) given x; absent input letters are
/// filled with the diagonal table 1{k1==k2}/|Y|.
Coupling joint_conditional_type(const std::vector<std::size_t>& y,
                                const std::vector<std::size_t>& yhat,
                                std::size_t y_alphabet,
                                const std::vector<std::size_t>& x,
                                std::size_t x_alphabet);

/// Writes p_{Z|S} x p_{SU} as a convex combination of 3-way n-types whose
/// (Z,S) marginal equals n*p_zs and (S,U) marginal equals n*p_su exactly,
/// each within 1/n of the product target in infinity norm.  Inputs must be
/// n-types (entries integer multiples of 1/n) with matching S marginals.
TypeDecomposition decompose_into_types(const Mat& p_zs, const Mat& p_su, long long n);

/// Writes an arbitrary joint distribution as a convex combination of 2-way
/// n-types, each within 1/n of it in infinity norm.
TypeDecomposition quantize_joint_to_type(const Mat& p, long long n);

/// n * E[f(Z, S)] with Z drawn from the type's empirical distribution and
/// S | Z = z from the channel row.  Equals E[sum_i f(z_i, S_i) | type].
double conditional_type_mean(const Mat& f, const TypeVector& t, const Channel& s_given_z);

/// n * E_{z}[Var[f(z, S) | Z = z]].  Equals Var[sum_i f(z_i, S_i) | type].
double conditional_type_variance(const Mat& f, const TypeVector& t,
                                 const Channel& s_given_z);

/// Lower bound on P[Z >= E Z] for a sub-Gaussian-certified sum with the given
/// variance; may be negative (vacuous) and is returned verbatim.
double anti_concentration_bound(double variance, double theta, double kappa);

/// Two-sided tail bound 2 exp(-xi^2 / (n (b-a)^2)) for sums of n independent
/// increments valued in [a, b].
double subgaussian_tail(long long n, double a, double b, double xi);

/// Band (e^-delta, e^+delta) containing every n-fold product likelihood ratio
/// between p_bar and p when |p_bar - p|_inf <= k_scale / n; delta =
/// 2 k_scale / min positive entry of p.  Requires mutual absolute continuity.
std::pair<double, double> likelihood_ratio_band(const Mat& p, const Mat& p_bar,
                                                long long n, int k_scale);

/// Rate backoff (bits) absorbed by type-enumeration union bounds at block
/// length n over a JxK product alphabet.
double zeta_n(long long n, std::size_t j_size, std::size_t k_size);

}  // namespace mmlab
