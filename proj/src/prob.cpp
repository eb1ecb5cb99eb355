#include "mmlab/prob.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace mmlab {

namespace {

constexpr double kSumTol = 1e-12;
constexpr double kNegTol = -1e-12;

void check_simplex(Vec& p, const std::string& what) {
  double sum = 0.0;
  for (double& v : p) {
    if (!(v >= kNegTol))  // also rejects NaN
      throw std::invalid_argument(what + ": negative entry");
    if (v < 0.0) v = 0.0;
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTol)
    throw std::invalid_argument(what + ": entries must sum to 1");
}

double xlog2x(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

}  // namespace

Distribution::Distribution(Vec probs, const std::string& what) : p_(std::move(probs)) {
  if (p_.empty()) throw std::invalid_argument(what + ": empty");
  check_simplex(p_, what);
}

Distribution Distribution::uniform(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform: empty alphabet");
  return Distribution(Vec(n, 1.0 / static_cast<double>(n)));
}

Distribution Distribution::point_mass(std::size_t n, std::size_t at) {
  if (at >= n) throw std::invalid_argument("point_mass: index out of range");
  Vec p(n, 0.0);
  p[at] = 1.0;
  return Distribution(std::move(p));
}

Channel::Channel(Mat rows, const std::string& what) : rows_(std::move(rows)) {
  if (rows_.rows() == 0 || rows_.cols() == 0)
    throw std::invalid_argument(what + ": empty");
  for (std::size_t j = 0; j < rows_.rows(); ++j) {
    Vec row(rows_.cols());
    for (std::size_t k = 0; k < rows_.cols(); ++k) row[k] = rows_(j, k);
    check_simplex(row, what + " row " + std::to_string(j));
    for (std::size_t k = 0; k < rows_.cols(); ++k) rows_(j, k) = row[k];
  }
}

Distribution Channel::row(std::size_t j) const {
  Vec r(rows_.cols());
  for (std::size_t k = 0; k < rows_.cols(); ++k) r[k] = rows_(j, k);
  return Distribution(std::move(r));
}

Distribution Channel::output_marginal(const Distribution& px) const {
  if (px.size() != input_size())
    throw std::invalid_argument("output_marginal: dimension mismatch");
  Vec q(output_size(), 0.0);
  for (std::size_t j = 0; j < input_size(); ++j) {
    if (px[j] == 0.0) continue;
    for (std::size_t k = 0; k < output_size(); ++k) q[k] += px[j] * rows_(j, k);
  }
  // Normalize away accumulated rounding so the result is a valid Distribution.
  double s = 0.0;
  for (double v : q) s += v;
  if (s > 0.0)
    for (double& v : q) v /= s;
  return Distribution(std::move(q));
}

Coupling::Coupling(std::vector<Mat> per_input, const std::string& what)
    : t_(std::move(per_input)) {
  if (t_.empty()) throw std::invalid_argument(what + ": empty");
  std::size_t k = t_[0].rows();
  for (std::size_t j = 0; j < t_.size(); ++j) {
    Mat& m = t_[j];
    if (m.rows() != k || m.cols() != k)
      throw std::invalid_argument(what + ": table " + std::to_string(j) +
                                  " must be square with matching size");
    double sum = 0.0;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        double v = m(a, b);
        if (!(v >= kNegTol))
          throw std::invalid_argument(what + ": table " + std::to_string(j) +
                                      " has a negative entry");
        if (v < 0.0) m(a, b) = 0.0;
        sum += m(a, b);
      }
    if (std::abs(sum - 1.0) > kSumTol)
      throw std::invalid_argument(what + ": table " + std::to_string(j) +
                                  " must sum to 1");
  }
}

Coupling Coupling::diagonal(const Channel& w) {
  std::vector<Mat> tables(w.input_size());
  for (std::size_t j = 0; j < w.input_size(); ++j) {
    Mat m(w.output_size(), w.output_size(), 0.0);
    for (std::size_t k = 0; k < w.output_size(); ++k) m(k, k) = w(j, k);
    tables[j] = std::move(m);
  }
  return Coupling(std::move(tables));
}

Metric::Metric(Mat values, const std::string& what) : v_(std::move(values)) {
  if (v_.rows() == 0 || v_.cols() == 0) throw std::invalid_argument(what + ": empty");
  for (double x : v_.data())
    if (!std::isfinite(x)) throw std::invalid_argument(what + ": entries must be finite");
}

double Metric::min_value() const {
  double m = v_.data()[0];
  for (double x : v_.data())
    if (x < m) m = x;
  return m;
}

double Metric::max_value() const {
  double m = v_.data()[0];
  for (double x : v_.data())
    if (x > m) m = x;
  return m;
}

double entropy(const Distribution& p) {
  double h = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) h -= xlog2x(p[i]);
  return h;
}

double mutual_information(const Distribution& px, const Channel& ch) {
  if (px.size() != ch.input_size())
    throw std::invalid_argument("mutual_information: dimension mismatch");
  Vec q(ch.output_size(), 0.0);
  for (std::size_t j = 0; j < ch.input_size(); ++j)
    if (px[j] > 0.0)
      for (std::size_t k = 0; k < ch.output_size(); ++k) q[k] += px[j] * ch(j, k);
  double mi = 0.0;
  for (std::size_t j = 0; j < ch.input_size(); ++j) {
    if (px[j] == 0.0) continue;
    for (std::size_t k = 0; k < ch.output_size(); ++k) {
      double w = ch(j, k);
      if (w > 0.0) mi += px[j] * w * std::log2(w / q[k]);
    }
  }
  return mi < 0.0 ? 0.0 : mi;
}

double conditional_kl(const Channel& py_prime, const Channel& py, const Distribution& px) {
  if (py_prime.input_size() != py.input_size() ||
      py_prime.output_size() != py.output_size() || px.size() != py.input_size())
    throw std::invalid_argument("conditional_kl: dimension mismatch");
  double d = 0.0;
  for (std::size_t j = 0; j < px.size(); ++j) {
    if (px[j] == 0.0) continue;  // zero-mass rows are ignored
    for (std::size_t k = 0; k < py.output_size(); ++k) {
      double a = py_prime(j, k);
      if (a == 0.0) continue;
      double b = py(j, k);
      if (b == 0.0) return kInf;
      d += px[j] * a * std::log2(a / b);
    }
  }
  return d;
}

Channel marginal_y(const Coupling& c) {
  std::size_t k = c.output_size();
  Mat rows(c.input_size(), k, 0.0);
  for (std::size_t j = 0; j < c.input_size(); ++j)
    for (std::size_t a = 0; a < k; ++a) rows(j, a) = c.table(j).row_sum(a);
  return Channel(std::move(rows));
}

Channel marginal_yhat(const Coupling& c) {
  std::size_t k = c.output_size();
  Mat rows(c.input_size(), k, 0.0);
  for (std::size_t j = 0; j < c.input_size(); ++j)
    for (std::size_t b = 0; b < k; ++b) rows(j, b) = c.table(j).col_sum(b);
  return Channel(std::move(rows));
}

std::vector<Distribution> simplex_grid(std::size_t j, double step) {
  if (j == 0) throw std::invalid_argument("simplex_grid: empty alphabet");
  if (!(step > 0.0) || step > 1.0)
    throw std::invalid_argument("simplex_grid: step must be in (0, 1]");
  long long g = std::llround(1.0 / step);
  std::vector<Distribution> out;
  Vec point(j, 0.0);
  std::function<void(std::size_t, long long)> rec = [&](std::size_t i, long long left) {
    if (i + 1 == j) {
      point[i] = static_cast<double>(left) / static_cast<double>(g);
      double s = 0.0;
      for (double v : point) s += v;
      Vec p = point;
      for (double& v : p) v /= s;  // exact renormalization of lattice rounding
      out.emplace_back(std::move(p));
      return;
    }
    for (long long n = 0; n <= left; ++n) {
      point[i] = static_cast<double>(n) / static_cast<double>(g);
      rec(i + 1, left - n);
    }
  };
  rec(0, g);
  return out;
}

CapacityResult blahut_arimoto_capacity(const Channel& ch, double tol, int max_iterations) {
  if (tol <= 0.0) throw std::invalid_argument("blahut_arimoto_capacity: tol must be positive");
  std::size_t nj = ch.input_size(), nk = ch.output_size();
  Vec p(nj, 1.0 / static_cast<double>(nj));
  Vec q(nk), d(nj);
  CapacityResult res;
  for (int it = 1; it <= max_iterations; ++it) {
    for (std::size_t k = 0; k < nk; ++k) q[k] = 0.0;
    for (std::size_t j = 0; j < nj; ++j)
      if (p[j] > 0.0)
        for (std::size_t k = 0; k < nk; ++k) q[k] += p[j] * ch(j, k);
    double upper = -kInf, lower = 0.0;
    for (std::size_t j = 0; j < nj; ++j) {
      double dj = 0.0;
      for (std::size_t k = 0; k < nk; ++k) {
        double w = ch(j, k);
        if (w > 0.0) dj += w * std::log2(w / q[k]);
      }
      d[j] = dj;
      if (dj > upper) upper = dj;
      lower += p[j] * dj;
    }
    res.iterations = it;
    res.gap = upper - lower;
    if (res.gap <= tol) {
      res.bits = lower < 0.0 ? 0.0 : lower;
      res.input = Distribution(p);
      return res;
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < nj; ++j) {
      p[j] *= std::exp2(d[j] - upper);  // shift by upper to avoid overflow
      norm += p[j];
    }
    for (std::size_t j = 0; j < nj; ++j) p[j] /= norm;
  }
  throw std::runtime_error("blahut_arimoto_capacity: no convergence within iteration limit");
}

}  // namespace mmlab
