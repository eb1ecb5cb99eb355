#include "mmlab/types_lab.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "mmlab/lp.hpp"

namespace mmlab {

namespace {

void check_type_vector(const TypeVector& t) {
  if (t.n < 1) throw std::invalid_argument("type: n must be >= 1");
  long long sum = 0;
  for (long long c : t.counts) {
    if (c < 0) throw std::invalid_argument("type: negative count");
    sum += c;
  }
  if (sum != t.n) throw std::invalid_argument("type: counts do not sum to n");
}

// C(n, k) in exact 64-bit arithmetic; throws past the representable range.
unsigned long long checked_binomial(unsigned long long n, unsigned long long k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned long long r = 1;
  for (unsigned long long i = 1; i <= k; ++i) {
    unsigned __int128 t = static_cast<unsigned __int128>(r) * (n - k + i);
    t /= i;  // exact: r already holds C(n-k+i-1, i-1)
    if (t > std::numeric_limits<unsigned long long>::max())
      throw std::overflow_error("binomial exceeds 64 bits");
    r = static_cast<unsigned long long>(t);
  }
  return r;
}

}  // namespace

TypeVector sequence_type(const std::vector<std::size_t>& x, std::size_t alphabet) {
  TypeVector t;
  t.counts.assign(alphabet, 0);
  t.n = static_cast<long long>(x.size());
  for (std::size_t v : x) {
    if (v >= alphabet) throw std::invalid_argument("sequence_type: letter out of range");
    ++t.counts[v];
  }
  if (t.n < 1) throw std::invalid_argument("sequence_type: empty sequence");
  return t;
}

Mat pair_marginal_counts(const JointType& t, std::size_t axis_a, std::size_t axis_b) {
  if (t.shape.size() != 3 || axis_a >= 3 || axis_b >= 3 || axis_a == axis_b)
    throw std::invalid_argument("pair_marginal_counts: needs two distinct axes of a 3-way type");
  Mat out(t.shape[axis_a], t.shape[axis_b], 0.0);
  std::size_t idx[3];
  for (idx[0] = 0; idx[0] < t.shape[0]; ++idx[0])
    for (idx[1] = 0; idx[1] < t.shape[1]; ++idx[1])
      for (idx[2] = 0; idx[2] < t.shape[2]; ++idx[2])
        out(idx[axis_a], idx[axis_b]) +=
            static_cast<double>(t.counts[t.flat(idx[0], idx[1], idx[2])]);
  return out;
}

double TypeDecomposition::recombination_error(const Vec& p) const {
  if (components.empty()) return kInf;
  Vec mix(p.size(), 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    wsum += weights[i];
    const JointType& c = components[i];
    if (c.counts.size() != p.size())
      throw std::invalid_argument("recombination_error: size mismatch");
    for (std::size_t e = 0; e < p.size(); ++e) mix[e] += weights[i] * c.prob(e);
  }
  double err = std::abs(wsum - 1.0);
  for (std::size_t e = 0; e < p.size(); ++e)
    err = std::max(err, std::abs(mix[e] - p[e]));
  return err;
}

std::vector<TypeVector> enumerate_types(long long n, std::size_t alphabet,
                                        std::uint64_t cap) {
  if (n < 1 || alphabet < 1)
    throw std::invalid_argument("enumerate_types: need n >= 1 and alphabet >= 1");
  double log2_count = (std::lgamma(static_cast<double>(n + alphabet)) -
                       std::lgamma(static_cast<double>(n + 1)) -
                       std::lgamma(static_cast<double>(alphabet))) /
                      std::log(2.0);
  if (log2_count > std::log2(static_cast<double>(cap)) + 1e-9)
    throw std::length_error("enumerate_types: type count exceeds cap");

  std::vector<TypeVector> out;
  std::vector<long long> cur(alphabet, 0);
  std::function<void(std::size_t, long long)> rec = [&](std::size_t j, long long left) {
    if (j + 1 == alphabet) {
      cur[j] = left;
      out.push_back(TypeVector{cur, n});
      return;
    }
    for (long long v = left; v >= 0; --v) {
      cur[j] = v;
      rec(j + 1, left - v);
    }
  };
  rec(0, n);
  return out;
}

unsigned long long type_class_size(const TypeVector& t) {
  check_type_vector(t);
  unsigned long long r = 1;
  unsigned long long used = 0;
  for (long long c : t.counts) {
    used += static_cast<unsigned long long>(c);
    unsigned long long b = checked_binomial(used, static_cast<unsigned long long>(c));
    unsigned __int128 prod = static_cast<unsigned __int128>(r) * b;
    if (prod > std::numeric_limits<unsigned long long>::max())
      throw std::overflow_error("type_class_size exceeds 64 bits; use the log form");
    r = static_cast<unsigned long long>(prod);
  }
  return r;
}

double type_class_log2_size(const TypeVector& t) {
  check_type_vector(t);
  double v = std::lgamma(static_cast<double>(t.n + 1));
  for (long long c : t.counts) v -= std::lgamma(static_cast<double>(c + 1));
  return v / std::log(2.0);
}

Channel conditional_type(const std::vector<std::size_t>& y, std::size_t y_alphabet,
                         const std::vector<std::size_t>& x, std::size_t x_alphabet) {
  if (y.size() != x.size())
    throw std::invalid_argument("conditional_type: sequence lengths differ");
  Mat counts(x_alphabet, y_alphabet, 0.0);
  Vec rowsum(x_alphabet, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= x_alphabet || y[i] >= y_alphabet)
      throw std::invalid_argument("conditional_type: letter out of range");
    counts(x[i], y[i]) += 1.0;
    rowsum[x[i]] += 1.0;
  }
  for (std::size_t j = 0; j < x_alphabet; ++j)
    for (std::size_t k = 0; k < y_alphabet; ++k)
      counts(j, k) = rowsum[j] > 0.0 ? counts(j, k) / rowsum[j]
                                     : 1.0 / static_cast<double>(y_alphabet);
  return Channel(std::move(counts));
}

Coupling joint_conditional_type(const std::vector<std::size_t>& y,
                                const std::vector<std::size_t>& yhat,
                                std::size_t y_alphabet,
                                const std::vector<std::size_t>& x,
                                std::size_t x_alphabet) {
  if (y.size() != x.size() || yhat.size() != x.size())
    throw std::invalid_argument("joint_conditional_type: sequence lengths differ");
  std::vector<Mat> tables(x_alphabet, Mat(y_alphabet, y_alphabet, 0.0));
  Vec rowsum(x_alphabet, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= x_alphabet || y[i] >= y_alphabet || yhat[i] >= y_alphabet)
      throw std::invalid_argument("joint_conditional_type: letter out of range");
    tables[x[i]](y[i], yhat[i]) += 1.0;
    rowsum[x[i]] += 1.0;
  }
  for (std::size_t j = 0; j < x_alphabet; ++j)
    for (std::size_t k1 = 0; k1 < y_alphabet; ++k1)
      for (std::size_t k2 = 0; k2 < y_alphabet; ++k2)
        tables[j](k1, k2) =
            rowsum[j] > 0.0
                ? tables[j](k1, k2) / rowsum[j]
                : (k1 == k2 ? 1.0 / static_cast<double>(y_alphabet) : 0.0);
  return Coupling(std::move(tables));
}

// ---------------------------------------------------------------------------
// Decomposition engine: write a fractional count table with integer line sums
// as a convex combination of integer tables inside its unit rounding box.
// The constraint matrices here (per-slice transportation rows, or one total-
// sum row) are totally unimodular, so such a combination always exists.

namespace {

constexpr double kIntSnap = 1e-9;

struct DecompProblem {
  Vec target;                                   // fractional counts
  std::vector<long long> lo, hi;                // unit rounding box
  std::vector<std::vector<std::size_t>> groups; // cells of each line
  std::vector<long long> rhs;                   // integer line sums
  std::vector<int> row_group_of, col_group_of;  // per cell; -1 when absent
  bool transport = false;                       // bipartite lines vs single total
  long long n = 0;
};

bool near_integer(double v) { return std::abs(v - std::llround(v)) <= kIntSnap; }

void fill_box(DecompProblem& p) {
  p.lo.resize(p.target.size());
  p.hi.resize(p.target.size());
  for (std::size_t i = 0; i < p.target.size(); ++i) {
    if (near_integer(p.target[i])) {
      p.lo[i] = p.hi[i] = std::llround(p.target[i]);
    } else {
      p.lo[i] = static_cast<long long>(std::floor(p.target[i]));
      p.hi[i] = p.lo[i] + 1;
    }
  }
}

// All integer tables in the box satisfying every line sum.  Returns false on
// hitting the cap (tables is then incomplete and must not be used).
bool enumerate_box_tables(const DecompProblem& p,
                          std::vector<std::vector<long long>>& tables,
                          std::size_t cap) {
  std::size_t nc = p.target.size();
  std::vector<long long> cur(nc, 0);
  std::vector<long long> gsum(p.groups.size(), 0);
  std::vector<long long> glo(p.groups.size(), 0), ghi(p.groups.size(), 0);
  // Remaining lo/hi per group over unassigned cells (cells assigned in order).
  for (std::size_t g = 0; g < p.groups.size(); ++g)
    for (std::size_t cell : p.groups[g]) {
      glo[g] += p.lo[cell];
      ghi[g] += p.hi[cell];
    }

  std::vector<std::vector<int>> groups_of(nc);
  for (std::size_t g = 0; g < p.groups.size(); ++g)
    for (std::size_t cell : p.groups[g]) groups_of[cell].push_back(static_cast<int>(g));

  bool ok = true;
  std::function<void(std::size_t)> rec = [&](std::size_t cell) {
    if (!ok) return;
    if (cell == nc) {
      for (std::size_t g = 0; g < p.groups.size(); ++g)
        if (gsum[g] != p.rhs[g]) return;
      tables.push_back(cur);
      if (tables.size() > cap) ok = false;
      return;
    }
    for (long long v = p.lo[cell]; v <= p.hi[cell] && ok; ++v) {
      cur[cell] = v;
      bool feasible = true;
      for (int g : groups_of[cell]) {
        gsum[g] += v;
        glo[g] -= p.lo[cell];
        ghi[g] -= p.hi[cell];
        if (gsum[g] + glo[g] > p.rhs[g] || gsum[g] + ghi[g] < p.rhs[g]) feasible = false;
      }
      if (feasible) rec(cell + 1);
      for (int g : groups_of[cell]) {
        gsum[g] -= v;
        glo[g] += p.lo[cell];
        ghi[g] += p.hi[cell];
      }
    }
  };
  rec(0);
  return ok;
}

// Rounds x to an integer table in the box with the same line sums by pushing
// along cycles of fractional cells (always in the + direction) until none
// remain.  Only fractional cells ever move, so no cell leaves its box.
std::vector<long long> round_in_box(const DecompProblem& p, Vec x) {
  std::size_t nc = x.size();
  auto fractional = [&](std::size_t i) { return !near_integer(x[i]); };

  for (int guard = 0; guard < static_cast<int>(nc) + 8; ++guard) {
    std::vector<std::size_t> frac;
    for (std::size_t i = 0; i < nc; ++i)
      if (fractional(i)) frac.push_back(i);
    if (frac.empty()) break;

    std::vector<std::size_t> cycle;  // cells, alternating +,-,+,-
    if (!p.transport) {
      if (frac.size() < 2)
        throw std::runtime_error("type decomposition: lone fractional cell");
      cycle = {frac[0], frac[1]};
    } else {
      // Bipartite walk over (row line, col line) nodes joined by fractional
      // cells; integer line sums give every touched node degree >= 2.
      std::size_t R = 0;
      for (int g : p.row_group_of) R = std::max(R, static_cast<std::size_t>(g + 1));
      std::size_t C = 0;
      for (int g : p.col_group_of) C = std::max(C, static_cast<std::size_t>(g + 1));
      std::vector<int> node_pos(R + C, -1);
      std::vector<std::size_t> walk_cells;
      std::vector<int> walk_nodes;
      auto incident = [&](int node, std::size_t avoid) -> long long {
        for (std::size_t cell : frac) {
          if (cell == avoid) continue;
          int rn = p.row_group_of[cell];
          int cn = p.col_group_of[cell] + static_cast<int>(R);
          if (rn == node || cn == node) return static_cast<long long>(cell);
        }
        return -1;
      };
      int cur_node = p.row_group_of[frac[0]];
      node_pos[cur_node] = 0;
      walk_nodes.push_back(cur_node);
      std::size_t last_cell = frac[0] + nc + 1;  // sentinel: no cell yet
      for (;;) {
        long long nxt_cell = incident(cur_node, last_cell);
        if (nxt_cell < 0)
          throw std::runtime_error("type decomposition: fractional line has one cell");
        std::size_t cell = static_cast<std::size_t>(nxt_cell);
        int rn = p.row_group_of[cell];
        int cn = p.col_group_of[cell] + static_cast<int>(R);
        int nxt_node = (rn == cur_node) ? cn : rn;
        walk_cells.push_back(cell);
        if (node_pos[nxt_node] >= 0) {
          cycle.assign(walk_cells.begin() + node_pos[nxt_node], walk_cells.end());
          break;
        }
        node_pos[nxt_node] = static_cast<int>(walk_nodes.size());
        walk_nodes.push_back(nxt_node);
        cur_node = nxt_node;
        last_cell = cell;
      }
    }

    double eps = kInf;
    for (std::size_t i = 0; i < cycle.size(); ++i) {
      double v = x[cycle[i]];
      double room = (i % 2 == 0) ? std::ceil(v) - v : v - std::floor(v);
      eps = std::min(eps, room);
    }
    if (!(eps > 0.0))
      throw std::runtime_error("type decomposition: degenerate cycle push");
    for (std::size_t i = 0; i < cycle.size(); ++i) {
      x[cycle[i]] += (i % 2 == 0) ? eps : -eps;
      if (near_integer(x[cycle[i]]))
        x[cycle[i]] = static_cast<double>(std::llround(x[cycle[i]]));
    }
  }
  std::vector<long long> out(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    if (!near_integer(x[i]))
      throw std::runtime_error("type decomposition: rounding did not integerize");
    out[i] = std::llround(x[i]);
    if (out[i] < p.lo[i] || out[i] > p.hi[i])
      throw std::runtime_error("type decomposition: rounded cell left its box");
  }
  return out;
}

// Carathéodory stripping: peel integer tables off the fractional point.
std::vector<std::vector<long long>> strip_tables(const DecompProblem& p,
                                                 std::vector<double>& weights) {
  std::vector<std::vector<long long>> tables;
  Vec x = p.target;
  double w = 1.0;
  for (int it = 0; it < 4096; ++it) {
    std::vector<long long> c = round_in_box(p, x);
    double t = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double ci = static_cast<double>(c[i]);
      double hi = static_cast<double>(p.hi[i]), lo = static_cast<double>(p.lo[i]);
      if (ci < hi) t = std::min(t, (hi - x[i]) / (hi - ci));
      if (ci > lo) t = std::min(t, (x[i] - lo) / (ci - lo));
    }
    if (t >= 1.0 - 1e-12) {
      tables.push_back(c);
      weights.push_back(w);
      return tables;
    }
    if (t <= 1e-14)
      throw std::runtime_error("type decomposition: stripping stalled");
    tables.push_back(c);
    weights.push_back(w * t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = (x[i] - t * static_cast<double>(c[i])) / (1.0 - t);
      x[i] = std::min(std::max(x[i], static_cast<double>(p.lo[i])),
                      static_cast<double>(p.hi[i]));
      if (near_integer(x[i])) x[i] = static_cast<double>(std::llround(x[i]));
    }
    w *= 1.0 - t;
  }
  throw std::runtime_error("type decomposition: stripping did not terminate");
}

// Dense symmetric solve (Gaussian elimination, partial pivoting) for the
// weight least-squares polish.
Vec solve_dense(std::vector<Vec> a, Vec b) {
  std::size_t m = b.size();
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-13)
      throw std::runtime_error("weight polish: singular system");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t cc = col; cc < m; ++cc) a[r][cc] -= f * a[col][cc];
      b[r] -= f * b[col];
    }
  }
  Vec x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = b[i] / a[i][i];
  return x;
}

// Least-squares weights over the given tables reproducing the target exactly
// (to machine precision); drops tables that want negative weight.
std::vector<double> polish_weights(const DecompProblem& p,
                                   const std::vector<std::vector<long long>>& tables,
                                   std::vector<double> w0) {
  std::size_t nc = p.target.size();
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < tables.size(); ++i)
    if (w0.empty() || w0[i] > 1e-11) support.push_back(i);
  if (support.empty())
    for (std::size_t i = 0; i < tables.size(); ++i) support.push_back(i);

  const double scale = static_cast<double>(p.n);
  for (int round = 0; round < 64; ++round) {
    std::size_t m = support.size();
    // Normal equations for rows: cells (prob units) plus the sum-to-one row.
    std::vector<Vec> ata(m, Vec(m, 0.0));
    Vec atb(m, 0.0);
    auto col_entry = [&](std::size_t si, std::size_t row) {
      return row < nc ? static_cast<double>(tables[support[si]][row]) / scale : 1.0;
    };
    for (std::size_t row = 0; row <= nc; ++row) {
      double brow = row < nc ? p.target[row] / scale : 1.0;
      for (std::size_t i = 0; i < m; ++i) {
        double ci = col_entry(i, row);
        if (ci == 0.0) continue;
        atb[i] += ci * brow;
        for (std::size_t j = 0; j < m; ++j) ata[i][j] += ci * col_entry(j, row);
      }
    }
    Vec w;
    try {
      w = solve_dense(ata, atb);
    } catch (const std::runtime_error&) {
      // Singular: drop the last table and retry.
      if (support.size() <= 1) throw;
      support.pop_back();
      continue;
    }
    double wmin = kInf;
    std::size_t drop = 0;
    for (std::size_t i = 0; i < m; ++i)
      if (w[i] < wmin) {
        wmin = w[i];
        drop = i;
      }
    if (wmin < -1e-11) {
      if (support.size() <= 1)
        throw std::runtime_error("weight polish: no nonnegative solution");
      support.erase(support.begin() + static_cast<long>(drop));
      continue;
    }
    std::vector<double> full(tables.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      full[support[i]] = std::max(0.0, w[i]);
      sum += full[support[i]];
    }
    // The sum row is part of the system; this only clears clamp dust.
    if (sum > 0.0)
      for (double& v : full) v /= sum;
    return full;
  }
  throw std::runtime_error("weight polish: did not converge");
}

TypeDecomposition run_decomposition(const DecompProblem& p,
                                    const std::vector<std::size_t>& shape) {
  std::vector<std::vector<long long>> tables;
  std::vector<double> w0;
  constexpr std::size_t kEnumCap = 8192;
  if (!enumerate_box_tables(p, tables, kEnumCap)) {
    tables.clear();
    tables = strip_tables(p, w0);
  } else if (tables.empty()) {
    throw std::runtime_error("type decomposition: no integer table in the box");
  } else if (tables.size() > 1) {
    // Feasibility LP for initial weights over the enumerated tables.
    std::size_t nc = p.target.size();
    LpProblem lp;
    lp.a = Mat(nc + 1, tables.size());
    lp.b.assign(nc + 1, 0.0);
    const double scale = static_cast<double>(p.n);
    for (std::size_t row = 0; row < nc; ++row) {
      for (std::size_t i = 0; i < tables.size(); ++i)
        lp.a(row, i) = static_cast<double>(tables[i][row]) / scale;
      lp.b[row] = p.target[row] / scale;
    }
    for (std::size_t i = 0; i < tables.size(); ++i) lp.a(nc, i) = 1.0;
    lp.b[nc] = 1.0;
    lp.c.assign(tables.size(), 0.0);
    LpSolution sol = solve_lp(lp);
    if (sol.status != LpStatus::optimal)
      throw std::runtime_error("type decomposition: weight program infeasible");
    w0 = sol.x;
  } else {
    w0 = {1.0};
  }

  std::vector<double> w;
  try {
    w = polish_weights(p, tables, w0);
  } catch (const std::runtime_error&) {
    w = polish_weights(p, tables, {});  // retry on the full table set
  }

  TypeDecomposition out;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (w[i] <= 0.0) continue;
    JointType jt;
    jt.shape = shape;
    jt.counts = tables[i];
    jt.n = p.n;
    out.components.push_back(std::move(jt));
    out.weights.push_back(w[i]);
  }
  double err = out.recombination_error(
      [&] {
        Vec t(p.target.size());
        for (std::size_t i = 0; i < t.size(); ++i)
          t[i] = p.target[i] / static_cast<double>(p.n);
        return t;
      }());
  if (err > 1e-12)
    throw std::runtime_error("type decomposition: recombination error " +
                             std::to_string(err));
  return out;
}

long long as_count(double v, long long n, const char* what) {
  double scaled = v * static_cast<double>(n);
  long long c = std::llround(scaled);
  if (std::abs(scaled - static_cast<double>(c)) > 1e-6 || c < 0)
    throw std::invalid_argument(std::string(what) + ": entry is not a valid n-type value");
  return c;
}

}  // namespace

TypeDecomposition decompose_into_types(const Mat& p_zs, const Mat& p_su, long long n) {
  if (n < 1) throw std::invalid_argument("decompose_into_types: n must be >= 1");
  std::size_t Z = p_zs.rows(), S = p_zs.cols(), U = p_su.cols();
  if (p_su.rows() != S)
    throw std::invalid_argument("decompose_into_types: S alphabets differ");

  std::vector<long long> a(Z * S), m(S * U), M(S, 0);
  long long total_a = 0, total_m = 0;
  for (std::size_t z = 0; z < Z; ++z)
    for (std::size_t s = 0; s < S; ++s) {
      a[z * S + s] = as_count(p_zs(z, s), n, "decompose_into_types: p_zs");
      M[s] += a[z * S + s];
      total_a += a[z * S + s];
    }
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t u = 0; u < U; ++u) {
      m[s * U + u] = as_count(p_su(s, u), n, "decompose_into_types: p_su");
      total_m += m[s * U + u];
    }
  if (total_a != n || total_m != n)
    throw std::invalid_argument("decompose_into_types: inputs do not sum to 1");
  for (std::size_t s = 0; s < S; ++s) {
    long long ms = 0;
    for (std::size_t u = 0; u < U; ++u) ms += m[s * U + u];
    if (ms != M[s])
      throw std::invalid_argument("decompose_into_types: S marginals disagree");
  }

  DecompProblem p;
  p.n = n;
  p.transport = true;
  p.target.assign(Z * S * U, 0.0);
  p.row_group_of.assign(Z * S * U, -1);
  p.col_group_of.assign(Z * S * U, -1);
  auto flat = [&](std::size_t z, std::size_t s, std::size_t u) {
    return (z * S + s) * U + u;
  };
  // Row lines: fixed (z, s), sum over u.  Col lines: fixed (s, u), sum over z.
  p.groups.resize(Z * S + S * U);
  p.rhs.resize(Z * S + S * U);
  for (std::size_t z = 0; z < Z; ++z)
    for (std::size_t s = 0; s < S; ++s) {
      std::size_t g = z * S + s;
      p.rhs[g] = a[z * S + s];
      for (std::size_t u = 0; u < U; ++u) {
        p.groups[g].push_back(flat(z, s, u));
        p.row_group_of[flat(z, s, u)] = static_cast<int>(g);
      }
    }
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t u = 0; u < U; ++u) {
      std::size_t g = Z * S + s * U + u;
      p.rhs[g] = m[s * U + u];
      for (std::size_t z = 0; z < Z; ++z) {
        p.groups[g].push_back(flat(z, s, u));
        p.col_group_of[flat(z, s, u)] = static_cast<int>(s * U + u);
      }
    }
  for (std::size_t z = 0; z < Z; ++z)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t u = 0; u < U; ++u)
        p.target[flat(z, s, u)] =
            M[s] > 0 ? static_cast<double>(a[z * S + s]) * static_cast<double>(m[s * U + u]) /
                           static_cast<double>(M[s])
                     : 0.0;
  fill_box(p);
  return run_decomposition(p, {Z, S, U});
}

TypeDecomposition quantize_joint_to_type(const Mat& p, long long n) {
  if (n < 1) throw std::invalid_argument("quantize_joint_to_type: n must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      if (p(i, j) < -1e-12)
        throw std::invalid_argument("quantize_joint_to_type: negative entry");
      sum += p(i, j);
    }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("quantize_joint_to_type: entries do not sum to 1");

  DecompProblem prob;
  prob.n = n;
  prob.transport = false;
  prob.target.assign(p.rows() * p.cols(), 0.0);
  prob.groups.resize(1);
  prob.rhs = {n};
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      std::size_t cell = i * p.cols() + j;
      prob.target[cell] = std::max(0.0, p(i, j)) * static_cast<double>(n);
      prob.groups[0].push_back(cell);
    }
  fill_box(prob);
  return run_decomposition(prob, {p.rows(), p.cols()});
}

double conditional_type_mean(const Mat& f, const TypeVector& t, const Channel& s_given_z) {
  check_type_vector(t);
  if (f.rows() != t.counts.size() || s_given_z.input_size() != t.counts.size() ||
      f.cols() != s_given_z.output_size())
    throw std::invalid_argument("conditional_type_mean: dimension mismatch");
  double out = 0.0;
  for (std::size_t z = 0; z < f.rows(); ++z) {
    if (t.counts[z] == 0) continue;
    double e = 0.0;
    for (std::size_t s = 0; s < f.cols(); ++s) e += s_given_z(z, s) * f(z, s);
    out += static_cast<double>(t.counts[z]) * e;
  }
  return out;
}

double conditional_type_variance(const Mat& f, const TypeVector& t,
                                 const Channel& s_given_z) {
  check_type_vector(t);
  if (f.rows() != t.counts.size() || s_given_z.input_size() != t.counts.size() ||
      f.cols() != s_given_z.output_size())
    throw std::invalid_argument("conditional_type_variance: dimension mismatch");
  double out = 0.0;
  for (std::size_t z = 0; z < f.rows(); ++z) {
    if (t.counts[z] == 0) continue;
    double e = 0.0, e2 = 0.0;
    for (std::size_t s = 0; s < f.cols(); ++s) {
      e += s_given_z(z, s) * f(z, s);
      e2 += s_given_z(z, s) * f(z, s) * f(z, s);
    }
    out += static_cast<double>(t.counts[z]) * (e2 - e * e);
  }
  return out;
}

double anti_concentration_bound(double variance, double theta, double kappa) {
  if (!(theta > 0.0) || !(kappa > 0.0) || variance < 0.0)
    throw std::invalid_argument("anti_concentration_bound: need theta, kappa > 0 and variance >= 0");
  constexpr double kTwoPi = 6.283185307179586476925287;
  double first = theta * theta * variance / (2.0 * kappa * kappa);
  double second = 2.0 * std::exp(-kappa * kappa / 2.0) *
                  (1.0 + std::sqrt(2.0) + std::sqrt(kTwoPi) / kappa +
                   1.0 / (kappa * kappa));
  return first - second;
}

double subgaussian_tail(long long n, double a, double b, double xi) {
  if (!(b > a) || n < 1 || xi < 0.0)
    throw std::invalid_argument("subgaussian_tail: need b > a, n >= 1, xi >= 0");
  double d = static_cast<double>(n) * (b - a) * (b - a);
  return 2.0 * std::exp(-xi * xi / d);
}

std::pair<double, double> likelihood_ratio_band(const Mat& p, const Mat& p_bar,
                                                long long n, int k_scale) {
  if (p.rows() != p_bar.rows() || p.cols() != p_bar.cols())
    throw std::invalid_argument("likelihood_ratio_band: shape mismatch");
  if (n < 1 || k_scale < 0)
    throw std::invalid_argument("likelihood_ratio_band: need n >= 1 and k_scale >= 0");
  double min_pos = kInf;
  double bound = static_cast<double>(k_scale) / static_cast<double>(n) + 1e-12;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      bool zp = p(i, j) <= 0.0, zb = p_bar(i, j) <= 0.0;
      if (zp != zb)
        throw std::invalid_argument(
            "likelihood_ratio_band: supports differ (mutual absolute continuity required)");
      if (std::abs(p(i, j) - p_bar(i, j)) > bound)
        throw std::invalid_argument(
            "likelihood_ratio_band: perturbation exceeds k_scale / n");
      if (!zp) min_pos = std::min(min_pos, p(i, j));
    }
  if (!std::isfinite(min_pos))
    throw std::invalid_argument("likelihood_ratio_band: empty support");
  double delta = 2.0 * static_cast<double>(k_scale) / min_pos;
  return {std::exp(-delta), std::exp(delta)};
}

double zeta_n(long long n, std::size_t j_size, std::size_t k_size) {
  if (n < 1 || j_size < 1 || k_size < 1)
    throw std::invalid_argument("zeta_n: need n, alphabet sizes >= 1");
  double jk = static_cast<double>(j_size) * static_cast<double>(k_size);
  return (jk - 1.0) * std::log2(static_cast<double>(n + 1)) / static_cast<double>(n) +
         1.0 / static_cast<double>(n);
}

}  // namespace mmlab
