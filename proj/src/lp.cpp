#include "mmlab/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>

namespace mmlab {

namespace {

constexpr double kCostTol = 1e-9;
constexpr double kPivotTol = 1e-10;

// Dense LU with partial pivoting for the basis matrix.
class LuFactors {
 public:
  bool factor(const Mat& m) {
    n_ = m.rows();
    lu_ = m;
    perm_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
    for (std::size_t col = 0; col < n_; ++col) {
      std::size_t piv = col;
      double best = std::abs(lu_(col, col));
      for (std::size_t r = col + 1; r < n_; ++r) {
        double v = std::abs(lu_(r, col));
        if (v > best) {
          best = v;
          piv = r;
        }
      }
      if (best < 1e-12) return false;
      if (piv != col) {
        for (std::size_t j = 0; j < n_; ++j) std::swap(lu_(piv, j), lu_(col, j));
        std::swap(perm_[piv], perm_[col]);
      }
      for (std::size_t r = col + 1; r < n_; ++r) {
        double f = lu_(r, col) / lu_(col, col);
        lu_(r, col) = f;
        for (std::size_t j = col + 1; j < n_; ++j) lu_(r, j) -= f * lu_(col, j);
      }
    }
    return true;
  }

  // Solve M x = rhs.
  void solve(const Vec& rhs, Vec& x) const {
    x.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) x[i] = rhs[perm_[i]];
    for (std::size_t i = 1; i < n_; ++i)
      for (std::size_t j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
    for (std::size_t i = n_; i-- > 0;) {
      for (std::size_t j = i + 1; j < n_; ++j) x[i] -= lu_(i, j) * x[j];
      x[i] /= lu_(i, i);
    }
  }

  // Solve M^T y = rhs.
  void solve_transposed(const Vec& rhs, Vec& y) const {
    Vec z(rhs);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < i; ++j) z[i] -= lu_(j, i) * z[j];
      z[i] /= lu_(i, i);
    }
    for (std::size_t i = n_; i-- > 0;)
      for (std::size_t j = i + 1; j < n_; ++j) z[i] -= lu_(j, i) * z[j];
    y.assign(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) y[perm_[i]] = z[i];
  }

 private:
  std::size_t n_ = 0;
  Mat lu_;
  std::vector<std::size_t> perm_;
};

struct Tableau {
  // Columns 0..n-1 are structural variables, n..n+m-1 are artificials.
  std::size_t n, m;
  const Mat* a;
  Vec b;                       // sign-adjusted so b >= 0
  std::vector<double> art_sign;
  std::vector<std::size_t> basis;    // column index per row
  std::vector<bool> row_active;      // redundant rows get deactivated

  double column(std::size_t row, std::size_t col) const {
    if (col < n) return art_sign[row] * (*a)(row, col);
    return col - n == row ? 1.0 : 0.0;
  }
};

// One simplex phase.  Returns optimal/unbounded/iteration_limit.
LpStatus run_phase(Tableau& t, const Vec& cost, bool allow_artificial_entering,
                   int max_iter, int& iter_count) {
  std::size_t m = t.m, n = t.n;
  std::vector<std::size_t> active_rows;
  for (std::size_t r = 0; r < m; ++r)
    if (t.row_active[r]) active_rows.push_back(r);
  std::size_t ma = active_rows.size();

  Mat bmat(ma, ma);
  LuFactors lu;
  Vec cb(ma), yred(ma), rhs(ma), xb(ma), d(ma), colbuf(ma);

  for (;;) {
    if (++iter_count > max_iter) return LpStatus::iteration_limit;
    for (std::size_t i = 0; i < ma; ++i)
      for (std::size_t j = 0; j < ma; ++j)
        bmat(i, j) = t.column(active_rows[i], t.basis[active_rows[j]]);
    if (!lu.factor(bmat))
      throw std::runtime_error("solve_lp: singular basis");
    for (std::size_t i = 0; i < ma; ++i) rhs[i] = t.b[active_rows[i]];
    lu.solve(rhs, xb);
    for (std::size_t i = 0; i < ma; ++i) cb[i] = cost[t.basis[active_rows[i]]];
    lu.solve_transposed(cb, yred);

    // Bland: entering variable = lowest index with negative reduced cost.
    std::size_t enter = SIZE_MAX;
    std::size_t limit = allow_artificial_entering ? n + m : n;
    std::vector<bool> in_basis(n + m, false);
    for (std::size_t r : active_rows) in_basis[t.basis[r]] = true;
    for (std::size_t j = 0; j < limit; ++j) {
      if (in_basis[j]) continue;
      double cr = cost[j];
      for (std::size_t i = 0; i < ma; ++i) cr -= yred[i] * t.column(active_rows[i], j);
      if (cr < -kCostTol) {
        enter = j;
        break;
      }
    }
    if (enter == SIZE_MAX) return LpStatus::optimal;

    for (std::size_t i = 0; i < ma; ++i) colbuf[i] = t.column(active_rows[i], enter);
    lu.solve(colbuf, d);

    // Ratio test; Bland tie-break on the leaving variable index.
    std::size_t leave_pos = SIZE_MAX;
    double best_ratio = 0.0;
    for (std::size_t i = 0; i < ma; ++i) {
      if (d[i] <= kPivotTol) continue;
      double xi = xb[i] > 0.0 ? xb[i] : 0.0;
      double ratio = xi / d[i];
      if (leave_pos == SIZE_MAX || ratio < best_ratio - 1e-12 ||
          (ratio < best_ratio + 1e-12 &&
           t.basis[active_rows[i]] < t.basis[active_rows[leave_pos]])) {
        leave_pos = i;
        best_ratio = ratio;
      }
    }
    if (leave_pos == SIZE_MAX) return LpStatus::unbounded;
    t.basis[active_rows[leave_pos]] = enter;
  }
}

}  // namespace

LpSolution solve_lp(const LpProblem& p) {
  std::size_t m = p.a.rows(), n = p.a.cols();
  if (p.c.size() != n || p.b.size() != m)
    throw std::invalid_argument("solve_lp: dimension mismatch");

  Tableau t;
  t.n = n;
  t.m = m;
  t.a = &p.a;
  t.b = p.b;
  t.art_sign.assign(m, 1.0);
  t.basis.resize(m);
  t.row_active.assign(m, true);
  double bscale = 1.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (t.b[r] < 0.0) {
      t.b[r] = -t.b[r];
      t.art_sign[r] = -1.0;
    }
    bscale = std::max(bscale, t.b[r]);
    t.basis[r] = n + r;
  }

  LpSolution sol;
  int max_iter = 2000 + 60 * static_cast<int>(n + m);

  // Phase 1: minimize the artificial mass.
  Vec phase1_cost(n + m, 0.0);
  for (std::size_t j = n; j < n + m; ++j) phase1_cost[j] = 1.0;
  LpStatus st = run_phase(t, phase1_cost, true, max_iter, sol.iterations);
  if (st != LpStatus::optimal) {
    sol.status = st == LpStatus::unbounded ? LpStatus::infeasible : st;
    return sol;
  }

  // Recompute basic values to judge feasibility.
  {
    Mat bmat(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) bmat(i, j) = t.column(i, t.basis[j]);
    LuFactors lu;
    if (!lu.factor(bmat)) throw std::runtime_error("solve_lp: singular phase-1 basis");
    Vec xb;
    lu.solve(t.b, xb);
    double art_mass = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (t.basis[i] >= n) art_mass += std::max(0.0, xb[i]);
    if (art_mass > 1e-7 * bscale) {
      sol.status = LpStatus::infeasible;
      return sol;
    }
    // Drive artificials out of the basis; deactivate rows where impossible.
    for (std::size_t i = 0; i < m; ++i) {
      if (t.basis[i] < n) continue;
      Vec ei(m, 0.0), brow;
      ei[i] = 1.0;
      lu.solve_transposed(ei, brow);  // row i of B^{-1}
      std::size_t replacement = SIZE_MAX;
      std::vector<bool> in_basis(n + m, false);
      for (std::size_t r = 0; r < m; ++r) in_basis[t.basis[r]] = true;
      for (std::size_t j = 0; j < n && replacement == SIZE_MAX; ++j) {
        if (in_basis[j]) continue;
        double piv = 0.0;
        for (std::size_t r = 0; r < m; ++r) piv += brow[r] * t.column(r, j);
        if (std::abs(piv) > 1e-8) replacement = j;
      }
      if (replacement != SIZE_MAX) {
        t.basis[i] = replacement;
        for (std::size_t a = 0; a < m; ++a)
          for (std::size_t b2 = 0; b2 < m; ++b2) bmat(a, b2) = t.column(a, t.basis[b2]);
        if (!lu.factor(bmat)) throw std::runtime_error("solve_lp: singular pivot basis");
      } else {
        t.row_active[i] = false;  // redundant constraint
      }
    }
  }

  // Phase 2 on the structural costs.
  Vec phase2_cost(n + m, 0.0);
  for (std::size_t j = 0; j < n; ++j) phase2_cost[j] = p.c[j];
  st = run_phase(t, phase2_cost, false, max_iter, sol.iterations);
  if (st != LpStatus::optimal) {
    sol.status = st;
    return sol;
  }

  // Extract primal/dual values and certify residuals.
  std::vector<std::size_t> act;
  for (std::size_t r = 0; r < m; ++r)
    if (t.row_active[r]) act.push_back(r);
  std::size_t ma = act.size();
  Mat bmat(ma, ma);
  for (std::size_t i = 0; i < ma; ++i)
    for (std::size_t j = 0; j < ma; ++j) bmat(i, j) = t.column(act[i], t.basis[act[j]]);
  LuFactors lu;
  if (!lu.factor(bmat)) throw std::runtime_error("solve_lp: singular final basis");
  Vec rhs(ma), xb, cb(ma), yred;
  for (std::size_t i = 0; i < ma; ++i) rhs[i] = t.b[act[i]];
  lu.solve(rhs, xb);
  for (std::size_t i = 0; i < ma; ++i) cb[i] = phase2_cost[t.basis[act[i]]];
  lu.solve_transposed(cb, yred);

  sol.x.assign(n, 0.0);
  for (std::size_t i = 0; i < ma; ++i)
    if (t.basis[act[i]] < n) sol.x[t.basis[act[i]]] = std::max(0.0, xb[i]);
  sol.y.assign(m, 0.0);
  for (std::size_t i = 0; i < ma; ++i) sol.y[act[i]] = t.art_sign[act[i]] * yred[i];

  sol.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) sol.objective += p.c[j] * sol.x[j];
  for (std::size_t r = 0; r < m; ++r) {
    double ax = 0.0;
    for (std::size_t j = 0; j < n; ++j) ax += p.a(r, j) * sol.x[j];
    sol.primal_residual = std::max(sol.primal_residual, std::abs(ax - p.b[r]));
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double cr = p.c[j];
    for (std::size_t r = 0; r < m; ++r) cr -= sol.y[r] * p.a(r, j);
    worst = std::min(worst, cr);
  }
  sol.dual_violation = -worst;
  sol.status = LpStatus::optimal;
  return sol;
}

std::vector<Vec> enumerate_vertices(const PolytopeEq& poly, double tol) {
  std::size_t m = poly.a.rows(), n = poly.a.cols();
  if (poly.b.size() != m) throw std::invalid_argument("enumerate_vertices: dimension mismatch");

  // Row-reduce [A | b] to drop dependent rows.
  Mat work(m, n + 1);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) work(r, j) = poly.a(r, j);
    work(r, n) = poly.b[r];
  }
  std::size_t rank = 0;
  for (std::size_t col = 0; col < n && rank < m; ++col) {
    std::size_t piv = rank;
    double best = std::abs(work(rank, col));
    for (std::size_t r = rank + 1; r < m; ++r)
      if (std::abs(work(r, col)) > best) {
        best = std::abs(work(r, col));
        piv = r;
      }
    if (best < 1e-11) continue;
    if (piv != rank)
      for (std::size_t j = 0; j <= n; ++j) std::swap(work(piv, j), work(rank, j));
    for (std::size_t r = 0; r < m; ++r) {
      if (r == rank) continue;
      double f = work(r, col) / work(rank, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= n; ++j) work(r, j) -= f * work(rank, j);
    }
    ++rank;
  }
  for (std::size_t r = rank; r < m; ++r)
    if (std::abs(work(r, n)) > 1e-8) return {};  // inconsistent system

  Mat ar(rank, n);
  Vec br(rank);
  for (std::size_t r = 0; r < rank; ++r) {
    for (std::size_t j = 0; j < n; ++j) ar(r, j) = work(r, j);
    br[r] = work(r, n);
  }

  std::vector<Vec> vertices;
  std::map<std::vector<std::int64_t>, bool> seen;
  std::vector<std::size_t> pick(rank);
  LuFactors lu;

  if (rank == 0) {
    vertices.emplace_back(n, 0.0);
    return vertices;
  }
  if (rank > n) return {};

  // Iterate over all size-`rank` column subsets in lexicographic order.
  for (std::size_t i = 0; i < rank; ++i) pick[i] = i;
  bool more = true;
  while (more) {
    Mat sub(rank, rank);
    for (std::size_t i = 0; i < rank; ++i)
      for (std::size_t j = 0; j < rank; ++j) sub(i, j) = ar(i, pick[j]);
    if (lu.factor(sub)) {
      Vec xs;
      lu.solve(br, xs);
      bool ok = true;
      for (double v : xs)
        if (v < -tol) {
          ok = false;
          break;
        }
      if (ok) {
        Vec full(n, 0.0);
        for (std::size_t j = 0; j < rank; ++j) full[pick[j]] = std::max(0.0, xs[j]);
        std::vector<std::int64_t> key(n);
        for (std::size_t j = 0; j < n; ++j)
          key[j] = static_cast<std::int64_t>(std::llround(full[j] * 1e9));
        if (!seen.count(key)) {
          seen[key] = true;
          vertices.push_back(std::move(full));
        }
      }
    }
    // next combination
    more = false;
    for (std::size_t i = rank; i-- > 0;) {
      if (pick[i] != i + n - rank) {
        ++pick[i];
        for (std::size_t j = i + 1; j < rank; ++j) pick[j] = pick[j - 1] + 1;
        more = true;
        break;
      }
    }
  }
  return vertices;
}

GameResult solve_bilinear_game(const Mat& payoff, const PolytopeEq& xset,
                               const PolytopeEq& yset) {
  std::size_t nx = payoff.rows(), ny = payoff.cols();
  std::size_t me = xset.a.rows(), mf = yset.a.rows();
  if (xset.a.cols() != nx || yset.a.cols() != ny)
    throw std::invalid_argument("solve_bilinear_game: dimension mismatch");

  // Dualize the inner min: value = max_{x,u} f.u  s.t.  E x = e,
  // F^T u <= Q^T x, x >= 0, u free.  Split u and add slacks for standard form.
  std::size_t nv = nx + 2 * mf + ny;
  LpProblem lp;
  lp.c.assign(nv, 0.0);
  for (std::size_t r = 0; r < mf; ++r) {
    lp.c[nx + r] = -yset.b[r];
    lp.c[nx + mf + r] = yset.b[r];
  }
  lp.a = Mat(me + ny, nv, 0.0);
  lp.b.assign(me + ny, 0.0);
  for (std::size_t r = 0; r < me; ++r) {
    for (std::size_t j = 0; j < nx; ++j) lp.a(r, j) = xset.a(r, j);
    lp.b[r] = xset.b[r];
  }
  for (std::size_t col = 0; col < ny; ++col) {
    std::size_t r = me + col;
    for (std::size_t j = 0; j < nx; ++j) lp.a(r, j) = -payoff(j, col);
    for (std::size_t u = 0; u < mf; ++u) {
      lp.a(r, nx + u) = yset.a(u, col);
      lp.a(r, nx + mf + u) = -yset.a(u, col);
    }
    lp.a(r, nx + 2 * mf + col) = 1.0;
  }

  GameResult res;
  LpSolution outer = solve_lp(lp);
  if (outer.status != LpStatus::optimal) {
    res.status = outer.status;
    return res;
  }
  res.value = -outer.objective;
  res.x.assign(outer.x.begin(), outer.x.begin() + nx);

  // The minimizer's equilibrium strategy is the (negated) dual of the
  // coupling rows: those rows each carry their own slack column, so none is
  // ever dropped as redundant and the duals are always populated.  A mere
  // best response to x* would not certify the value.
  res.y.assign(ny, 0.0);
  for (std::size_t col = 0; col < ny; ++col) res.y[col] = -outer.y[me + col];
  res.status = LpStatus::optimal;
  return res;
}

}  // namespace mmlab
