#include "mmlab/maximality.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "mmlab/parallel.hpp"
#include "mmlab/rng.hpp"

namespace mmlab {

namespace {

Verdict classify(double slack, double tol) {
  if (slack < -tol) return Verdict::non_member;
  if (slack > tol) return Verdict::member;
  return Verdict::boundary;
}

std::vector<std::size_t> active_letters(const Distribution& px) {
  std::vector<std::size_t> act;
  for (std::size_t j = 0; j < px.size(); ++j)
    if (px[j] > 0.0) act.push_back(j);
  return act;
}

// Adversary feasible set for a fixed (X, Yhat) joint law: conditional rows
// P(X2 | X1 = x1, Yhat = k2) for the positive-mass (x1, k2) pairs, subject to
// reproducing the same (Yhat, X) joint.
struct AdversaryPolytope {
  std::vector<std::size_t> act;
  std::vector<std::pair<std::size_t, std::size_t>> cells;  // (x1, k2)
  Vec mass;                                                // joint P(x1, k2)
  PolytopeEq eq;
  std::size_t K = 0;

  std::size_t num_vars() const { return cells.size() * act.size(); }
  std::size_t var(std::size_t cell, std::size_t act_idx) const {
    return cell * act.size() + act_idx;
  }

  Vec identity_point() const {
    Vec a(num_vars(), 0.0);
    for (std::size_t ci = 0; ci < cells.size(); ++ci)
      for (std::size_t xi = 0; xi < act.size(); ++xi)
        if (act[xi] == cells[ci].first) a[var(ci, xi)] = 1.0;
    return a;
  }
};

AdversaryPolytope build_adversary_polytope(const Distribution& px, const Channel& vhat) {
  AdversaryPolytope poly;
  poly.K = vhat.output_size();
  poly.act = active_letters(px);
  std::size_t K = poly.K;
  for (std::size_t x : poly.act)
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      double m = px[x] * vhat(x, k2);
      if (m > 0.0) {
        poly.cells.emplace_back(x, k2);
        poly.mass.push_back(m);
      }
    }
  std::size_t nv = poly.num_vars();
  std::size_t na = poly.act.size();

  std::vector<Vec> rows;
  Vec rhs;
  for (std::size_t ci = 0; ci < poly.cells.size(); ++ci) {
    Vec r(nv, 0.0);
    for (std::size_t xi = 0; xi < na; ++xi) r[poly.var(ci, xi)] = 1.0;
    rows.push_back(std::move(r));
    rhs.push_back(1.0);
  }
  for (std::size_t xi = 0; xi < na; ++xi)
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      Vec r(nv, 0.0);
      bool any = false;
      for (std::size_t ci = 0; ci < poly.cells.size(); ++ci)
        if (poly.cells[ci].second == k2) {
          r[poly.var(ci, xi)] = poly.mass[ci];
          any = true;
        }
      if (!any) continue;
      rows.push_back(std::move(r));
      rhs.push_back(px[poly.act[xi]] * vhat(poly.act[xi], k2));
    }

  poly.eq.a = Mat(rows.size(), nv);
  poly.eq.b = rhs;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < nv; ++j) poly.eq.a(r, j) = rows[r][j];
  return poly;
}

LpProblem adversary_lp(const AdversaryPolytope& poly, const Coupling& c,
                       const Distribution& px, const Metric& q) {
  LpProblem lp;
  lp.a = poly.eq.a;
  lp.b = poly.eq.b;
  lp.c.assign(poly.num_vars(), 0.0);
  std::size_t K = poly.K;
  for (std::size_t ci = 0; ci < poly.cells.size(); ++ci) {
    auto [x1, k2] = poly.cells[ci];
    for (std::size_t xi = 0; xi < poly.act.size(); ++xi) {
      std::size_t x2 = poly.act[xi];
      double w = 0.0;
      for (std::size_t k1 = 0; k1 < K; ++k1)
        w += px[x1] * c.table(x1)(k1, k2) * q(x2, k1);
      lp.c[poly.var(ci, xi)] = w;
    }
  }
  return lp;
}

double honest_metric_mean(const Coupling& c, const Distribution& px, const Metric& q) {
  double s = 0.0;
  for (std::size_t x = 0; x < px.size(); ++x) {
    if (px[x] == 0.0) continue;
    const Mat& t = c.table(x);
    for (std::size_t k1 = 0; k1 < t.rows(); ++k1) {
      double row = t.row_sum(k1);
      if (row > 0.0) s += px[x] * row * q(x, k1);
    }
  }
  return s;
}

std::vector<Mat> identity_adversary_tables(std::size_t J, std::size_t K) {
  std::vector<Mat> tabs(J, Mat(K, J, 0.0));
  for (std::size_t x = 0; x < J; ++x)
    for (std::size_t k2 = 0; k2 < K; ++k2) tabs[x](k2, x) = 1.0;
  return tabs;
}

void check_shapes(const Coupling& c, const Distribution& px, const Metric& q) {
  if (c.input_size() != px.size() || q.input_size() != px.size() ||
      q.output_size() != c.output_size())
    throw std::invalid_argument("maximality: dimension mismatch");
}

}  // namespace

MaximalityCertificate adversary_value(const Coupling& c, const Distribution& px,
                                      const Metric& q, double tol) {
  check_shapes(c, px, q);
  std::size_t J = px.size(), K = c.output_size();
  Channel vhat = marginal_yhat(c);
  AdversaryPolytope poly = build_adversary_polytope(px, vhat);
  LpProblem lp = adversary_lp(poly, c, px, q);
  LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::optimal)
    throw std::runtime_error("adversary_value: adversary program did not solve");

  MaximalityCertificate cert;
  cert.adversary_value = sol.objective;
  cert.baseline = honest_metric_mean(c, px, q);
  cert.slack = cert.adversary_value - cert.baseline;
  cert.verdict = classify(cert.slack, tol);
  cert.marginal_residual = sol.primal_residual;
  cert.worst_adversary = identity_adversary_tables(J, K);
  for (std::size_t ci = 0; ci < poly.cells.size(); ++ci) {
    auto [x1, k2] = poly.cells[ci];
    for (std::size_t x2 = 0; x2 < J; ++x2) cert.worst_adversary[x1](k2, x2) = 0.0;
    for (std::size_t xi = 0; xi < poly.act.size(); ++xi)
      cert.worst_adversary[x1](k2, poly.act[xi]) = sol.x[poly.var(ci, xi)];
  }
  return cert;
}

bool is_maximal(const Coupling& c, const Distribution& px, const Metric& q, double tol) {
  return adversary_value(c, px, q, tol).slack >= -tol;
}

AdversaryEnvelope adversary_envelope(const Coupling& c, const Distribution& px,
                                     const Metric& q, double tol) {
  check_shapes(c, px, q);
  std::size_t J = px.size(), K = c.output_size();
  Channel vhat = marginal_yhat(c);
  AdversaryPolytope poly = build_adversary_polytope(px, vhat);
  LpProblem lp = adversary_lp(poly, c, px, q);
  LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::optimal)
    throw std::runtime_error("adversary_envelope: adversary program did not solve");

  AdversaryEnvelope env;
  MaximalityCertificate& cert = env.certificate;
  cert.adversary_value = sol.objective;
  cert.baseline = honest_metric_mean(c, px, q);
  cert.slack = cert.adversary_value - cert.baseline;
  cert.verdict = classify(cert.slack, tol);
  cert.marginal_residual = sol.primal_residual;
  cert.worst_adversary = identity_adversary_tables(J, K);
  for (std::size_t ci = 0; ci < poly.cells.size(); ++ci) {
    auto [x1, k2] = poly.cells[ci];
    for (std::size_t x2 = 0; x2 < J; ++x2) cert.worst_adversary[x1](k2, x2) = 0.0;
    for (std::size_t xi = 0; xi < poly.act.size(); ++xi)
      cert.worst_adversary[x1](k2, poly.act[xi]) = sol.x[poly.var(ci, xi)];
  }

  // Duals of the marginal-match rows, laid out after the per-cell
  // normalization rows in (active letter, nonempty column) order.
  std::size_t na = poly.act.size();
  std::vector<bool> nonempty(K, false);
  for (const auto& cell : poly.cells) nonempty[cell.second] = true;
  std::vector<std::size_t> col_rank(K, 0);
  std::size_t ncols = 0;
  for (std::size_t k2 = 0; k2 < K; ++k2)
    if (nonempty[k2]) col_rank[k2] = ncols++;
  Mat mu(na, K, 0.0);
  for (std::size_t xi = 0; xi < na; ++xi)
    for (std::size_t k2 = 0; k2 < K; ++k2)
      if (nonempty[k2])
        mu(xi, k2) = sol.y[poly.cells.size() + xi * ncols + col_rank[k2]];

  std::vector<int> cell_of(J * K, -1);
  for (std::size_t ci = 0; ci < poly.cells.size(); ++ci)
    cell_of[poly.cells[ci].first * K + poly.cells[ci].second] = static_cast<int>(ci);
  std::vector<int> act_rank(J, -1);
  for (std::size_t xi = 0; xi < na; ++xi) act_rank[poly.act[xi]] = static_cast<int>(xi);

  // d(value)/d c_x(k1, k2) through the objective coefficients, the marginal
  // right-hand sides and the mass-weighted constraint matrix.  Cells of zero
  // mass take the identity-adversary direction, whose penalty effect is nil.
  env.d_adversary.assign(J, Mat(K, K, 0.0));
  for (std::size_t x = 0; x < J; ++x) {
    if (px[x] == 0.0) continue;
    std::size_t xi_self = static_cast<std::size_t>(act_rank[x]);
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      int ci = cell_of[x * K + k2];
      if (ci < 0) {
        for (std::size_t k1 = 0; k1 < K; ++k1)
          env.d_adversary[x](k1, k2) = px[x] * q(x, k1);
        continue;
      }
      double mu_self = nonempty[k2] ? mu(xi_self, k2) : 0.0;
      double mu_mix = 0.0;
      for (std::size_t xi = 0; xi < na; ++xi)
        mu_mix += sol.x[poly.var(ci, xi)] * mu(xi, k2);
      for (std::size_t k1 = 0; k1 < K; ++k1) {
        double exp_q = 0.0;
        for (std::size_t xi = 0; xi < na; ++xi)
          exp_q += sol.x[poly.var(ci, xi)] * q(poly.act[xi], k1);
        env.d_adversary[x](k1, k2) = px[x] * (exp_q + mu_self - mu_mix);
      }
    }
  }
  return env;
}

UniversalMaximality is_maximal_universal(const Coupling& c, const Metric& q,
                                         double grid_step, double tol) {
  if (!(grid_step > 0.0) || grid_step > 0.5)
    throw std::invalid_argument("is_maximal_universal: grid_step must be in (0, 0.5]");
  std::vector<Distribution> grid = simplex_grid(c.input_size(), grid_step);

  Vec slack(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    slack[i] = adversary_value(c, grid[i], q, tol).slack;
  });

  UniversalMaximality res;
  res.grid_points = grid.size();
  std::size_t worst = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (slack[i] < slack[worst]) worst = i;
  res.min_slack = slack[worst];
  res.worst_px = grid[worst];
  res.all_member = res.min_slack >= -tol;
  return res;
}

bool SqTable::allows(std::size_t j, std::size_t k1, std::size_t k2) const {
  const auto& s = at(k1, k2);
  return std::find(s.begin(), s.end(), static_cast<int>(j)) != s.end();
}

SqTable sq_table(const Metric& q, double tie_tol) {
  SqTable t;
  t.input_size = q.input_size();
  t.output_size = q.output_size();
  t.sets.resize(t.output_size * t.output_size);
  for (std::size_t k1 = 0; k1 < t.output_size; ++k1)
    for (std::size_t k2 = 0; k2 < t.output_size; ++k2) {
      double best = -kInf;
      for (std::size_t j = 0; j < t.input_size; ++j)
        best = std::max(best, q(j, k2) - q(j, k1));
      auto& set = t.sets[k1 * t.output_size + k2];
      for (std::size_t j = 0; j < t.input_size; ++j)
        if (q(j, k2) - q(j, k1) >= best - tie_tol) set.push_back(static_cast<int>(j));
    }
  return t;
}

SupportCheck is_maximal_prior(const Coupling& c, const Metric& q, double zero_tol) {
  if (c.input_size() != q.input_size() || c.output_size() != q.output_size())
    throw std::invalid_argument("is_maximal_prior: dimension mismatch");
  SqTable t = sq_table(q);
  SupportCheck res;
  for (std::size_t j = 0; j < c.input_size(); ++j)
    for (std::size_t k1 = 0; k1 < c.output_size(); ++k1)
      for (std::size_t k2 = 0; k2 < c.output_size(); ++k2) {
        double v = c.table(j)(k1, k2);
        if (v > zero_tol && !t.allows(j, k1, k2)) {
          res.member = false;
          res.violations.push_back({j, k1, k2});
          res.violating_mass.push_back(v);
        }
      }
  return res;
}

SupportCheck in_gamma_rho(const Coupling& c, const Metric& rho, const Metric& q,
                          double zero_tol) {
  if (c.input_size() != q.input_size() || c.output_size() != q.output_size() ||
      rho.input_size() != q.input_size() || rho.output_size() != q.output_size())
    throw std::invalid_argument("in_gamma_rho: dimension mismatch");
  SupportCheck res;
  constexpr double kTieTol = 1e-12;
  for (std::size_t k1 = 0; k1 < c.output_size(); ++k1)
    for (std::size_t k2 = 0; k2 < c.output_size(); ++k2) {
      double best = -kInf;
      for (std::size_t j = 0; j < c.input_size(); ++j)
        best = std::max(best, rho(j, k2) - q(j, k1));
      for (std::size_t j = 0; j < c.input_size(); ++j) {
        bool in_argmax = rho(j, k2) - q(j, k1) >= best - kTieTol;
        double v = c.table(j)(k1, k2);
        if (in_argmax && v > zero_tol) {
          res.member = false;
          res.violations.push_back({j, k1, k2});
          res.violating_mass.push_back(v);
        }
      }
    }
  return res;
}

namespace {

MaximalityCertificate unconstrained_impostor_value(const Coupling& c,
                                                   const Distribution& px,
                                                   const Metric& q, double tol,
                                                   const char* label) {
  check_shapes(c, px, q);
  std::size_t J = px.size(), K = c.output_size();
  auto act = active_letters(px);
  Channel vhat = marginal_yhat(c);

  // Cells are (x, k1, k2) with positive joint mass; the impostor may depend
  // on the full triple (no Markov thinning through Yhat alone).
  struct Cell {
    std::size_t x, k1, k2;
    double u;
  };
  std::vector<Cell> cells;
  for (std::size_t x : act)
    for (std::size_t k1 = 0; k1 < K; ++k1)
      for (std::size_t k2 = 0; k2 < K; ++k2) {
        double u = px[x] * c.table(x)(k1, k2);
        if (u > 0.0) cells.push_back({x, k1, k2, u});
      }
  std::size_t na = act.size();
  std::size_t nv = cells.size() * na;
  auto var = [&](std::size_t ci, std::size_t xi) { return ci * na + xi; };

  std::vector<Vec> rows;
  Vec rhs;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    Vec r(nv, 0.0);
    for (std::size_t xi = 0; xi < na; ++xi) r[var(ci, xi)] = 1.0;
    rows.push_back(std::move(r));
    rhs.push_back(1.0);
  }
  for (std::size_t xi = 0; xi < na; ++xi)
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      Vec r(nv, 0.0);
      bool any = false;
      for (std::size_t ci = 0; ci < cells.size(); ++ci)
        if (cells[ci].k2 == k2) {
          r[var(ci, xi)] = cells[ci].u;
          any = true;
        }
      if (!any) continue;
      rows.push_back(std::move(r));
      rhs.push_back(px[act[xi]] * vhat(act[xi], k2));
    }

  LpProblem lp;
  lp.a = Mat(rows.size(), nv);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < nv; ++j) lp.a(r, j) = rows[r][j];
  lp.b = rhs;
  lp.c.assign(nv, 0.0);
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    for (std::size_t xi = 0; xi < na; ++xi)
      lp.c[var(ci, xi)] = cells[ci].u * q(act[xi], cells[ci].k1);

  LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::optimal)
    throw std::runtime_error(std::string(label) + ": impostor program did not solve");

  MaximalityCertificate cert;
  cert.adversary_value = sol.objective;
  cert.baseline = honest_metric_mean(c, px, q);
  cert.slack = cert.adversary_value - cert.baseline;
  cert.verdict = classify(cert.slack, tol);
  cert.marginal_residual = sol.primal_residual;
  cert.notes = std::string(label) + ": impostor table aggregated over the true output";
  // Aggregate P(x2 | x, k1, k2) over k1 (weights u) into a (k2, x2) table.
  cert.worst_adversary = identity_adversary_tables(J, K);
  for (std::size_t x : act)
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      Vec agg(J, 0.0);
      double wsum = 0.0;
      for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        if (cells[ci].x != x || cells[ci].k2 != k2) continue;
        wsum += cells[ci].u;
        for (std::size_t xi = 0; xi < na; ++xi)
          agg[act[xi]] += cells[ci].u * sol.x[var(ci, xi)];
      }
      if (wsum <= 0.0) continue;
      for (std::size_t j = 0; j < J; ++j) cert.worst_adversary[x](k2, j) = agg[j] / wsum;
    }
  return cert;
}

}  // namespace

MaximalityCertificate in_theta_star(const Coupling& c, const Distribution& px,
                                    const Metric& q, double tol) {
  return unconstrained_impostor_value(c, px, q, tol, "in_theta_star");
}

MaximalityCertificate in_gamma_star(const Coupling& c, const Distribution& px,
                                    const Metric& q, double tol) {
  MaximalityCertificate cert =
      unconstrained_impostor_value(c, px, q, tol, "in_gamma_star");
  cert.notes +=
      "; equality-of-distribution reading (checked law pinned to px x coupling); "
      "the absolute-continuity reading would quantify over dominating laws";
  return cert;
}

namespace {

struct TdObjective {
  std::size_t J, K;
  const TypeDependentMetric* q_td;
  std::vector<Mat> coef;  // per variable, JxK contribution to the impostor joint
  bool fd_gradient = false;

  Mat joint_at(const Vec& a) const {
    Mat p(J, K, 0.0);
    for (std::size_t v = 0; v < a.size(); ++v) {
      if (a[v] == 0.0) continue;
      const Mat& m = coef[v];
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < K; ++k) p(j, k) += a[v] * m(j, k);
    }
    return p;
  }

  double value_at(const Vec& a) const { return q_td->value(joint_at(a)); }

  Vec grad_at(const Vec& a) const {
    Mat p = joint_at(a);
    Mat g(J, K, 0.0);
    if (q_td->gradient && !fd_gradient) {
      g = q_td->gradient(p);
    } else {
      double f0 = q_td->value(p);
      constexpr double h = 1e-7;
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < K; ++k) {
          Mat ph = p;
          ph(j, k) += h;
          g(j, k) = (q_td->value(ph) - f0) / h;
        }
    }
    Vec out(a.size(), 0.0);
    for (std::size_t v = 0; v < a.size(); ++v) {
      const Mat& m = coef[v];
      double s = 0.0;
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < K; ++k) s += g(j, k) * m(j, k);
      out[v] = s;
    }
    return out;
  }
};

// Exact-ish 1-D minimization of f along [a, b] by ternary search; adequate for
// the convex line restrictions produced by conditional gradient steps.
double line_search_min(const std::function<double(double)>& f) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 80; ++it) {
    double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (f(m1) <= f(m2))
      hi = m2;
    else
      lo = m1;
  }
  return 0.5 * (lo + hi);
}

Vec lp_direction(const AdversaryPolytope& poly, const Vec& cost) {
  LpProblem lp;
  lp.a = poly.eq.a;
  lp.b = poly.eq.b;
  lp.c = cost;
  LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::optimal)
    throw std::runtime_error("adversary direction LP did not solve");
  return sol.x;
}

}  // namespace

TdCertificate is_maximal_td(const Coupling& c, const Distribution& px,
                            const TypeDependentMetric& q_td, const TdSearchOptions& opts) {
  if (c.input_size() != px.size() || q_td.input_size != px.size() ||
      q_td.output_size != c.output_size())
    throw std::invalid_argument("is_maximal_td: dimension mismatch");
  if (!q_td.value) throw std::invalid_argument("is_maximal_td: metric has no evaluator");

  std::size_t J = px.size(), K = c.output_size();
  Channel vhat = marginal_yhat(c);
  AdversaryPolytope poly = build_adversary_polytope(px, vhat);

  TdObjective obj;
  obj.J = J;
  obj.K = K;
  obj.q_td = &q_td;
  obj.coef.resize(poly.num_vars(), Mat(J, K, 0.0));
  for (std::size_t ci = 0; ci < poly.cells.size(); ++ci) {
    auto [x1, k2] = poly.cells[ci];
    for (std::size_t xi = 0; xi < poly.act.size(); ++xi) {
      Mat& m = obj.coef[poly.var(ci, xi)];
      for (std::size_t k1 = 0; k1 < K; ++k1)
        m(poly.act[xi], k1) += px[x1] * c.table(x1)(k1, k2);
    }
  }

  // Honest joint P(X1, Y).
  Mat honest(J, K, 0.0);
  for (std::size_t x = 0; x < J; ++x)
    if (px[x] > 0.0)
      for (std::size_t k1 = 0; k1 < K; ++k1)
        honest(x, k1) = px[x] * c.table(x).row_sum(k1);

  TdCertificate cert;
  cert.baseline = q_td.value(honest);
  cert.used_gradient = static_cast<bool>(q_td.gradient);
  bool gradient_free = !q_td.gradient && !q_td.convex_in_channel;
  obj.fd_gradient = !q_td.gradient;

  // Start points: identity plus vertices selected by random costs.
  std::vector<Vec> starts;
  starts.push_back(poly.identity_point());
  CounterRng rng(opts.seed, 0x7d, 0);
  for (int s = 1; s < opts.starts; ++s) {
    Vec cost(poly.num_vars());
    for (double& v : cost) v = rng.next_double() - 0.5;
    starts.push_back(lp_direction(poly, cost));
  }

  double best = kInf;
  double best_gap = kInf;
  for (const Vec& s0 : starts) {
    Vec a = s0;
    double gap = kInf;
    if (!gradient_free) {
      // Conditional gradient with exact line search.
      for (int it = 0; it < opts.iterations; ++it) {
        Vec g = obj.grad_at(a);
        Vec s = lp_direction(poly, g);
        double dg = 0.0;
        for (std::size_t v = 0; v < a.size(); ++v) dg += g[v] * (a[v] - s[v]);
        gap = dg;
        if (gap <= opts.fw_gap) break;
        double theta = line_search_min([&](double t) {
          Vec mid(a.size());
          for (std::size_t v = 0; v < a.size(); ++v) mid[v] = a[v] + t * (s[v] - a[v]);
          return obj.value_at(mid);
        });
        if (theta <= 1e-14) break;
        for (std::size_t v = 0; v < a.size(); ++v) a[v] += theta * (s[v] - a[v]);
      }
    } else {
      // Gradient-free vertex-direction search: line minimization toward
      // randomly chosen polytope vertices, objective values only.
      CounterRng vr(opts.seed, 0x9a, 1);
      for (int it = 0; it < opts.iterations; ++it) {
        Vec cost(poly.num_vars());
        for (double& v : cost) v = vr.next_double() - 0.5;
        Vec s = lp_direction(poly, cost);
        double theta = line_search_min([&](double t) {
          Vec mid(a.size());
          for (std::size_t v = 0; v < a.size(); ++v) mid[v] = a[v] + t * (s[v] - a[v]);
          return obj.value_at(mid);
        });
        Vec cand(a.size());
        for (std::size_t v = 0; v < a.size(); ++v) cand[v] = a[v] + theta * (s[v] - a[v]);
        if (obj.value_at(cand) < obj.value_at(a)) a = cand;
      }
      gap = kInf;
    }
    double val = obj.value_at(a);
    if (val < best) {
      best = val;
      best_gap = gap;
    }
  }

  cert.adversary_value = best;
  cert.slack = best - cert.baseline;
  cert.duality_gap = best_gap;
  cert.verdict = classify(cert.slack, opts.tol);
  cert.non_member_certified = cert.slack < -opts.tol;
  cert.member_certified = q_td.convex_in_channel && std::isfinite(best_gap) &&
                          best - best_gap >= cert.baseline - opts.tol &&
                          cert.slack >= -opts.tol;
  if (gradient_free) cert.notes = "gradient-free vertex-direction search";
  else if (!q_td.gradient) cert.notes = "finite-difference gradient";
  if (!cert.member_certified && cert.slack >= -opts.tol)
    cert.notes += (cert.notes.empty() ? "" : "; ") + std::string("membership search-certified");
  return cert;
}

GameCertificate in_v_max(const Channel& v, const Distribution& px,
                         const Channel& y_channel, const Metric& q, double tol) {
  std::size_t J = px.size(), K = v.output_size();
  if (v.input_size() != J || y_channel.input_size() != J ||
      y_channel.output_size() != K || q.input_size() != J || q.output_size() != K)
    throw std::invalid_argument("in_v_max: dimension mismatch");

  auto act = active_letters(px);
  std::size_t na = act.size();

  // Maximizer: per active input a KxK table with prescribed row/column sums.
  std::size_t nx = na * K * K;
  auto gvar = [&](std::size_t xi, std::size_t k1, std::size_t k2) {
    return (xi * K + k1) * K + k2;
  };
  std::vector<Vec> erows;
  Vec erhs;
  for (std::size_t xi = 0; xi < na; ++xi) {
    for (std::size_t k1 = 0; k1 < K; ++k1) {
      Vec r(nx, 0.0);
      for (std::size_t k2 = 0; k2 < K; ++k2) r[gvar(xi, k1, k2)] = 1.0;
      erows.push_back(std::move(r));
      erhs.push_back(y_channel(act[xi], k1));
    }
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      Vec r(nx, 0.0);
      for (std::size_t k1 = 0; k1 < K; ++k1) r[gvar(xi, k1, k2)] = 1.0;
      erows.push_back(std::move(r));
      erhs.push_back(v(act[xi], k2));
    }
  }
  PolytopeEq xset;
  xset.a = Mat(erows.size(), nx);
  for (std::size_t r = 0; r < erows.size(); ++r)
    for (std::size_t j = 0; j < nx; ++j) xset.a(r, j) = erows[r][j];
  xset.b = erhs;

  AdversaryPolytope poly = build_adversary_polytope(px, v);
  std::size_t ny = poly.num_vars();

  Mat payoff(nx, ny, 0.0);
  for (std::size_t ci = 0; ci < poly.cells.size(); ++ci) {
    auto [x1, k2] = poly.cells[ci];
    std::size_t xi = static_cast<std::size_t>(
        std::find(act.begin(), act.end(), x1) - act.begin());
    for (std::size_t k1 = 0; k1 < K; ++k1)
      for (std::size_t x2i = 0; x2i < na; ++x2i)
        payoff(gvar(xi, k1, k2), poly.var(ci, x2i)) = px[x1] * q(act[x2i], k1);
  }

  GameResult game = solve_bilinear_game(payoff, xset, poly.eq);
  GameCertificate cert;
  if (game.status != LpStatus::optimal) {
    cert.feasible = false;
    cert.verdict = Verdict::non_member;
    return cert;
  }

  cert.value = game.value;
  for (std::size_t xi = 0; xi < na; ++xi)
    for (std::size_t k1 = 0; k1 < K; ++k1)
      cert.baseline += px[act[xi]] * y_channel(act[xi], k1) * q(act[xi], k1);
  cert.slack = cert.value - cert.baseline;
  cert.verdict = classify(cert.slack, tol);

  // Witness coupling: game strategy for active letters, independent coupling
  // of the prescribed marginals elsewhere.
  std::vector<Mat> tables(J, Mat(K, K, 0.0));
  for (std::size_t x = 0; x < J; ++x)
    for (std::size_t k1 = 0; k1 < K; ++k1)
      for (std::size_t k2 = 0; k2 < K; ++k2)
        tables[x](k1, k2) = y_channel(x, k1) * v(x, k2);
  for (std::size_t xi = 0; xi < na; ++xi) {
    double sum = 0.0;
    for (std::size_t k1 = 0; k1 < K; ++k1)
      for (std::size_t k2 = 0; k2 < K; ++k2) {
        double val = std::max(0.0, game.x[gvar(xi, k1, k2)]);
        tables[act[xi]](k1, k2) = val;
        sum += val;
      }
    if (sum > 0.0)
      for (std::size_t k1 = 0; k1 < K; ++k1)
        for (std::size_t k2 = 0; k2 < K; ++k2) tables[act[xi]](k1, k2) /= sum;
  }
  cert.witness = Coupling(std::move(tables));

  cert.worst_adversary = identity_adversary_tables(J, K);
  for (std::size_t ci = 0; ci < poly.cells.size(); ++ci) {
    auto [x1, k2] = poly.cells[ci];
    for (std::size_t x2 = 0; x2 < J; ++x2) cert.worst_adversary[x1](k2, x2) = 0.0;
    for (std::size_t x2i = 0; x2i < na; ++x2i)
      cert.worst_adversary[x1](k2, poly.act[x2i]) = game.y[poly.var(ci, x2i)];
  }
  return cert;
}

TdGameCertificate in_v_max_td(const Channel& v, const Distribution& px,
                              const Channel& y_channel, const TypeDependentMetric& q_td,
                              const TdSearchOptions& opts) {
  std::size_t J = px.size(), K = v.output_size();
  if (v.input_size() != J || y_channel.input_size() != J ||
      y_channel.output_size() != K || q_td.input_size != J || q_td.output_size != K)
    throw std::invalid_argument("in_v_max_td: dimension mismatch");
  if (!q_td.value) throw std::invalid_argument("in_v_max_td: metric has no evaluator");

  auto act = active_letters(px);

  // Per-input transportation polytopes; candidate couplings from products of
  // their vertices plus blended interior points.
  std::vector<std::vector<Vec>> vertex_sets;
  for (std::size_t x : act) {
    PolytopeEq tp;
    std::size_t nv = K * K;
    tp.a = Mat(2 * K, nv, 0.0);
    tp.b.assign(2 * K, 0.0);
    for (std::size_t k1 = 0; k1 < K; ++k1) {
      for (std::size_t k2 = 0; k2 < K; ++k2) tp.a(k1, k1 * K + k2) = 1.0;
      tp.b[k1] = y_channel(x, k1);
    }
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      for (std::size_t k1 = 0; k1 < K; ++k1) tp.a(K + k2, k1 * K + k2) = 1.0;
      tp.b[K + k2] = v(x, k2);
    }
    vertex_sets.push_back(enumerate_vertices(tp));
    if (vertex_sets.back().empty())
      throw std::runtime_error("in_v_max_td: empty transportation polytope");
  }

  std::size_t combos = 1;
  constexpr std::size_t kComboCap = 4096;
  for (auto& vs : vertex_sets) {
    combos *= vs.size();
    if (combos > kComboCap) {
      combos = kComboCap;
      break;
    }
  }

  auto coupling_from = [&](const std::vector<Vec>& parts) {
    std::vector<Mat> tables(J, Mat(K, K, 0.0));
    for (std::size_t x = 0; x < J; ++x)
      for (std::size_t k1 = 0; k1 < K; ++k1)
        for (std::size_t k2 = 0; k2 < K; ++k2)
          tables[x](k1, k2) = y_channel(x, k1) * v(x, k2);
    for (std::size_t xi = 0; xi < act.size(); ++xi) {
      double sum = 0.0;
      for (double vv : parts[xi]) sum += vv;
      for (std::size_t k1 = 0; k1 < K; ++k1)
        for (std::size_t k2 = 0; k2 < K; ++k2) {
          double val = std::max(0.0, parts[xi][k1 * K + k2]);
          tables[act[xi]](k1, k2) = sum > 0.0 ? val / sum : val;
        }
    }
    return Coupling(std::move(tables));
  };

  // Honest baseline from the prescribed first marginal.
  Mat honest(J, K, 0.0);
  for (std::size_t x : act)
    for (std::size_t k1 = 0; k1 < K; ++k1) honest(x, k1) = px[x] * y_channel(x, k1);

  TdGameCertificate cert;
  cert.baseline = q_td.value(honest);
  cert.value = -kInf;

  TdSearchOptions inner_opts = opts;
  inner_opts.starts = std::max(4, opts.starts / 4);

  auto consider = [&](const std::vector<Vec>& parts) {
    Coupling cand = coupling_from(parts);
    TdCertificate inner = is_maximal_td(cand, px, q_td, inner_opts);
    if (inner.adversary_value > cert.value) {
      cert.value = inner.adversary_value;
      cert.witness = cand;
      cert.member_certified = inner.member_certified ||
                              (q_td.convex_in_channel && std::isfinite(inner.duality_gap) &&
                               inner.duality_gap <= inner_opts.fw_gap * 16);
    }
  };

  // Systematic vertex products (bounded), then seeded random blends.
  std::vector<std::size_t> idx(act.size(), 0);
  std::size_t visited = 0;
  for (;;) {
    std::vector<Vec> parts(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) parts[i] = vertex_sets[i][idx[i]];
    consider(parts);
    if (++visited >= kComboCap) break;
    std::size_t i = 0;
    while (i < act.size() && ++idx[i] == vertex_sets[i].size()) idx[i++] = 0;
    if (i == act.size()) break;
  }
  CounterRng rng(opts.seed, 0xb1, 2);
  for (int s = 0; s < opts.starts; ++s) {
    std::vector<Vec> parts(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) {
      Vec blend(K * K, 0.0);
      double total = 0.0;
      Vec w(vertex_sets[i].size());
      for (double& wv : w) {
        wv = rng.next_double();
        total += wv;
      }
      for (std::size_t vi = 0; vi < vertex_sets[i].size(); ++vi)
        for (std::size_t e = 0; e < K * K; ++e)
          blend[e] += (w[vi] / total) * vertex_sets[i][vi][e];
      parts[i] = blend;
    }
    consider(parts);
  }

  cert.slack = cert.value - cert.baseline;
  cert.verdict = classify(cert.slack, opts.tol);
  cert.non_member_certified = false;
  if (cert.verdict == Verdict::non_member)
    cert.notes = "non-membership is search-based: no witness coupling found";
  return cert;
}

}  // namespace mmlab
