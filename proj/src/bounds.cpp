#include "mmlab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "mmlab/parallel.hpp"
#include "mmlab/rng.hpp"
#include "simplex.hpp"

namespace mmlab {

namespace {

// Working state: per input a KxK table whose row sums equal the channel row,
// i.e. a coupling kept in raw form while the optimizer moves it around.
using Tables = std::vector<Mat>;

Tables diagonal_tables(const Channel& w) {
  std::size_t j = w.input_size(), k = w.output_size();
  Tables t(j, Mat(k, k, 0.0));
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1) t[x](k1, k1) = w(x, k1);
  return t;
}

double mi_of(const Distribution& px, const Tables& t) {
  std::size_t j = t.size(), k = t.empty() ? 0 : t[0].rows();
  Mat vh(j, k, 0.0);
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k2 = 0; k2 < k; ++k2) vh(x, k2) = t[x].col_sum(k2);
  Vec ph(k, 0.0);
  for (std::size_t x = 0; x < j; ++x)
    if (px[x] > 0.0)
      for (std::size_t k2 = 0; k2 < k; ++k2) ph[k2] += px[x] * vh(x, k2);
  double mi = 0.0;
  for (std::size_t x = 0; x < j; ++x) {
    if (px[x] == 0.0) continue;
    for (std::size_t k2 = 0; k2 < k; ++k2)
      if (vh(x, k2) > 0.0) mi += px[x] * vh(x, k2) * std::log2(vh(x, k2) / ph[k2]);
  }
  return mi < 0.0 ? 0.0 : mi;
}

void project_tables(Tables& t, const Channel& w) {
  std::size_t k = w.output_size();
  Vec row(k);
  for (std::size_t x = 0; x < t.size(); ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1) {
      for (std::size_t k2 = 0; k2 < k; ++k2) row[k2] = t[x](k1, k2);
      project_scaled_simplex(row, w(x, k1));
      for (std::size_t k2 = 0; k2 < k; ++k2) t[x](k1, k2) = row[k2];
    }
}

Coupling to_coupling(const Tables& t) {
  std::vector<Mat> tabs = t;
  for (Mat& m : tabs) {
    for (double& e : m.data())
      if (e < 0.0) e = 0.0;
  }
  return Coupling(std::move(tabs));
}

Tables blend(const Tables& a, const Tables& b, double s) {
  Tables out = a;
  for (std::size_t x = 0; x < a.size(); ++x)
    for (std::size_t i = 0; i < out[x].data().size(); ++i)
      out[x].data()[i] = (1.0 - s) * a[x].data()[i] + s * b[x].data()[i];
  return out;
}

struct Candidate {
  double mi = kInf;
  Tables t;
  MaximalityCertificate cert;
  bool ok = false;
};

// Certify a point; on failure walk toward the diagonal (slack exactly zero
// there) keeping the certified end of the bracket.
Candidate certify_or_repair(Tables t, const Tables& diag, const Distribution& px,
                            const Metric& q, double tol) {
  Candidate cand;
  MaximalityCertificate cert = adversary_value(to_coupling(t), px, q, tol);
  if (cert.slack < -tol) {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 30; ++it) {
      double mid = 0.5 * (lo + hi);
      Tables tm = blend(t, diag, mid);
      if (adversary_value(to_coupling(tm), px, q, tol).slack >= -0.5 * tol)
        hi = mid;
      else
        lo = mid;
    }
    t = blend(t, diag, hi);
    cert = adversary_value(to_coupling(t), px, q, tol);
    if (cert.slack < -tol) {
      t = diag;
      cert = adversary_value(to_coupling(t), px, q, tol);
    }
  }
  cand.mi = mi_of(px, t);
  cand.t = std::move(t);
  cand.cert = std::move(cert);
  cand.ok = cand.cert.slack >= -tol;
  return cand;
}

// d MI / d t_x(k1, k2) = px(x) log2(vhat(x, k2) / phat(k2)), floored so empty
// columns stay attractive but finite.
void add_mi_gradient(const Distribution& px, const Tables& t, std::vector<Mat>& g) {
  std::size_t j = t.size(), k = t.empty() ? 0 : t[0].rows();
  constexpr double kFloor = 1e-18;
  Mat vh(j, k, 0.0);
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k2 = 0; k2 < k; ++k2) vh(x, k2) = t[x].col_sum(k2);
  Vec ph(k, 0.0);
  for (std::size_t x = 0; x < j; ++x)
    if (px[x] > 0.0)
      for (std::size_t k2 = 0; k2 < k; ++k2) ph[k2] += px[x] * vh(x, k2);
  for (std::size_t x = 0; x < j; ++x) {
    if (px[x] == 0.0) continue;
    for (std::size_t k2 = 0; k2 < k; ++k2) {
      double d = px[x] * std::log2(std::max(vh(x, k2), kFloor) / std::max(ph[k2], kFloor));
      for (std::size_t k1 = 0; k1 < k; ++k1) g[x](k1, k2) += d;
    }
  }
}

Tables random_start(const Channel& w, std::uint64_t seed, int index) {
  std::size_t j = w.input_size(), k = w.output_size();
  CounterRng rng(seed, 0xb0, static_cast<std::uint64_t>(index));
  Tables t(j, Mat(k, k, 0.0));
  int flavor = index % 3;
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1) {
      double mass = w(x, k1);
      if (flavor == 1) {
        // Deterministic output map: mass concentrated on one column.
        std::size_t pick = static_cast<std::size_t>(rng.next_double() * k) % k;
        t[x](k1, pick) = mass;
        continue;
      }
      Vec row(k);
      double sum = 0.0;
      for (double& e : row) {
        double u = rng.next_double();
        e = u * u;
        sum += e;
      }
      for (std::size_t k2 = 0; k2 < k; ++k2) t[x](k1, k2) = mass * row[k2] / sum;
      if (flavor == 2) t[x](k1, k1) = 0.5 * t[x](k1, k1) + 0.5 * mass;
    }
  if (t.size() > 0) project_tables(t, w);
  return t;
}

}  // namespace

InnerResult inner_min_mi(const Distribution& px, const Channel& w, const Metric& q,
                         const InnerOptions& opts) {
  if (w.input_size() != px.size() || q.input_size() != px.size() ||
      q.output_size() != w.output_size())
    throw std::invalid_argument("inner_min_mi: dimension mismatch");
  if (opts.starts < 1 || opts.iterations < 1)
    throw std::invalid_argument("inner_min_mi: starts and iterations must be positive");

  std::size_t j = px.size(), k = w.output_size();
  Tables diag = diagonal_tables(w);
  Candidate best = certify_or_repair(diag, diag, px, q, opts.tol);

  for (int start = 0; start < opts.starts; ++start) {
    Tables t = start == 0 ? diag : random_start(w, opts.seed, start);

    // Exact-penalty stages: F = MI + rho * max(0, -slack), rho escalating
    // until the membership residual is resolved.
    double rho = 1.0;
    for (int stage = 0; stage < 8; ++stage) {
      Tables best_t = t;
      double best_f = kInf;
      int since_improve = 0;
      for (int it = 0; it < opts.iterations; ++it) {
        AdversaryEnvelope env = adversary_envelope(to_coupling(t), px, q, opts.tol);
        double pen = std::max(0.0, -env.certificate.slack);
        double f = mi_of(px, t) + rho * pen;
        if (f < best_f - 1e-12) {
          best_f = f;
          best_t = t;
          since_improve = 0;
        } else if (++since_improve >= 20) {
          break;
        }

        std::vector<Mat> g(j, Mat(k, k, 0.0));
        add_mi_gradient(px, t, g);
        if (pen > 0.0) {
          // d pen = d baseline - d adversary.
          for (std::size_t x = 0; x < j; ++x) {
            if (px[x] == 0.0) continue;
            for (std::size_t k1 = 0; k1 < k; ++k1)
              for (std::size_t k2 = 0; k2 < k; ++k2)
                g[x](k1, k2) += rho * (px[x] * q(x, k1) - env.d_adversary[x](k1, k2));
          }
        }
        double gmax = 0.0;
        for (const Mat& m : g)
          for (double e : m.data()) gmax = std::max(gmax, std::abs(e));
        double eta = 0.3 / (std::sqrt(1.0 + it) * std::max(1.0, gmax));
        for (std::size_t x = 0; x < j; ++x)
          for (std::size_t i = 0; i < t[x].data().size(); ++i)
            t[x].data()[i] -= eta * g[x].data()[i];
        project_tables(t, w);
      }
      t = best_t;
      double residual =
          std::max(0.0, -adversary_value(to_coupling(t), px, q, opts.tol).slack);
      if (residual < 1e-8) break;
      rho *= 10.0;
    }

    Candidate cand = certify_or_repair(t, diag, px, q, opts.tol);
    if (cand.ok && cand.mi < best.mi) best = cand;
  }

  InnerResult res;
  res.value_bits = best.mi;
  res.witness = to_coupling(best.t);
  res.certificate = best.cert;
  res.certified = best.ok;
  return res;
}

namespace {

constexpr double kUniversalTol = 1e-6;  // membership slack threshold for grid certification

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

bool lex_less(const Distribution& a, const Distribution& b) {
  return std::lexicographical_compare(a.probs().begin(), a.probs().end(),
                                      b.probs().begin(), b.probs().end());
}

}  // namespace

BoundReport corollary1_bound(const Coupling& c, const Channel& w, const Metric& q,
                             double grid_step, double tol_marginal) {
  if (c.input_size() != w.input_size() || c.output_size() != w.output_size() ||
      q.input_size() != w.input_size() || q.output_size() != w.output_size())
    throw std::invalid_argument("corollary1_bound: dimension mismatch");
  if (!(tol_marginal >= 0.0))
    throw std::invalid_argument("corollary1_bound: tol_marginal must be nonnegative");

  Channel my = marginal_y(c);
  double dev = 0.0;
  for (std::size_t x = 0; x < w.input_size(); ++x)
    for (std::size_t k1 = 0; k1 < w.output_size(); ++k1)
      dev = std::max(dev, std::abs(my(x, k1) - w(x, k1)));
  if (dev > tol_marginal)
    throw std::invalid_argument("corollary1_bound: coupling Y-marginal deviates from the channel by " +
                                format_double(dev) + ", beyond tol_marginal " +
                                format_double(tol_marginal));

  UniversalMaximality uni = is_maximal_universal(c, q, grid_step, kUniversalTol);
  CapacityResult cap = blahut_arimoto_capacity(marginal_yhat(c));

  BoundReport r;
  r.value_bits = cap.bits;
  r.mode = BoundMode::corollary1;
  r.certified = uni.all_member;
  r.witness = c;
  r.witness_px = cap.input;
  r.min_slack = uni.min_slack;
  r.worst_px = uni.worst_px;
  r.marginal_deviation = dev;
  if (!uni.all_member)
    r.caveat = "membership failed on the input grid (min slack " +
               format_double(uni.min_slack) + "); the value is not a certified bound";
  if (dev > 1e-12) {
    if (!r.caveat.empty()) r.caveat += "; ";
    r.caveat += "coupling Y-marginal deviates from the channel by " + format_double(dev);
  }
  return r;
}

namespace {

// Shared outer-grid merge: maximum by value, lexicographically smallest px on
// near-ties, so reports are reproducible across thread schedules.
std::size_t merge_argmax(const std::vector<Distribution>& grid, const Vec& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (values[i] > values[best] + 1e-12 ||
        (std::abs(values[i] - values[best]) <= 1e-12 && lex_less(grid[i], grid[best])))
      best = i;
  }
  return best;
}

}  // namespace

BoundReport full_bound(const Channel& w, const Metric& q, double px_grid_step,
                       const InnerOptions& opts) {
  if (q.input_size() != w.input_size() || q.output_size() != w.output_size())
    throw std::invalid_argument("full_bound: dimension mismatch");
  std::vector<Distribution> grid = simplex_grid(w.input_size(), px_grid_step);
  std::vector<InnerResult> inner(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    InnerOptions o = opts;
    o.seed = opts.seed + 0x9e3779b97f4a7c15ULL * (i + 1);
    inner[i] = inner_min_mi(grid[i], w, q, o);
  });

  Vec values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = inner[i].value_bits;
  std::size_t best = merge_argmax(grid, values);

  BoundReport r;
  r.value_bits = values[best];
  r.mode = BoundMode::full_grid;
  r.certified = false;
  r.witness = inner[best].witness;
  r.witness_px = grid[best];
  r.min_slack = inner[best].certificate.slack;
  r.grid_px = std::move(grid);
  r.grid_values.assign(values.begin(), values.end());
  r.caveat = "outer maximization restricted to a step-" + format_double(px_grid_step) +
             " input grid; each value is certified at its own input, the merged "
             "number is an estimate";
  return r;
}

namespace {

// Conditional gradient state for the support-constrained convex program.
// Polytope vertices are per-(input, y) choices of a single allowed yhat
// column, so atoms have exact integer identity.
struct PriorProgram {
  const Channel* w;
  std::vector<std::vector<std::vector<std::size_t>>> allowed;  // [x][k1] -> columns
  std::size_t j, k;

  Tables atom_tables(const std::vector<std::uint8_t>& choice) const {
    Tables t(j, Mat(k, k, 0.0));
    for (std::size_t x = 0; x < j; ++x)
      for (std::size_t k1 = 0; k1 < k; ++k1)
        t[x](k1, choice[x * k + k1]) = (*w)(x, k1);
    return t;
  }
};

struct PriorPointResult {
  double value = kInf;
  Tables t;
  double gap = kInf;
  bool feasible = false;
};

PriorPointResult prior_point(const PriorProgram& prog, const Distribution& px) {
  PriorPointResult res;
  std::size_t j = prog.j, k = prog.k;
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1)
      if ((*prog.w)(x, k1) > 0.0 && prog.allowed[x][k1].empty()) return res;
  res.feasible = true;

  // Diagonal start: the matched column is always allowed.
  std::vector<std::uint8_t> start(j * k);
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1) start[x * k + k1] = static_cast<std::uint8_t>(k1);
  std::map<std::vector<std::uint8_t>, double> weight;
  weight[start] = 1.0;
  Tables t = prog.atom_tables(start);

  auto line_min = [&](const Tables& dir, double cap) {
    double lo = 0.0, hi = cap;
    for (int it = 0; it < 60; ++it) {
      double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      Tables a = t, b = t;
      for (std::size_t x = 0; x < j; ++x)
        for (std::size_t i = 0; i < a[x].data().size(); ++i) {
          a[x].data()[i] += m1 * dir[x].data()[i];
          b[x].data()[i] += m2 * dir[x].data()[i];
        }
      if (mi_of(px, a) <= mi_of(px, b))
        hi = m2;
      else
        lo = m1;
    }
    return 0.5 * (lo + hi);
  };

  double gap = kInf;
  const int kMaxIters = 20000;
  for (int it = 0; it < kMaxIters; ++it) {
    std::vector<Mat> g(j, Mat(k, k, 0.0));
    add_mi_gradient(px, t, g);

    // Towards-vertex: per row the allowed column of least gradient.
    std::vector<std::uint8_t> to(j * k, 0);
    for (std::size_t x = 0; x < j; ++x)
      for (std::size_t k1 = 0; k1 < k; ++k1) {
        const auto& cols = prog.allowed[x][k1];
        std::size_t pick = cols.empty() ? k1 : cols[0];
        for (std::size_t c : cols)
          if (g[x](k1, c) < g[x](k1, pick)) pick = c;
        to[x * k + k1] = static_cast<std::uint8_t>(pick);
      }
    // Away-vertex: the carried atom of greatest gradient inner product.
    auto atom_score = [&](const std::vector<std::uint8_t>& choice) {
      double s = 0.0;
      for (std::size_t x = 0; x < j; ++x)
        for (std::size_t k1 = 0; k1 < k; ++k1)
          s += (*prog.w)(x, k1) * g[x](k1, choice[x * k + k1]);
      return s;
    };
    auto away = weight.begin();
    double away_s = -kInf;
    for (auto itw = weight.begin(); itw != weight.end(); ++itw) {
      double s = atom_score(itw->first);
      if (s > away_s) {
        away_s = s;
        away = itw;
      }
    }

    gap = 0.0;
    for (std::size_t x = 0; x < j; ++x)
      for (std::size_t k1 = 0; k1 < k; ++k1)
        for (std::size_t k2 = 0; k2 < k; ++k2) gap += g[x](k1, k2) * t[x](k1, k2);
    gap -= atom_score(to);
    if (gap <= 1e-6) break;

    // Pairwise step: shift weight from the away atom onto the target atom.
    Tables s_t = prog.atom_tables(to);
    Tables a_t = prog.atom_tables(away->first);
    Tables dir(j, Mat(k, k, 0.0));
    for (std::size_t x = 0; x < j; ++x)
      for (std::size_t i = 0; i < dir[x].data().size(); ++i)
        dir[x].data()[i] = s_t[x].data()[i] - a_t[x].data()[i];
    double cap = away->second;
    double theta = line_min(dir, cap);
    if (theta <= 0.0) break;
    for (std::size_t x = 0; x < j; ++x)
      for (std::size_t i = 0; i < t[x].data().size(); ++i)
        t[x].data()[i] += theta * dir[x].data()[i];
    weight[to] += theta;
    away->second -= theta;
    if (away->second <= 1e-15) weight.erase(away);

    // Periodically rebuild the iterate from its atoms to cancel drift.
    if ((it + 1) % 512 == 0) {
      Tables fresh(j, Mat(k, k, 0.0));
      for (const auto& [choice, wgt] : weight) {
        Tables at = prog.atom_tables(choice);
        for (std::size_t x = 0; x < j; ++x)
          for (std::size_t i = 0; i < fresh[x].data().size(); ++i)
            fresh[x].data()[i] += wgt * at[x].data()[i];
      }
      t = std::move(fresh);
    }
  }

  res.value = mi_of(px, t);
  res.t = std::move(t);
  res.gap = gap;
  return res;
}

}  // namespace

BoundReport prior_bound(const Channel& w, const Metric& q, double px_grid_step) {
  if (q.input_size() != w.input_size() || q.output_size() != w.output_size())
    throw std::invalid_argument("prior_bound: dimension mismatch");
  std::size_t j = w.input_size(), k = w.output_size();

  SqTable sq = sq_table(q);
  PriorProgram prog;
  prog.w = &w;
  prog.j = j;
  prog.k = k;
  prog.allowed.assign(j, std::vector<std::vector<std::size_t>>(k));
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1)
      for (std::size_t k2 = 0; k2 < k; ++k2)
        if (sq.allows(x, k1, k2)) prog.allowed[x][k1].push_back(k2);

  std::vector<Distribution> grid = simplex_grid(j, px_grid_step);
  std::vector<PriorPointResult> pts(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) { pts[i] = prior_point(prog, grid[i]); });

  Vec values(grid.size());
  bool any_infeasible = false;
  double worst_gap = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    values[i] = pts[i].feasible ? pts[i].value : kInf;
    if (!pts[i].feasible)
      any_infeasible = true;
    else
      worst_gap = std::max(worst_gap, pts[i].gap);
  }
  std::size_t best = merge_argmax(grid, values);

  BoundReport r;
  r.value_bits = values[best];
  r.mode = BoundMode::prior;
  r.certified = false;
  if (pts[best].feasible) {
    r.witness = to_coupling(pts[best].t);
    r.witness_px = grid[best];
    r.min_slack = adversary_value(r.witness, grid[best], q).slack;
  }
  r.grid_px = std::move(grid);
  r.grid_values.assign(values.begin(), values.end());
  r.caveat = "outer maximization restricted to a step-" + format_double(px_grid_step) +
             " input grid; per-point convex programs solved to duality gap " +
             format_double(worst_gap);
  if (any_infeasible) r.caveat += "; some grid points had infeasible support sets (+inf)";
  return r;
}

}  // namespace mmlab
