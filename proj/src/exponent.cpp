#include "mmlab/exponent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "mmlab/bounds.hpp"
#include "mmlab/parallel.hpp"
#include "mmlab/rng.hpp"
#include "mmlab/types_lab.hpp"
#include "simplex.hpp"

namespace mmlab {

namespace {

// Working state: per input a KxK joint table over both decoder views, a full
// probability table (total mass one).  Rows whose channel probability is zero
// are frozen at zero so the divergence stays finite.
using Tables = std::vector<Mat>;
using FrozenRows = std::vector<std::vector<char>>;  // [x][k1]: w(x, k1) == 0

Tables diagonal_tables(const Channel& w) {
  std::size_t j = w.input_size(), k = w.output_size();
  Tables t(j, Mat(k, k, 0.0));
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1) t[x](k1, k1) = w(x, k1);
  return t;
}

Tables coupling_tables(const Coupling& c) {
  Tables t;
  t.reserve(c.input_size());
  for (std::size_t x = 0; x < c.input_size(); ++x) t.push_back(c.table(x));
  return t;
}

FrozenRows frozen_rows(const Channel& w) {
  FrozenRows f(w.input_size(), std::vector<char>(w.output_size(), 0));
  for (std::size_t x = 0; x < w.input_size(); ++x)
    for (std::size_t k1 = 0; k1 < w.output_size(); ++k1)
      if (!(w(x, k1) > 0.0)) f[x][k1] = 1;
  return f;
}

void project_masked(Tables& t, const FrozenRows& frozen) {
  std::size_t k = t.empty() ? 0 : t[0].rows();
  for (std::size_t x = 0; x < t.size(); ++x) {
    Vec v;
    v.reserve(k * k);
    for (std::size_t k1 = 0; k1 < k; ++k1)
      for (std::size_t k2 = 0; k2 < k; ++k2)
        if (!frozen[x][k1]) v.push_back(t[x](k1, k2));
    project_scaled_simplex(v, 1.0);
    std::size_t at = 0;
    for (std::size_t k1 = 0; k1 < k; ++k1)
      for (std::size_t k2 = 0; k2 < k; ++k2)
        t[x](k1, k2) = frozen[x][k1] ? 0.0 : v[at++];
  }
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

double div_of(const Distribution& px, const Tables& t, const Channel& w) {
  double acc = 0.0;
  for (std::size_t x = 0; x < t.size(); ++x) {
    if (px[x] == 0.0) continue;
    for (std::size_t k1 = 0; k1 < w.output_size(); ++k1) {
      double vp = t[x].row_sum(k1);
      if (!(vp > 0.0)) continue;
      if (!(w(x, k1) > 0.0)) return kInf;
      acc += px[x] * vp * std::log2(vp / w(x, k1));
    }
  }
  return acc;
}

// d D / d t_x(k1, k2) = px(x) (log2(vp(x, k1) / w(x, k1)) + 1/ln 2); the
// constant is shared by every cell of an input, so the simplex projection
// cancels it, but it keeps raw gradients honest.
void add_div_gradient(const Distribution& px, const Tables& t, const Channel& w,
                      const FrozenRows& frozen, std::vector<Mat>& g) {
  constexpr double kFloor = 1e-18;
  constexpr double kInvLn2 = 1.4426950408889634;
  std::size_t k = w.output_size();
  for (std::size_t x = 0; x < t.size(); ++x) {
    if (px[x] == 0.0) continue;
    for (std::size_t k1 = 0; k1 < k; ++k1) {
      if (frozen[x][k1]) continue;
      double vp = std::max(t[x].row_sum(k1), kFloor);
      double d = px[x] * (std::log2(vp / w(x, k1)) + kInvLn2);
      for (std::size_t k2 = 0; k2 < k; ++k2) g[x](k1, k2) += d;
    }
  }
}

void add_mi_gradient(const Distribution& px, const Tables& t, double scale,
                     std::vector<Mat>& g) {
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
      double d = scale * px[x] *
                 std::log2(std::max(vh(x, k2), kFloor) / std::max(ph[k2], kFloor));
      for (std::size_t k1 = 0; k1 < k; ++k1) g[x](k1, k2) += d;
    }
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

// Diagonal coupling built on one output law shared by every input: membership
// slack is exactly zero (the marginal constraint pins any adversary to the
// honest value) and it carries no information, so it is feasible at every
// rate.  The law is the normalized geometric mean of the channel rows, the
// closed-form minimizer of the common divergence; it exists only when the
// positive-mass inputs share part of their output support.
std::optional<Tables> zero_info_anchor(const Distribution& px, const Channel& w) {
  std::size_t j = w.input_size(), k = w.output_size();
  Vec logm(k, 0.0);
  std::vector<char> in_common(k, 1);
  bool any = false;
  for (std::size_t x = 0; x < j; ++x) {
    if (px[x] == 0.0) continue;
    any = true;
    for (std::size_t k1 = 0; k1 < k; ++k1) {
      if (w(x, k1) > 0.0)
        logm[k1] += px[x] * std::log(w(x, k1));
      else
        in_common[k1] = 0;
    }
  }
  if (!any) return std::nullopt;
  double z = 0.0;
  Vec m(k, 0.0);
  for (std::size_t k1 = 0; k1 < k; ++k1)
    if (in_common[k1]) z += (m[k1] = std::exp(logm[k1]));
  if (!(z > 0.0)) return std::nullopt;
  Tables t(j, Mat(k, k, 0.0));
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1)
      t[x](k1, k1) = px[x] > 0.0 ? m[k1] / z : w(x, k1);
  return t;
}

Tables random_full_start(const Channel& w, const FrozenRows& frozen,
                         std::uint64_t seed, int index) {
  std::size_t j = w.input_size(), k = w.output_size();
  CounterRng rng(seed, 0xe1, static_cast<std::uint64_t>(index));
  Tables t(j, Mat(k, k, 0.0));
  int flavor = index % 6;
  Vec shared_v;
  if (flavor >= 3) {
    // Product starts with one shared column law: information cost is zero, so
    // the search begins at the rate-feasible corner and climbs into membership.
    shared_v.assign(k, 0.0);
    double sum = 0.0;
    for (double& v : shared_v) {
      double u = rng.next_double();
      sum += (v = u * u + 1e-12);
    }
    for (double& v : shared_v) v /= sum;
  }
  for (std::size_t x = 0; x < j; ++x) {
    if (flavor == 5) {
      // Concentrated corners: some inputs collapse to one cell, the rest stay
      // dense.  Sparse supports open basins the dense flavors never visit.
      if (rng.next_double() < 0.5) {
        std::vector<std::size_t> rows;
        for (std::size_t k1 = 0; k1 < k; ++k1)
          if (!frozen[x][k1]) rows.push_back(k1);
        if (!rows.empty()) {
          std::size_t k1 = rows[static_cast<std::size_t>(rng.next_double() *
                                                         static_cast<double>(rows.size())) %
                               rows.size()];
          std::size_t k2 = static_cast<std::size_t>(rng.next_double() *
                                                    static_cast<double>(k)) %
                           k;
          t[x](k1, k2) = 1.0;
          continue;
        }
      }
      double sum = 0.0;
      for (std::size_t k1 = 0; k1 < k; ++k1)
        for (std::size_t k2 = 0; k2 < k; ++k2) {
          double u = rng.next_double();
          if (!frozen[x][k1]) sum += (t[x](k1, k2) = u * u + 1e-12);
        }
      for (std::size_t k1 = 0; k1 < k; ++k1)
        for (std::size_t k2 = 0; k2 < k; ++k2) t[x](k1, k2) /= sum;
      continue;
    }
    if (flavor >= 3) {
      Vec u(k, 0.0);
      if (flavor == 3) {
        for (std::size_t k1 = 0; k1 < k; ++k1) u[k1] = w(x, k1);
      } else {
        double sum = 0.0;
        for (std::size_t k1 = 0; k1 < k; ++k1) {
          double r = rng.next_double();
          if (!frozen[x][k1]) sum += (u[k1] = r * r + 1e-12);
        }
        for (double& v : u) v /= sum;
      }
      for (std::size_t k1 = 0; k1 < k; ++k1)
        for (std::size_t k2 = 0; k2 < k; ++k2) t[x](k1, k2) = u[k1] * shared_v[k2];
      continue;
    }
    if (flavor == 1) {
      // Diagonal of a random law on the row support.
      double sum = 0.0;
      Vec m(k, 0.0);
      for (std::size_t k1 = 0; k1 < k; ++k1) {
        double u = rng.next_double();
        if (!frozen[x][k1]) sum += (m[k1] = u * u + 1e-12);
      }
      for (std::size_t k1 = 0; k1 < k; ++k1) t[x](k1, k1) = m[k1] / sum;
      continue;
    }
    double sum = 0.0;
    for (std::size_t k1 = 0; k1 < k; ++k1)
      for (std::size_t k2 = 0; k2 < k; ++k2) {
        double u = rng.next_double();
        if (!frozen[x][k1]) sum += (t[x](k1, k2) = u * u + 1e-12);
      }
    for (std::size_t k1 = 0; k1 < k; ++k1)
      for (std::size_t k2 = 0; k2 < k; ++k2) t[x](k1, k2) /= sum;
    if (flavor == 2) {
      // Pull half the mass onto the in-row diagonal.
      for (std::size_t k1 = 0; k1 < k; ++k1) {
        double row = t[x].row_sum(k1);
        for (std::size_t k2 = 0; k2 < k; ++k2)
          t[x](k1, k2) = 0.5 * t[x](k1, k2) + (k1 == k2 ? 0.5 * row : 0.0);
      }
    }
  }
  project_masked(t, frozen);
  return t;
}

// Couplings whose columns each live on one shared row of the first view leave
// the impostor game no freedom: the marginal constraints pin every
// reassignment back to the honest joint, so such tables are members for any
// metric.  For a fixed row map both the divergence and the information cap
// are convex in the per-input column laws, so each restriction is a convex
// program; solve them all and return the best rate-feasible tables.
std::optional<Tables> deterministic_family_best(const Distribution& px,
                                                const Channel& w, double rate,
                                                const FrozenRows& frozen) {
  std::size_t j = px.size(), k = w.output_size();
  double count = std::pow(static_cast<double>(k), static_cast<double>(k));
  if (count > 1296.0) return std::nullopt;
  std::size_t nmaps = static_cast<std::size_t>(std::llround(count));

  auto project_row = [&](Vec& v, const std::vector<char>& mask) {
    Vec free;
    free.reserve(k);
    for (std::size_t k2 = 0; k2 < k; ++k2)
      if (!mask[k2]) free.push_back(v[k2]);
    project_scaled_simplex(free, 1.0);
    std::size_t i = 0;
    for (std::size_t k2 = 0; k2 < k; ++k2) v[k2] = mask[k2] ? 0.0 : free[i++];
  };

  double best_d = kInf;
  Tables best;
  std::vector<std::size_t> f(k, 0);
  for (std::size_t code = 0; code < nmaps; ++code) {
    {
      std::size_t c = code;
      for (std::size_t k2 = 0; k2 < k; ++k2) {
        f[k2] = c % k;
        c /= k;
      }
    }
    // Column k2 may carry mass for input x only when w(x, f(k2)) > 0.
    std::vector<std::vector<char>> mask(j, std::vector<char>(k, 0));
    std::vector<char> common(k, 1);
    bool usable = true;
    for (std::size_t x = 0; x < j && usable; ++x) {
      bool any = false;
      for (std::size_t k2 = 0; k2 < k; ++k2) {
        mask[x][k2] = frozen[x][f[k2]];
        if (!mask[x][k2])
          any = true;
        else if (px[x] > 0.0)
          common[k2] = 0;
      }
      if (px[x] > 0.0 && !any) usable = false;
    }
    if (!usable) continue;

    auto div_v = [&](const std::vector<Vec>& vv) {
      double s = 0.0;
      for (std::size_t x = 0; x < j; ++x) {
        if (px[x] == 0.0) continue;
        Vec u(k, 0.0);
        for (std::size_t k2 = 0; k2 < k; ++k2) u[f[k2]] += vv[x][k2];
        for (std::size_t k1 = 0; k1 < k; ++k1) {
          if (u[k1] <= 0.0) continue;
          if (w(x, k1) <= 0.0) return kInf;
          s += px[x] * u[k1] * std::log2(u[k1] / w(x, k1));
        }
      }
      return s;
    };
    auto mi_v = [&](const std::vector<Vec>& vv) {
      Vec ph(k, 0.0);
      for (std::size_t x = 0; x < j; ++x)
        if (px[x] > 0.0)
          for (std::size_t k2 = 0; k2 < k; ++k2) ph[k2] += px[x] * vv[x][k2];
      double s = 0.0;
      for (std::size_t x = 0; x < j; ++x) {
        if (px[x] == 0.0) continue;
        for (std::size_t k2 = 0; k2 < k; ++k2)
          if (vv[x][k2] > 0.0 && ph[k2] > 0.0)
            s += px[x] * vv[x][k2] * std::log2(vv[x][k2] / ph[k2]);
      }
      return std::max(0.0, s);
    };

    // Interior start: one shared column law when the maps allow it (zero
    // information), otherwise per-input uniform over the open columns.
    bool have_common = false;
    Vec va(k, 0.0);
    {
      double tot = 0.0;
      for (std::size_t k2 = 0; k2 < k; ++k2)
        if (common[k2]) tot += (va[k2] = 1.0);
      if (tot > 0.0) {
        for (double& e : va) e /= tot;
        have_common = true;
      }
    }
    std::vector<Vec> vv(j, Vec(k, 0.0));
    std::vector<Vec> va_all(j, Vec(k, 0.0));
    for (std::size_t x = 0; x < j; ++x) {
      double tot = 0.0;
      for (std::size_t k2 = 0; k2 < k; ++k2)
        if (!mask[x][k2]) tot += (vv[x][k2] = 1.0);
      if (tot > 0.0)
        for (double& e : vv[x]) e /= tot;
      else  // inactive input with every column masked: any valid law will do
        for (double& e : vv[x]) e = 1.0 / static_cast<double>(k);
      va_all[x] = have_common && px[x] > 0.0 ? va : vv[x];
    }
    if (have_common) vv = va_all;

    auto grad_step = [&](std::vector<Vec>& cur, bool with_mi, double rho, int it) {
      Vec ph(k, 0.0);
      for (std::size_t x = 0; x < j; ++x)
        if (px[x] > 0.0)
          for (std::size_t k2 = 0; k2 < k; ++k2) ph[k2] += px[x] * cur[x][k2];
      std::vector<Vec> g(j, Vec(k, 0.0));
      double gmax = 0.0;
      for (std::size_t x = 0; x < j; ++x) {
        if (px[x] == 0.0) continue;
        Vec u(k, 0.0);
        for (std::size_t k2 = 0; k2 < k; ++k2) u[f[k2]] += cur[x][k2];
        for (std::size_t k2 = 0; k2 < k; ++k2) {
          if (mask[x][k2]) continue;
          double uu = std::max(u[f[k2]], 1e-18);
          double e = px[x] * (std::log2(uu / w(x, f[k2])) + 1.0 / std::log(2.0));
          if (with_mi)
            e += rho * px[x] *
                 std::log2(std::max(cur[x][k2], 1e-18) / std::max(ph[k2], 1e-18));
          g[x][k2] = e;
          gmax = std::max(gmax, std::abs(e));
        }
      }
      double eta = 0.25 / (std::sqrt(1.0 + it) * std::max(1.0, gmax));
      for (std::size_t x = 0; x < j; ++x) {
        if (px[x] == 0.0) continue;  // initialized row is already a valid law
        for (std::size_t k2 = 0; k2 < k; ++k2) cur[x][k2] -= eta * g[x][k2];
        project_row(cur[x], mask[x]);
      }
    };

    double rho = 4.0;
    for (int stage = 0; stage < 6; ++stage) {
      for (int it = 0; it < 120; ++it)
        grad_step(vv, mi_v(vv) > rate, rho, it);
      if (mi_v(vv) <= rate + 1e-10) break;
      rho *= 8.0;
    }
    auto blend_v = [&](const std::vector<Vec>& a, const std::vector<Vec>& b,
                       double s) {
      std::vector<Vec> r(j, Vec(k, 0.0));
      for (std::size_t x = 0; x < j; ++x)
        for (std::size_t k2 = 0; k2 < k; ++k2)
          r[x][k2] = (1.0 - s) * a[x][k2] + s * b[x][k2];
      return r;
    };
    if (mi_v(vv) > rate && have_common) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 40; ++it) {
        double mid = 0.5 * (lo + hi);
        (mi_v(blend_v(vv, va_all, mid)) <= rate ? hi : lo) = mid;
      }
      vv = blend_v(vv, va_all, hi);
    }
    if (mi_v(vv) > rate + 1e-9) continue;

    // Monotone descent on the divergence inside the rate region.
    double cur_d = div_v(vv);
    for (int it = 0; it < 80 && cur_d < kInf; ++it) {
      std::vector<Vec> cand = vv;
      grad_step(cand, false, 0.0, it);
      if (mi_v(cand) > rate + 1e-9) {
        double lo = 0.0, hi = 1.0;
        for (int b = 0; b < 12; ++b) {
          double mid = 0.5 * (lo + hi);
          (mi_v(blend_v(cand, vv, mid)) <= rate + 1e-9 ? hi : lo) = mid;
        }
        cand = blend_v(cand, vv, hi);
      }
      double d = div_v(cand);
      if (d < cur_d - 1e-14) {
        vv = std::move(cand);
        cur_d = d;
      } else {
        break;
      }
    }
    if (!(cur_d < best_d) || mi_v(vv) > rate + 1e-9) continue;

    Tables t(j, Mat(k, k, 0.0));
    for (std::size_t x = 0; x < j; ++x)
      for (std::size_t k2 = 0; k2 < k; ++k2) t[x](f[k2], k2) = vv[x][k2];
    best_d = cur_d;
    best = std::move(t);
  }
  if (!(best_d < kInf)) return std::nullopt;
  return best;
}

// Projected subgradient with exact penalties on both constraints: membership
// slack and the information cap.  The penalty metric is the per-letter metric
// the adversary envelope differentiates; callers certify separately.
Tables run_pgd(Tables t, const Distribution& px, const Channel& w, const Metric& q_pen,
               double rate, const FrozenRows& frozen, const EspOptions& opts) {
  std::size_t j = px.size(), k = w.output_size();
  double rho = 1.0;
  for (int stage = 0; stage < 8; ++stage) {
    Tables best_t = t;
    double best_f = kInf;
    int since_improve = 0;
    for (int it = 0; it < opts.iterations; ++it) {
      AdversaryEnvelope env = adversary_envelope(to_coupling(t), px, q_pen, opts.tol);
      double pen_m = std::max(0.0, -env.certificate.slack);
      double mi = mi_of(px, t);
      double pen_r = std::max(0.0, mi - rate);
      double f = div_of(px, t, w) + rho * (pen_m + pen_r);
      if (f < best_f - 1e-12) {
        best_f = f;
        best_t = t;
        since_improve = 0;
      } else if (++since_improve >= 20) {
        break;
      }

      std::vector<Mat> g(j, Mat(k, k, 0.0));
      add_div_gradient(px, t, w, frozen, g);
      if (pen_r > 0.0) add_mi_gradient(px, t, rho, g);
      if (pen_m > 0.0) {
        // d pen = d baseline - d adversary.
        for (std::size_t x = 0; x < j; ++x) {
          if (px[x] == 0.0) continue;
          for (std::size_t k1 = 0; k1 < k; ++k1)
            for (std::size_t k2 = 0; k2 < k; ++k2)
              g[x](k1, k2) += rho * (px[x] * q_pen(x, k1) - env.d_adversary[x](k1, k2));
        }
      }
      double gmax = 0.0;
      for (const Mat& m : g)
        for (double e : m.data()) gmax = std::max(gmax, std::abs(e));
      double eta = 0.3 / (std::sqrt(1.0 + it) * std::max(1.0, gmax));
      for (std::size_t x = 0; x < j; ++x)
        for (std::size_t i = 0; i < t[x].data().size(); ++i)
          t[x].data()[i] -= eta * g[x].data()[i];
      project_masked(t, frozen);
    }
    t = best_t;
    double residual =
        std::max(0.0, mi_of(px, t) - rate) +
        std::max(0.0, -adversary_value(to_coupling(t), px, q_pen, opts.tol).slack);
    if (residual < 1e-8) break;
    rho *= 10.0;
  }
  return t;
}

struct EspCand {
  double d = kInf;
  Tables t;
  MaximalityCertificate cert;
  double mi = kInf;
  bool ok = false;
};

EspCand certify(Tables t, const Distribution& px, const Channel& w, const Metric& q,
                double rate, double tol) {
  EspCand c;
  c.cert = adversary_value(to_coupling(t), px, q, tol);
  c.mi = mi_of(px, t);
  c.d = div_of(px, t, w);
  c.t = std::move(t);
  c.ok = c.cert.slack >= -tol && c.mi <= rate + 1e-9 && c.d < kInf;
  return c;
}

// Certify a point; on failure walk toward the zero-information anchor, whose
// end of the bracket is feasible at any rate.
EspCand certify_or_repair(Tables t, const std::optional<Tables>& anchor,
                          const Distribution& px, const Channel& w, const Metric& q,
                          double rate, double tol) {
  EspCand c = certify(std::move(t), px, w, q, rate, tol);
  if (c.ok || !anchor) return c;
  auto feasible = [&](const Tables& tt) {
    if (mi_of(px, tt) > rate) return false;
    if (!(div_of(px, tt, w) < kInf)) return false;
    return adversary_value(to_coupling(tt), px, q, tol).slack >= -0.5 * tol;
  };
  if (!feasible(*anchor)) return c;
  Tables base = std::move(c.t);
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 30; ++it) {
    double mid = 0.5 * (lo + hi);
    (feasible(blend(base, *anchor, mid)) ? hi : lo) = mid;
  }
  EspCand rep = certify(blend(base, *anchor, hi), px, w, q, rate, tol);
  if (rep.ok) return rep;
  return certify(*anchor, px, w, q, rate, tol);
}

// Feasible descent on the divergence alone, starting from a certified point:
// take a gradient step, then pull back toward the certified iterate until the
// certificate passes again.  The divergence is convex in the tables, so any
// accepted blend is a strict improvement and the iterate stays certified
// throughout.
EspCand polish(EspCand best, const Distribution& px, const Channel& w, const Metric& q,
               double rate, const FrozenRows& frozen, double tol, int steps) {
  if (!best.ok) return best;
  std::size_t j = px.size(), k = w.output_size();
  auto feasible = [&](const Tables& tt) {
    if (mi_of(px, tt) > rate + 1e-9) return false;
    if (!(div_of(px, tt, w) < kInf)) return false;
    return adversary_value(to_coupling(tt), px, q, tol).slack >= -tol;
  };
  double scale = 0.25;
  int bad = 0;
  for (int it = 0; it < steps && bad < 4; ++it) {
    std::vector<Mat> g(j, Mat(k, k, 0.0));
    add_div_gradient(px, best.t, w, frozen, g);
    double gmax = 0.0;
    for (const Mat& m : g)
      for (double e : m.data()) gmax = std::max(gmax, std::abs(e));
    Tables cand = best.t;
    double eta = scale / std::max(1.0, gmax);
    for (std::size_t x = 0; x < j; ++x)
      for (std::size_t i = 0; i < cand[x].data().size(); ++i)
        cand[x].data()[i] -= eta * g[x].data()[i];
    project_masked(cand, frozen);
    if (!feasible(cand)) {
      double lo = 0.0, hi = 1.0;  // blend(cand, best.t, s): s = 1 is certified
      for (int b = 0; b < 12; ++b) {
        double mid = 0.5 * (lo + hi);
        (feasible(blend(cand, best.t, mid)) ? hi : lo) = mid;
      }
      cand = blend(cand, best.t, hi);
    }
    double d = div_of(px, cand, w);
    if (d < best.d - 1e-13) {
      best.t = std::move(cand);
      best.d = d;
      bad = 0;
    } else if (++bad < 4) {
      scale *= 0.25;
    }
  }
  best.cert = adversary_value(to_coupling(best.t), px, q, tol);
  best.mi = mi_of(px, best.t);
  best.d = div_of(px, best.t, w);
  best.ok = best.cert.slack >= -tol && best.mi <= rate + 1e-9 && best.d < kInf;
  return best;
}

InnerOptions probe_options(const EspOptions& opts) {
  InnerOptions io;
  io.starts = std::min(opts.starts, 12);
  io.iterations = opts.iterations;
  io.seed = opts.seed;
  io.tol = opts.tol;
  return io;
}

EspResult finish(EspCand best, const Distribution& px, const Channel& w) {
  EspResult r;
  r.found = true;
  r.witness = to_coupling(best.t);
  r.certificate = std::move(best.cert);
  r.mi_bits = best.mi;
  r.value_bits = conditional_kl(marginal_y(r.witness), w, px);
  return r;
}

EspResult esp_impl(const Distribution& px, const Channel& w, const Metric& q,
                   double rate, const EspOptions& opts, const InnerResult* probe,
                   const Tables* warm) {
  double info = mutual_information(px, w);
  if (rate >= info) {
    // Keeping both views equal wastes no divergence and stays within rate.
    return finish(certify(diagonal_tables(w), px, w, q, rate, opts.tol), px, w);
  }
  if (probe && probe->certified && probe->value_bits <= rate + 1e-9) {
    // The inner minimizer's witness already matches the channel exactly.
    EspCand c;
    c.t = coupling_tables(probe->witness);
    c.cert = probe->certificate;
    c.mi = probe->value_bits;
    c.d = 0.0;
    c.ok = true;
    return finish(std::move(c), px, w);
  }

  FrozenRows frozen = frozen_rows(w);
  std::optional<Tables> anchor = zero_info_anchor(px, w);
  std::optional<Tables> family = deterministic_family_best(px, w, rate, frozen);
  Tables diag = diagonal_tables(w);

  EspCand best;
  if (anchor) {
    EspCand a = certify(*anchor, px, w, q, rate, opts.tol);
    if (a.ok) best = std::move(a);
  }
  if (family) {
    EspCand fc = certify(*family, px, w, q, rate, opts.tol);
    if (fc.ok && fc.d < best.d) best = std::move(fc);
  }
  for (int start = 0; start < opts.starts; ++start) {
    Tables t0;
    if (start == 0 && warm)
      t0 = *warm;
    else if (start == 0 && anchor)
      t0 = *anchor;
    else if (start == 0)
      t0 = diag;
    else if (start == 1 && probe)
      t0 = coupling_tables(probe->witness);
    else if (start == 2)
      t0 = family ? *family : diag;
    else
      t0 = random_full_start(w, frozen, opts.seed, start);
    project_masked(t0, frozen);
    Tables t = run_pgd(std::move(t0), px, w, q, rate, frozen, opts);
    EspCand cand = certify_or_repair(std::move(t), anchor, px, w, q, rate, opts.tol);
    if (cand.ok && cand.d < best.d) best = std::move(cand);
  }
  if (!best.ok) {
    EspResult r;
    r.found = false;
    r.value_bits = kInf;
    return r;
  }
  EspCand polished = polish(best, px, w, q, rate, frozen, opts.tol, 60);
  if (polished.ok && polished.d <= best.d) best = std::move(polished);
  return finish(std::move(best), px, w);
}

void validate_esp_args(const Distribution& px, const Channel& w, std::size_t q_in,
                       std::size_t q_out, double rate, const EspOptions& opts,
                       const char* what) {
  if (w.input_size() != px.size() || q_in != px.size() || q_out != w.output_size())
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  if (!(rate >= 0.0))
    throw std::invalid_argument(std::string(what) + ": rate must be nonnegative");
  if (opts.starts < 1 || opts.iterations < 1)
    throw std::invalid_argument(std::string(what) +
                                ": starts and iterations must be positive");
}

}  // namespace

EspResult esp(const Distribution& px, const Channel& w, const Metric& q,
              double rate_bits, const EspOptions& opts) {
  validate_esp_args(px, w, q.input_size(), q.output_size(), rate_bits, opts, "esp");
  InnerResult probe;
  bool have_probe = false;
  if (rate_bits < mutual_information(px, w)) {
    probe = inner_min_mi(px, w, q, probe_options(opts));
    have_probe = true;
  }
  return esp_impl(px, w, q, rate_bits, opts, have_probe ? &probe : nullptr, nullptr);
}

ExponentCurve esp_curve(const Distribution& px, const Channel& w, const Metric& q,
                        double r_min, double r_max, int steps, const EspOptions& opts) {
  validate_esp_args(px, w, q.input_size(), q.output_size(), r_min, opts, "esp_curve");
  if (!(r_min < r_max))
    throw std::invalid_argument("esp_curve: r_min must be below r_max");
  if (steps < 2) throw std::invalid_argument("esp_curve: needs at least two steps");

  std::size_t n = static_cast<std::size_t>(steps);
  Vec rates(n);
  for (std::size_t i = 0; i < n; ++i)
    rates[i] = r_min + (r_max - r_min) * static_cast<double>(i) /
                           static_cast<double>(steps - 1);

  InnerResult probe;
  bool have_probe = false;
  if (rates.front() < mutual_information(px, w)) {
    probe = inner_min_mi(px, w, q, probe_options(opts));
    have_probe = true;
  }

  // Contiguous blocks, descending inside each so every solve warm-starts from
  // the witness found at the next-larger rate.
  std::vector<EspResult> res(n);
  std::size_t blocks = std::min<std::size_t>(thread_limit(), n);
  std::size_t chunk = (n + blocks - 1) / blocks;
  parallel_for(blocks, [&](std::size_t b) {
    std::size_t lo = b * chunk, hi = std::min(n, lo + chunk);
    Tables warm;
    bool have_warm = false;
    for (std::size_t i = hi; i-- > lo;) {
      res[i] = esp_impl(px, w, q, rates[i], opts, have_probe ? &probe : nullptr,
                        have_warm ? &warm : nullptr);
      if (res[i].found) {
        warm = coupling_tables(res[i].witness);
        have_warm = true;
      }
    }
  });

  // A witness feasible at some rate is feasible at every larger rate, so the
  // curve can only improve to the right.
  std::vector<int> parent(n, -1);
  for (std::size_t i = 1; i < n; ++i) {
    if (!res[i - 1].found) continue;
    if (!res[i].found || res[i].value_bits > res[i - 1].value_bits) {
      res[i] = res[i - 1];
      parent[i] = parent[i - 1] >= 0 ? parent[i - 1] : static_cast<int>(i - 1);
    }
  }

  ExponentCurve curve;
  curve.px = px;
  curve.points.resize(n);
  std::vector<int> wid(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (res[i].found) {
      if (parent[i] >= 0) {
        wid[i] = wid[static_cast<std::size_t>(parent[i])];
      } else {
        curve.witnesses.push_back(res[i].witness);
        wid[i] = static_cast<int>(curve.witnesses.size()) - 1;
      }
    }
    curve.points[i] = {rates[i], res[i].value_bits, wid[i], res[i].found};
  }
  return curve;
}

ExponentCurve finite_n_annotation(const ExponentCurve& curve, long long n,
                                  std::size_t j_size, std::size_t k_size) {
  if (n < 1) throw std::invalid_argument("finite_n_annotation: n must be at least 1");
  double zeta = zeta_n(n, j_size, k_size);
  ExponentCurve out = curve;
  for (ExponentPoint& p : out.points) p.rate_bits -= zeta;
  out.n_display = FiniteNAnnotation{
      n, zeta, "second-order slack is O(log n / n); no numeric constant is reported"};
  return out;
}

namespace {

Mat honest_joint(const Distribution& px, const Tables& t) {
  std::size_t j = t.size(), k = t.empty() ? 0 : t[0].rows();
  Mat m(j, k, 0.0);
  for (std::size_t x = 0; x < j; ++x)
    for (std::size_t k1 = 0; k1 < k; ++k1) m(x, k1) = px[x] * t[x].row_sum(k1);
  return m;
}

Metric linearized_metric(const TypeDependentMetric& q_td, const Mat& joint) {
  if (q_td.gradient) return Metric(q_td.gradient(joint), "linearized metric");
  Mat g(joint.rows(), joint.cols(), 0.0);
  constexpr double h = 1e-7;
  Mat probe = joint;
  for (std::size_t i = 0; i < g.data().size(); ++i) {
    double keep = probe.data()[i];
    probe.data()[i] = keep + h;
    double up = q_td.value(probe);
    probe.data()[i] = keep - h;
    double dn = q_td.value(probe);
    probe.data()[i] = keep;
    g.data()[i] = (up - dn) / (2.0 * h);
  }
  return Metric(std::move(g), "linearized metric");
}

TdSearchOptions td_options(const EspOptions& opts) {
  TdSearchOptions o;
  o.starts = 6;
  o.iterations = 120;
  o.seed = opts.seed ^ 0x51ed2700ULL;
  o.tol = opts.tol;
  o.fw_gap = 1e-9;
  return o;
}

struct TdCand {
  double d = kInf;
  Tables t;
  TdCertificate cert;
  double mi = kInf;
  bool ok = false;
};

TdCand certify_td(Tables t, const Distribution& px, const Channel& w,
                  const TypeDependentMetric& q_td, double rate, double tol,
                  const TdSearchOptions& tdo) {
  TdCand c;
  c.cert = is_maximal_td(to_coupling(t), px, q_td, tdo);
  c.mi = mi_of(px, t);
  c.d = div_of(px, t, w);
  c.t = std::move(t);
  c.ok = c.cert.slack >= -tol && c.cert.member_certified && c.mi <= rate + 1e-9 &&
         c.d < kInf;
  return c;
}

TdCand certify_td_or_repair(Tables t, const std::optional<Tables>& anchor,
                            const Distribution& px, const Channel& w,
                            const TypeDependentMetric& q_td, double rate, double tol,
                            const TdSearchOptions& tdo) {
  TdCand c = certify_td(std::move(t), px, w, q_td, rate, tol, tdo);
  if (c.ok || !anchor) return c;
  auto feasible = [&](const Tables& tt) {
    if (mi_of(px, tt) > rate) return false;
    if (!(div_of(px, tt, w) < kInf)) return false;
    TdCertificate cert = is_maximal_td(to_coupling(tt), px, q_td, tdo);
    return cert.slack >= -0.5 * tol && cert.member_certified;
  };
  if (!feasible(*anchor)) return c;
  Tables base = std::move(c.t);
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 18; ++it) {
    double mid = 0.5 * (lo + hi);
    (feasible(blend(base, *anchor, mid)) ? hi : lo) = mid;
  }
  TdCand rep = certify_td(blend(base, *anchor, hi), px, w, q_td, rate, tol, tdo);
  if (rep.ok) return rep;
  return certify_td(*anchor, px, w, q_td, rate, tol, tdo);
}

EspTdResult finish_td(TdCand best, const Distribution& px, const Channel& w) {
  EspTdResult r;
  r.found = true;
  r.witness = to_coupling(best.t);
  r.certificate = std::move(best.cert);
  r.mi_bits = best.mi;
  r.value_bits = conditional_kl(marginal_y(r.witness), w, px);
  return r;
}

}  // namespace

EspTdResult esp_td(const Distribution& px, const Channel& w,
                   const TypeDependentMetric& q_td, double rate_bits,
                   const EspOptions& opts) {
  validate_esp_args(px, w, q_td.input_size, q_td.output_size, rate_bits, opts,
                    "esp_td");
  if (!q_td.value) throw std::invalid_argument("esp_td: metric has no value function");
  if (!q_td.convex_in_channel)
    throw std::invalid_argument(
        "esp_td: the metric must be declared convex in the channel");

  TdSearchOptions tdo = td_options(opts);
  double info = mutual_information(px, w);
  Tables diag = diagonal_tables(w);
  if (rate_bits >= info) {
    TdCand cand = certify_td(diag, px, w, q_td, rate_bits, opts.tol, tdo);
    if (cand.ok) return finish_td(std::move(cand), px, w);
  }

  // Linearize around the honest channel joint; exact for additive metrics.
  Metric q_lin = linearized_metric(q_td, honest_joint(px, diag));
  InnerResult probe;
  bool have_probe = false;
  if (rate_bits < info) {
    probe = inner_min_mi(px, w, q_lin, probe_options(opts));
    have_probe = true;
    if (probe.certified && probe.value_bits <= rate_bits + 1e-9) {
      TdCand cand = certify_td(coupling_tables(probe.witness), px, w, q_td, rate_bits,
                               opts.tol, tdo);
      if (cand.ok) return finish_td(std::move(cand), px, w);
    }
  }

  FrozenRows frozen = frozen_rows(w);
  std::optional<Tables> anchor = zero_info_anchor(px, w);
  std::optional<Tables> family = deterministic_family_best(px, w, rate_bits, frozen);
  TdCand best;
  if (anchor) {
    TdCand a = certify_td(*anchor, px, w, q_td, rate_bits, opts.tol, tdo);
    if (a.ok) best = std::move(a);
  }
  if (family) {
    TdCand fc = certify_td(*family, px, w, q_td, rate_bits, opts.tol, tdo);
    if (fc.ok && fc.d < best.d) best = std::move(fc);
  }

  for (int round = 0; round < 2; ++round) {
    if (round == 1) {
      if (!best.ok) break;
      Metric next = linearized_metric(q_td, honest_joint(px, best.t));
      double moved = 0.0;
      for (std::size_t x = 0; x < px.size(); ++x)
        for (std::size_t k1 = 0; k1 < w.output_size(); ++k1)
          moved = std::max(moved, std::abs(next(x, k1) - q_lin(x, k1)));
      if (moved <= 1e-12) break;  // stationary linearization: nothing new to try
      q_lin = std::move(next);
    }
    int nstarts = round == 0 ? opts.starts : std::max(2, opts.starts / 3);
    for (int start = 0; start < nstarts; ++start) {
      Tables t0;
      if (round == 1 && start == 0)
        t0 = best.t;
      else if (start == 0 && anchor)
        t0 = *anchor;
      else if (start == 0)
        t0 = diag;
      else if (start == 1 && have_probe)
        t0 = coupling_tables(probe.witness);
      else if (start == 2)
        t0 = family ? *family : diag;
      else
        t0 = random_full_start(w, frozen, opts.seed, start);
      project_masked(t0, frozen);
      Tables t = run_pgd(std::move(t0), px, w, q_lin, rate_bits, frozen, opts);
      TdCand cand = certify_td_or_repair(std::move(t), anchor, px, w, q_td, rate_bits,
                                         opts.tol, tdo);
      if (cand.ok && cand.d < best.d) best = std::move(cand);
    }
  }

  if (!best.ok) {
    EspTdResult r;
    r.found = false;
    r.value_bits = kInf;
    return r;
  }

  // Polish inside the incumbent's linearized region, then re-check the true
  // metric; a failed re-check keeps the unpolished certified point.
  {
    Metric q_fin = linearized_metric(q_td, honest_joint(px, best.t));
    EspCand lin;
    lin.cert = adversary_value(to_coupling(best.t), px, q_fin, opts.tol);
    if (lin.cert.slack >= -opts.tol) {
      lin.t = best.t;
      lin.d = best.d;
      lin.mi = best.mi;
      lin.ok = true;
      EspCand moved = polish(std::move(lin), px, w, q_fin, rate_bits, frozen,
                             opts.tol, 60);
      if (moved.ok && moved.d < best.d) {
        TdCand recheck =
            certify_td(std::move(moved.t), px, w, q_td, rate_bits, opts.tol, tdo);
        if (recheck.ok && recheck.d < best.d) best = std::move(recheck);
      }
    }
  }
  return finish_td(std::move(best), px, w);
}

}  // namespace mmlab
