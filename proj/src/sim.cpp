#include "mmlab/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include "mmlab/parallel.hpp"
#include "mmlab/rng.hpp"

namespace mmlab {
namespace {

void check_codebook(const Codebook& cb, const char* who) {
  const std::size_t j_size = cb.alphabet();
  if (j_size == 0 || cb.composition.n <= 0)
    throw std::invalid_argument(std::string(who) + ": empty composition");
  long long total = 0;
  for (long long c : cb.composition.counts) {
    if (c < 0) throw std::invalid_argument(std::string(who) + ": negative count");
    total += c;
  }
  if (total != cb.composition.n)
    throw std::invalid_argument(std::string(who) + ": composition counts do not sum to n");
  if (cb.words.empty())
    throw std::invalid_argument(std::string(who) + ": no codewords");
  const std::size_t n = cb.length();
  std::set<std::vector<std::size_t>> seen;
  for (const auto& w : cb.words) {
    if (w.size() != n)
      throw std::invalid_argument(std::string(who) + ": codeword length mismatch");
    std::vector<long long> counts(j_size, 0);
    for (std::size_t letter : w) {
      if (letter >= j_size)
        throw std::invalid_argument(std::string(who) + ": letter outside alphabet");
      ++counts[letter];
    }
    if (counts != cb.composition.counts)
      throw std::invalid_argument(std::string(who) + ": codeword off-composition");
    if (!seen.insert(w).second)
      throw std::invalid_argument(std::string(who) + ": duplicate codeword");
  }
}

std::size_t sample_row(const Channel& w, std::size_t j, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < w.output_size(); ++k) {
    acc += w(j, k);
    if (u < acc) return k;
  }
  return w.output_size() - 1;
}

double word_score(const std::vector<std::size_t>& x,
                  const std::vector<std::size_t>& y, const Metric& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += q(x[i], y[i]);
  return s;
}

// Letters of the composition in canonical ascending order; shuffling this is
// a uniform draw from the type class.
std::vector<std::size_t> canonical_word(const TypeVector& comp) {
  std::vector<std::size_t> w;
  w.reserve(static_cast<std::size_t>(comp.n));
  for (std::size_t j = 0; j < comp.counts.size(); ++j)
    w.insert(w.end(), static_cast<std::size_t>(comp.counts[j]), j);
  return w;
}

std::vector<long long> joint_counts(const std::vector<std::size_t>& x,
                                    const std::vector<std::size_t>& y,
                                    std::size_t j_size, std::size_t k_size) {
  std::vector<long long> c(j_size * k_size, 0);
  for (std::size_t i = 0; i < x.size(); ++i) ++c[x[i] * k_size + y[i]];
  return c;
}

// Fixed iteration order, so equal count tables give bit-identical scores.
double score_of_counts(const std::vector<long long>& counts, std::size_t j_size,
                       std::size_t k_size, const Metric& q) {
  double s = 0.0;
  for (std::size_t j = 0; j < j_size; ++j)
    for (std::size_t k = 0; k < k_size; ++k)
      s += static_cast<double>(counts[j * k_size + k]) * q(j, k);
  return s;
}

void check_conditional(const ConditionalType& cond, const TypeVector& comp,
                       std::size_t k_size, const char* who) {
  if (cond.counts.size() != comp.counts.size())
    throw std::invalid_argument(std::string(who) + ": conditional type row count");
  for (std::size_t j = 0; j < cond.counts.size(); ++j) {
    if (cond.counts[j].size() != k_size)
      throw std::invalid_argument(std::string(who) + ": conditional type column count");
    long long row = 0;
    for (long long c : cond.counts[j]) {
      if (c < 0) throw std::invalid_argument(std::string(who) + ": negative conditional count");
      row += c;
    }
    if (row != comp.counts[j])
      throw std::invalid_argument(std::string(who) +
                                  ": conditional row does not sum to the composition count");
  }
}

// yhat drawn uniformly from the conditional type class of x: each letter
// block gets an independently shuffled copy of its output multiset.
std::vector<std::size_t> sample_fixed_type(const std::vector<std::size_t>& x,
                                           const ConditionalType& cond,
                                           std::size_t j_size, CounterRng& rng) {
  std::vector<std::size_t> yhat(x.size());
  for (std::size_t j = 0; j < j_size; ++j) {
    std::vector<std::size_t> block;
    for (std::size_t k = 0; k < cond.counts[j].size(); ++k)
      block.insert(block.end(), static_cast<std::size_t>(cond.counts[j][k]), k);
    rng.shuffle(block);
    std::size_t next = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] == j) yhat[i] = block[next++];
  }
  return yhat;
}

SimulationReport finish_report(std::vector<long long> successes, long long trials,
                               std::uint64_t seed, long long ties, std::string mode) {
  SimulationReport rep;
  rep.per_message.reserve(successes.size());
  std::size_t arg = 0;
  for (std::size_t m = 0; m < successes.size(); ++m) {
    rep.per_message.push_back(static_cast<double>(successes[m]) /
                              static_cast<double>(trials));
    if (rep.per_message[m] > rep.per_message[arg]) arg = m;
  }
  rep.max_estimate = rep.per_message[arg];
  auto [lo, hi] = wilson_interval(successes[arg], trials);
  rep.wilson_low = lo;
  rep.wilson_high = hi;
  rep.trials_per_message = trials;
  rep.seed = seed;
  rep.tie_count = ties;
  rep.mode = std::move(mode);
  return rep;
}

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// Exact tail law of the competitor score: a word drawn uniformly from the
// type class meets y only through their joint count table, so tallying every
// table with the right margins gives P[score >= t] for all t at once.
struct TailTable {
  std::vector<double> score;     // ascending
  std::vector<double> log_tail;  // log P[competitor score >= score[i]]

  double log_tail_at(double t) const {
    std::size_t i = static_cast<std::size_t>(
        std::lower_bound(score.begin(), score.end(), t) - score.begin());
    return i == score.size() ? -kInf : log_tail[i];
  }
};

struct TableBuilder {
  std::size_t j_size, k_size;
  const Metric* q;
  const std::vector<double>* logfact;
  std::vector<long long> col;        // output counts
  std::vector<long long> col_suffix; // outputs still to place after column k
  std::vector<long long> row_left;
  std::vector<long long> cell;
  std::vector<std::pair<double, double>> out;  // (score, log mass)
  double log_class_size = 0.0;
  std::size_t leaves = 0;

  void leaf() {
    if (++leaves > 4000000)
      throw std::invalid_argument(
          "estimate_pe_ensemble: alphabet too rich for the exact competitor tally");
    double lm = -log_class_size;
    for (std::size_t k = 0; k < k_size; ++k) {
      lm += (*logfact)[static_cast<std::size_t>(col[k])];
      for (std::size_t j = 0; j < j_size; ++j)
        lm -= (*logfact)[static_cast<std::size_t>(cell[j * k_size + k])];
    }
    out.emplace_back(score_of_counts(cell, j_size, k_size, *q), lm);
  }

  void fill_column(std::size_t k, std::size_t j, long long left) {
    if (j + 1 == j_size) {
      if (left > row_left[j]) return;
      cell[j * k_size + k] = left;
      row_left[j] -= left;
      next_column(k + 1);
      row_left[j] += left;
      return;
    }
    long long cap = std::min(left, row_left[j]);
    for (long long v = 0; v <= cap; ++v) {
      cell[j * k_size + k] = v;
      row_left[j] -= v;
      fill_column(k, j + 1, left - v);
      row_left[j] += v;
    }
  }

  void next_column(std::size_t k) {
    if (k == k_size) {
      leaf();
      return;
    }
    for (std::size_t j = 0; j < j_size; ++j)
      if (row_left[j] > col_suffix[k]) return;  // row budget can never drain
    fill_column(k, 0, col[k]);
  }
};

TailTable build_tail_table(const TypeVector& comp, const std::vector<long long>& y_counts,
                           const Metric& q, const std::vector<double>& logfact) {
  TableBuilder b;
  b.j_size = comp.counts.size();
  b.k_size = y_counts.size();
  b.q = &q;
  b.logfact = &logfact;
  b.col = y_counts;
  b.col_suffix.assign(b.k_size, 0);
  long long suffix = 0;
  for (std::size_t k = b.k_size; k-- > 0;) {
    suffix += y_counts[k];
    b.col_suffix[k] = suffix;  // totals from column k onward
  }
  b.row_left = comp.counts;
  b.cell.assign(b.j_size * b.k_size, 0);
  b.log_class_size = logfact[static_cast<std::size_t>(comp.n)];
  for (long long c : comp.counts)
    b.log_class_size -= logfact[static_cast<std::size_t>(c)];
  b.next_column(0);

  std::sort(b.out.begin(), b.out.end());
  TailTable t;
  t.score.resize(b.out.size());
  t.log_tail.resize(b.out.size());
  double acc = -kInf;
  for (std::size_t i = b.out.size(); i-- > 0;) {
    acc = log_add(acc, b.out[i].second);
    t.score[i] = b.out[i].first;
    t.log_tail[i] = acc;
  }
  return t;
}

}  // namespace

std::pair<double, double> wilson_interval(long long successes, long long trials) {
  if (trials <= 0 || successes < 0 || successes > trials)
    throw std::invalid_argument("wilson_interval: need 0 <= successes <= trials");
  constexpr double z = 1.959963984540054;  // 97.5% normal quantile
  const double n = static_cast<double>(trials);
  const double ph = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double den = 1.0 + z2 / n;
  const double center = (ph + z2 / (2.0 * n)) / den;
  const double half =
      z * std::sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n)) / den;
  // At the boundaries center - half is 0 or 1 only up to rounding; the
  // interval must still contain the point estimate exactly.
  return {std::min(ph, std::max(0.0, center - half)),
          std::max(ph, std::min(1.0, center + half))};
}

Codebook sample_codebook(long long n, long long m, const TypeVector& composition,
                         std::uint64_t seed) {
  if (n <= 0 || n != composition.n)
    throw std::invalid_argument("sample_codebook: n must match the composition length");
  if (m < 1) throw std::invalid_argument("sample_codebook: need m >= 1");
  long long total = 0;
  for (long long c : composition.counts) {
    if (c < 0) throw std::invalid_argument("sample_codebook: negative count");
    total += c;
  }
  if (total != n)
    throw std::invalid_argument("sample_codebook: composition counts do not sum to n");
  if (type_class_log2_size(composition) < 62.0) {
    unsigned long long size = type_class_size(composition);
    if (static_cast<unsigned long long>(m) > size)
      throw std::invalid_argument(
          "sample_codebook: type class holds fewer words than requested");
  }

  Codebook cb;
  cb.composition = composition;
  cb.seed = seed;
  std::set<std::vector<std::size_t>> seen;
  std::vector<std::size_t> base = canonical_word(composition);
  for (std::uint64_t draw = 0; static_cast<long long>(cb.words.size()) < m; ++draw) {
    CounterRng rng(seed, 0, draw);
    std::vector<std::size_t> word = base;
    rng.shuffle(word);
    if (seen.insert(word).second) cb.words.push_back(std::move(word));
  }
  return cb;
}

DecodeResult q_decode(const Codebook& cb, const std::vector<std::size_t>& y,
                      const Metric& q) {
  check_codebook(cb, "q_decode");
  if (y.size() != cb.length())
    throw std::invalid_argument("q_decode: received length differs from the code length");
  if (cb.alphabet() != q.input_size())
    throw std::invalid_argument("q_decode: metric input alphabet mismatch");
  for (std::size_t letter : y)
    if (letter >= q.output_size())
      throw std::invalid_argument("q_decode: output letter outside the metric alphabet");

  DecodeResult r;
  double best = -kInf;
  std::size_t hits = 0;
  for (std::size_t m = 0; m < cb.size(); ++m) {
    double s = word_score(cb.words[m], y, q);
    if (s > best) {
      best = s;
      r.winner = m;
      hits = 1;
    } else if (s == best) {
      ++hits;
    }
  }
  r.tie = hits >= 2;
  return r;
}

SimulationReport estimate_pe_max(const Codebook& cb, const Channel& w,
                                 const Metric& q, long long trials_per_message,
                                 std::uint64_t seed, TieMode ties) {
  check_codebook(cb, "estimate_pe_max");
  if (trials_per_message < 1)
    throw std::invalid_argument("estimate_pe_max: need trials >= 1");
  if (w.input_size() != cb.alphabet())
    throw std::invalid_argument("estimate_pe_max: channel input alphabet mismatch");
  if (q.input_size() != w.input_size() || q.output_size() != w.output_size())
    throw std::invalid_argument("estimate_pe_max: metric shape mismatch");

  const std::size_t m_count = cb.size();
  const std::size_t n = cb.length();
  std::vector<long long> successes(m_count, 0), tie_hits(m_count, 0);
  parallel_for(m_count, [&](std::size_t m) {
    std::vector<std::size_t> y(n);
    std::vector<double> scores(m_count);
    for (long long t = 0; t < trials_per_message; ++t) {
      CounterRng rng(seed, static_cast<std::uint64_t>(m),
                     static_cast<std::uint64_t>(t));
      for (std::size_t i = 0; i < n; ++i)
        y[i] = sample_row(w, cb.words[m][i], rng.next_double());
      double best = -kInf;
      for (std::size_t mm = 0; mm < m_count; ++mm) {
        scores[mm] = word_score(cb.words[mm], y, q);
        best = std::max(best, scores[mm]);
      }
      std::size_t at_best = 0;
      for (double s : scores) at_best += (s == best);
      if (at_best >= 2) ++tie_hits[m];
      bool error;
      if (ties == TieMode::kError) {
        error = scores[m] < best || at_best >= 2;
      } else {
        std::uint64_t pick = rng.next_below(at_best);
        std::size_t winner = 0;
        for (std::size_t mm = 0; mm < m_count; ++mm) {
          if (scores[mm] != best) continue;
          if (pick == 0) {
            winner = mm;
            break;
          }
          --pick;
        }
        error = winner != m;
      }
      if (error) ++successes[m];
    }
  });

  long long all_ties = 0;
  for (long long t : tie_hits) all_ties += t;
  return finish_report(std::move(successes), trials_per_message, seed, all_ties,
                       ties == TieMode::kError ? "ties-as-errors" : "random-winner");
}

SimulationReport estimate_pe_ensemble(const TypeVector& composition,
                                      double rate_bits, const Channel& w,
                                      const Metric& q, long long trials,
                                      std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("estimate_pe_ensemble: need trials >= 1");
  if (composition.n <= 0)
    throw std::invalid_argument("estimate_pe_ensemble: empty composition");
  long long total = 0;
  for (long long c : composition.counts) {
    if (c < 0) throw std::invalid_argument("estimate_pe_ensemble: negative count");
    total += c;
  }
  if (total != composition.n)
    throw std::invalid_argument("estimate_pe_ensemble: counts do not sum to n");
  if (!(rate_bits >= 0.0))
    throw std::invalid_argument("estimate_pe_ensemble: rate must be >= 0");
  if (w.input_size() != composition.counts.size())
    throw std::invalid_argument("estimate_pe_ensemble: channel input alphabet mismatch");
  if (q.input_size() != w.input_size() || q.output_size() != w.output_size())
    throw std::invalid_argument("estimate_pe_ensemble: metric shape mismatch");

  const std::size_t n = static_cast<std::size_t>(composition.n);
  const std::size_t j_size = composition.counts.size();
  const std::size_t k_size = w.output_size();

  // log(M - 1) for M = 2^(n R); tiny codebooks keep the exact integer.
  const double log2_m = static_cast<double>(composition.n) * rate_bits;
  bool no_competitor = false;
  double log_m1 = 0.0;
  if (log2_m < 52.0) {
    double m_real = std::round(std::exp2(log2_m));
    if (m_real <= 1.5)
      no_competitor = true;
    else
      log_m1 = std::log(m_real - 1.0);
  } else {
    log_m1 = log2_m * std::numbers::ln2;
  }

  std::vector<double> logfact(n + 1, 0.0);
  for (std::size_t i = 0; i <= n; ++i)
    logfact[i] = std::lgamma(static_cast<double>(i) + 1.0);

  std::map<std::vector<long long>, TailTable> cache;
  std::vector<std::size_t> base = canonical_word(composition);
  long long errors = 0;
  for (long long t = 0; t < trials; ++t) {
    CounterRng rng(seed, 0, static_cast<std::uint64_t>(t));
    std::vector<std::size_t> x = base;
    rng.shuffle(x);
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = sample_row(w, x[i], rng.next_double());
    const double u = rng.next_double();
    if (no_competitor) continue;

    std::vector<long long> cells = joint_counts(x, y, j_size, k_size);
    std::vector<long long> y_counts(k_size, 0);
    for (std::size_t k = 0; k < k_size; ++k)
      for (std::size_t j = 0; j < j_size; ++j) y_counts[k] += cells[j * k_size + k];
    auto it = cache.find(y_counts);
    if (it == cache.end())
      it = cache.emplace(y_counts, build_tail_table(composition, y_counts, q, logfact))
               .first;

    const double sent = score_of_counts(cells, j_size, k_size, q);
    const double log_p = it->second.log_tail_at(sent);
    double pe;
    if (log_p == -kInf) {
      pe = 0.0;
    } else if (log_p < -35.0) {
      pe = -std::expm1(-std::exp(log_m1 + log_p));  // (M-1) p is exact here
    } else {
      double lam = -std::exp(log_m1) * std::log1p(-std::min(1.0, std::exp(log_p)));
      pe = -std::expm1(-lam);
    }
    if (u < pe) ++errors;
  }

  return finish_report({errors}, trials, seed, 0, "ensemble-ties-as-errors");
}

ConditionalType rounded_conditional_type(const Channel& v,
                                         const TypeVector& composition) {
  if (v.input_size() != composition.counts.size())
    throw std::invalid_argument("rounded_conditional_type: alphabet mismatch");
  ConditionalType cond;
  cond.counts.resize(v.input_size());
  for (std::size_t j = 0; j < v.input_size(); ++j) {
    const long long nj = composition.counts[j];
    std::vector<long long>& row = cond.counts[j];
    row.assign(v.output_size(), 0);
    long long placed = 0;
    std::vector<std::pair<double, std::size_t>> rem;  // (-remainder, k)
    for (std::size_t k = 0; k < v.output_size(); ++k) {
      double target = static_cast<double>(nj) * v(j, k);
      row[k] = static_cast<long long>(std::floor(target));
      placed += row[k];
      rem.emplace_back(-(target - std::floor(target)), k);
    }
    std::sort(rem.begin(), rem.end());
    for (long long r = nj - placed, i = 0; r > 0; --r, ++i) ++row[rem[i].second];
  }
  return cond;
}

SimulationReport estimate_type_conflict(const Codebook& cb, const Channel& v,
                                        long long trials_per_message,
                                        std::uint64_t seed, ConflictSampling mode,
                                        const std::optional<ConditionalType>& fixed) {
  check_codebook(cb, "estimate_type_conflict");
  if (trials_per_message < 1)
    throw std::invalid_argument("estimate_type_conflict: need trials >= 1");
  if (v.input_size() != cb.alphabet())
    throw std::invalid_argument("estimate_type_conflict: channel input alphabet mismatch");
  ConditionalType cond;
  if (mode == ConflictSampling::kFixedType) {
    cond = fixed ? *fixed : rounded_conditional_type(v, cb.composition);
    check_conditional(cond, cb.composition, v.output_size(), "estimate_type_conflict");
  }

  const std::size_t m_count = cb.size();
  const std::size_t n = cb.length();
  const std::size_t j_size = cb.alphabet();
  const std::size_t k_size = v.output_size();
  std::vector<long long> successes(m_count, 0);
  parallel_for(m_count, [&](std::size_t m) {
    std::vector<std::size_t> yhat(n);
    for (long long t = 0; t < trials_per_message; ++t) {
      CounterRng rng(seed, static_cast<std::uint64_t>(m),
                     static_cast<std::uint64_t>(t));
      if (mode == ConflictSampling::kFixedType) {
        yhat = sample_fixed_type(cb.words[m], cond, j_size, rng);
      } else {
        for (std::size_t i = 0; i < n; ++i)
          yhat[i] = sample_row(v, cb.words[m][i], rng.next_double());
      }
      std::vector<long long> mine = joint_counts(cb.words[m], yhat, j_size, k_size);
      bool conflict = false;
      for (std::size_t mm = 0; mm < m_count && !conflict; ++mm)
        conflict = mm != m && joint_counts(cb.words[mm], yhat, j_size, k_size) == mine;
      if (conflict) ++successes[m];
    }
  });

  return finish_report(std::move(successes), trials_per_message, seed, 0,
                       mode == ConflictSampling::kFixedType ? "conflict-fixed-type"
                                                            : "conflict-channel");
}

SimulationReport estimate_type_conflict_full_class(
    const TypeVector& composition, const Channel& v, long long trials,
    std::uint64_t seed, ConflictSampling mode,
    const std::optional<ConditionalType>& fixed) {
  if (trials < 1)
    throw std::invalid_argument("estimate_type_conflict_full_class: need trials >= 1");
  if (composition.n <= 0)
    throw std::invalid_argument("estimate_type_conflict_full_class: empty composition");
  long long total = 0;
  for (long long c : composition.counts) {
    if (c < 0)
      throw std::invalid_argument("estimate_type_conflict_full_class: negative count");
    total += c;
  }
  if (total != composition.n)
    throw std::invalid_argument(
        "estimate_type_conflict_full_class: counts do not sum to n");
  if (v.input_size() != composition.counts.size())
    throw std::invalid_argument(
        "estimate_type_conflict_full_class: channel input alphabet mismatch");
  ConditionalType cond;
  if (mode == ConflictSampling::kFixedType) {
    cond = fixed ? *fixed : rounded_conditional_type(v, composition);
    check_conditional(cond, composition, v.output_size(),
                      "estimate_type_conflict_full_class");
  }

  const std::size_t n = static_cast<std::size_t>(composition.n);
  const std::size_t j_size = composition.counts.size();
  const std::size_t k_size = v.output_size();
  std::vector<std::size_t> base = canonical_word(composition);
  long long conflicts = 0;
  for (long long t = 0; t < trials; ++t) {
    CounterRng rng(seed, 0, static_cast<std::uint64_t>(t));
    std::vector<std::size_t> x = base;
    rng.shuffle(x);
    std::vector<std::size_t> yhat(n);
    if (mode == ConflictSampling::kFixedType) {
      yhat = sample_fixed_type(x, cond, j_size, rng);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        yhat[i] = sample_row(v, x[i], rng.next_double());
    }
    std::vector<long long> cells = joint_counts(x, yhat, j_size, k_size);
    // Another same-composition word shares the conditional type iff some
    // output column mixes two input letters, i.e. the counts rearrange.
    bool conflict = false;
    for (std::size_t k = 0; k < k_size && !conflict; ++k) {
      std::size_t positive = 0;
      for (std::size_t j = 0; j < j_size; ++j) positive += cells[j * k_size + k] > 0;
      conflict = positive >= 2;
    }
    if (conflict) ++conflicts;
  }

  return finish_report({conflicts}, trials, seed, 0,
                       mode == ConflictSampling::kFixedType
                           ? "conflict-full-class-fixed-type"
                           : "conflict-full-class-channel");
}

ConflictTypeResult dominant_conflict_type(const Codebook& cb, const Channel& v,
                                          const ConditionalType& conditional,
                                          long long trials_per_message,
                                          std::uint64_t seed, ConflictSampling mode) {
  check_codebook(cb, "dominant_conflict_type");
  if (trials_per_message < 1)
    throw std::invalid_argument("dominant_conflict_type: need trials >= 1");
  if (v.input_size() != cb.alphabet())
    throw std::invalid_argument("dominant_conflict_type: channel input alphabet mismatch");
  if (mode == ConflictSampling::kFixedType)
    check_conditional(conditional, cb.composition, v.output_size(),
                      "dominant_conflict_type");

  const std::size_t m_count = cb.size();
  const std::size_t n = cb.length();
  const std::size_t j_size = cb.alphabet();
  const std::size_t k_size = v.output_size();
  std::map<std::vector<long long>, long long> tally;
  long long observations = 0;
  std::vector<std::size_t> yhat(n);
  for (std::size_t m = 0; m < m_count; ++m) {
    for (long long t = 0; t < trials_per_message; ++t) {
      CounterRng rng(seed, static_cast<std::uint64_t>(m),
                     static_cast<std::uint64_t>(t));
      if (mode == ConflictSampling::kFixedType) {
        yhat = sample_fixed_type(cb.words[m], conditional, j_size, rng);
      } else {
        for (std::size_t i = 0; i < n; ++i)
          yhat[i] = sample_row(v, cb.words[m][i], rng.next_double());
      }
      std::vector<long long> mine = joint_counts(cb.words[m], yhat, j_size, k_size);
      for (std::size_t mm = 0; mm < m_count; ++mm) {
        if (mm == m || joint_counts(cb.words[mm], yhat, j_size, k_size) != mine)
          continue;
        std::vector<long long> triple(k_size * j_size * j_size, 0);
        for (std::size_t i = 0; i < n; ++i)
          ++triple[(yhat[i] * j_size + cb.words[m][i]) * j_size + cb.words[mm][i]];
        ++tally[triple];
        ++observations;
      }
    }
  }

  ConflictTypeResult r;
  r.floor_share =
      0.5 / std::pow(static_cast<double>(n) + 1.0,
                     static_cast<double>(j_size * j_size * k_size) - 1.0);
  if (observations == 0) return r;
  r.found = true;
  r.observations = observations;
  r.distinct_types = static_cast<long long>(tally.size());
  const std::vector<long long>* best = nullptr;
  long long best_count = -1;
  for (const auto& [key, count] : tally) {
    if (count > best_count) {  // ties keep the lexicographically first key
      best_count = count;
      best = &key;
    }
  }
  r.joint.shape = {k_size, j_size, j_size};
  r.joint.counts = *best;
  r.joint.n = static_cast<long long>(n);
  r.share = static_cast<double>(best_count) / static_cast<double>(observations);
  return r;
}

GammaResult gamma_constant(const Coupling& c, const Distribution& px,
                           const Metric& q, std::optional<double> kappa) {
  if (c.input_size() == 0) throw std::invalid_argument("gamma_constant: empty coupling");
  if (px.size() != c.input_size())
    throw std::invalid_argument("gamma_constant: input distribution size mismatch");
  if (q.input_size() != c.input_size() || q.output_size() != c.output_size())
    throw std::invalid_argument("gamma_constant: metric shape mismatch");
  if (kappa && !(*kappa > 0.0))
    throw std::invalid_argument("gamma_constant: kappa must be positive");

  const std::size_t j_size = c.input_size();
  const std::size_t k_size = c.output_size();
  GammaResult r;
  double sigma_sq = kInf;
  for (std::size_t j1 = 0; j1 < j_size; ++j1) {
    if (px[j1] <= 0.0) continue;
    const Mat& tab = c.table(j1);
    for (std::size_t k = 0; k < k_size; ++k) {
      double mass = 0.0;
      for (std::size_t y = 0; y < k_size; ++y) mass += tab(y, k);
      if (mass <= 0.0) continue;
      for (std::size_t j2 = 0; j2 < j_size; ++j2) {
        if (px[j2] <= 0.0) continue;
        double mean = 0.0, mean_sq = 0.0;
        for (std::size_t y = 0; y < k_size; ++y) {
          double w = tab(y, k) / mass;
          double d = q(j2, y) - q(j1, y);
          mean += w * d;
          mean_sq += w * d * d;
        }
        double var = std::max(0.0, mean_sq - mean * mean);
        if (var > 1e-12) sigma_sq = std::min(sigma_sq, var);
      }
    }
  }
  if (sigma_sq == kInf) {
    r.degenerate = true;
    return r;
  }
  r.sigma_sq = sigma_sq;

  const double ab = 2.0 * (q.max_value() - q.min_value());  // |a - b|
  auto value_at = [&](double kap) {
    double lead = sigma_sq / (2.0 * kap * kap * ab * ab);
    double tail = ab * std::exp(-0.5 * kap * kap) *
                  (1.0 + std::sqrt(2.0) + std::sqrt(2.0 * std::numbers::pi) / kap +
                   1.0 / (kap * kap));
    return lead - tail;
  };

  if (kappa) {
    r.kappa = *kappa;
    r.gamma = value_at(*kappa);
    return r;
  }
  for (int i = 1; i <= 4000; ++i) {
    double kap = 0.1 * static_cast<double>(i);
    double g = value_at(kap);
    if (g > 0.0) {
      r.kappa = kap;
      r.gamma = g;
      return r;
    }
  }
  throw std::logic_error("gamma_constant: no positive value on the grid");
}

}  // namespace mmlab
