#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <set>
#include <vector>

#include "mmlab/prob.hpp"
#include "mmlab/sim.hpp"
#include "mmlab/types_lab.hpp"
#include "oracles.hpp"

using namespace mmlab;
using namespace testkit;

namespace {

TypeVector comp22() { return TypeVector{{2, 2}, 4}; }

Channel binary_symmetric(double eps) {
  Mat v(2, 2);
  v(0, 0) = 1.0 - eps; v(0, 1) = eps;
  v(1, 0) = eps;       v(1, 1) = 1.0 - eps;
  return Channel(v);
}

Channel identity2() { return binary_symmetric(0.0); }

ConditionalType even_split() { return ConditionalType{{{1, 1}, {1, 1}}}; }

// Reports must be internally consistent regardless of the experiment.
void check_report_shape(const SimulationReport& rep) {
  for (double e : rep.per_message) {
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
    CHECK(e <= rep.max_estimate);
  }
  CHECK(rep.max_estimate >= rep.wilson_low);
  CHECK(rep.max_estimate <= rep.wilson_high);
  CHECK(rep.wilson_low >= 0.0);
  CHECK(rep.wilson_high <= 1.0);
}

}  // namespace

TEST_CASE("codebook sampling covers the class, keeps composition, reproduces") {
  // Asking for the whole class must return exactly the class.
  auto whole = sample_codebook(4, 6, comp22(), 11);
  auto all = class_words(comp22());
  std::set<std::vector<std::size_t>> got(whole.words.begin(), whole.words.end());
  std::set<std::vector<std::size_t>> want(all.begin(), all.end());
  CHECK(got == want);

  // Same for a ternary composition: 4! / (1! 1! 2!) = 12 words.
  TypeVector tern{{1, 1, 2}, 4};
  auto whole3 = sample_codebook(4, 12, tern, 5);
  CHECK(whole3.words.size() == 12);
  std::set<std::vector<std::size_t>> got3(whole3.words.begin(), whole3.words.end());
  CHECK(got3.size() == 12);
  for (const auto& w : whole3.words) {
    std::vector<long long> counts(3, 0);
    for (std::size_t letter : w) ++counts[letter];
    CHECK(counts == tern.counts);
  }

  // Deterministic draws, distinct words.
  auto a = sample_codebook(4, 3, comp22(), 42);
  auto b = sample_codebook(4, 3, comp22(), 42);
  CHECK(a.words == b.words);
  CHECK(a.seed == 42);
  std::set<std::vector<std::size_t>> dedup(a.words.begin(), a.words.end());
  CHECK(dedup.size() == 3);

  CHECK_THROWS_AS(sample_codebook(4, 7, comp22(), 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_codebook(5, 2, comp22(), 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_codebook(4, 0, comp22(), 0), std::invalid_argument);
}

TEST_CASE("decoding picks the best summed score and flags shared maxima") {
  DyadicChannel ch = DyadicChannel::make();
  Metric q = ch.log2_metric();

  // One codeword: it wins whatever arrives, never a tie.
  Codebook solo;
  solo.composition = comp22();
  solo.words = {{0, 0, 1, 1}};
  for (std::vector<std::size_t> y : {std::vector<std::size_t>{0, 1, 2, 3},
                                     std::vector<std::size_t>{3, 3, 0, 0}}) {
    DecodeResult r = q_decode(solo, y, q);
    CHECK(r.winner == 0);
    CHECK_FALSE(r.tie);
  }

  // Matched metric, noiseless observation: the sent word wins strictly.
  Codebook cb = sample_codebook(4, 3, comp22(), 7);
  for (std::size_t m = 0; m < cb.size(); ++m) {
    std::vector<std::size_t> y(4);
    for (std::size_t i = 0; i < 4; ++i)
      y[i] = cb.words[m][i] == 0 ? 0 : 3;  // each letter's most likely output
    DecodeResult r = q_decode(cb, y, q);
    CHECK(r.winner == m);
    CHECK_FALSE(r.tie);
  }

  // Constant metric: every codeword scores alike.
  Mat flat(2, 4);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 4; ++k) flat(j, k) = 0.25;
  DecodeResult r = q_decode(cb, {0, 1, 2, 3}, Metric(flat));
  CHECK(r.tie);
  CHECK(r.winner == 0);

  CHECK_THROWS_AS(q_decode(cb, {0, 1}, q), std::invalid_argument);
  CHECK_THROWS_AS(q_decode(cb, {0, 1, 2, 7}, q), std::invalid_argument);
}

TEST_CASE("matched-metric decoding equals brute-force maximum likelihood exactly") {
  // Dyadic channel entries make both sides exact: metric scores are integers
  // in floating point and likelihoods are integer products.
  DyadicChannel ch = DyadicChannel::make();
  Metric q = ch.log2_metric();

  Codebook cb4 = sample_codebook(4, 3, comp22(), 5);
  auto mine4 = qdecode_pe_exact(cb4, ch.w, q);
  auto oracle4 = ml_pe_exact(cb4.words, ch);
  REQUIRE(mine4.size() == oracle4.size());
  for (std::size_t m = 0; m < mine4.size(); ++m)
    CHECK(std::abs(mine4[m] - oracle4[m]) <= 1e-12);

  TypeVector comp33{{3, 3}, 6};
  Codebook cb6 = sample_codebook(6, 4, comp33, 9);
  auto mine6 = qdecode_pe_exact(cb6, ch.w, q);
  auto oracle6 = ml_pe_exact(cb6.words, ch);
  for (std::size_t m = 0; m < mine6.size(); ++m)
    CHECK(std::abs(mine6[m] - oracle6[m]) <= 1e-12);

  // The error event is nontrivial on this instance.
  double top = 0.0;
  for (double p : oracle6) top = std::max(top, p);
  CHECK(top > 0.01);
  CHECK(top < 0.99);
}

TEST_CASE("Monte Carlo error estimates land within three Wilson intervals") {
  DyadicChannel ch = DyadicChannel::make();
  Metric q = ch.log2_metric();
  Codebook cb = sample_codebook(4, 3, comp22(), 5);
  auto exact = qdecode_pe_exact(cb, ch.w, q);

  const long long trials = 100000;
  SimulationReport rep = estimate_pe_max(cb, ch.w, q, trials, 31);
  check_report_shape(rep);
  CHECK(rep.trials_per_message == trials);
  CHECK(rep.mode == "ties-as-errors");
  for (std::size_t m = 0; m < cb.size(); ++m) {
    long long hits = std::llround(rep.per_message[m] * trials);
    auto [lo, hi] = wilson_interval(hits, trials);
    double half = 0.5 * (hi - lo);
    CHECK(std::abs(rep.per_message[m] - exact[m]) <= 3.0 * half);
  }

  // The reported maximum tracks the worst exact message the same way.
  double exact_max = 0.0;
  for (double p : exact) exact_max = std::max(exact_max, p);
  CHECK(std::abs(rep.max_estimate - exact_max) <=
        3.0 * 0.5 * (rep.wilson_high - rep.wilson_low) + 0.01);

  // Single message: no competitor, so never an error.
  Codebook solo;
  solo.composition = comp22();
  solo.words = {cb.words[0]};
  SimulationReport none = estimate_pe_max(solo, ch.w, q, 2000, 1);
  CHECK(none.max_estimate == 0.0);
  CHECK(none.wilson_low == 0.0);
  check_report_shape(none);
}

TEST_CASE("tie modes are ordered pathwise and reports are bit-deterministic") {
  DyadicChannel ch = DyadicChannel::make();
  Codebook cb = sample_codebook(4, 3, comp22(), 5);

  // Constant metric: every trial is an all-way tie, so the strict mode errs
  // always and the random-winner mode errs at rate (M-1)/M.
  Mat flat(2, 4);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 4; ++k) flat(j, k) = 1.0;
  const long long trials = 4000;
  SimulationReport strict = estimate_pe_max(cb, ch.w, Metric(flat), trials, 8);
  SimulationReport coin =
      estimate_pe_max(cb, ch.w, Metric(flat), trials, 8, TieMode::kRandomWinner);
  CHECK(strict.max_estimate == 1.0);
  CHECK(strict.tie_count == trials * 3);
  CHECK(coin.tie_count == trials * 3);
  CHECK(coin.mode == "random-winner");
  CHECK(coin.max_estimate <= strict.max_estimate);
  CHECK(coin.max_estimate == doctest::Approx(2.0 / 3.0).epsilon(0.05));

  // Same ordering on a real instance, message by message: the channel draws
  // agree pathwise, so softer tie handling can never add errors.
  Metric q = ch.log2_metric();
  SimulationReport s2 = estimate_pe_max(cb, ch.w, q, trials, 12);
  SimulationReport c2 = estimate_pe_max(cb, ch.w, q, trials, 12, TieMode::kRandomWinner);
  for (std::size_t m = 0; m < cb.size(); ++m)
    CHECK(c2.per_message[m] <= s2.per_message[m]);

  // Identical seeds reproduce the report bit for bit, at any thread count.
  SimulationReport again = estimate_pe_max(cb, ch.w, q, trials, 12);
  CHECK(again.per_message == s2.per_message);
  CHECK(again.wilson_low == s2.wilson_low);
  CHECK(again.wilson_high == s2.wilson_high);
  CHECK(again.tie_count == s2.tie_count);
  setenv("MMLAB_THREADS", "3", 1);
  SimulationReport threaded = estimate_pe_max(cb, ch.w, q, trials, 12);
  unsetenv("MMLAB_THREADS");
  CHECK(threaded.per_message == s2.per_message);
  CHECK(threaded.tie_count == s2.tie_count);
}

TEST_CASE("ensemble estimator agrees with exact marginalization and shows the wall") {
  TypeVector comp = comp22();
  Channel w = demo_channel();
  Metric q = demo_metric();

  // Tiny classes allow an exact average over sent word, output, and the
  // closed-form competitor marginalization.
  for (double rate : {0.25, 0.5}) {
    double exact = ensemble_pe_exact(comp, rate, w, q);
    SimulationReport rep = estimate_pe_ensemble(comp, rate, w, q, 200000, 7);
    check_report_shape(rep);
    double half = 0.5 * (rep.wilson_high - rep.wilson_low);
    CHECK(std::abs(rep.max_estimate - exact) <= 3.0 * half);
  }

  // More codewords can only hurt: same seed couples the trials pathwise.
  SimulationReport lo = estimate_pe_ensemble(comp, 0.25, w, q, 20000, 3);
  SimulationReport hi = estimate_pe_ensemble(comp, 0.5, w, q, 20000, 3);
  CHECK(lo.max_estimate <= hi.max_estimate);

  // Rate zero means a single codeword and no error.
  SimulationReport solo = estimate_pe_ensemble(comp, 0.0, w, q, 500, 1);
  CHECK(solo.max_estimate == 0.0);

  // Above the converse bound the error probability is pinned near one even
  // at practical block lengths; this is the non-vanishing regime.
  TypeVector comp200{{100, 100}, 200};
  SimulationReport wall = estimate_pe_ensemble(comp200, 0.6, w, q, 10000, 0);
  check_report_shape(wall);
  CHECK(wall.max_estimate >= 0.9);
  CHECK(wall.wilson_low >= 0.5);
  CHECK(wall.mode == "ensemble-ties-as-errors");
}

TEST_CASE("type-conflict estimates: exact enumeration, identity, full class") {
  Codebook cb = sample_codebook(4, 2, comp22(), 21);

  // Identity auxiliary channel: the output pins down the sent word, distinct
  // codewords can never collide, in either sampling mode.
  SimulationReport fixed_id = estimate_type_conflict(cb, identity2(), 400, 2);
  CHECK(fixed_id.max_estimate == 0.0);
  SimulationReport chan_id = estimate_type_conflict(cb, identity2(), 400, 2,
                                                    ConflictSampling::kChannel);
  CHECK(chan_id.max_estimate == 0.0);

  // One codeword: nobody to conflict with.
  Codebook solo;
  solo.composition = comp22();
  solo.words = {{0, 1, 0, 1}};
  CHECK(estimate_type_conflict(solo, binary_symmetric(0.25), 300, 4).max_estimate ==
        0.0);

  // Nontrivial conditional type: exact per-message values by enumerating the
  // conditional class, Monte Carlo within three Wilson intervals.
  ConditionalType cond = even_split();
  auto exact = conflict_pe_exact(cb, cond, 2);
  const long long trials = 40000;
  SimulationReport rep = estimate_type_conflict(cb, binary_symmetric(0.25), trials, 9,
                                                ConflictSampling::kFixedType, cond);
  check_report_shape(rep);
  for (std::size_t m = 0; m < cb.size(); ++m) {
    long long hits = std::llround(rep.per_message[m] * trials);
    auto [lo, hi] = wilson_interval(hits, trials);
    CHECK(std::abs(rep.per_message[m] - exact[m]) <= 3.0 * 0.5 * (hi - lo) + 1e-9);
  }

  // Whole type class as the codebook: with the even split every output column
  // mixes both letters, so a rearrangement always exists; the identity type
  // never admits one.  The explicit six-word codebook must agree exactly.
  SimulationReport full = estimate_type_conflict_full_class(
      comp22(), binary_symmetric(0.25), 600, 5, ConflictSampling::kFixedType, cond);
  CHECK(full.max_estimate == 1.0);
  Codebook whole = sample_codebook(4, 6, comp22(), 11);
  SimulationReport explicit_full = estimate_type_conflict(
      whole, binary_symmetric(0.25), 600, 5, ConflictSampling::kFixedType, cond);
  CHECK(explicit_full.max_estimate == 1.0);
  ConditionalType ident{{{2, 0}, {0, 2}}};
  SimulationReport full_id = estimate_type_conflict_full_class(
      comp22(), binary_symmetric(0.25), 600, 5, ConflictSampling::kFixedType, ident);
  CHECK(full_id.max_estimate == 0.0);

  // Large block, noisy channel, dominant conditional type: the class is
  // astronomically rich and a conflicting rearrangement is always available.
  TypeVector comp200{{100, 100}, 200};
  SimulationReport big = estimate_type_conflict_full_class(
      comp200, binary_symmetric(0.25), 2000, 3);
  CHECK(big.max_estimate >= 0.9);

  // The rounded conditional type follows largest remainders row by row.
  Mat v(2, 2);
  v(0, 0) = 0.3; v(0, 1) = 0.7; v(1, 0) = 0.6; v(1, 1) = 0.4;
  ConditionalType rc = rounded_conditional_type(Channel(v), TypeVector{{3, 2}, 5});
  CHECK(rc.counts == std::vector<std::vector<long long>>{{1, 2}, {1, 1}});
}

TEST_CASE("dominant conflict type: forced uniqueness and exhaustive agreement") {
  // Complementary codewords with the even split conflict on every draw and
  // realize one single joint type; each observation splits evenly across the
  // four (output, sent letter, other letter) cells that pair 0 with 1.
  Codebook cb;
  cb.composition = comp22();
  cb.words = {{0, 0, 1, 1}, {1, 1, 0, 0}};
  ConflictTypeResult unique = dominant_conflict_type(cb, binary_symmetric(0.25),
                                                     even_split(), 250, 17);
  REQUIRE(unique.found);
  CHECK(unique.share == 1.0);
  CHECK(unique.distinct_types == 1);
  CHECK(unique.observations == 500);
  CHECK(unique.joint.shape == std::vector<std::size_t>{2, 2, 2});
  CHECK(unique.joint.counts ==
        std::vector<long long>{0, 1, 1, 0, 0, 1, 1, 0});
  CHECK(unique.floor_share == doctest::Approx(0.5 / std::pow(5.0, 7)).epsilon(1e-12));
  CHECK(unique.share >= 1.0 / static_cast<double>(unique.distinct_types));

  // A richer codebook: the exhaustive tally over every conditional-class word
  // fixes the dominant type; Monte Carlo recovers it with a close share.
  Codebook cb3 = sample_codebook(4, 3, comp22(), 5);
  ConflictTypeTally exact = dominant_conflict_exact(cb3, even_split(), 2);
  REQUIRE(exact.observations > 0);
  ConflictTypeResult mc = dominant_conflict_type(cb3, binary_symmetric(0.25),
                                                 even_split(), 4096, 13);
  REQUIRE(mc.found);
  CHECK(mc.joint.counts == exact.dominant);
  CHECK(mc.share == doctest::Approx(exact.share).epsilon(0.08));
  CHECK(mc.share >= 1.0 / static_cast<double>(mc.distinct_types));
  CHECK(mc.distinct_types == exact.distinct);

  // No conflicts at all: identity channel type on distinct codewords.
  ConflictTypeResult none = dominant_conflict_type(cb3, identity2(),
                                                   ConditionalType{{{2, 0}, {0, 2}}},
                                                   100, 1);
  CHECK_FALSE(none.found);
  CHECK(none.observations == 0);
}

TEST_CASE("tie-or-better constant: frozen value, auto grid, degenerate paths") {
  // sigma^2 = 1 and metric range 1 by construction: both output columns of
  // the coupling condition Y to a fair coin and the metric difference is +-1.
  Mat qm(2, 2);
  qm(0, 0) = 0.0; qm(0, 1) = 1.0; qm(1, 0) = 1.0; qm(1, 1) = 0.0;
  Mat quarter(2, 2);
  quarter(0, 0) = 0.25; quarter(0, 1) = 0.25;
  quarter(1, 0) = 0.25; quarter(1, 1) = 0.25;
  Coupling fair({quarter, quarter});
  GammaResult at5 = gamma_constant(fair, Distribution::uniform(2), Metric(qm), 5.0);
  CHECK_FALSE(at5.degenerate);
  CHECK(at5.sigma_sq == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(at5.kappa == 5.0);
  // 1/200 - 2 e^{-12.5} (1 + sqrt 2 + sqrt(2 pi)/5 + 1/25), to full precision.
  CHECK(at5.gamma == doctest::Approx(0.004977971460801297).epsilon(1e-12));

  // Auto-selection returns the first grid point with a positive value.
  GammaResult autok = gamma_constant(fair, Distribution::uniform(2), Metric(qm),
                                     std::nullopt);
  CHECK(autok.gamma > 0.0);
  auto value_at = [&](double kap) {
    double ab = 2.0;  // 2 (max q - min q)
    return autok.sigma_sq / (2.0 * kap * kap * ab * ab) -
           ab * std::exp(-0.5 * kap * kap) *
               (1.0 + std::sqrt(2.0) + std::sqrt(2.0 * 3.14159265358979323846) / kap +
                1.0 / (kap * kap));
  };
  CHECK(autok.gamma == doctest::Approx(value_at(autok.kappa)).epsilon(1e-12));
  CHECK(value_at(autok.kappa - 0.1) <= 0.0);

  // The running example's coupling and metric support a positive constant:
  // the smallest positive conditional variance sits on the mixed column of
  // the first input, Var[q(1,Y) - q(0,Y)] under masses (0.5922, 0.03)/0.6222.
  GammaResult table = gamma_constant(demo_coupling(), Distribution::uniform(2),
                                     demo_metric(), std::nullopt);
  CHECK_FALSE(table.degenerate);
  double w1 = 0.03 / 0.6222;
  double d = std::log(0.5);
  double hand = w1 * d * d - (w1 * d) * (w1 * d);
  CHECK(table.sigma_sq == doctest::Approx(hand).epsilon(1e-9));
  CHECK(table.gamma > 0.0);
  auto table_value_at = [&](double kap) {
    double ab = 2.0 * (std::log(1.36) - std::log(0.5));
    return hand / (2.0 * kap * kap * ab * ab) -
           ab * std::exp(-0.5 * kap * kap) *
               (1.0 + std::sqrt(2.0) + std::sqrt(2.0 * 3.14159265358979323846) / kap +
                1.0 / (kap * kap));
  };
  double first_positive = 0.0;
  for (int i = 1; i <= 200 && first_positive == 0.0; ++i)
    if (table_value_at(0.1 * i) > 0.0) first_positive = 0.1 * i;
  CHECK(table.kappa == doctest::Approx(first_positive).epsilon(1e-9));

  // Constant metric: every difference is zero, the bound is vacuous.
  Mat flat(2, 2);
  flat(0, 0) = flat(0, 1) = flat(1, 0) = flat(1, 1) = 0.4;
  GammaResult degen = gamma_constant(fair, Distribution::uniform(2), Metric(flat),
                                     std::nullopt);
  CHECK(degen.degenerate);

  // Point-mass coupling columns carry no variance either.
  GammaResult noiseless = gamma_constant(Coupling::diagonal(identity2()),
                                         Distribution::uniform(2), Metric(qm),
                                         std::nullopt);
  CHECK(noiseless.degenerate);

  // Inputs outside the support are ignored: restricting to one letter kills
  // every metric difference.
  GammaResult pinned = gamma_constant(fair, Distribution::point_mass(2, 0),
                                      Metric(qm), std::nullopt);
  CHECK(pinned.degenerate);
}

TEST_CASE("simulation arguments are validated") {
  DyadicChannel ch = DyadicChannel::make();
  Metric q = ch.log2_metric();
  Codebook cb = sample_codebook(4, 3, comp22(), 5);

  CHECK_THROWS_AS(estimate_pe_max(cb, ch.w, q, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(estimate_pe_ensemble(comp22(), -0.1, ch.w, q, 100, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(estimate_pe_ensemble(comp22(), 0.5, demo_channel(), q, 100, 1),
                  std::invalid_argument);  // metric shape vs channel
  CHECK_THROWS_AS(
      estimate_type_conflict(cb, binary_symmetric(0.1), 100, 1,
                             ConflictSampling::kFixedType,
                             ConditionalType{{{2, 1}, {0, 2}}}),
      std::invalid_argument);  // row does not sum to the composition count
  CHECK_THROWS_AS(gamma_constant(demo_coupling(), Distribution::uniform(3),
                                 demo_metric(), std::nullopt),
                  std::invalid_argument);
  CHECK_THROWS_AS(gamma_constant(demo_coupling(), Distribution::uniform(2),
                                 demo_metric(), -1.0),
                  std::invalid_argument);

  Codebook dup;
  dup.composition = comp22();
  dup.words = {{0, 0, 1, 1}, {0, 0, 1, 1}};
  CHECK_THROWS_AS(estimate_pe_max(dup, ch.w, q, 10, 1), std::invalid_argument);
  Codebook off;
  off.composition = comp22();
  off.words = {{0, 0, 0, 1}};
  CHECK_THROWS_AS(estimate_pe_max(off, ch.w, q, 10, 1), std::invalid_argument);

  CHECK_THROWS_AS(wilson_interval(-1, 10), std::invalid_argument);
  CHECK_THROWS_AS(wilson_interval(11, 10), std::invalid_argument);
  auto [zl, zh] = wilson_interval(0, 100);
  CHECK(zl == 0.0);
  CHECK(zh > 0.0);
  auto [ol, oh] = wilson_interval(100, 100);
  CHECK(oh == 1.0);
  CHECK(ol < 1.0);
  auto [hl, hh] = wilson_interval(50, 100);
  CHECK(hl < 0.5);
  CHECK(hh > 0.5);
}
