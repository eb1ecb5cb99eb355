#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmlab/prob.hpp"
#include "mmlab/types_lab.hpp"

namespace mmlab {

/// Constant-composition code: M distinct length-n words over the input
/// alphabet, all sharing one letter-count vector.
struct Codebook {
  std::vector<std::vector<std::size_t>> words;
  TypeVector composition;
  std::uint64_t seed = 0;

  std::size_t size() const { return words.size(); }
  std::size_t length() const { return static_cast<std::size_t>(composition.n); }
  std::size_t alphabet() const { return composition.counts.size(); }
};

/// What to do when several codewords attain the best score.  Counting ties
/// as errors matches the ">=" pairwise event and is the conservative default;
/// the random-winner mode resolves ties uniformly for comparison runs.
enum class TieMode { kError, kRandomWinner };

/// Outcome of a Monte Carlo error estimate.  The 95% Wilson interval belongs
/// to the message attaining the maximum and always contains its estimate.
struct SimulationReport {
  std::vector<double> per_message;
  double max_estimate = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 1.0;
  long long trials_per_message = 0;
  std::uint64_t seed = 0;
  long long tie_count = 0;  // trials whose best score was shared
  std::string mode;
};

/// 95% Wilson score interval for `successes` out of `trials` Bernoulli draws.
std::pair<double, double> wilson_interval(long long successes, long long trials);

/// Draws `m` distinct words uniformly (without replacement) from the type
/// class of `composition`.  Deterministic given the seed.  Throws when the
/// class holds fewer than `m` words or when `n` disagrees with the
/// composition.
Codebook sample_codebook(long long n, long long m, const TypeVector& composition,
                         std::uint64_t seed);

struct DecodeResult {
  std::size_t winner = 0;  // first codeword attaining the best summed score
  bool tie = false;        // at least two codewords attain it
};

/// Scores every codeword with the summed per-letter metric against y and
/// returns the argmax.  Throws on length mismatch or out-of-range letters.
DecodeResult q_decode(const Codebook& cb, const std::vector<std::size_t>& y,
                      const Metric& q);

/// Maximal error probability of the codebook over the channel under summed-
/// metric decoding, estimated per message by Monte Carlo.  An error is any
/// trial where some other codeword scores >= the sent one (kError), or where
/// a uniformly drawn best-scorer differs from it (kRandomWinner).  Draws are
/// keyed by (seed, message, trial), so parallel and serial runs agree
/// bit-exactly.
SimulationReport estimate_pe_max(const Codebook& cb, const Channel& w,
                                 const Metric& q, long long trials_per_message,
                                 std::uint64_t seed,
                                 TieMode ties = TieMode::kError);

/// Error probability of a random constant-composition code with
/// M = 2^(n * rate_bits) codewords, too many to ever materialize.  Each trial
/// draws the sent word and the channel output, then marginalizes the other
/// M - 1 uniform type-class draws exactly: the chance that one competitor
/// scores >= the sent word is tallied over joint compositions, and the trial
/// records a Bernoulli draw of 1 - (1 - p)^(M-1), computed in log space.
/// Ties count as errors; the Wilson interval is the honest binomial one.
SimulationReport estimate_pe_ensemble(const TypeVector& composition,
                                      double rate_bits, const Channel& w,
                                      const Metric& q, long long trials,
                                      std::uint64_t seed);

/// How the auxiliary output is drawn in type-conflict experiments: uniformly
/// from the sent word's conditional type class (the definition's own law), or
/// memorylessly from the auxiliary channel.
enum class ConflictSampling { kFixedType, kChannel };

/// Integer conditional type: counts[j][k] outputs k within the positions
/// carrying input letter j; row j sums to the composition count of j.
struct ConditionalType {
  std::vector<std::vector<long long>> counts;
};

/// Nearest realizable conditional type to the channel given the composition:
/// each row rounds n_j * v(j, .) by largest remainder.
ConditionalType rounded_conditional_type(const Channel& v,
                                         const TypeVector& composition);

/// Per-message probability that some other codeword shares the realized
/// conditional type of the auxiliary output.  Fixed-type mode draws the
/// output uniformly from the sent word's class of `fixed` (default: the
/// rounded image of v); channel mode draws it from v.  Same (seed, message,
/// trial) keying as estimate_pe_max.
SimulationReport estimate_type_conflict(
    const Codebook& cb, const Channel& v, long long trials_per_message,
    std::uint64_t seed, ConflictSampling mode = ConflictSampling::kFixedType,
    const std::optional<ConditionalType>& fixed = std::nullopt);

/// Type-conflict probability when the codebook is the entire type class,
/// far too large to materialize at practical n.  A conflict happens iff the
/// joint counts of (sent word, output) admit more than one arrangement of the
/// input word, which is read off the counts exactly; only (sent word, output)
/// is Monte Carlo.
SimulationReport estimate_type_conflict_full_class(
    const TypeVector& composition, const Channel& v, long long trials,
    std::uint64_t seed, ConflictSampling mode = ConflictSampling::kFixedType,
    const std::optional<ConditionalType>& fixed = std::nullopt);

/// Most frequent joint type among observed conflicts.
struct ConflictTypeResult {
  bool found = false;          // at least one conflict observed
  JointType joint;             // counts over (output, sent letter, other letter)
  double share = 0.0;          // fraction of conflict observations with `joint`
  long long observations = 0;  // conflicting (trial, other codeword) pairs
  long long distinct_types = 0;
  double floor_share = 0.0;  // reference floor 1 / (2 (n+1)^(J*J*K - 1))
};

/// Tallies the empirical joint type of (output, sent word, conflicting word)
/// over all conflict observations and returns the argmax type with its share.
ConflictTypeResult dominant_conflict_type(const Codebook& cb, const Channel& v,
                                          const ConditionalType& conditional,
                                          long long trials_per_message,
                                          std::uint64_t seed,
                                          ConflictSampling mode =
                                              ConflictSampling::kFixedType);

/// Uniform lower bound on the probability that a challenger ties or beats the
/// sent word after zero-variance positions are discarded.
struct GammaResult {
  bool degenerate = false;  // every conditional metric-difference variance is 0
  double sigma_sq = 0.0;    // smallest positive conditional variance
  double kappa = 0.0;       // supplied, or smallest grid value making gamma > 0
  double gamma = 0.0;
};

/// Evaluates sigma^2 / (2 kappa^2 (a-b)^2)
///   - |a-b| e^(-kappa^2/2) (1 + sqrt(2) + sqrt(2 pi)/kappa + 1/kappa^2)
/// with a = 2 min q, b = 2 max q and sigma^2 the smallest positive variance
/// of q(j2, Y) - q(j1, Y) under the coupling's Y | (yhat, j1) conditionals,
/// over inputs j1, j2 carried by px and yhat columns with mass.  The caller
/// must have certified the coupling maximal for the bound to mean anything.
/// When kappa is omitted, the smallest value on the 0.1 grid with a positive
/// result is selected.
GammaResult gamma_constant(const Coupling& c, const Distribution& px,
                           const Metric& q,
                           std::optional<double> kappa = std::nullopt);

}  // namespace mmlab
