#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmlab/maximality.hpp"
#include "mmlab/prob.hpp"
#include "mmlab/td_metric.hpp"

namespace mmlab {

struct EspOptions {
  int starts = 24;          // multistart count; anchors are always included
  int iterations = 150;     // projected-gradient iterations per penalty stage
  std::uint64_t seed = 0;
  double tol = 1e-8;        // membership slack tolerance for certification
};

struct EspResult {
  double value_bits = kInf;            // +inf when found is false
  bool found = false;                  // a certified feasible coupling exists
  Coupling witness;                    // joint law of both decoder views given X
  MaximalityCertificate certificate;   // membership certificate of the witness
  double mi_bits = 0.0;                // witness information, <= rate when found
};

// Smallest certified divergence between the witness Y-marginal and w over
// couplings that pass the membership test at px and whose Yhat-marginal
// carries information at most rate.  Multistart projected gradient with exact
// penalties on both constraints; infeasible candidates are repaired toward a
// zero-information diagonal anchor.  Rates at or above I(px; w) return an
// exact zero with the diagonal witness; when no certified point exists the
// result is +inf and found is false.
EspResult esp(const Distribution& px, const Channel& w, const Metric& q,
              double rate_bits, const EspOptions& opts = {});

struct FiniteNAnnotation {
  long long n = 0;
  double zeta_bits = 0.0;   // exact rate shift applied to the curve
  std::string delta_note;   // symbolic second-order term; never a number
};

struct ExponentPoint {
  double rate_bits = 0.0;
  double exponent_bits = 0.0;  // +inf when not found
  int witness_id = -1;         // index into ExponentCurve::witnesses; -1 = none
  bool certified = false;
};

struct ExponentCurve {
  std::vector<ExponentPoint> points;  // rates strictly increasing
  Distribution px;
  std::string channel_id;
  std::string metric_id;
  std::vector<Coupling> witnesses;
  std::optional<FiniteNAnnotation> n_display;
};

// Exponent at evenly spaced rates in [r_min, r_max].  Rates are solved in
// descending order with warm starts chained inside contiguous blocks; a final
// repair pass reuses witnesses so certified values are non-increasing (a
// witness feasible at some rate stays feasible at every larger rate).
ExponentCurve esp_curve(const Distribution& px, const Channel& w, const Metric& q,
                        double r_min, double r_max, int steps,
                        const EspOptions& opts = {});

// Finite-blocklength display: shifts every rate down by the exact
// type-counting allowance for length n and alphabet sizes j x k, leaving all
// exponent values untouched.  The residual second-order term is recorded
// symbolically only.
ExponentCurve finite_n_annotation(const ExponentCurve& curve, long long n,
                                  std::size_t j_size, std::size_t k_size);

struct EspTdResult {
  double value_bits = kInf;
  bool found = false;
  Coupling witness;
  TdCertificate certificate;   // one-sided membership certificate of the witness
  double mi_bits = 0.0;
};

// Type-dependent variant: membership of each candidate is checked with the
// nonlinear adversary objective (declared convex in the channel), searched by
// sequential linearization around the incumbent's honest joint.  Certification
// is one-sided exactly as in is_maximal_td.
EspTdResult esp_td(const Distribution& px, const Channel& w,
                   const TypeDependentMetric& q_td, double rate_bits,
                   const EspOptions& opts = {});

}  // namespace mmlab
