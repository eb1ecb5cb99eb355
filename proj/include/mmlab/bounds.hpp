#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmlab/maximality.hpp"
#include "mmlab/prob.hpp"

namespace mmlab {

struct InnerOptions {
  int starts = 32;          // multistart count; start 0 is always the diagonal
  int iterations = 150;     // projected-gradient iterations per penalty stage
  std::uint64_t seed = 0;
  double tol = 1e-8;        // membership slack tolerance for certification
};

struct InnerResult {
  double value_bits = 0.0;
  Coupling witness;                    // achieves value_bits, Y-marginal = w
  MaximalityCertificate certificate;   // membership certificate of the witness
  bool certified = true;               // always true: uncertified points are discarded
};

// Smallest certified value of I(px; Yhat-marginal) over couplings whose
// Y-marginal equals w and which pass the membership test at px.  Multistart
// projected gradient with an exact penalty on the membership slack; every
// candidate is repaired toward the diagonal until its certificate passes, so
// the result never exceeds I(px; w) + 1e-9 and never reports an uncertified
// value.
InnerResult inner_min_mi(const Distribution& px, const Channel& w, const Metric& q,
                         const InnerOptions& opts = {});

enum class BoundMode { corollary1, full_grid, prior };

struct BoundReport {
  double value_bits = 0.0;
  BoundMode mode = BoundMode::corollary1;
  bool certified = false;
  Coupling witness;
  Distribution witness_px;
  double min_slack = 0.0;           // universal-check outcome (corollary1 mode)
  Distribution worst_px;            // input attaining min_slack
  double marginal_deviation = 0.0;  // sup-norm gap between marginal_y(witness) and w
  std::vector<Distribution> grid_px;  // grid modes: evaluated inputs
  std::vector<double> grid_values;    // grid modes: per-input inner values
  std::string caveat;
};

// Capacity of the coupling's Yhat-marginal as a single-coupling bound: valid
// whenever membership holds at every input law, which is certified on a
// simplex lattice of the given step.  Requires the coupling's Y-marginal to
// match w within tol_marginal (throws beyond); any deviation is surfaced in
// the report.  A failed universal check downgrades the report to
// non-certified and records the worst input law.
BoundReport corollary1_bound(const Coupling& c, const Channel& w, const Metric& q,
                             double grid_step = 0.01, double tol_marginal = 1e-2);

// Grid maximization of inner_min_mi over input laws.  Each grid value is a
// certified upper bound at its own input; the outer maximization is
// grid-restricted, so the merged number is an estimate, not a certified
// bound, and the report says so.
BoundReport full_bound(const Channel& w, const Metric& q, double px_grid_step,
                       const InnerOptions& opts = {});

// Grid maximization of an exact convex program: per input law, minimize
// I(px; Yhat-marginal) over couplings with Y-marginal w whose mass respects
// the input-independent support sets.  Conditional gradient with an LP
// direction oracle, duality gap at most 1e-6 bits per point.  An infeasible
// support set yields +inf at that point and is flagged in the caveat.
BoundReport prior_bound(const Channel& w, const Metric& q, double px_grid_step);

}  // namespace mmlab
