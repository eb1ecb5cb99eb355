#pragma once

#include <vector>

#include "mmlab/matrix.hpp"

namespace mmlab {

// Linear program in standard form: min c.x subject to A x = b, x >= 0.
struct LpProblem {
  Vec c;
  Mat a;
  Vec b;
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpSolution {
  LpStatus status = LpStatus::iteration_limit;
  double objective = 0.0;
  Vec x;                        // primal values, one per variable
  Vec y;                        // dual values, one per row (0 for dropped redundant rows)
  double primal_residual = 0.0; // max |Ax - b|
  double dual_violation = 0.0;  // max(0, -min reduced cost)
  int iterations = 0;
};

// Two-phase revised simplex with Bland's rule (deterministic, cycle-free).
// Sized for dense problems up to a few hundred variables.
LpSolution solve_lp(const LpProblem& p);

// Polytope {z >= 0 : A z = b}.
struct PolytopeEq {
  Mat a;
  Vec b;
};

// All vertices of {z >= 0 : A z = b} by basis enumeration; intended for small
// polytopes (a dozen variables or so).  Duplicate basic solutions are merged.
std::vector<Vec> enumerate_vertices(const PolytopeEq& poly, double tol = 1e-9);

struct GameResult {
  LpStatus status = LpStatus::iteration_limit;
  double value = 0.0;  // max over x of min over y of x.Q.y
  Vec x;               // maximizer strategy
  Vec y;               // minimizer equilibrium strategy (certifies the value)
};

// Value and optimal strategies of the bilinear zero-sum game
//   max_{x in xset} min_{y in yset} x^T payoff y
// solved as a single LP after dualizing the inner minimization.
GameResult solve_bilinear_game(const Mat& payoff, const PolytopeEq& xset,
                               const PolytopeEq& yset);

}  // namespace mmlab
