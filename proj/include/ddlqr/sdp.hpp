#pragma once

#include <string>
#include <vector>

#include "ddlqr/linalg.hpp"

// Dense linear-matrix-inequality solver:
//
//   minimize    c^T y
//   subject to  S_b(y) = F0_b + sum_i y_i F_{b,i}  >= 0   for every block b.
//
// A primal-dual predictor-corrector interior-point method specialized for the
// small (tens of variables, block sizes in the tens) problems this library
// produces. Phase 1 minimizes the margin variable t over S_b(y) + t I >= 0,
// which is always strictly feasible; t* < 0 yields a strictly feasible start
// for phase 2, t* > 0 proves infeasibility. Blocks are equilibrated by a
// diagonal congruence and variables rescaled before solving; reported points
// are in the original scaling.
namespace ddlqr::sdp {

struct Term {
  int var = 0;
  MatrixXd F;  // symmetric coefficient of y_var in this block
};

struct ConstraintBlock {
  MatrixXd F0;
  std::vector<Term> terms;

  int dim() const { return static_cast<int>(F0.rows()); }
};

struct SdpProblem {
  VectorXd c;  // objective, size = number of variables
  std::vector<ConstraintBlock> blocks;

  int num_vars() const { return static_cast<int>(c.size()); }
  void validate() const;  // shapes, symmetry, variable indices
};

struct SolveOptions {
  double tol_gap = 1e-9;     // relative complementarity gap
  double tol_feas = 1e-7;    // relative dual residual
  int max_iter = 150;
  // Phase 1 stops early once the scaled-space margin -t exceeds this.
  double feas_margin = 1e-4;
  // Phase 1 never pushes the margin beyond this cap. A small cap keeps the
  // scaled iterates near unit size; a cap far above the problem's natural
  // margin drags variables toward the box bound and wrecks conditioning.
  double margin_cap = 1e-2;
  bool verbose = false;
};

enum class SolveStatus {
  kOptimal,         // tolerances met
  kFeasiblePoint,   // feasible iterate returned, target not fully met
  kInfeasible,      // phase 1 proved no PSD-feasible point exists
  kNumericalTrouble // stalled; best iterate returned, do not trust it
};

const char* to_string(SolveStatus s);

struct SolveReport {
  SolveStatus status = SolveStatus::kNumericalTrouble;
  VectorXd y;
  double objective = 0.0;      // c^T y at the returned point
  double phase1_margin = 0.0;  // -t* from phase 1, in equilibrated scaling
  int iterations = 0;
  double rel_gap = 0.0;
  double residual = 0.0;
  std::string message;
};

// Phase 1 only, early-stopping at opts.feas_margin.
SolveReport find_strictly_feasible(const SdpProblem& p, const SolveOptions& opts = {});

// Phase 1 run to optimality: the returned point maximizes the equilibrated
// margin (capped). Used to pick a canonical interior point.
SolveReport max_margin_point(const SdpProblem& p, const SolveOptions& opts = {});

// Phase 1 then phase 2.
SolveReport minimize(const SdpProblem& p, const SolveOptions& opts = {});

// Minimize with an objective cutoff: phase 2 stops with kFeasiblePoint as
// soon as an iterate's objective (in original units) reaches the cutoff.
// Every iterate is strictly feasible, so the early point is a certificate
// that the optimum is at most `objective_cutoff`.
SolveReport minimize(const SdpProblem& p, const SolveOptions& opts, double objective_cutoff);

}  // namespace ddlqr::sdp
