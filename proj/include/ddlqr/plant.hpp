#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ddlqr/linalg.hpp"

// Discrete-time linear plant with an input delay of d steps,
//   x_{t+1} = A x_t + B u_{t-d} + w_t,
// and its delay-free lift over the augmented state
//   X_t = (x_t, u_{t-d}, ..., u_{t-1})  of dimension n + m d.
namespace ddlqr {

struct DelayPlant {
  MatrixXd A;  // n x n
  MatrixXd B;  // n x m
  int d = 1;   // input delay, >= 1

  DelayPlant(MatrixXd A_in, MatrixXd B_in, int d_in);

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int aug_dim() const { return n() + m() * d; }
};

// Delay-free pair (A, B) acting on the augmented state.
struct AugmentedModel {
  MatrixXd A;  // (n+md) x (n+md)
  MatrixXd B;  // (n+md) x m
  int n = 0, m = 0, d = 0;

  int dim() const { return n + m * d; }
};

AugmentedModel lift_augmented(const DelayPlant& plant);

// Lift of an arbitrary candidate model (same shapes as DelayPlant) without
// constructing a DelayPlant; used when scanning data-consistent models.
AugmentedModel lift_augmented(const MatrixXd& A, const MatrixXd& B, int d);

// Augmented state with the input history stored oldest-first:
// u_hist[0] = u_{t-d}, ..., u_hist[d-1] = u_{t-1}.
struct AugmentedState {
  VectorXd x;
  std::vector<VectorXd> u_hist;

  VectorXd stacked() const;
  static AugmentedState from_stacked(const VectorXd& X, int n, int m, int d);
};

// Stage cost X^T Q X + u^T R u with Q = blockdiag(Q0, Q1, ..., Qd).
// Q0 penalizes x, Qi penalizes history slot u_{t-d-1+i}; R must be positive
// definite, the rest positive semidefinite (tolerance 1e-8 * (1 + max|entry|)).
struct CostWeights {
  MatrixXd Q0;
  std::vector<MatrixXd> Qi;  // d blocks, each m x m
  MatrixXd R;                // m x m

  CostWeights(MatrixXd Q0_in, std::vector<MatrixXd> Qi_in, MatrixXd R_in);

  int n() const { return static_cast<int>(Q0.rows()); }
  int m() const { return static_cast<int>(R.rows()); }
  int d() const { return static_cast<int>(Qi.size()); }

  // blockdiag(Q0, Q1, ..., Qd), size (n+md) x (n+md).
  MatrixXd assemble_Q() const;
};

// Static feedback u_t = K X_t on the augmented state, K of shape m x (n+md).
struct Gain {
  MatrixXd K;
};

// A + B K for the lifted pair; validates shapes.
MatrixXd closed_loop(const AugmentedModel& model, const Gain& gain);

// Simulation record. states[k] is x_{t0+k} for k = 0..T; inputs[k] is
// u_{t0-d+k} for k = 0..T+d-1; noise (optional) stores w_{t0+k}, k = 0..T-1.
struct Trajectory {
  int n = 0, m = 0, d = 0, t0 = 0;
  std::vector<VectorXd> states;
  std::vector<VectorXd> inputs;
  std::vector<VectorXd> noise;

  int horizon() const { return static_cast<int>(states.size()) - 1; }
};

// Input source: either a precomputed sequence u_{t0}, ..., u_{t0+T-1}
// (open loop) or a feedback gain on the augmented state (closed loop).
using InputSequence = std::vector<VectorXd>;
using InputSource = std::variant<InputSequence, Gain>;

// Rolls the delay recursion forward `horizon` steps from x_{t0} = x0 and the
// d-step input history u_hist (oldest first). `noise` supplies w_t per step
// (empty = noiseless; otherwise exactly `horizon` entries). Throws
// std::runtime_error if a state stops being finite.
Trajectory simulate(const DelayPlant& plant, const VectorXd& x0,
                    const std::vector<VectorXd>& u_hist, const InputSource& input,
                    int horizon, const std::vector<VectorXd>& noise = {}, int t0 = 0);

enum class CostMethod { kLyapunovExact, kTruncatedSum };

// Infinite-horizon cost sum_{t>=0} (X_t^T Q X_t + u_t^T R u_t) under u = K X
// from X_0 = X0, on the lifted model. Throws std::domain_error("... cost
// diverges ...") when the closed loop is not Schur stable. The truncated-sum
// method stops once the geometric tail estimate falls below rel_tol * J.
double evaluate_cost(const AugmentedModel& model, const Gain& gain,
                     const CostWeights& weights, const VectorXd& X0,
                     CostMethod method = CostMethod::kLyapunovExact,
                     double rel_tol = 1e-12);

// CSV with header t,x1..xn,u1..um; one row per time t = t0-d .. t0+T.
// State cells are empty for t < t0, input cells are empty for t = t0+T.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory_csv(const std::string& path);

}  // namespace ddlqr
