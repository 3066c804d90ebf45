#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ddlqr/data.hpp"
#include "ddlqr/plant.hpp"
#include "ddlqr/sdp.hpp"
#include "ddlqr/slemma.hpp"

// Controller synthesis by semidefinite programming. Decision variables are
// P = S^{-1} (inverse Lyapunov certificate), L = K P, the multiplier alpha
// and the strictness scalars eps, eps'; gamma bounds the cost via S <= gamma I.
// The data-driven program certifies the closed-loop cost bound for every model
// consistent with the data; the model-based program does so for a known model.
namespace ddlqr {

// Lyapunov variable P over the augmented state, with the row and corner
// partitions the synthesis LMI addresses. With N = n + md and q = m(d-1):
// rows_a = first n+m rows of P, rows_b = remaining q rows;
// hat_a = P[0:n, 0:n], hat_b = P[n:N, 0:n] = [hat_b0; hat_b1] (q and m rows),
// hat_c = P[n:N, n:N] with corners hat_c00 (q), hat_c10 (m x q), hat_c11 (m).
struct PPartition {
  MatrixXd P;
  int n = 0, m = 0, d = 0;

  PPartition(MatrixXd P_in, int n_in, int m_in, int d_in);

  int dim() const { return n + m * d; }
  int q() const { return m * (d - 1); }

  MatrixXd rows_a() const { return P.topRows(n + m); }
  MatrixXd rows_b() const { return P.bottomRows(q()); }
  MatrixXd hat_a() const { return P.topLeftCorner(n, n); }
  MatrixXd hat_b() const { return P.bottomLeftCorner(m * d, n); }
  MatrixXd hat_c() const { return P.bottomRightCorner(m * d, m * d); }
  MatrixXd hat_b0() const { return P.block(n, 0, q(), n); }
  MatrixXd hat_b1() const { return P.block(n + q(), 0, m, n); }
  MatrixXd hat_c00() const { return P.block(n, n, q(), q()); }
  MatrixXd hat_c10() const { return P.block(n + q(), n, m, q()); }
  MatrixXd hat_c11() const { return P.block(n + q(), n + q(), m, m); }
};

// Data-driven synthesis LMI. Block rows/columns have sizes
// [n, n+m, q, m, N, m, N]; the last two rows are the Schur expansion of the
// cost terms L^T R L and P Q P. PSD of this matrix certifies the robust
// Lyapunov decrease over every data-consistent model.
MatrixXd assemble_dd_lmi(const PPartition& P, const MatrixXd& L, double alpha, double eps,
                         double eps_prime, const PsiForm& psi, const CostWeights& weights);

// Stabilization-only variant: the leading 5-block principal submatrix, with
// the cost couplings removed (block (5,5) is plain P).
MatrixXd assemble_stabilization_lmi(const PPartition& P, const MatrixXd& L, double alpha,
                                    double eps, double eps_prime, const PsiForm& psi);

// Model-based LMIs for a known lifted pair: the Lyapunov-decrease LMI
// (blocks [N, N, N, m]) and the bound LMI [[gamma I, I], [I, P]].
std::pair<MatrixXd, MatrixXd> assemble_model_lmis(const AugmentedModel& model,
                                                  const CostWeights& weights, double gamma,
                                                  const MatrixXd& P, const MatrixXd& L);

MatrixXd assemble_gamma_lmi(const MatrixXd& P, double gamma);

// The robust-QMI instance a synthesis point certifies: set blocks from Psi,
// inequality blocks from (P, L) through Pi = P - P Q P - L^T R L (must be
// positive definite, else throws std::domain_error).
std::pair<slemma::QuadraticSet, slemma::QmiPair> to_qmi_instance(const PPartition& P,
                                                                 const MatrixXd& L,
                                                                 const PsiForm& psi,
                                                                 const CostWeights& weights);

struct GammaMode {
  enum class Kind { kMinimize, kFixed } kind = Kind::kMinimize;
  double fixed_value = 0.0;

  static GammaMode minimize() { return {}; }
  static GammaMode fixed(double value) { return {Kind::kFixed, value}; }
};

struct SynthesisOptions {
  sdp::SolveOptions sdp;
  // Floors: P >= delta I, eps >= delta, eps' >= delta with
  // delta = delta_scale * (1 + ||Psi||) (data-driven) or delta_scale (model).
  double delta_scale = 1e-7;
  // Cross-check mode: minimize gamma by bisection on fixed-gamma feasibility
  // instead of solving the joint program.
  bool gamma_via_bisection = false;
  double bisection_rel_tol = 1e-4;
  int validation_samples = 50;
  std::uint64_t seed = 12345;
};

struct SynthesisResult {
  std::string mode;  // "dd", "model" or "stabilize"
  sdp::SolveStatus status = sdp::SolveStatus::kNumericalTrouble;
  int n = 0, m = 0, d = 0;
  std::optional<double> gamma;
  MatrixXd P, L, K;  // empty unless a point was produced
  std::optional<double> alpha, eps, eps_prime;

  struct Diagnostics {
    double main_lmi_margin = 0.0;
    double gamma_lmi_margin = 0.0;
    double p_margin = 0.0;
    double solver_gap = 0.0;
    double solver_residual = 0.0;
    double phase1_margin = 0.0;
    int iterations = 0;
    bool set_nonempty = true;
    double set_margin = 0.0;
    int regressor_rank = 0;
    std::string message;
  } diag;

  bool has_point() const { return P.size() > 0; }
};

nlohmann::json result_to_json(const SynthesisResult& r);
SynthesisResult result_from_json(const nlohmann::json& j);
SynthesisResult load_result(const std::string& path);
void save_result(const SynthesisResult& r, const std::string& path);

SynthesisResult solve_model_based(const DelayPlant& plant, const CostWeights& weights,
                                  const GammaMode& mode = {},
                                  const SynthesisOptions& opts = {});

SynthesisResult solve_data_driven(const DataSet& D, const NoiseModel& phi,
                                  const CostWeights& weights, const GammaMode& mode = {},
                                  const SynthesisOptions& opts = {});

// Feasibility-only design: the solver's returned interior point is used
// as-is, with no secondary objective; no cost bound is produced.
SynthesisResult solve_stabilization_only(const DataSet& D, const NoiseModel& phi,
                                         const SynthesisOptions& opts = {});

// Post-solve checks: LMI margins at the returned point, K P = L residual,
// the bound lambda_max(P^{-1}) <= gamma, and the Lyapunov decrease
//   Acl^T S Acl - S + Q + K^T R K < 0,  S = P^{-1},
// at the least-squares model and at sampled consistent models (boundary
// included). Margins are maxima of lambda_max over models (negative = pass).
struct ValidationReport {
  bool ok = false;
  double main_lmi_margin = 0.0;
  double gamma_lmi_margin = 0.0;
  double kp_residual = 0.0;
  double bound_slack = 0.0;        // gamma - lambda_max(P^{-1})
  double lyap_margin_ls = 0.0;     // at the least-squares model
  double lyap_margin_worst = 0.0;  // worst over sampled models
  int models_checked = 0;
  std::vector<std::string> failures;
};
ValidationReport validate_result(const SynthesisResult& r, const DataSet& D,
                                 const NoiseModel& phi, const CostWeights& weights,
                                 int samples, std::uint64_t seed);

// Lyapunov-decrease margin lambda_max(Acl^T S Acl - S + Q + K^T R K) for one
// candidate (A, B) against certificate S on the lifted closed loop.
double lyapunov_margin(const MatrixXd& A, const MatrixXd& B, int d, const Gain& gain,
                       const MatrixXd& S, const CostWeights& weights);

struct SweepPoint {
  double sigma = 0.0;
  sdp::SolveStatus status = sdp::SolveStatus::kInfeasible;
  std::optional<double> gamma;
  bool set_nonempty = false;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::optional<std::pair<double, double>> feasible_interval;  // [min, max] feasible sigma
  bool contiguous = true;   // no infeasible points inside the interval
  int monotone_violations = 0;  // gamma decreases above relative 1e-6
};

SweepResult sweep_sigma(const DataSet& D, const CostWeights& weights,
                        const std::vector<double>& sigma_grid,
                        const SynthesisOptions& opts = {});

}  // namespace ddlqr
