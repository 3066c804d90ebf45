#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ddlqr/plant.hpp"

// Experiment data and the set of models consistent with it. A length-T record
// of the delay recursion gives matrices with columns indexed by t = t0..t0+T-1:
//   X_plus = [x_{t0+1} ... x_{t0+T}],  X_minus = [x_{t0} ... x_{t0+T-1}],
//   U_minus_d = [u_{t0-d} ... u_{t0+T-1-d}],
// so that X_plus = A X_minus + B U_minus_d + W_minus for the generating model.
namespace ddlqr {

struct DataSet {
  int n = 0, m = 0, T = 0, d = 1, t0 = 0;
  MatrixXd X_plus;     // n x T
  MatrixXd X_minus;    // n x T
  MatrixXd U_minus_d;  // m x T
  // Ground-truth noise record, available for synthetic data only.
  std::optional<MatrixXd> W_minus;  // n x T

  void validate() const;
  MatrixXd regressor() const;  // [X_minus; U_minus_d], (n+m) x T
};

// Slices data matrices out of a recorded trajectory, treating d as the delay
// of the model class being identified (at most the recorded history depth).
DataSet build_data(const Trajectory& traj, int d);

DataSet dataset_from_json(const nlohmann::json& j);
nlohmann::json dataset_to_json(const DataSet& D);
DataSet load_dataset(const std::string& path);
void save_dataset(const DataSet& D, const std::string& path);

// Quadratic noise bound: W is admissible iff [I; W^T]^T Phi [I; W^T] >= 0,
// where Phi = [[Phi11, Phi12], [Phi12^T, Phi22]], Phi22 negative definite.
struct NoiseModel {
  MatrixXd Phi11;  // n x n, symmetric
  MatrixXd Phi12;  // n x T
  MatrixXd Phi22;  // T x T, symmetric negative definite

  NoiseModel(MatrixXd Phi11_in, MatrixXd Phi12_in, MatrixXd Phi22_in);

  int n() const { return static_cast<int>(Phi11.rows()); }
  int T() const { return static_cast<int>(Phi22.rows()); }
};

// Energy-bound instance Phi11 = sigma^2 T I, Phi12 = 0, Phi22 = -I.
NoiseModel make_sigma_phi(double sigma, int n, int T);

// Data-consistency quadratic form on models. With Z = [A^T; B^T] of shape
// (n+m) x n, the model (A, B) is consistent iff
//   f(Z) = Psi11 + Psi12 Z + Z^T Psi12^T + Z^T Psi22 Z >= 0.
struct PsiForm {
  int n = 0, m = 0;
  MatrixXd Psi11;  // n x n
  MatrixXd Psi12;  // n x (n+m)
  MatrixXd Psi22;  // (n+m) x (n+m)

  MatrixXd assembled() const;     // symmetric (2n+m) x (2n+m)
  double spectral_norm() const;   // largest |eigenvalue| of assembled()
  MatrixXd evaluate(const MatrixXd& A, const MatrixXd& B) const;  // f(Z), n x n
};

// Psi = M Phi M^T with M = [[I, X_plus], [0, -X_minus], [0, -U_minus_d]].
PsiForm compute_psi(const DataSet& D, const NoiseModel& phi);

struct ConsistencyResult {
  bool consistent = false;
  double margin = 0.0;  // lambda_min of f(Z)
};

// Default tolerance: 1e-8 * (1 + ||Psi||).
ConsistencyResult is_consistent(const MatrixXd& A, const MatrixXd& B, const PsiForm& psi,
                                std::optional<double> tol = std::nullopt);

// Minimum-norm least-squares fit of (A, B) to the data.
std::pair<MatrixXd, MatrixXd> least_squares_model(const DataSet& D);

// Rank/shape diagnostics for the consistency set.
struct DataDiagnostics {
  int regressor_rank = 0;
  bool full_row_rank = false;
  double psi22_max_eig = 0.0;  // < 0 when the set is bounded in every direction
  bool kernel_ok = false;      // ker(Psi22) contained in ker(Psi12)
  double set_margin = 0.0;     // lambda_min of the Schur complement of Psi22 in Psi
  bool set_nonempty = false;
};
DataDiagnostics diagnose(const DataSet& D, const PsiForm& psi);

// Center of the consistency ellipsoid, Z_c = -Psi22^{-1} Psi12^T, returned as
// (A, B). Coincides with the least-squares model for the energy-bound Phi.
std::pair<MatrixXd, MatrixXd> consistency_center(const PsiForm& psi);

// Draws `count` consistent models: the center, then alternating interior and
// boundary points along random directions (boundary located by bisection on
// the membership margin). Throws std::runtime_error if the set is empty.
std::vector<std::pair<MatrixXd, MatrixXd>> sample_consistent_models(const PsiForm& psi, int count,
                                                                    std::uint64_t seed);

}  // namespace ddlqr
