#include "ddlqr/data.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ddlqr/json_io.hpp"
#include "ddlqr/slemma.hpp"

namespace ddlqr {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Z = [A^T; B^T] stacked for the consistency form; inverse of model_from_z.
MatrixXd z_from_model(const MatrixXd& A, const MatrixXd& B) {
  MatrixXd Z(A.cols() + B.cols(), A.rows());
  Z.topRows(A.cols()) = A.transpose();
  Z.bottomRows(B.cols()) = B.transpose();
  return Z;
}

std::pair<MatrixXd, MatrixXd> model_from_z(const MatrixXd& Z, int n) {
  const MatrixXd Zt = Z.transpose();
  return {Zt.leftCols(n), Zt.rightCols(Zt.cols() - n)};
}

MatrixXd evaluate_z(const PsiForm& psi, const MatrixXd& Z) {
  return symmetrize(psi.Psi11 + psi.Psi12 * Z + Z.transpose() * psi.Psi12.transpose() +
                    Z.transpose() * psi.Psi22 * Z);
}

}  // namespace

void DataSet::validate() const {
  require(n >= 1 && m >= 1 && T >= 1 && d >= 1, "DataSet: n, m, T, d must be >= 1");
  require(X_plus.rows() == n && X_plus.cols() == T, "DataSet: X_plus must be n x T");
  require(X_minus.rows() == n && X_minus.cols() == T, "DataSet: X_minus must be n x T");
  require(U_minus_d.rows() == m && U_minus_d.cols() == T, "DataSet: U_minus_d must be m x T");
  require(X_plus.allFinite() && X_minus.allFinite() && U_minus_d.allFinite(),
          "DataSet: data must be finite");
  if (W_minus) {
    require(W_minus->rows() == n && W_minus->cols() == T, "DataSet: W_minus must be n x T");
    require(W_minus->allFinite(), "DataSet: W_minus must be finite");
  }
}

MatrixXd DataSet::regressor() const {
  MatrixXd R(n + m, T);
  R.topRows(n) = X_minus;
  R.bottomRows(m) = U_minus_d;
  return R;
}

DataSet build_data(const Trajectory& traj, int d) {
  require(d >= 1, "build_data: d must be >= 1");
  require(traj.d >= d, "build_data: trajectory records only " + std::to_string(traj.d) +
                           " history inputs, need " + std::to_string(d));
  const int T = traj.horizon();
  require(T >= 1, "build_data: trajectory has no transitions");
  DataSet D;
  D.n = traj.n;
  D.m = traj.m;
  D.T = T;
  D.d = d;
  D.t0 = traj.t0;
  D.X_plus.resize(traj.n, T);
  D.X_minus.resize(traj.n, T);
  D.U_minus_d.resize(traj.m, T);
  for (int j = 0; j < T; ++j) {
    D.X_minus.col(j) = traj.states[j];
    D.X_plus.col(j) = traj.states[j + 1];
    D.U_minus_d.col(j) = traj.inputs[j + traj.d - d];  // u at time t0 + j - d
  }
  if (!traj.noise.empty()) {
    MatrixXd W(traj.n, T);
    for (int j = 0; j < T; ++j) W.col(j) = traj.noise[j];
    D.W_minus = W;
  }
  D.validate();
  return D;
}

DataSet dataset_from_json(const nlohmann::json& j) {
  DataSet D;
  D.n = int_from_json(require_field(j, "n", "dataset"), "dataset.n");
  D.m = int_from_json(require_field(j, "m", "dataset"), "dataset.m");
  D.T = int_from_json(require_field(j, "T", "dataset"), "dataset.T");
  D.d = int_from_json(require_field(j, "d", "dataset"), "dataset.d");
  D.t0 = j.contains("t0") ? int_from_json(j.at("t0"), "dataset.t0") : 0;
  D.X_plus = matrix_from_json(require_field(j, "X_plus", "dataset"), "dataset.X_plus");
  D.X_minus = matrix_from_json(require_field(j, "X_minus", "dataset"), "dataset.X_minus");
  D.U_minus_d = matrix_from_json(require_field(j, "U_minus_d", "dataset"), "dataset.U_minus_d");
  if (j.contains("W_minus") && !j.at("W_minus").is_null()) {
    D.W_minus = matrix_from_json(j.at("W_minus"), "dataset.W_minus");
  }
  try {
    D.validate();
  } catch (const std::invalid_argument& e) {
    throw JsonError("dataset", e.what());
  }
  return D;
}

nlohmann::json dataset_to_json(const DataSet& D) {
  nlohmann::json j;
  j["n"] = D.n;
  j["m"] = D.m;
  j["T"] = D.T;
  j["d"] = D.d;
  j["t0"] = D.t0;
  j["X_plus"] = to_json(D.X_plus);
  j["X_minus"] = to_json(D.X_minus);
  j["U_minus_d"] = to_json(D.U_minus_d);
  if (D.W_minus) j["W_minus"] = to_json(*D.W_minus);
  return j;
}

DataSet load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw JsonError("dataset", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw JsonError("dataset", std::string("parse error in ") + path + ": " + e.what());
  }
  return dataset_from_json(j);
}

void save_dataset(const DataSet& D, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << dataset_to_json(D).dump(2) << "\n";
}

NoiseModel::NoiseModel(MatrixXd Phi11_in, MatrixXd Phi12_in, MatrixXd Phi22_in)
    : Phi11(std::move(Phi11_in)), Phi12(std::move(Phi12_in)), Phi22(std::move(Phi22_in)) {
  require(Phi11.rows() == Phi11.cols() && Phi22.rows() == Phi22.cols(),
          "NoiseModel: Phi11, Phi22 must be square");
  require(Phi12.rows() == Phi11.rows() && Phi12.cols() == Phi22.rows(),
          "NoiseModel: Phi12 must be n x T");
  require(Phi11.allFinite() && Phi12.allFinite() && Phi22.allFinite(),
          "NoiseModel: blocks must be finite");
  const double s11 = 1e-12 * (1.0 + Phi11.cwiseAbs().maxCoeff());
  const double s22 = 1e-12 * (1.0 + Phi22.cwiseAbs().maxCoeff());
  require((Phi11 - Phi11.transpose()).cwiseAbs().maxCoeff() <= s11,
          "NoiseModel: Phi11 must be symmetric");
  require((Phi22 - Phi22.transpose()).cwiseAbs().maxCoeff() <= s22,
          "NoiseModel: Phi22 must be symmetric");
  require(max_eigenvalue(symmetrize(Phi22)) < 0.0, "NoiseModel: Phi22 must be negative definite");
}

NoiseModel make_sigma_phi(double sigma, int n, int T) {
  require(sigma >= 0.0, "make_sigma_phi: sigma must be >= 0");
  require(n >= 1 && T >= 1, "make_sigma_phi: n, T must be >= 1");
  return NoiseModel(sigma * sigma * T * MatrixXd::Identity(n, n), MatrixXd::Zero(n, T),
                    -MatrixXd::Identity(T, T));
}

MatrixXd PsiForm::assembled() const {
  MatrixXd P(2 * n + m, 2 * n + m);
  P.topLeftCorner(n, n) = Psi11;
  P.topRightCorner(n, n + m) = Psi12;
  P.bottomLeftCorner(n + m, n) = Psi12.transpose();
  P.bottomRightCorner(n + m, n + m) = Psi22;
  return symmetrize(P);
}

double PsiForm::spectral_norm() const {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(assembled(), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd PsiForm::evaluate(const MatrixXd& A, const MatrixXd& B) const {
  require(A.rows() == n && A.cols() == n, "PsiForm::evaluate: A must be n x n");
  require(B.rows() == n && B.cols() == m, "PsiForm::evaluate: B must be n x m");
  return evaluate_z(*this, z_from_model(A, B));
}

PsiForm compute_psi(const DataSet& D, const NoiseModel& phi) {
  D.validate();
  require(phi.n() == D.n && phi.T() == D.T, "compute_psi: noise model does not match data shape");
  const int n = D.n, m = D.m, T = D.T;
  MatrixXd M = MatrixXd::Zero(2 * n + m, n + T);
  M.topLeftCorner(n, n) = MatrixXd::Identity(n, n);
  M.block(0, n, n, T) = D.X_plus;
  M.block(n, n, n, T) = -D.X_minus;
  M.block(2 * n, n, m, T) = -D.U_minus_d;
  MatrixXd Phi(n + T, n + T);
  Phi.topLeftCorner(n, n) = phi.Phi11;
  Phi.topRightCorner(n, T) = phi.Phi12;
  Phi.bottomLeftCorner(T, n) = phi.Phi12.transpose();
  Phi.bottomRightCorner(T, T) = phi.Phi22;
  const MatrixXd Psi = symmetrize(M * Phi * M.transpose());
  PsiForm out;
  out.n = n;
  out.m = m;
  out.Psi11 = Psi.topLeftCorner(n, n);
  out.Psi12 = Psi.topRightCorner(n, n + m);
  out.Psi22 = Psi.bottomRightCorner(n + m, n + m);
  return out;
}

ConsistencyResult is_consistent(const MatrixXd& A, const MatrixXd& B, const PsiForm& psi,
                                std::optional<double> tol) {
  const double t = tol ? *tol : 1e-8 * (1.0 + psi.spectral_norm());
  ConsistencyResult out;
  out.margin = min_eigenvalue(psi.evaluate(A, B));
  out.consistent = out.margin >= -t;
  return out;
}

std::pair<MatrixXd, MatrixXd> least_squares_model(const DataSet& D) {
  D.validate();
  const MatrixXd R = D.regressor();
  // Minimum-norm solution of min ||X_plus - [A B] R||_F via SVD.
  Eigen::JacobiSVD<MatrixXd> svd(R.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const MatrixXd AB = svd.solve(D.X_plus.transpose()).transpose();
  return {AB.leftCols(D.n), AB.rightCols(D.m)};
}

std::pair<MatrixXd, MatrixXd> consistency_center(const PsiForm& psi) {
  const MatrixXd Zc = -sym_pinv(symmetrize(psi.Psi22)) * psi.Psi12.transpose();
  return model_from_z(Zc, psi.n);
}

DataDiagnostics diagnose(const DataSet& D, const PsiForm& psi) {
  D.validate();
  DataDiagnostics diag;
  diag.regressor_rank = numerical_rank(D.regressor());
  diag.full_row_rank = diag.regressor_rank == D.n + D.m;
  const MatrixXd Psi22 = symmetrize(psi.Psi22);
  diag.psi22_max_eig = max_eigenvalue(Psi22);
  // Kernel directions of Psi22 must be annihilated by Psi12, otherwise the
  // form is unbounded above along them and the ellipsoid description fails.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Psi22);
  const double cutoff = 1e-10 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff());
  diag.kernel_ok = true;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (std::abs(es.eigenvalues()[i]) <= cutoff) {
      if ((psi.Psi12 * es.eigenvectors().col(i)).norm() > cutoff) diag.kernel_ok = false;
    }
  }
  const auto [Ac, Bc] = consistency_center(psi);
  diag.set_margin = min_eigenvalue(psi.evaluate(Ac, Bc));
  diag.set_nonempty = diag.set_margin >= -1e-8 * (1.0 + psi.spectral_norm());
  return diag;
}

std::vector<std::pair<MatrixXd, MatrixXd>> sample_consistent_models(const PsiForm& psi, int count,
                                                                    std::uint64_t seed) {
  require(count >= 1, "sample_consistent_models: count must be >= 1");
  // The consistency form is exactly a quadratic matrix set with
  // (Na, Nb, Nc) = (Psi11, Psi12^T, Psi22); reuse its sampler.
  slemma::QuadraticSet set(symmetrize(psi.Psi11), psi.Psi12.transpose(), symmetrize(psi.Psi22));
  std::vector<MatrixXd> members = slemma::sample_set_members(set, count, seed);
  std::vector<std::pair<MatrixXd, MatrixXd>> out;
  out.reserve(members.size());
  for (const auto& Z : members) out.push_back(model_from_z(Z, psi.n));
  return out;
}

}  // namespace ddlqr
