#include "ddlqr/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <numeric>
#include <stdexcept>

namespace ddlqr {

MatrixXd symmetrize(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }

double min_eigenvalue(const MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

bool is_psd(const MatrixXd& sym, double tol) { return min_eigenvalue(sym) >= -tol; }

MatrixXd psd_sqrt(const MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd sym_pinv(const MatrixXd& sym, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  const VectorXd& lam = es.eigenvalues();
  const double cutoff = rel_tol * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  VectorXd inv = VectorXd::Zero(lam.size());
  for (int i = 0; i < lam.size(); ++i) {
    if (std::abs(lam[i]) > cutoff) inv[i] = 1.0 / lam[i];
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

double spectral_radius(const MatrixXd& A) {
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd solve_discrete_lyapunov(const MatrixXd& A, const MatrixXd& C) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || C.rows() != n || C.cols() != n) {
    throw std::invalid_argument("solve_discrete_lyapunov: dimension mismatch");
  }
  if (spectral_radius(A) >= 1.0 - 1e-12) {
    throw std::domain_error("solve_discrete_lyapunov: spectral radius >= 1");
  }
  // vec(A^T G A) = (A^T kron A^T) vec(G), so (I - A^T kron A^T) vec(G) = vec(C).
  const MatrixXd At = A.transpose();
  MatrixXd kron(n * n, n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n) = At(i, j) * At;
    }
  }
  MatrixXd lhs = MatrixXd::Identity(n * n, n * n) - kron;
  VectorXd vecC = Eigen::Map<const VectorXd>(C.data(), n * n);
  VectorXd vecG = lhs.partialPivLu().solve(vecC);
  MatrixXd G = Eigen::Map<const MatrixXd>(vecG.data(), n, n);
  return symmetrize(G);
}

int numerical_rank(const MatrixXd& M, double rel_tol) {
  Eigen::JacobiSVD<MatrixXd> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double cutoff = rel_tol * sv[0];
  int r = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff) ++r;
  }
  return r;
}

BlockMatrix::BlockMatrix(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  offsets_.reserve(sizes_.size());
  for (int s : sizes_) {
    if (s < 0) throw std::invalid_argument("BlockMatrix: negative block size");
    offsets_.push_back(dim_);
    dim_ += s;
  }
  M_ = MatrixXd::Zero(dim_, dim_);
}

Eigen::Block<MatrixXd> BlockMatrix::block(int i, int j) {
  return M_.block(offsets_[i], offsets_[j], sizes_[i], sizes_[j]);
}

void BlockMatrix::add_sym(int i, int j, const MatrixXd& V) {
  if (V.rows() != sizes_[i] || V.cols() != sizes_[j]) {
    throw std::invalid_argument("BlockMatrix::add_sym: block shape mismatch");
  }
  block(i, j) += V;
  if (i != j) block(j, i) += V.transpose();
}

}  // namespace ddlqr
