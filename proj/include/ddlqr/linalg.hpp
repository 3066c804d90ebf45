#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

// Small dense linear-algebra helpers shared across the library.
namespace ddlqr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// (M + M^T) / 2. All symmetric-eigenvalue routines below expect their input
// to be symmetric up to roundoff; callers symmetrize products first.
MatrixXd symmetrize(const MatrixXd& M);

// Extremal eigenvalues of a symmetric matrix.
double min_eigenvalue(const MatrixXd& sym);
double max_eigenvalue(const MatrixXd& sym);

// min eig >= -tol.
bool is_psd(const MatrixXd& sym, double tol);

// Symmetric PSD square root; negative eigenvalues (roundoff) are clamped to 0.
MatrixXd psd_sqrt(const MatrixXd& sym);

// Moore-Penrose pseudoinverse of a symmetric matrix via eigendecomposition.
// Eigenvalues with |lambda| <= rel_tol * max|lambda| are treated as zero.
MatrixXd sym_pinv(const MatrixXd& sym, double rel_tol = 1e-12);

// Largest |eigenvalue| of a general square matrix.
double spectral_radius(const MatrixXd& A);

// Solves A^T G A - G + C = 0 for symmetric G via Kronecker vectorization.
// Requires spectral_radius(A) < 1; throws std::domain_error otherwise.
MatrixXd solve_discrete_lyapunov(const MatrixXd& A, const MatrixXd& C);

// Numerical rank with threshold rel_tol * max singular value.
int numerical_rank(const MatrixXd& M, double rel_tol = 1e-10);

// Dense symmetric matrix addressed through a block grid. Row/column block
// sizes coincide (the LMIs used here are all square and symmetric).
class BlockMatrix {
 public:
  explicit BlockMatrix(std::vector<int> sizes);

  int dim() const { return dim_; }
  int blocks() const { return static_cast<int>(sizes_.size()); }
  int block_size(int i) const { return sizes_[i]; }

  Eigen::Block<MatrixXd> block(int i, int j);

  // block(i,j) += V, and block(j,i) += V^T when i != j. Keeps the assembled
  // matrix symmetric as long as diagonal contributions are symmetric.
  void add_sym(int i, int j, const MatrixXd& V);

  const MatrixXd& matrix() const { return M_; }

 private:
  std::vector<int> sizes_;
  std::vector<int> offsets_;
  int dim_ = 0;
  MatrixXd M_;
};

}  // namespace ddlqr
