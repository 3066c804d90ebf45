#pragma once

#include <cstdint>
#include <vector>

#include "ddlqr/linalg.hpp"

// Robust quadratic matrix inequalities over a matrix-ellipsoidal set.
//
// The set of matrices Z (shape mz x nz) cut out by a symmetric block form N:
//   S_N = { Z : N_a + N_b^T Z + Z^T N_b + Z^T N_c Z >= 0 },
// with N_c <= 0 and ker(N_c) contained in ker(N_b^T) so that the set is an
// (possibly degenerate) ellipsoid around Z_c = -N_c^+ N_b.
//
// The robust inequality asks, for conformal blocks (P', Q'),
//   [[P'_a - Z^T Q_a Z,  P'_b^T - Z^T Q_b^T],
//    [P'_b - Q_b Z,      P'_c - Q_c       ]]  > 0   for all Z in S_N,   (QMI)
// and the certificate form replaces the quantifier by scalars
// alpha >= 0, eps > 0, eps' > 0 such that
//   [[P'_a - eps I - alpha N_a,  -alpha N_b^T,        P'_b^T ],
//    [-alpha N_b,                -Q_a - alpha N_c,    -Q_b^T ],
//    [P'_b,                      -Q_b,                P'_c - Q_c - eps' I]] >= 0.
namespace ddlqr::slemma {

struct QuadraticSet {
  MatrixXd Na;  // nz x nz, symmetric
  MatrixXd Nb;  // mz x nz
  MatrixXd Nc;  // mz x mz, symmetric, negative semidefinite

  QuadraticSet(MatrixXd Na_in, MatrixXd Nb_in, MatrixXd Nc_in);

  int nz() const { return static_cast<int>(Na.rows()); }
  int mz() const { return static_cast<int>(Nc.rows()); }

  // Membership form N_a + N_b^T Z + Z^T N_b + Z^T N_c Z (symmetric nz x nz).
  MatrixXd membership(const MatrixXd& Z) const;
  MatrixXd center() const;  // -N_c^+ N_b
};

struct QmiPair {
  MatrixXd Pa;  // nz x nz, symmetric
  MatrixXd Pb;  // ell x nz
  MatrixXd Pc;  // ell x ell, symmetric
  MatrixXd Qa;  // mz x mz, symmetric PSD
  MatrixXd Qb;  // ell x mz
  MatrixXd Qc;  // ell x ell, symmetric

  QmiPair(MatrixXd Pa_in, MatrixXd Pb_in, MatrixXd Pc_in, MatrixXd Qa_in, MatrixXd Qb_in,
          MatrixXd Qc_in);

  int nz() const { return static_cast<int>(Pa.rows()); }
  int mz() const { return static_cast<int>(Qa.rows()); }
  int ell() const { return static_cast<int>(Pc.rows()); }
};

struct QmiCertificate {
  double alpha = 0.0;
  double eps = 0.0;
  double eps_prime = 0.0;
};

// Left-hand side of (QMI) at one Z, size (nz + ell).
MatrixXd qmi_matrix(const QmiPair& pair, const MatrixXd& Z);

// Certificate matrix, size (nz + mz + ell).
MatrixXd certificate_matrix(const QuadraticSet& set, const QmiPair& pair,
                            const QmiCertificate& cert);

struct CertificateCheck {
  double margin = 0.0;  // lambda_min of certificate_matrix
  bool psd = false;     // margin >= -1e-8 * (1 + max|entry|)
};
CertificateCheck check_certificate(const QuadraticSet& set, const QmiPair& pair,
                                   const QmiCertificate& cert);

// Draws members of S_N: the center first, then alternating boundary and
// interior points along random directions (boundary found by bisection on the
// membership margin; unbounded rays are capped). Throws std::runtime_error if
// the set is empty.
std::vector<MatrixXd> sample_set_members(const QuadraticSet& set, int count, std::uint64_t seed);

struct RobustQmiReport {
  int samples = 0;
  double worst_margin = 0.0;  // min over samples of lambda_min(qmi_matrix)
  MatrixXd worst_Z;
  bool empty_set = false;  // no members; the quantified inequality is vacuous
};
RobustQmiReport verify_robust_qmi(const QuadraticSet& set, const QmiPair& pair, int samples,
                                  std::uint64_t seed);

struct CertificateSearch {
  enum class Status { kFound, kInfeasible, kSolverFailure };
  Status status = Status::kSolverFailure;
  QmiCertificate cert;         // meaningful when kFound
  double solver_margin = 0.0;  // best equilibrated-space margin from the search
  double matrix_margin = 0.0;  // lambda_min of certificate_matrix at cert
};

// Searches for (alpha, eps, eps') by maximizing the feasibility margin of the
// certificate LMI, with floors eps, eps' >= eps_floor keeping the scalars
// strictly positive. Infeasibility is certified by the optimization itself;
// solver breakdown is reported separately.
CertificateSearch find_certificate(const QuadraticSet& set, const QmiPair& pair,
                                   double eps_floor = 1e-9);

}  // namespace ddlqr::slemma
