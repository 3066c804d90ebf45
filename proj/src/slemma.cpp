#include "ddlqr/slemma.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ddlqr/sdp.hpp"

namespace ddlqr::slemma {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double sym_tol(const MatrixXd& M) {
  return 1e-8 * (1.0 + (M.size() > 0 ? M.cwiseAbs().maxCoeff() : 0.0));
}

void require_symmetric(const MatrixXd& M, const std::string& name) {
  require(M.rows() == M.cols(), name + " must be square");
  if (M.size() == 0) return;
  require((M - M.transpose()).cwiseAbs().maxCoeff() <= sym_tol(M), name + " must be symmetric");
}

}  // namespace

QuadraticSet::QuadraticSet(MatrixXd Na_in, MatrixXd Nb_in, MatrixXd Nc_in)
    : Na(std::move(Na_in)), Nb(std::move(Nb_in)), Nc(std::move(Nc_in)) {
  require_symmetric(Na, "QuadraticSet: Na");
  require_symmetric(Nc, "QuadraticSet: Nc");
  require(Nb.rows() == Nc.rows() && Nb.cols() == Na.rows(),
          "QuadraticSet: Nb must be mz x nz");
  require(Na.allFinite() && Nb.allFinite() && Nc.allFinite(),
          "QuadraticSet: blocks must be finite");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(Nc));
  const double tol = sym_tol(Nc);
  require(es.eigenvalues().maxCoeff() <= tol, "QuadraticSet: Nc must be negative semidefinite");
  // Directions the quadratic part ignores must also be ignored by the linear
  // part, otherwise the set is unbounded with a non-centered recession.
  const double nb_scale = 1.0 + Nb.cwiseAbs().maxCoeff();
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (std::abs(es.eigenvalues()[i]) <= tol) {
      require((Nb.transpose() * es.eigenvectors().col(i)).norm() <= tol * nb_scale,
              "QuadraticSet: ker(Nc) must lie in ker(Nb^T)");
    }
  }
}

MatrixXd QuadraticSet::membership(const MatrixXd& Z) const {
  require(Z.rows() == mz() && Z.cols() == nz(), "QuadraticSet::membership: Z must be mz x nz");
  return symmetrize(Na + Nb.transpose() * Z + Z.transpose() * Nb + Z.transpose() * Nc * Z);
}

MatrixXd QuadraticSet::center() const { return -sym_pinv(symmetrize(Nc)) * Nb; }

QmiPair::QmiPair(MatrixXd Pa_in, MatrixXd Pb_in, MatrixXd Pc_in, MatrixXd Qa_in, MatrixXd Qb_in,
                 MatrixXd Qc_in)
    : Pa(std::move(Pa_in)),
      Pb(std::move(Pb_in)),
      Pc(std::move(Pc_in)),
      Qa(std::move(Qa_in)),
      Qb(std::move(Qb_in)),
      Qc(std::move(Qc_in)) {
  require_symmetric(Pa, "QmiPair: Pa");
  require_symmetric(Pc, "QmiPair: Pc");
  require_symmetric(Qa, "QmiPair: Qa");
  require_symmetric(Qc, "QmiPair: Qc");
  require(Pb.rows() == Pc.rows() && Pb.cols() == Pa.rows(), "QmiPair: Pb must be ell x nz");
  require(Qb.rows() == Pc.rows() && Qb.cols() == Qa.rows(), "QmiPair: Qb must be ell x mz");
  require(Pa.allFinite() && Pb.allFinite() && Pc.allFinite() && Qa.allFinite() &&
              Qb.allFinite() && Qc.allFinite(),
          "QmiPair: blocks must be finite");
  require(min_eigenvalue(symmetrize(Qa)) >= -sym_tol(Qa),
          "QmiPair: Qa must be positive semidefinite");
}

MatrixXd qmi_matrix(const QmiPair& pair, const MatrixXd& Z) {
  require(Z.rows() == pair.mz() && Z.cols() == pair.nz(), "qmi_matrix: Z must be mz x nz");
  const int nz = pair.nz(), ell = pair.ell();
  MatrixXd M(nz + ell, nz + ell);
  M.topLeftCorner(nz, nz) = pair.Pa - Z.transpose() * pair.Qa * Z;
  M.topRightCorner(nz, ell) = (pair.Pb - pair.Qb * Z).transpose();
  M.bottomLeftCorner(ell, nz) = pair.Pb - pair.Qb * Z;
  M.bottomRightCorner(ell, ell) = pair.Pc - pair.Qc;
  return symmetrize(M);
}

MatrixXd certificate_matrix(const QuadraticSet& set, const QmiPair& pair,
                            const QmiCertificate& cert) {
  require(set.nz() == pair.nz() && set.mz() == pair.mz(),
          "certificate_matrix: set and pair dimensions differ");
  const int nz = set.nz(), mz = set.mz(), ell = pair.ell();
  BlockMatrix M({nz, mz, ell});
  M.add_sym(0, 0, pair.Pa - cert.eps * MatrixXd::Identity(nz, nz) - cert.alpha * set.Na);
  M.add_sym(1, 0, -cert.alpha * set.Nb);
  M.add_sym(1, 1, -pair.Qa - cert.alpha * set.Nc);
  M.add_sym(2, 0, pair.Pb);
  M.add_sym(2, 1, -pair.Qb);
  M.add_sym(2, 2, pair.Pc - pair.Qc - cert.eps_prime * MatrixXd::Identity(ell, ell));
  return M.matrix();
}

CertificateCheck check_certificate(const QuadraticSet& set, const QmiPair& pair,
                                   const QmiCertificate& cert) {
  const MatrixXd M = certificate_matrix(set, pair, cert);
  CertificateCheck out;
  out.margin = min_eigenvalue(M);
  out.psd = out.margin >= -sym_tol(M);
  return out;
}

std::vector<MatrixXd> sample_set_members(const QuadraticSet& set, int count, std::uint64_t seed) {
  require(count >= 1, "sample_set_members: count must be >= 1");
  const MatrixXd Zc = set.center();
  const double margin0 = min_eigenvalue(set.membership(Zc));
  const double tol = sym_tol(set.Na) + sym_tol(set.Nc);
  if (margin0 < -tol) {
    throw std::runtime_error("sample_set_members: the set is empty (center margin " +
                             std::to_string(margin0) + ")");
  }
  // Boundary bisection keeps points at least as deep in the set as the center.
  const double accept = std::min(0.0, margin0);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double scale0 = 1.0 + Zc.norm();
  const double s_cap = 1e8 * scale0;

  std::vector<MatrixXd> out;
  out.reserve(count);
  out.push_back(Zc);
  while (static_cast<int>(out.size()) < count) {
    MatrixXd dir(set.mz(), set.nz());
    for (int r = 0; r < dir.rows(); ++r) {
      for (int c = 0; c < dir.cols(); ++c) dir(r, c) = gauss(rng);
    }
    const double dn = dir.norm();
    if (dn < 1e-12) continue;
    dir /= dn;
    auto margin_at = [&](double s) { return min_eigenvalue(set.membership(Zc + s * dir)); };
    double lo = 0.0, hi = scale0;
    while (margin_at(hi) >= accept && hi < s_cap) {
      lo = hi;
      hi *= 2.0;
    }
    double s_edge;
    if (hi >= s_cap) {
      s_edge = hi;  // unbounded ray, sample far out
    } else {
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (margin_at(mid) >= accept) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      s_edge = lo;
    }
    const bool boundary = (out.size() % 2 == 1);
    const double s = boundary ? s_edge : s_edge * unif(rng);
    out.push_back(Zc + s * dir);
  }
  return out;
}

RobustQmiReport verify_robust_qmi(const QuadraticSet& set, const QmiPair& pair, int samples,
                                  std::uint64_t seed) {
  require(set.nz() == pair.nz() && set.mz() == pair.mz(),
          "verify_robust_qmi: set and pair dimensions differ");
  RobustQmiReport rep;
  std::vector<MatrixXd> members;
  try {
    members = sample_set_members(set, samples, seed);
  } catch (const std::runtime_error&) {
    rep.empty_set = true;
    rep.worst_margin = std::numeric_limits<double>::infinity();
    return rep;
  }
  rep.samples = static_cast<int>(members.size());
  rep.worst_margin = std::numeric_limits<double>::infinity();
  for (const auto& Z : members) {
    const double margin = min_eigenvalue(qmi_matrix(pair, Z));
    if (margin < rep.worst_margin) {
      rep.worst_margin = margin;
      rep.worst_Z = Z;
    }
  }
  return rep;
}

CertificateSearch find_certificate(const QuadraticSet& set, const QmiPair& pair,
                                   double eps_floor) {
  require(set.nz() == pair.nz() && set.mz() == pair.mz(),
          "find_certificate: set and pair dimensions differ");
  require(eps_floor > 0.0, "find_certificate: eps_floor must be positive");
  // Variables y = (alpha, eps, eps'); the certificate matrix is affine in y,
  // so coefficients are recovered by probing the assembler at unit points.
  sdp::SdpProblem prob;
  prob.c = VectorXd::Zero(3);
  auto assemble_at = [&](double a, double e, double ep) {
    return certificate_matrix(set, pair, {a, e, ep});
  };
  sdp::ConstraintBlock main;
  main.F0 = assemble_at(0.0, 0.0, 0.0);
  const MatrixXd Fa = assemble_at(1.0, 0.0, 0.0) - main.F0;
  const MatrixXd Fe = assemble_at(0.0, 1.0, 0.0) - main.F0;
  const MatrixXd Fp = assemble_at(0.0, 0.0, 1.0) - main.F0;
  main.terms.push_back({0, Fa});
  main.terms.push_back({1, Fe});
  main.terms.push_back({2, Fp});
  prob.blocks.push_back(std::move(main));
  auto scalar_block = [&](double f0, int var, double coeff) {
    sdp::ConstraintBlock blk;
    blk.F0 = MatrixXd::Constant(1, 1, f0);
    blk.terms.push_back({var, MatrixXd::Constant(1, 1, coeff)});
    prob.blocks.push_back(std::move(blk));
  };
  scalar_block(0.0, 0, 1.0);         // alpha >= 0
  scalar_block(-eps_floor, 1, 1.0);  // eps >= eps_floor
  scalar_block(-eps_floor, 2, 1.0);  // eps' >= eps_floor

  sdp::SolveReport rep = sdp::max_margin_point(prob);
  CertificateSearch out;
  out.solver_margin = rep.phase1_margin;
  const bool usable = rep.status == sdp::SolveStatus::kOptimal ||
                      rep.status == sdp::SolveStatus::kInfeasible;
  if (!usable) {
    out.status = CertificateSearch::Status::kSolverFailure;
    return out;
  }
  if (rep.phase1_margin >= -1e-9) {
    out.status = CertificateSearch::Status::kFound;
    out.cert.alpha = std::max(rep.y[0], 0.0);
    out.cert.eps = std::max(rep.y[1], eps_floor);
    out.cert.eps_prime = std::max(rep.y[2], eps_floor);
    out.matrix_margin = min_eigenvalue(certificate_matrix(set, pair, out.cert));
  } else {
    out.status = CertificateSearch::Status::kInfeasible;
  }
  return out;
}

}  // namespace ddlqr::slemma
