#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "ddlqr/slemma.hpp"
#include "test_support.hpp"

using namespace ddlqr;
using namespace ddlqr::slemma;
using ddlqr::testing::make_rng;
using ddlqr::testing::random_matrix;
using ddlqr::testing::random_spd;

namespace {

// Dense scalar truth: with every block 1x1 the robust inequality over the
// interval cut out by the set form reduces to a 2x2 eigenvalue condition that
// a fine grid can check directly.
struct ScalarInstance {
  QuadraticSet set;
  QmiPair pair;
};

ScalarInstance random_scalar_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double na = std::abs(unif(rng)) + 0.05;  // keeps the set nonempty around 0
  double nb = 0.5 * unif(rng);
  double nc = -(std::abs(unif(rng)) + 0.2);
  double pa = 2.0 * unif(rng);
  double pb = unif(rng);
  double pc = 2.0 * unif(rng) + 1.0;
  double qa = std::abs(unif(rng));
  double qb = unif(rng);
  double qc = unif(rng);
  return ScalarInstance{
      QuadraticSet(MatrixXd::Constant(1, 1, na), MatrixXd::Constant(1, 1, nb),
                   MatrixXd::Constant(1, 1, nc)),
      QmiPair(MatrixXd::Constant(1, 1, pa), MatrixXd::Constant(1, 1, pb),
              MatrixXd::Constant(1, 1, pc), MatrixXd::Constant(1, 1, qa),
              MatrixXd::Constant(1, 1, qb), MatrixXd::Constant(1, 1, qc))};
}

// Grid evaluation of the quantified inequality; returns the worst margin of
// the 2x2 matrix over set members, and the largest set-form slack seen (to
// filter near-degenerate instances).
std::pair<double, double> grid_truth(const ScalarInstance& inst, int points = 4001) {
  double na = inst.set.Na(0, 0), nb = inst.set.Nb(0, 0), nc = inst.set.Nc(0, 0);
  // Set membership: na + 2 nb z + nc z^2 >= 0; roots bound the interval.
  double disc = nb * nb - na * nc;
  REQUIRE(disc >= 0.0);
  double lo = (-nb - std::sqrt(disc)) / nc;  // nc < 0 flips the usual order
  double hi = (-nb + std::sqrt(disc)) / nc;
  if (lo > hi) std::swap(lo, hi);
  double worst = 1e300;
  for (int i = 0; i < points; ++i) {
    double z = lo + (hi - lo) * i / (points - 1);
    MatrixXd Z = MatrixXd::Constant(1, 1, z);
    worst = std::min(worst, min_eigenvalue(symmetrize(qmi_matrix(inst.pair, Z))));
  }
  return {worst, hi - lo};
}

}  // namespace

TEST_CASE("quadratic set membership and center for the unit ball") {
  QuadraticSet ball(MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2),
                    -MatrixXd::Identity(2, 2));
  CHECK(ball.center().norm() == doctest::Approx(0.0));
  MatrixXd Zin = 0.5 * MatrixXd::Identity(2, 2);
  CHECK(min_eigenvalue(symmetrize(ball.membership(Zin))) >= 0.0);
  MatrixXd Zout = 2.0 * MatrixXd::Identity(2, 2);
  CHECK(min_eigenvalue(symmetrize(ball.membership(Zout))) < 0.0);
}

TEST_CASE("set construction rejects a kernel escaping the cross term") {
  // Nc has a kernel direction that Nb^T does not annihilate, so the set is
  // unbounded in a direction the ellipsoid description cannot certify.
  MatrixXd Nc = MatrixXd::Zero(2, 2);
  Nc(0, 0) = -1.0;
  MatrixXd Nb = MatrixXd::Ones(2, 2);
  CHECK_THROWS(QuadraticSet(MatrixXd::Identity(2, 2), Nb, Nc));
}

TEST_CASE("certificate holds for a generous ball instance") {
  QuadraticSet ball(MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2),
                    -MatrixXd::Identity(2, 2));
  QmiPair pair(10.0 * MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2),
               10.0 * MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2),
               MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2));
  CertificateCheck chk = check_certificate(ball, pair, QmiCertificate{1.0, 1.0, 1.0});
  CHECK(chk.psd);
  CHECK(chk.margin >= 0.0);
}

TEST_CASE("alpha zero decouples the set from the inequality") {
  // With alpha = 0 and Q zero apart from Q_c, the certificate reduces to
  // P'_a - eps I >= 0 and P'_c - Q_c - eps' I >= 0.
  QuadraticSet ball(MatrixXd::Identity(1, 1), MatrixXd::Zero(1, 1),
                    -MatrixXd::Identity(1, 1));
  QmiPair pair(MatrixXd::Constant(1, 1, 2.0), MatrixXd::Zero(1, 1),
               MatrixXd::Constant(1, 1, 2.0), MatrixXd::Zero(1, 1),
               MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, 1.0));
  CertificateCheck chk = check_certificate(ball, pair, QmiCertificate{0.0, 1e-9, 1e-9});
  CHECK(chk.psd);
  MatrixXd C = certificate_matrix(ball, pair, QmiCertificate{0.0, 1e-9, 1e-9});
  CHECK(C(0, 0) == doctest::Approx(2.0));
  CHECK(C(2, 2) == doctest::Approx(1.0));  // P'_c - Q_c = 2 - 1
}

TEST_CASE("pair construction rejects an indefinite Q_a block") {
  CHECK_THROWS(QmiPair(MatrixXd::Identity(1, 1), MatrixXd::Zero(1, 1),
                       MatrixXd::Identity(1, 1), MatrixXd::Constant(1, 1, -1.0),
                       MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1)));
}

TEST_CASE("sampled members satisfy the set inequality; boundary points appear") {
  auto rng = make_rng(51);
  MatrixXd Nb = 0.3 * random_matrix(rng, 2, 2);
  QuadraticSet set(random_spd(rng, 2), Nb, -random_spd(rng, 2));
  auto members = sample_set_members(set, 60, 7);
  REQUIRE(members.size() == 60);
  int boundary = 0;
  for (const auto& Z : members) {
    double mg = min_eigenvalue(symmetrize(set.membership(Z)));
    CHECK(mg >= -1e-7);
    if (std::abs(mg) <= 1e-5 * (1.0 + set.Na.norm())) ++boundary;
  }
  CHECK(boundary >= 15);
}

TEST_CASE("a passing certificate caps the sampled violation at min(eps, eps')") {
  auto rng = make_rng(52);
  int found = 0;
  for (int k = 0; k < 30 && found < 8; ++k) {
    QuadraticSet set(random_spd(rng, 2), 0.2 * random_matrix(rng, 2, 2),
                     -random_spd(rng, 2));
    QmiPair pair(random_spd(rng, 2, 2.0), random_matrix(rng, 2, 2),
                 random_spd(rng, 2, 2.0), 0.1 * random_spd(rng, 2, 0.0),
                 0.2 * random_matrix(rng, 2, 2), 0.1 * symmetrize(random_matrix(rng, 2, 2)));
    CertificateSearch sr = find_certificate(set, pair);
    if (sr.status != CertificateSearch::Status::kFound) continue;
    ++found;
    CertificateCheck chk = check_certificate(set, pair, sr.cert);
    CHECK(chk.psd);
    RobustQmiReport rep = verify_robust_qmi(set, pair, 2000, 11 + k);
    CHECK(rep.worst_margin >= std::min(sr.cert.eps, sr.cert.eps_prime) - 1e-6);
  }
  CHECK(found >= 8);
}

TEST_CASE("singleton set reduces the robust inequality to one evaluation") {
  // N = (0, 0, -I) admits only Z = 0.
  QuadraticSet point(MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2),
                     -MatrixXd::Identity(2, 2));
  QmiPair pair(MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2),
               3.0 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2),
               MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2));
  auto members = sample_set_members(point, 10, 3);
  for (const auto& Z : members) CHECK(Z.norm() <= 1e-7);
  RobustQmiReport rep = verify_robust_qmi(point, pair, 200, 4);
  // At Z = 0 the inequality is diag(P'_a, P'_c - Q_c) > 0 here.
  CHECK(rep.worst_margin == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("scalar certificate feasibility matches dense-grid truth") {
  auto rng = make_rng(53);
  int agree = 0, total = 0;
  while (total < 100) {
    ScalarInstance inst = random_scalar_instance(rng);
    auto [truth_margin, width] = grid_truth(inst);
    if (width < 1e-3) continue;             // degenerate interval
    if (std::abs(truth_margin) < 1e-6) continue;  // margin filter per contract
    ++total;
    CertificateSearch sr = find_certificate(inst.set, inst.pair);
    bool found = sr.status == CertificateSearch::Status::kFound;
    bool holds = truth_margin > 0.0;
    if (found == holds) ++agree;
  }
  CHECK(agree >= 99);
}

TEST_CASE("certificate search is sound against a sampled counterexample") {
  // A pair that fails the inequality at the set center cannot be certified.
  QuadraticSet ball(MatrixXd::Identity(1, 1), MatrixXd::Zero(1, 1),
                    -MatrixXd::Identity(1, 1));
  QmiPair pair(MatrixXd::Constant(1, 1, -1.0), MatrixXd::Zero(1, 1),
               MatrixXd::Constant(1, 1, 1.0), MatrixXd::Zero(1, 1),
               MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1));
  RobustQmiReport rep = verify_robust_qmi(ball, pair, 100, 5);
  REQUIRE(rep.worst_margin < 0.0);
  CertificateSearch sr = find_certificate(ball, pair);
  CHECK(sr.status == CertificateSearch::Status::kInfeasible);
}

TEST_CASE("zero set form quantifies over all of space") {
  // With N = 0 the set is every Z, so certifying requires -Q_a >= 0, which
  // fails for any Q_a with positive part.
  QuadraticSet all(MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1),
                   MatrixXd::Zero(1, 1));
  QmiPair pair(MatrixXd::Constant(1, 1, 5.0), MatrixXd::Zero(1, 1),
               MatrixXd::Constant(1, 1, 5.0), MatrixXd::Constant(1, 1, 1.0),
               MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1));
  CertificateSearch sr = find_certificate(all, pair);
  CHECK(sr.status == CertificateSearch::Status::kInfeasible);

  // The same instance with Q_a = 0 is certifiable.
  QmiPair ok(MatrixXd::Constant(1, 1, 5.0), MatrixXd::Zero(1, 1),
             MatrixXd::Constant(1, 1, 5.0), MatrixXd::Zero(1, 1),
             MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1));
  CertificateSearch sr2 = find_certificate(all, ok);
  CHECK(sr2.status == CertificateSearch::Status::kFound);
}

TEST_CASE("certificates survive inflating the left-hand blocks") {
  auto rng = make_rng(54);
  int found = 0;
  for (int k = 0; k < 20 && found < 5; ++k) {
    QuadraticSet set(random_spd(rng, 2), 0.2 * random_matrix(rng, 2, 2),
                     -random_spd(rng, 2));
    QmiPair pair(random_spd(rng, 2, 1.0), random_matrix(rng, 2, 2),
                 random_spd(rng, 2, 1.0), 0.05 * random_spd(rng, 2, 0.0),
                 0.1 * random_matrix(rng, 2, 2), MatrixXd::Zero(2, 2));
    CertificateSearch sr = find_certificate(set, pair);
    if (sr.status != CertificateSearch::Status::kFound) continue;
    ++found;
    QmiPair fat(pair.Pa + 0.5 * MatrixXd::Identity(2, 2), pair.Pb,
                pair.Pc + 0.5 * MatrixXd::Identity(2, 2), pair.Qa, pair.Qb, pair.Qc);
    CertificateSearch sr2 = find_certificate(set, fat);
    CHECK(sr2.status == CertificateSearch::Status::kFound);
  }
  CHECK(found >= 5);
}
