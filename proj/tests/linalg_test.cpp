#include <doctest.h>

#include <Eigen/Dense>
#include <random>
#include <stdexcept>

#include "ddlqr/linalg.hpp"
#include "test_support.hpp"

using namespace ddlqr;
using ddlqr::testing::make_rng;
using ddlqr::testing::random_matrix;
using ddlqr::testing::random_spd;
using ddlqr::testing::with_spectral_radius;

TEST_CASE("symmetrize averages a matrix with its transpose") {
  MatrixXd M(2, 2);
  M << 1.0, 2.0, 4.0, 3.0;
  MatrixXd S = symmetrize(M);
  CHECK(S(0, 1) == doctest::Approx(3.0));
  CHECK(S(1, 0) == doctest::Approx(3.0));
  CHECK(S(0, 0) == doctest::Approx(1.0));
  CHECK((S - S.transpose()).norm() == doctest::Approx(0.0));
}

TEST_CASE("extremal eigenvalues of a diagonal matrix") {
  MatrixXd D = Eigen::Vector3d(-2.0, 0.5, 7.0).asDiagonal();
  CHECK(min_eigenvalue(D) == doctest::Approx(-2.0));
  CHECK(max_eigenvalue(D) == doctest::Approx(7.0));
  CHECK_FALSE(is_psd(D, 1e-9));
  CHECK(is_psd(D + 2.0 * MatrixXd::Identity(3, 3), 1e-9));
}

TEST_CASE("psd_sqrt squares back to the input") {
  auto rng = make_rng(11);
  for (int k = 0; k < 10; ++k) {
    MatrixXd S = random_spd(rng, 4);
    MatrixXd R = psd_sqrt(S);
    CHECK((R * R - S).norm() <= 1e-10 * (1.0 + S.norm()));
    CHECK((R - R.transpose()).norm() <= 1e-12 * (1.0 + R.norm()));
    CHECK(min_eigenvalue(R) >= -1e-10);
  }
}

TEST_CASE("psd_sqrt clamps small negative eigenvalues") {
  MatrixXd S = MatrixXd::Zero(2, 2);
  S(0, 0) = 1.0;
  S(1, 1) = -1e-14;
  MatrixXd R = psd_sqrt(S);
  CHECK(R(0, 0) == doctest::Approx(1.0));
  CHECK(R(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("sym_pinv inverts full-rank symmetric matrices") {
  auto rng = make_rng(12);
  MatrixXd S = random_spd(rng, 5);
  MatrixXd Si = sym_pinv(S);
  CHECK((S * Si - MatrixXd::Identity(5, 5)).norm() <= 1e-8);
}

TEST_CASE("sym_pinv satisfies the Penrose identities on singular input") {
  MatrixXd S = MatrixXd::Zero(3, 3);
  S(0, 0) = 2.0;
  S(1, 1) = 5.0;  // rank 2
  MatrixXd Si = sym_pinv(S);
  CHECK((S * Si * S - S).norm() <= 1e-10);
  CHECK((Si * S * Si - Si).norm() <= 1e-10);
  CHECK(Si(2, 2) == doctest::Approx(0.0));
}

TEST_CASE("spectral_radius of a rotation-free companion block") {
  MatrixXd A(2, 2);
  A << 1.3, 0.5, 0.0, 1.2;
  CHECK(spectral_radius(A) == doctest::Approx(1.3));
  MatrixXd R(2, 2);  // eigenvalues +-0.9i
  R << 0.0, -0.9, 0.9, 0.0;
  CHECK(spectral_radius(R) == doctest::Approx(0.9));
}

TEST_CASE("solve_discrete_lyapunov matches the series sum") {
  auto rng = make_rng(13);
  for (int k = 0; k < 5; ++k) {
    MatrixXd A = with_spectral_radius(random_matrix(rng, 3, 3), 0.8);
    MatrixXd C = random_spd(rng, 3);
    MatrixXd G = solve_discrete_lyapunov(A, C);
    CHECK((A.transpose() * G * A - G + C).norm() <= 1e-9 * (1.0 + G.norm()));
    // Independent check: G = sum_k (A^T)^k C A^k.
    MatrixXd S = MatrixXd::Zero(3, 3);
    MatrixXd Ak = MatrixXd::Identity(3, 3);
    for (int i = 0; i < 400; ++i) {
      S += Ak.transpose() * C * Ak;
      Ak = A * Ak;
    }
    CHECK((G - S).norm() <= 1e-8 * (1.0 + S.norm()));
  }
}

TEST_CASE("solve_discrete_lyapunov rejects unstable dynamics") {
  MatrixXd A = 1.1 * MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(solve_discrete_lyapunov(A, MatrixXd::Identity(2, 2)), std::domain_error);
}

TEST_CASE("numerical_rank counts significant singular values") {
  MatrixXd M(3, 3);
  M << 1, 2, 3, 2, 4, 6, 1, 0, 1;  // row 2 = 2 * row 1
  CHECK(numerical_rank(M) == 2);
  CHECK(numerical_rank(MatrixXd::Zero(3, 3)) == 0);
  CHECK(numerical_rank(MatrixXd::Identity(4, 4)) == 4);
}

TEST_CASE("BlockMatrix places symmetric contributions") {
  BlockMatrix B({2, 1, 3});
  CHECK(B.dim() == 6);
  CHECK(B.blocks() == 3);
  CHECK(B.block_size(2) == 3);

  MatrixXd V(2, 3);
  V << 1, 2, 3, 4, 5, 6;
  B.add_sym(0, 2, V);
  const MatrixXd& M = B.matrix();
  CHECK(M(0, 3) == doctest::Approx(1.0));
  CHECK(M(1, 5) == doctest::Approx(6.0));
  CHECK(M(3, 0) == doctest::Approx(1.0));  // mirrored transpose
  CHECK((M - M.transpose()).norm() == doctest::Approx(0.0));

  B.add_sym(1, 1, MatrixXd::Constant(1, 1, 4.0));
  CHECK(B.matrix()(2, 2) == doctest::Approx(4.0));

  // Diagonal add is applied once, not twice.
  BlockMatrix D({2});
  D.add_sym(0, 0, MatrixXd::Identity(2, 2));
  CHECK(D.matrix()(0, 0) == doctest::Approx(1.0));
}
