#include <catch2/catch_amalgamated.hpp>

#include "tempest/linalg.hpp"
#include "tempest/random.hpp"

using namespace tempest;

TEST_CASE("spd_solve on the identity returns the right-hand side") {
  Vector b(3);
  b << 1.0, 2.0, 3.0;
  const Vector x = spd_solve(Matrix(Matrix::Identity(3, 3)), b);
  REQUIRE(x.isApprox(b, 1e-14));
}

TEST_CASE("spd_solve solves a hand-checked 2x2 system") {
  Matrix a(2, 2);
  a << 2.0, 1.0, 1.0, 2.0;
  Vector b(2);
  b << 3.0, 3.0;
  const Vector x = spd_solve(a, b);
  REQUIRE(x[0] == Catch::Approx(1.0).margin(1e-14));
  REQUIRE(x[1] == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("spd_solve rejects indefinite input") {
  Matrix a(2, 2);
  a << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
  REQUIRE_THROWS_AS(spd_solve(a, Vector(Vector::Zero(2))), NotSpdError);
}

TEST_CASE("SpdFactor reconstructs and solves random SPD matrices") {
  RandomSource rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 6);
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        m(i, j) = rng.normal();
      }
    }
    const Matrix a = m.transpose() * m + Matrix::Identity(n, n);
    const SpdFactor f(a);

    const Matrix recon = f.lower() * f.lower().transpose();
    REQUIRE((recon - a).norm() <= 1e-10 * a.norm());

    const Vector b = rng.standard_normal(n);
    const Vector x = f.solve(b);
    REQUIRE((a * x - b).norm() <= 1e-10 * (1.0 + b.norm()));
  }
}

TEST_CASE("RandomSource streams are reproducible per seed") {
  RandomSource a(42), b(42), c(43);
  bool all_equal = true;
  bool any_differ = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.normal();
    all_equal = all_equal && (x == b.normal());
    any_differ = any_differ || (x != c.normal());
  }
  REQUIRE(all_equal);
  REQUIRE(any_differ);
}

TEST_CASE("gaussian_vector with zero covariance returns the mean exactly") {
  RandomSource rng(1);
  Vector mean(2);
  mean << -1.5, 4.0;
  const Vector out = gaussian_vector(rng, mean, Matrix(Matrix::Zero(2, 2)));
  REQUIRE(out[0] == mean[0]);
  REQUIRE(out[1] == mean[1]);
}

TEST_CASE("gaussian_vector is deterministic per seed") {
  Vector mean(3);
  mean << 0.0, 1.0, -2.0;
  Matrix cov(3, 3);
  cov << 2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5;
  RandomSource a(7), b(7);
  for (int i = 0; i < 50; ++i) {
    const Vector x = gaussian_vector(a, mean, cov);
    const Vector y = gaussian_vector(b, mean, cov);
    REQUIRE(x == y);
  }
}

TEST_CASE("gaussian_vector matches its first two moments on 1e5 draws") {
  RandomSource rng(5);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = gaussian_vector(rng, Vector(Vector::Zero(1)), Matrix(Matrix::Identity(1, 1)))[0];
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  REQUIRE(std::abs(mean) <= 4.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(std::abs(var - 1.0) <= 0.05);
}

TEST_CASE("empirical covariance of 1e5 bivariate draws matches the input") {
  Matrix cov(2, 2);
  cov << 1.5, 0.6, 0.6, 0.8;
  RandomSource rng(9);
  const int n = 100000;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Vector x = gaussian_vector(rng, Vector(Vector::Zero(2)), cov);
    mean += x;
    second += x * x.transpose();
  }
  mean /= n;
  const Eigen::Matrix2d emp = second / n - mean * mean.transpose();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      // Var of a sample covariance entry is (s_ii s_jj + s_ij^2) / n.
      const double sample_err = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n);
      REQUIRE(std::abs(emp(i, j) - cov(i, j)) <= 5.0 * sample_err);
    }
  }
}

TEST_CASE("compensated_sum is exact on an adversarial sequence") {
  std::vector<double> xs = {1e16, 1.0, -1e16, 1.0};
  REQUIRE(compensated_sum(xs) == 2.0);
}
