#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "tempest/errors.hpp"

namespace tempest {

/// Problems live at desk scale (L, K <= 8), so vectors and matrices carry a
/// compile-time capacity of 8 and never touch the heap.
inline constexpr int kMaxDim = 8;

using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Cholesky factor of an SPD matrix. All inverse applications downstream
/// (Gamma^-1 v, gain solves, ...) go through this factor; inverses are never
/// formed explicitly except where a covariance matrix itself is the result.
class SpdFactor {
 public:
  explicit SpdFactor(const Matrix& a) : llt_(check(a)) {
    if (llt_.info() != Eigen::Success) {
      throw NotSpdError("non-positive pivot in Cholesky factorization");
    }
  }

  Eigen::Index dim() const { return llt_.matrixLLT().rows(); }

  Vector solve(const Vector& b) const { return llt_.solve(b); }
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }

  /// Lower-triangular factor L with L L^T = A.
  Matrix lower() const { return llt_.matrixL(); }

  /// log det A = 2 sum_i log L_ii.
  double log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

 private:
  static const Matrix& check(const Matrix& a) {
    if (a.rows() != a.cols()) {
      throw NotSpdError("matrix is not square");
    }
    const double scale = a.cwiseAbs().maxCoeff();
    if (!a.isApprox(a.transpose(), 1e-12) && scale > 0.0) {
      throw NotSpdError("matrix is not symmetric");
    }
    return a;
  }

  Eigen::LLT<Matrix> llt_;
};

/// Solves a x = b for SPD a.
inline Vector spd_solve(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) {
    throw std::invalid_argument("spd_solve: dimension mismatch");
  }
  return SpdFactor(a).solve(b);
}

/// Fixed-order compensated (Neumaier) summation; keeps weight sums accurate
/// to a few ulps even for large ensembles.
template <typename Range>
double compensated_sum(const Range& values) {
  double sum = 0.0;
  double comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

}  // namespace tempest
