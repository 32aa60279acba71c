#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "tempest/linalg.hpp"

namespace tempest {

/// Deterministic Gaussian source: mt19937_64 uniforms mapped through the
/// trigonometric Box-Muller transform (two uniforms -> two normals, the
/// second cached). The same seed reproduces the same stream bit for bit.
/// Single-owner: never share one source between threads; parallel runs use
/// independently seeded sources.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw in [0, 1) from the top 53 bits of the engine output.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    // 1 - u1 lies in (0, 1], so the log is finite.
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vector standard_normal(Eigen::Index n) {
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      z[i] = normal();
    }
    return z;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Draws mean + L z with z standard normal in fixed order. A covariance that
/// is exactly the zero matrix returns the mean without consuming draws.
inline Vector gaussian_vector(RandomSource& rng, const Vector& mean, const Matrix& cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("gaussian_vector: dimension mismatch");
  }
  if (cov.isZero(0.0)) {
    return mean;
  }
  SpdFactor factor(cov);
  return mean + factor.lower() * rng.standard_normal(mean.size());
}

/// log N(x; mean, cov), normalization included.
inline double gaussian_log_density(const Vector& x, const Vector& mean, const SpdFactor& factor) {
  const Vector d = x - mean;
  const double quad = d.dot(factor.solve(d));
  const double n = static_cast<double>(x.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + factor.log_det() + quad);
}

inline double gaussian_log_density(const Vector& x, const Vector& mean, const Matrix& cov) {
  return gaussian_log_density(x, mean, SpdFactor(cov));
}

}  // namespace tempest
