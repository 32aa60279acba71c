#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "tempest/linalg.hpp"

namespace tempest {

/// Forward map G: R^L -> R^K with first and second derivatives.
/// jacobian(u) is the K x L matrix [dG_i/du_j]; second_derivative(u, i) is
/// the K x L matrix d_i grad G, i.e. the partial derivative of the jacobian
/// with respect to u_i. Callables must be pure.
struct ForwardModel {
  int dim_in = 0;
  int dim_out = 0;
  std::function<Vector(const Vector&)> eval;
  std::function<Matrix(const Vector&)> jacobian;
  std::function<Matrix(const Vector&, int)> second_derivative;
};

struct GaussianPrior {
  Vector mean;
  Matrix cov;
};

/// The inverse problem y = G(u) + eta, eta ~ N(0, gamma), with Gaussian
/// prior N(u0, gamma0). Noise and prior covariances are factored once at
/// construction. `linear_map` is set when G(u) = A u exactly (any offset
/// folded into y); the oracle uses it for closed-form reference moments.
class InverseProblem {
 public:
  InverseProblem(ForwardModel model, GaussianPrior prior, Vector y, Matrix gamma,
                 std::optional<Matrix> linear_map = std::nullopt)
      : model_(std::move(model)),
        prior_(std::move(prior)),
        y_(std::move(y)),
        gamma_(std::move(gamma)),
        linear_map_(std::move(linear_map)),
        noise_factor_(gamma_),
        prior_factor_(prior_.cov) {
    if (y_.size() != model_.dim_out || gamma_.rows() != model_.dim_out) {
      throw std::invalid_argument("InverseProblem: data/noise dimension mismatch");
    }
    if (prior_.mean.size() != model_.dim_in || prior_.cov.rows() != model_.dim_in) {
      throw std::invalid_argument("InverseProblem: prior dimension mismatch");
    }
    if (linear_map_ &&
        (linear_map_->rows() != model_.dim_out || linear_map_->cols() != model_.dim_in)) {
      throw std::invalid_argument("InverseProblem: linear map shape mismatch");
    }
  }

  int dim_in() const { return model_.dim_in; }
  int dim_out() const { return model_.dim_out; }
  const ForwardModel& model() const { return model_; }
  const GaussianPrior& prior() const { return prior_; }
  const Vector& data() const { return y_; }
  const Matrix& noise_cov() const { return gamma_; }
  const SpdFactor& noise_factor() const { return noise_factor_; }
  const SpdFactor& prior_factor() const { return prior_factor_; }
  const std::optional<Matrix>& linear_map() const { return linear_map_; }

 private:
  ForwardModel model_;
  GaussianPrior prior_;
  Vector y_;
  Matrix gamma_;
  std::optional<Matrix> linear_map_;
  SpdFactor noise_factor_;
  SpdFactor prior_factor_;
};

/// Least-squares misfit Phi(u; y) = 1/2 (y - G(u))^T Gamma^-1 (y - G(u)).
inline double misfit(const InverseProblem& p, const Vector& u) {
  if (u.size() != p.dim_in()) {
    throw std::invalid_argument("misfit: dimension mismatch");
  }
  const Vector r = p.data() - p.model().eval(u);
  return 0.5 * r.dot(p.noise_factor().solve(r));
}

/// log of the unnormalized tempered density,
///   -t Phi(u; y) - 1/2 (u - u0)^T Gamma0^-1 (u - u0).
/// The normalizer Z(t) is deliberately excluded; only the oracle normalizes,
/// by quadrature.
inline double log_tempered_density(const InverseProblem& p, const Vector& u, double t) {
  const Vector d = u - p.prior().mean;
  return -t * misfit(p, u) - 0.5 * d.dot(p.prior_factor().solve(d));
}

/// Score V(u, t) = t (grad G)^T Gamma^-1 (y - G(u)) - Gamma0^-1 (u - u0);
/// the gradient of log_tempered_density in u.
inline Vector score_v(const InverseProblem& p, const Vector& u, double t) {
  const Matrix jac = p.model().jacobian(u);
  const Vector r = p.data() - p.model().eval(u);
  return t * (jac.transpose() * p.noise_factor().solve(r)) -
         p.prior_factor().solve(Vector(u - p.prior().mean));
}

/// Curvature kernel W(u): column i equals (d_i grad G)^T Gamma^-1 (y - G(u)).
/// Symmetric because partial derivatives commute.
inline Matrix curvature_w(const InverseProblem& p, const Vector& u) {
  const Vector z = p.noise_factor().solve(Vector(p.data() - p.model().eval(u)));
  Matrix w(p.dim_in(), p.dim_in());
  for (int i = 0; i < p.dim_in(); ++i) {
    w.col(i) = p.model().second_derivative(u, i).transpose() * z;
  }
  return w;
}

/// Snapshot of the tempered path at a fixed time t in [0, 1].
class TemperedDensity {
 public:
  TemperedDensity(const InverseProblem& problem, double t) : problem_(&problem), t_(t) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw std::invalid_argument("TemperedDensity: t outside [0, 1]");
    }
  }

  double t() const { return t_; }
  const InverseProblem& problem() const { return *problem_; }

  double log_unnormalized(const Vector& u) const { return log_tempered_density(*problem_, u, t_); }
  Vector score(const Vector& u) const { return score_v(*problem_, u, t_); }
  Matrix curvature(const Vector& u) const { return curvature_w(*problem_, u); }

 private:
  const InverseProblem* problem_;
  double t_;
};

/// Wraps an eval-only forward map with central finite differences so
/// derivative-free models can drive the unweighted methods and tests.
/// Steps: sqrt(eps) (1 + |u_i|) for the jacobian, eps^(1/3) (1 + |u_i|) for
/// second derivatives (4-point cross stencil on eval).
inline ForwardModel with_difference_derivatives(std::function<Vector(const Vector&)> eval,
                                                int dim_in, int dim_out) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double h1 = std::sqrt(eps);
  const double h2 = std::cbrt(eps);

  auto jacobian = [eval, dim_in, dim_out, h1](const Vector& u) {
    Matrix jac(dim_out, dim_in);
    for (int j = 0; j < dim_in; ++j) {
      const double h = h1 * (1.0 + std::abs(u[j]));
      Vector up = u, dn = u;
      up[j] += h;
      dn[j] -= h;
      jac.col(j) = (eval(up) - eval(dn)) / (2.0 * h);
    }
    return jac;
  };

  auto second = [eval, dim_in, dim_out, h2](const Vector& u, int i) {
    Matrix d(dim_out, dim_in);
    const double hi = h2 * (1.0 + std::abs(u[i]));
    for (int j = 0; j < dim_in; ++j) {
      const double hj = h2 * (1.0 + std::abs(u[j]));
      Vector pp = u, pm = u, mp = u, mm = u;
      pp[i] += hi; pp[j] += hj;
      pm[i] += hi; pm[j] -= hj;
      mp[i] -= hi; mp[j] += hj;
      mm[i] -= hi; mm[j] -= hj;
      d.col(j) = (eval(pp) - eval(pm) - eval(mp) + eval(mm)) / (4.0 * hi * hj);
    }
    return d;
  };

  return ForwardModel{dim_in, dim_out, std::move(eval), std::move(jacobian), std::move(second)};
}

}  // namespace tempest
