#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "tempest/model.hpp"

namespace tempest {

enum class ProblemId {
  kExample1,
  kExample2,
  kExample3,
  kExample4,
  kExample5,
  kLinearGaussian1d,
  kLinearGaussian2d,
};

inline std::string_view to_string(ProblemId id) {
  switch (id) {
    case ProblemId::kExample1: return "example1";
    case ProblemId::kExample2: return "example2";
    case ProblemId::kExample3: return "example3";
    case ProblemId::kExample4: return "example4";
    case ProblemId::kExample5: return "example5";
    case ProblemId::kLinearGaussian1d: return "linear_gaussian_1d";
    case ProblemId::kLinearGaussian2d: return "linear_gaussian_2d";
  }
  throw std::invalid_argument("unknown problem id");
}

inline std::optional<ProblemId> parse_problem_id(std::string_view name) {
  for (ProblemId id : {ProblemId::kExample1, ProblemId::kExample2, ProblemId::kExample3,
                       ProblemId::kExample4, ProblemId::kExample5, ProblemId::kLinearGaussian1d,
                       ProblemId::kLinearGaussian2d}) {
    if (name == to_string(id)) {
      return id;
    }
  }
  return std::nullopt;
}

namespace detail {

inline ForwardModel scalar_model(std::function<double(double)> g, std::function<double(double)> dg,
                                 std::function<double(double)> ddg) {
  auto eval = [g](const Vector& u) { return Vector::Constant(1, g(u[0])); };
  auto jac = [dg](const Vector& u) { return Matrix::Constant(1, 1, dg(u[0])); };
  auto second = [ddg](const Vector& u, int) { return Matrix::Constant(1, 1, ddg(u[0])); };
  return ForwardModel{1, 1, std::move(eval), std::move(jac), std::move(second)};
}

inline GaussianPrior standard_prior(int dim) {
  return GaussianPrior{Vector::Zero(dim), Matrix::Identity(dim, dim)};
}

// Mixture-likelihood geometry behind example 4: four well-separated centers,
// each term bounded by 1/4, so phi = -log S stays above log 2. Everything is
// carried relative to the dominant center (log-sum-exp) so that phi and the
// ratios grad S / S, hess S / S stay finite arbitrarily far from the centers.
struct MixturePhi {
  double phi;
  Eigen::Vector2d grad;
  Eigen::Matrix2d hess;
};

inline MixturePhi mixture_phi(const Vector& u) {
  static constexpr std::array<double, 4> ax = {6.0, 3.0, 3.0, 0.0};
  static constexpr std::array<double, 4> bx = {3.0, 6.0, 0.0, 3.0};
  std::array<double, 4> expo;
  std::array<Eigen::Vector2d, 4> dev;
  double top = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < 4; ++c) {
    dev[c] = Eigen::Vector2d(u[0] - ax[c], u[1] - bx[c]);
    expo[c] = -dev[c].squaredNorm() / 0.2;
    top = std::max(top, expo[c]);
  }
  double s = 0.0;
  Eigen::Vector2d grad_s = Eigen::Vector2d::Zero();
  Eigen::Matrix2d hess_s = Eigen::Matrix2d::Zero();
  for (int c = 0; c < 4; ++c) {
    const double e = 0.25 * std::exp(expo[c] - top);
    s += e;
    grad_s += e * (-10.0) * dev[c];
    hess_s += e * (100.0 * dev[c] * dev[c].transpose() - 10.0 * Eigen::Matrix2d::Identity());
  }
  MixturePhi out;
  out.phi = -(top + std::log(s));
  out.grad = -grad_s / s;
  out.hess = -hess_s / s + (grad_s / s) * (grad_s / s).transpose();
  return out;
}

// Example 4 recast as a scalar forward map: G(u) = sqrt(2 phi(u)) with
// phi = -log S, y = 0, gamma = 1, so 1/2 |y - G|^2 reproduces the mixture
// misfit exactly while fitting the forward-map interface.
inline ForwardModel mixture_model() {
  auto eval = [](const Vector& u) {
    return Vector::Constant(1, std::sqrt(2.0 * mixture_phi(u).phi));
  };
  auto jac = [](const Vector& u) {
    const MixturePhi m = mixture_phi(u);
    const double g = std::sqrt(2.0 * m.phi);
    Matrix out(1, 2);
    out.row(0) = (m.grad / g).transpose();
    return out;
  };
  auto second = [](const Vector& u, int i) {
    const MixturePhi m = mixture_phi(u);
    const double g = std::sqrt(2.0 * m.phi);
    const Eigen::Matrix2d hess_g = m.hess / g - (m.grad * m.grad.transpose()) / (g * g * g);
    Matrix out(1, 2);
    out.row(0) = hess_g.row(i);
    return out;
  };
  return ForwardModel{2, 1, std::move(eval), std::move(jac), std::move(second)};
}

inline ForwardModel two_bowl_model() {
  auto eval = [](const Vector& u) {
    Vector g(2);
    const double a = u[0] - 3.0, b = u[1] - 3.0;
    g << a * a + 0.5 * b * b, 0.5 * a * a + b * b;
    return g;
  };
  auto jac = [](const Vector& u) {
    Matrix j(2, 2);
    const double a = u[0] - 3.0, b = u[1] - 3.0;
    j << 2.0 * a, b, a, 2.0 * b;
    return j;
  };
  auto second = [](const Vector&, int i) {
    Matrix d(2, 2);
    if (i == 0) {
      d << 2.0, 0.0, 1.0, 0.0;
    } else {
      d << 0.0, 1.0, 0.0, 2.0;
    }
    return d;
  };
  return ForwardModel{2, 2, std::move(eval), std::move(jac), std::move(second)};
}

inline ForwardModel identity_model(int dim) {
  return ForwardModel{dim, dim, [](const Vector& u) { return u; },
                      [dim](const Vector&) { return Matrix(Matrix::Identity(dim, dim)); },
                      [dim](const Vector&, int) { return Matrix(Matrix::Zero(dim, dim)); }};
}

}  // namespace detail

/// The paper's five example problems plus two linear-Gaussian references.
/// Examples 1-3 are scalar with prior N(0,1), y = 0, gamma = 1; examples 4-5
/// are planar with prior N(0, I). The linear problems use G(u) = u.
inline InverseProblem builtin_problem(ProblemId id) {
  using detail::scalar_model;
  switch (id) {
    case ProblemId::kExample1:
      return InverseProblem(
          scalar_model([](double u) { return 4.0 * std::cos(2.0 * (u - 3.0)) + std::sin(u - 3.0); },
                       [](double u) { return -8.0 * std::sin(2.0 * (u - 3.0)) + std::cos(u - 3.0); },
                       [](double u) { return -16.0 * std::cos(2.0 * (u - 3.0)) - std::sin(u - 3.0); }),
          detail::standard_prior(1), Vector::Zero(1), Matrix::Identity(1, 1));
    case ProblemId::kExample2:
      return InverseProblem(
          scalar_model([](double u) { return std::pow(u - 3.0, 4) - 1.0; },
                       [](double u) { return 4.0 * std::pow(u - 3.0, 3); },
                       [](double u) { return 12.0 * (u - 3.0) * (u - 3.0); }),
          detail::standard_prior(1), Vector::Zero(1), Matrix::Identity(1, 1));
    case ProblemId::kExample3:
      return InverseProblem(scalar_model([](double u) { return (u - 5.0) * (u - 5.0); },
                                         [](double u) { return 2.0 * (u - 5.0); },
                                         [](double) { return 2.0; }),
                            detail::standard_prior(1), Vector::Zero(1), Matrix::Identity(1, 1));
    case ProblemId::kExample4:
      return InverseProblem(detail::mixture_model(), detail::standard_prior(2), Vector::Zero(1),
                            Matrix::Identity(1, 1));
    case ProblemId::kExample5:
      return InverseProblem(detail::two_bowl_model(), detail::standard_prior(2), Vector::Zero(2),
                            Matrix::Identity(2, 2));
    case ProblemId::kLinearGaussian1d:
      return InverseProblem(detail::identity_model(1), detail::standard_prior(1),
                            Vector::Constant(1, 2.0), Matrix::Identity(1, 1),
                            Matrix(Matrix::Identity(1, 1)));
    case ProblemId::kLinearGaussian2d: {
      Vector y(2);
      y << 2.0, -1.0;
      Matrix gamma(2, 2);
      gamma << 0.5, 0.1, 0.1, 0.3;
      return InverseProblem(detail::identity_model(2), detail::standard_prior(2), y, gamma,
                            Matrix(Matrix::Identity(2, 2)));
    }
  }
  throw std::invalid_argument("unknown problem id");
}

/// Time steps from the experiments section: example 2 needs 1e-5 for Euler
/// stability, example 4 uses 1e-4, everything else 1e-3.
inline double default_time_step(ProblemId id) {
  switch (id) {
    case ProblemId::kExample2: return 1e-5;
    case ProblemId::kExample4: return 1e-4;
    default: return 1e-3;
  }
}

inline int default_ensemble_size(ProblemId id) {
  switch (id) {
    case ProblemId::kExample1: return 1000;
    case ProblemId::kExample2:
    case ProblemId::kExample3:
    case ProblemId::kExample4: return 2000;
    default: return 1000;
  }
}

}  // namespace tempest
