#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "tempest/errors.hpp"
#include "tempest/model.hpp"
#include "tempest/random.hpp"

namespace tempest {

/// N particles in R^L with weights kept in log space: every multiplicative
/// weight update is an addition on log-weights and normalization happens via
/// log-sum-exp, so rate sums spanning hundreds of nats cannot underflow.
/// A log-weight of -inf (a fully vanished particle) is legal; NaN and +inf
/// are not.
class WeightedEnsemble {
 public:
  WeightedEnsemble(std::vector<Vector> particles, std::vector<double> log_weights, double t)
      : particles_(std::move(particles)), log_weights_(std::move(log_weights)), t_(t) {
    if (particles_.empty() || particles_.size() != log_weights_.size()) {
      throw std::invalid_argument("WeightedEnsemble: need N >= 1 particles with matching weights");
    }
    if (!(t >= 0.0 && t <= 1.0 + 1e-6)) {
      throw std::invalid_argument("WeightedEnsemble: t outside [0, 1]");
    }
    const Eigen::Index dim = particles_.front().size();
    for (const Vector& u : particles_) {
      if (u.size() != dim || !u.allFinite()) {
        throw std::invalid_argument("WeightedEnsemble: non-finite or ragged particle");
      }
    }
    for (double lw : log_weights_) {
      if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
        throw std::invalid_argument("WeightedEnsemble: log-weight is NaN or +inf");
      }
    }
  }

  static WeightedEnsemble uniform(std::vector<Vector> particles, double t) {
    const std::size_t n = particles.size();
    return WeightedEnsemble(std::move(particles),
                            std::vector<double>(n, -std::log(static_cast<double>(n))), t);
  }

  int size() const { return static_cast<int>(particles_.size()); }
  int dim() const { return static_cast<int>(particles_.front().size()); }
  double t() const { return t_; }
  const std::vector<Vector>& particles() const { return particles_; }
  const std::vector<double>& log_weights() const { return log_weights_; }

  /// Normalized weights exp(logw_i - max) / sum. Uniform log-weights come
  /// back as exactly 1/N, so unweighted and weighted statistics agree
  /// bitwise on a fresh ensemble.
  std::vector<double> weights() const {
    const double top = *std::max_element(log_weights_.begin(), log_weights_.end());
    if (top == -std::numeric_limits<double>::infinity()) {
      throw AllWeightsVanishedError("all log-weights are -inf");
    }
    std::vector<double> w(log_weights_.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = std::exp(log_weights_[i] - top);
    }
    const double sum = compensated_sum(w);
    for (double& v : w) {
      v /= sum;
    }
    return w;
  }

 private:
  std::vector<Vector> particles_;
  std::vector<double> log_weights_;
  double t_;
};

/// Shifts log-weights so the weights sum to one. Two log-sum-exp passes keep
/// the linear-space sum within a few ulps of 1.
inline WeightedEnsemble normalize_weights(WeightedEnsemble e) {
  std::vector<double> lw = e.log_weights();
  for (int pass = 0; pass < 2; ++pass) {
    const double top = *std::max_element(lw.begin(), lw.end());
    if (top == -std::numeric_limits<double>::infinity()) {
      throw AllWeightsVanishedError("all log-weights are -inf");
    }
    std::vector<double> expw(lw.size());
    for (std::size_t i = 0; i < lw.size(); ++i) {
      expw[i] = std::exp(lw[i] - top);
    }
    const double shift = top + std::log(compensated_sum(expw));
    for (double& v : lw) {
      v -= shift;
    }
  }
  return WeightedEnsemble(e.particles(), std::move(lw), e.t());
}

/// Weighted empirical means and covariances of (u, G(u)).
struct EnsembleStats {
  Vector mean_u;  // L
  Vector mean_g;  // K
  Matrix cov_uu;  // L x L
  Matrix cov_up;  // L x K
  Matrix cov_pp;  // K x K
};

/// Statistics from precomputed forward evaluations. Reductions run in
/// ascending particle order.
inline EnsembleStats stats_from_evaluations(const std::vector<Vector>& us,
                                            const std::vector<Vector>& gs,
                                            const std::vector<double>& w) {
  const Eigen::Index dim_u = us.front().size();
  const Eigen::Index dim_g = gs.front().size();
  EnsembleStats st;
  st.mean_u = Vector::Zero(dim_u);
  st.mean_g = Vector::Zero(dim_g);
  for (std::size_t n = 0; n < us.size(); ++n) {
    st.mean_u += w[n] * us[n];
    st.mean_g += w[n] * gs[n];
  }
  st.cov_uu = Matrix::Zero(dim_u, dim_u);
  st.cov_up = Matrix::Zero(dim_u, dim_g);
  st.cov_pp = Matrix::Zero(dim_g, dim_g);
  for (std::size_t n = 0; n < us.size(); ++n) {
    const Vector du = us[n] - st.mean_u;
    const Vector dg = gs[n] - st.mean_g;
    st.cov_uu += w[n] * (du * du.transpose());
    st.cov_up += w[n] * (du * dg.transpose());
    st.cov_pp += w[n] * (dg * dg.transpose());
  }
  return st;
}

/// Evaluates G once per particle. weighted=false substitutes uniform 1/N
/// weights (the EnKI/EnSRF convention); weighted=true uses the ensemble's
/// normalized weights (the weighted-method convention).
inline EnsembleStats compute_stats(const WeightedEnsemble& e, const ForwardModel& model,
                                   bool weighted) {
  std::vector<Vector> gs;
  gs.reserve(e.particles().size());
  for (const Vector& u : e.particles()) {
    gs.push_back(model.eval(u));
  }
  const std::vector<double> w =
      weighted ? e.weights() : std::vector<double>(e.particles().size(), 1.0 / e.size());
  return stats_from_evaluations(e.particles(), gs, w);
}

/// Var(N w) = (1/N) sum (N w_n)^2 - 1; zero for uniform weights.
inline double weight_variance(const WeightedEnsemble& e) {
  const std::vector<double> w = e.weights();
  const double n = static_cast<double>(e.size());
  double acc = 0.0;
  for (double v : w) {
    acc += (n * v) * (n * v);
  }
  return acc / n - 1.0;
}

/// sum_n w_n |u_n|^k with the Euclidean norm.
inline double weighted_moment(const WeightedEnsemble& e, int k) {
  if (k < 1) {
    throw std::invalid_argument("weighted_moment: order must be positive");
  }
  const std::vector<double> w = e.weights();
  double acc = 0.0;
  for (int n = 0; n < e.size(); ++n) {
    acc += w[n] * std::pow(e.particles()[n].norm(), k);
  }
  return acc;
}

/// 1 / sum w_n^2, in [1, N].
inline double effective_sample_size(const WeightedEnsemble& e) {
  const std::vector<double> w = e.weights();
  double acc = 0.0;
  for (double v : w) {
    acc += v * v;
  }
  return 1.0 / acc;
}

/// Systematic resampling: one uniform stratifies [0,1) into N cells, so the
/// copy count of particle n is within 1 of N w_n. Output weights are uniform.
inline WeightedEnsemble systematic_resample(const WeightedEnsemble& e, RandomSource& rng) {
  const std::vector<double> w = e.weights();
  const int n = e.size();
  std::vector<Vector> out;
  out.reserve(n);
  const double offset = rng.uniform();
  double cumulative = w[0];
  int idx = 0;
  for (int j = 0; j < n; ++j) {
    const double pos = (offset + j) / n;
    while (pos >= cumulative && idx + 1 < n) {
      ++idx;
      cumulative += w[idx];
    }
    out.push_back(e.particles()[idx]);
  }
  return WeightedEnsemble::uniform(std::move(out), e.t());
}

}  // namespace tempest
