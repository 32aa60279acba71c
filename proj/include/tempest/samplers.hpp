#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "tempest/ensemble.hpp"
#include "tempest/model.hpp"
#include "tempest/problems.hpp"
#include "tempest/random.hpp"

namespace tempest {

enum class Method { kIs, kEnsrf, kEnki, kWensrf, kWenki, kWenkf };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kIs: return "is";
    case Method::kEnsrf: return "ensrf";
    case Method::kEnki: return "enki";
    case Method::kWensrf: return "wensrf";
    case Method::kWenki: return "wenki";
    case Method::kWenkf: return "wenkf";
  }
  throw std::invalid_argument("unknown method");
}

inline std::optional<Method> parse_method(std::string_view name) {
  for (Method m : {Method::kIs, Method::kEnsrf, Method::kEnki, Method::kWensrf, Method::kWenki,
                   Method::kWenkf}) {
    if (name == to_string(m)) {
      return m;
    }
  }
  return std::nullopt;
}

/// Weighted statistics inside the weighted methods, plain 1/N averages
/// inside EnKI/EnSRF.
inline bool default_weighted_stats(Method m) {
  return m == Method::kWensrf || m == Method::kWenki || m == Method::kWenkf;
}

inline bool is_single_shot(Method m) { return m == Method::kIs || m == Method::kWenkf; }

struct SamplerConfig {
  Method method = Method::kWenki;
  int n_particles = 0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  bool stats_weighted = true;
  /// Keep every `stride`-th snapshot (plus t=0 and t=1); 0 picks a stride
  /// that caps the trajectory at about 1000 snapshots. The per-step weight
  /// variance series is always complete.
  int snapshot_stride = 1;

  static SamplerConfig defaults(Method method, int n_particles, double dt, std::uint64_t seed) {
    SamplerConfig cfg;
    cfg.method = method;
    cfg.n_particles = n_particles;
    cfg.dt = dt;
    cfg.seed = seed;
    cfg.stats_weighted = default_weighted_stats(method);
    return cfg;
  }

  /// M = round(1/dt) Euler steps; dt must divide 1 exactly rather than be
  /// silently truncated.
  int step_count() const {
    const auto m = static_cast<int>(std::llround(1.0 / dt));
    if (!(dt > 0.0 && dt <= 1.0) || std::abs(m * dt - 1.0) > 1e-12) {
      throw ConfigError("dt must lie in (0, 1] and divide 1");
    }
    return m;
  }

  void validate() const {
    if (n_particles < 1) {
      throw ConfigError("n_particles must be >= 1");
    }
    if (!is_single_shot(method)) {
      (void)step_count();
    }
  }
};

/// Ensemble trajectory over the tempering interval plus the full per-step
/// Var(Nw) series.
struct Trajectory {
  std::vector<WeightedEnsemble> snapshots;
  std::vector<double> variance_times;
  std::vector<double> variance_series;

  const WeightedEnsemble& final_ensemble() const { return snapshots.back(); }
};

namespace detail {

inline std::vector<Vector> eval_forward(const InverseProblem& p, const std::vector<Vector>& us) {
  std::vector<Vector> gs;
  gs.reserve(us.size());
  for (const Vector& u : us) {
    gs.push_back(p.model().eval(u));
  }
  return gs;
}

inline std::vector<Vector> draw_prior(const InverseProblem& p, int n, RandomSource& rng) {
  std::vector<Vector> us;
  us.reserve(n);
  const Matrix lower = p.prior_factor().lower();
  for (int i = 0; i < n; ++i) {
    us.push_back(p.prior().mean + lower * rng.standard_normal(p.dim_in()));
  }
  return us;
}

inline double squared_noise_norm(const InverseProblem& p, const Vector& v) {
  return v.dot(p.noise_factor().solve(v));
}

}  // namespace detail

/// P1 + P2, the per-particle log-weight rate of the weighted square-root
/// flow, with statistics supplied by the caller (ensemble statistics during
/// sampling, exact quadrature or Gaussian-flow statistics in the oracle):
///   P1 = 1/2 (|y - mean_g|^2_Gamma - |y - G(u)|^2_Gamma)
///        + 1/2 Tr{Cov_pp Gamma^-1},
///   P2 = -1/2 Tr{Cov_up Gamma^-1 grad G(u)}
///        - 1/2 V(u,t)^T Cov_up Gamma^-1 (G(u) + mean_g - 2y).
inline double wensrf_rate(const InverseProblem& p, const EnsembleStats& st, const Vector& u,
                          const Vector& g_u, double t) {
  const Vector& y = p.data();
  const double p1 = 0.5 * (detail::squared_noise_norm(p, y - st.mean_g) -
                           detail::squared_noise_norm(p, y - g_u)) +
                    0.5 * p.noise_factor().solve(st.cov_pp).trace();
  const Matrix jac = p.model().jacobian(u);
  // Tr{Cov_up Gamma^-1 J} contracts the L x K cross covariance with the
  // K x L solved jacobian.
  const double trace_term = st.cov_up.cwiseProduct(p.noise_factor().solve(jac).transpose()).sum();
  const Vector z = p.noise_factor().solve(Vector(g_u + st.mean_g - 2.0 * y));
  const double p2 = -0.5 * trace_term - 0.5 * score_v(p, u, t).dot(st.cov_up * z);
  return p1 + p2;
}

inline double wensrf_rate(const InverseProblem& p, const EnsembleStats& st, const Vector& u,
                          double t) {
  return wensrf_rate(p, st, u, p.model().eval(u), t);
}

/// R1 + R2 + R3, the per-particle log-weight rate of the weighted Kalman
/// inversion flow:
///   R1 = 1/2 Tr{Cov_pp Gamma^-1 - 2 (grad G)^T Gamma^-1 Cov_pu}
///        + 1/2 Tr{Cov_up Gamma^-1 Cov_pu [t (grad G)^T Gamma^-1 grad G + Gamma0^-1]},
///   R2 = 1/2 |y - mean_g|^2_Gamma - 1/2 |y - G(u) - Cov_pu V(u,t)|^2_Gamma,
///   R3 = -t/2 Tr{Cov_up Gamma^-1 Cov_pu W(u)}.
/// For linear G with exact Gaussian-flow statistics the sum vanishes.
inline double wenki_rate(const InverseProblem& p, const EnsembleStats& st, const Vector& u,
                         const Vector& g_u, double t) {
  const Vector& y = p.data();
  const Matrix jac = p.model().jacobian(u);
  const Matrix cov_pu = st.cov_up.transpose();
  const Matrix b = p.noise_factor().solve(cov_pu);  // K x L: Gamma^-1 Cov_pu
  const Matrix c = st.cov_up * b;                   // L x L: Cov_up Gamma^-1 Cov_pu
  const double tr_pp = p.noise_factor().solve(st.cov_pp).trace();
  const double tr_cross = jac.cwiseProduct(b).sum();  // Tr{(grad G)^T Gamma^-1 Cov_pu}
  const Matrix gtg = jac.transpose() * p.noise_factor().solve(jac);
  const double tr_quad = t * c.cwiseProduct(gtg.transpose()).sum() +
                         p.prior_factor().solve(c).trace();
  const double r1 = 0.5 * (tr_pp - 2.0 * tr_cross) + 0.5 * tr_quad;

  const Vector v = score_v(p, u, t);
  const Vector resid = y - g_u - cov_pu * v;
  const double r2 = 0.5 * detail::squared_noise_norm(p, y - st.mean_g) -
                    0.5 * detail::squared_noise_norm(p, resid);

  const double r3 = -0.5 * t * c.cwiseProduct(curvature_w(p, u).transpose()).sum();
  return r1 + r2 + r3;
}

inline double wenki_rate(const InverseProblem& p, const EnsembleStats& st, const Vector& u,
                         double t) {
  return wenki_rate(p, st, u, p.model().eval(u), t);
}

/// Importance sampling: N prior draws carrying log-weights -Phi(u; y).
inline WeightedEnsemble importance_sampling(const InverseProblem& p, int n, RandomSource& rng) {
  if (n < 1) {
    throw std::invalid_argument("importance_sampling: n must be >= 1");
  }
  std::vector<Vector> us = detail::draw_prior(p, n, rng);
  std::vector<double> lw(us.size());
  for (std::size_t i = 0; i < us.size(); ++i) {
    lw[i] = -misfit(p, us[i]);
  }
  return normalize_weights(WeightedEnsemble(std::move(us), std::move(lw), 1.0));
}

/// One forward-Euler step of the square-root flow:
///   u <- u - dt/2 Cov_up Gamma^-1 (G(u) + mean_g - 2y).
/// Weights are untouched.
inline WeightedEnsemble ensrf_step(const WeightedEnsemble& e, const InverseProblem& p, double dt,
                                   bool weighted_stats = false) {
  const std::vector<Vector> gs = detail::eval_forward(p, e.particles());
  const std::vector<double> w =
      weighted_stats ? e.weights() : std::vector<double>(e.particles().size(), 1.0 / e.size());
  const EnsembleStats st = stats_from_evaluations(e.particles(), gs, w);
  std::vector<Vector> out;
  out.reserve(e.particles().size());
  for (std::size_t n = 0; n < e.particles().size(); ++n) {
    const Vector z = p.noise_factor().solve(Vector(gs[n] + st.mean_g - 2.0 * p.data()));
    out.push_back(e.particles()[n] - 0.5 * dt * (st.cov_up * z));
  }
  return WeightedEnsemble(std::move(out), e.log_weights(), e.t() + dt);
}

/// One perturbed-data Kalman step: each particle sees data y + xi with
/// xi ~ N(0, Gamma/dt) and moves by the gain Cov_up (Cov_pp + Gamma/dt)^-1.
inline WeightedEnsemble enki_step(const WeightedEnsemble& e, const InverseProblem& p, double dt,
                                  RandomSource& rng, bool weighted_stats = false) {
  const std::vector<Vector> gs = detail::eval_forward(p, e.particles());
  const std::vector<double> w =
      weighted_stats ? e.weights() : std::vector<double>(e.particles().size(), 1.0 / e.size());
  const EnsembleStats st = stats_from_evaluations(e.particles(), gs, w);
  const SpdFactor gain_factor(Matrix(st.cov_pp + p.noise_cov() / dt));
  const Matrix noise_lower = Matrix(p.noise_cov() / dt).llt().matrixL();
  std::vector<Vector> out;
  out.reserve(e.particles().size());
  for (std::size_t n = 0; n < e.particles().size(); ++n) {
    const Vector perturbed = p.data() + noise_lower * rng.standard_normal(p.dim_out());
    const Vector innovation = gain_factor.solve(Vector(perturbed - gs[n]));
    out.push_back(e.particles()[n] + st.cov_up * innovation);
  }
  return WeightedEnsemble(std::move(out), e.log_weights(), e.t() + dt);
}

namespace detail {

/// A particle whose normalized weight has underflowed to exactly 0.0
/// contributes nothing to any statistic, moment, or output. The ensemble
/// gain still kicks such a particle by O(|G(u)|) per step, which for
/// superlinear forward maps compounds into overflow, so the weighted steps
/// freeze dead particles in place. The test is re-evaluated every step from
/// the current weights, so a particle rejoins if its relative weight climbs
/// back above the underflow threshold.
inline std::vector<bool> dead_particles(const WeightedEnsemble& e) {
  const std::vector<double> w = e.weights();
  std::vector<bool> dead(w.size());
  for (std::size_t n = 0; n < w.size(); ++n) {
    dead[n] = (w[n] == 0.0);
  }
  return dead;
}

}  // namespace detail

/// Square-root move with weighted statistics plus the exponential weight
/// update w <- w exp(dt (P1 + P2)), applied in log space and renormalized.
/// Rates are evaluated at the beginning of the step.
inline WeightedEnsemble wensrf_step(const WeightedEnsemble& e, const InverseProblem& p, double dt,
                                    bool weighted_stats = true) {
  const std::vector<Vector> gs = detail::eval_forward(p, e.particles());
  const std::vector<double> w =
      weighted_stats ? e.weights() : std::vector<double>(e.particles().size(), 1.0 / e.size());
  const EnsembleStats st = stats_from_evaluations(e.particles(), gs, w);
  const std::vector<bool> dead = detail::dead_particles(e);
  const double t = e.t();
  std::vector<Vector> out;
  std::vector<double> lw(e.log_weights());
  out.reserve(e.particles().size());
  for (std::size_t n = 0; n < e.particles().size(); ++n) {
    if (dead[n]) {
      out.push_back(e.particles()[n]);
      continue;
    }
    lw[n] += dt * wensrf_rate(p, st, e.particles()[n], gs[n], t);
    const Vector z = p.noise_factor().solve(Vector(gs[n] + st.mean_g - 2.0 * p.data()));
    out.push_back(e.particles()[n] - 0.5 * dt * (st.cov_up * z));
  }
  return normalize_weights(WeightedEnsemble(std::move(out), std::move(lw), t + dt));
}

/// Perturbed-data Kalman move with weighted statistics plus the exponential
/// weight update w <- w exp(dt (R1 + R2 + R3)).
inline WeightedEnsemble wenki_step(const WeightedEnsemble& e, const InverseProblem& p, double dt,
                                   RandomSource& rng, bool weighted_stats = true) {
  const std::vector<Vector> gs = detail::eval_forward(p, e.particles());
  const std::vector<double> w =
      weighted_stats ? e.weights() : std::vector<double>(e.particles().size(), 1.0 / e.size());
  const EnsembleStats st = stats_from_evaluations(e.particles(), gs, w);
  const std::vector<bool> dead = detail::dead_particles(e);
  const double t = e.t();
  std::vector<double> lw(e.log_weights());
  for (std::size_t n = 0; n < e.particles().size(); ++n) {
    if (!dead[n]) {
      lw[n] += dt * wenki_rate(p, st, e.particles()[n], gs[n], t);
    }
  }
  const SpdFactor gain_factor(Matrix(st.cov_pp + p.noise_cov() / dt));
  const Matrix noise_lower = Matrix(p.noise_cov() / dt).llt().matrixL();
  std::vector<Vector> out;
  out.reserve(e.particles().size());
  for (std::size_t n = 0; n < e.particles().size(); ++n) {
    // The draw is always consumed so the stream stays indexed by
    // (step, particle).
    const Vector perturbed = p.data() + noise_lower * rng.standard_normal(p.dim_out());
    if (dead[n]) {
      out.push_back(e.particles()[n]);
      continue;
    }
    const Vector innovation = gain_factor.solve(Vector(perturbed - gs[n]));
    out.push_back(e.particles()[n] + st.cov_up * innovation);
  }
  return normalize_weights(WeightedEnsemble(std::move(out), std::move(lw), t + dt));
}

namespace detail {

/// Single-shot Kalman proposal built entirely from the initial ensemble:
/// per-particle conditional mean u0 + Cov_up (Cov_pp + Gamma)^-1 (y - G(u0)),
/// shared conditional covariance
/// Cov_up (Cov_pp + Gamma)^-1 Gamma (Cov_pp + Gamma)^-T Cov_pu, importance
/// weights posterior / proposal.
inline WeightedEnsemble wenkf_from_initial(const InverseProblem& p, const WeightedEnsemble& e0,
                                           RandomSource& rng) {
  const std::vector<Vector> gs = eval_forward(p, e0.particles());
  const std::vector<double> w(e0.particles().size(), 1.0 / e0.size());
  const EnsembleStats st = stats_from_evaluations(e0.particles(), gs, w);
  const SpdFactor s_factor(Matrix(st.cov_pp + p.noise_cov()));
  const Matrix d = s_factor.solve(Matrix(st.cov_up.transpose()));  // K x L
  const Matrix cond_cov = d.transpose() * p.noise_cov() * d;

  // A spread-free initial ensemble (N = 1, or all particles equal) collapses
  // the proposal to a point mass; the proposal density is then a shared
  // constant and drops out of the normalized weights.
  const bool point_mass = cond_cov.isZero(0.0);
  // Otherwise a non-SPD proposal covariance means a degenerate initial
  // ensemble and is an error.
  const std::optional<SpdFactor> cov_factor =
      point_mass ? std::nullopt : std::optional<SpdFactor>(Matrix(cond_cov));
  const Matrix lower = point_mass ? Matrix(Matrix::Zero(p.dim_in(), p.dim_in()))
                                  : cov_factor->lower();

  std::vector<Vector> out;
  std::vector<double> lw(e0.particles().size());
  out.reserve(e0.particles().size());
  for (std::size_t n = 0; n < e0.particles().size(); ++n) {
    const Vector mean = e0.particles()[n] + st.cov_up * s_factor.solve(Vector(p.data() - gs[n]));
    const Vector u = mean + lower * rng.standard_normal(p.dim_in());
    lw[n] = log_tempered_density(p, u, 1.0) -
            (point_mass ? 0.0 : gaussian_log_density(u, mean, *cov_factor));
    out.push_back(u);
  }
  return normalize_weights(WeightedEnsemble(std::move(out), std::move(lw), 1.0));
}

}  // namespace detail

/// Weighted EnKF: sample the prior, then reweigh one-step Kalman proposal
/// draws against the posterior. Single-shot; dt is accepted for interface
/// symmetry and ignored.
inline WeightedEnsemble wenkf_weights(const InverseProblem& p, int n, double /*dt*/,
                                      RandomSource& rng) {
  if (n < 1) {
    throw std::invalid_argument("wenkf_weights: n must be >= 1");
  }
  const WeightedEnsemble e0 = WeightedEnsemble::uniform(detail::draw_prior(p, n, rng), 0.0);
  return detail::wenkf_from_initial(p, e0, rng);
}

/// Time-marches the configured method from the prior at t=0 to the posterior
/// at t=1, recording snapshots and the per-step weight variance. Identical
/// config and seed reproduce the trajectory bit for bit.
inline Trajectory run(const InverseProblem& problem, const SamplerConfig& cfg) {
  cfg.validate();
  RandomSource rng(cfg.seed);
  Trajectory traj;
  WeightedEnsemble e =
      WeightedEnsemble::uniform(detail::draw_prior(problem, cfg.n_particles, rng), 0.0);
  traj.snapshots.push_back(e);

  if (is_single_shot(cfg.method)) {
    if (cfg.method == Method::kIs) {
      std::vector<double> lw(e.particles().size());
      for (std::size_t i = 0; i < lw.size(); ++i) {
        lw[i] = -misfit(problem, e.particles()[i]);
      }
      e = normalize_weights(WeightedEnsemble(e.particles(), std::move(lw), 1.0));
    } else {
      e = detail::wenkf_from_initial(problem, e, rng);
    }
    traj.snapshots.push_back(e);
    traj.variance_times.push_back(1.0);
    traj.variance_series.push_back(weight_variance(e));
    return traj;
  }

  const int steps = cfg.step_count();
  int stride = cfg.snapshot_stride;
  if (stride <= 0) {
    stride = std::max(1, (steps + 999) / 1000);
  }
  for (int m = 0; m < steps; ++m) {
    try {
      switch (cfg.method) {
        case Method::kEnsrf:
          e = ensrf_step(e, problem, cfg.dt, cfg.stats_weighted);
          break;
        case Method::kEnki:
          e = enki_step(e, problem, cfg.dt, rng, cfg.stats_weighted);
          break;
        case Method::kWensrf:
          e = wensrf_step(e, problem, cfg.dt, cfg.stats_weighted);
          break;
        case Method::kWenki:
          e = wenki_step(e, problem, cfg.dt, rng, cfg.stats_weighted);
          break;
        default:
          throw ConfigError("single-shot method in step loop");
      }
    } catch (const SamplerError&) {
      throw;
    } catch (const std::exception& err) {
      throw SamplerError(m, err.what());
    }
    traj.variance_times.push_back(e.t());
    traj.variance_series.push_back(weight_variance(e));
    if ((m + 1) % stride == 0 || m + 1 == steps) {
      traj.snapshots.push_back(e);
    }
  }
  return traj;
}

}  // namespace tempest
