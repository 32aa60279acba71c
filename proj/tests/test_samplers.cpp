#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "tempest/oracle.hpp"
#include "tempest/problems.hpp"
#include "tempest/samplers.hpp"

using namespace tempest;

namespace {

InverseProblem constant_problem(double value) {
  ForwardModel model{1, 1, [value](const Vector&) { return Vector::Constant(1, value); },
                     [](const Vector&) { return Matrix(Matrix::Zero(1, 1)); },
                     [](const Vector&, int) { return Matrix(Matrix::Zero(1, 1)); }};
  return InverseProblem(std::move(model), GaussianPrior{Vector::Zero(1), Matrix::Identity(1, 1)},
                        Vector::Zero(1), Matrix::Identity(1, 1));
}

InverseProblem identity_problem_1d(double y) {
  ForwardModel model{1, 1, [](const Vector& u) { return u; },
                     [](const Vector&) { return Matrix(Matrix::Identity(1, 1)); },
                     [](const Vector&, int) { return Matrix(Matrix::Zero(1, 1)); }};
  return InverseProblem(std::move(model), GaussianPrior{Vector::Zero(1), Matrix::Identity(1, 1)},
                        Vector::Constant(1, y), Matrix::Identity(1, 1),
                        Matrix(Matrix::Identity(1, 1)));
}

WeightedEnsemble constant_ensemble(double value, int n) {
  return WeightedEnsemble::uniform(std::vector<Vector>(n, Vector::Constant(1, value)), 0.3);
}

}  // namespace

TEST_CASE("importance sampling: constant likelihood gives uniform weights") {
  const InverseProblem p = constant_problem(3.7);
  RandomSource rng(1);
  const WeightedEnsemble e = importance_sampling(p, 50, rng);
  for (double w : e.weights()) {
    REQUIRE(w == Catch::Approx(1.0 / 50).margin(1e-15));
  }
  REQUIRE(e.t() == 1.0);
}

TEST_CASE("importance sampling weights equal exp(-Phi) up to normalization") {
  const InverseProblem p = builtin_problem(ProblemId::kExample3);
  RandomSource rng(2);
  const WeightedEnsemble e = importance_sampling(p, 5, rng);
  for (int i = 1; i < e.size(); ++i) {
    const double expected = -(misfit(p, e.particles()[i]) - misfit(p, e.particles()[0]));
    REQUIRE(e.log_weights()[i] - e.log_weights()[0] == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("forced particles at u=5 and u=3 carry weight ratio e^8") {
  const InverseProblem p = builtin_problem(ProblemId::kExample3);
  std::vector<Vector> us = {Vector::Constant(1, 5.0), Vector::Constant(1, 3.0)};
  std::vector<double> lw = {-misfit(p, us[0]), -misfit(p, us[1])};
  const WeightedEnsemble e = normalize_weights(WeightedEnsemble(std::move(us), std::move(lw), 1.0));
  REQUIRE(e.weights()[0] / e.weights()[1] == Catch::Approx(std::exp(8.0)).epsilon(1e-10));
}

TEST_CASE("importance sampling recovers the conjugate posterior mean of |u|") {
  const InverseProblem p = builtin_problem(ProblemId::kLinearGaussian1d);
  RandomSource rng(3);
  const WeightedEnsemble e = importance_sampling(p, 100000, rng);

  // E|X| for X ~ N(1, 1/2).
  const double mu = 1.0, sigma = std::sqrt(0.5);
  const double target = sigma * std::sqrt(2.0 / std::numbers::pi) *
                            std::exp(-mu * mu / (2.0 * sigma * sigma)) +
                        mu * (1.0 - std::erfc(mu / (sigma * std::sqrt(2.0))));

  const double est = weighted_moment(e, 1);
  const std::vector<double> w = e.weights();
  double se_sq = 0.0;
  for (int n = 0; n < e.size(); ++n) {
    const double f = std::abs(e.particles()[n][0]);
    se_sq += w[n] * w[n] * (f - est) * (f - est);
  }
  REQUIRE(std::abs(est - target) <= 3.0 * std::sqrt(se_sq));
}

TEST_CASE("ensrf_step leaves a degenerate ensemble in place") {
  const InverseProblem p = builtin_problem(ProblemId::kExample3);
  const WeightedEnsemble e = constant_ensemble(0.7, 8);
  const WeightedEnsemble out = ensrf_step(e, p, 0.1);
  for (int n = 0; n < out.size(); ++n) {
    REQUIRE(out.particles()[n][0] == 0.7);
  }
  REQUIRE(out.t() == Catch::Approx(0.4));
}

TEST_CASE("ensrf_step hand case: particles {0,2}, identity map, y=1") {
  const InverseProblem p = identity_problem_1d(1.0);
  std::vector<Vector> us = {Vector::Constant(1, 0.0), Vector::Constant(1, 2.0)};
  const WeightedEnsemble out = ensrf_step(WeightedEnsemble::uniform(std::move(us), 0.0), p, 0.1);
  REQUIRE(out.particles()[0][0] == Catch::Approx(0.05).margin(1e-14));
  REQUIRE(out.particles()[1][0] == Catch::Approx(1.95).margin(1e-14));
}

TEST_CASE("enki_step leaves a degenerate ensemble in place despite perturbations") {
  const InverseProblem p = builtin_problem(ProblemId::kExample3);
  RandomSource rng(5);
  const WeightedEnsemble e = constant_ensemble(-0.2, 8);
  const WeightedEnsemble out = enki_step(e, p, 0.01, rng);
  for (int n = 0; n < out.size(); ++n) {
    REQUIRE(out.particles()[n][0] == -0.2);
  }
}

TEST_CASE("enki gain matches dt Cov_up Gamma^-1 to first order") {
  // Two particles {0, 2} under the identity map: cov_up = cov_pp = 1,
  // so the gain is dt / (1 + dt) and the first-order defect is O(dt^2).
  const InverseProblem p = identity_problem_1d(1.0);
  std::vector<Vector> us = {Vector::Constant(1, 0.0), Vector::Constant(1, 2.0)};
  const WeightedEnsemble e = WeightedEnsemble::uniform(std::move(us), 0.0);
  const EnsembleStats st = compute_stats(e, p.model(), false);
  for (double dt : {0.02, 0.01}) {
    const SpdFactor f(Matrix(st.cov_pp + p.noise_cov() / dt));
    const double gain = (st.cov_up * f.solve(Matrix(Matrix::Identity(1, 1))))(0, 0);
    const double first_order = dt * st.cov_up(0, 0);
    REQUIRE(std::abs(gain - first_order) <= dt * dt * 1.0000001);
    REQUIRE(std::abs(gain - first_order) >= 0.25 * dt * dt);
  }
}

TEST_CASE("EnKI and EnSRF hit the N(1, 1/2) posterior on the linear problem") {
  const InverseProblem p = builtin_problem(ProblemId::kLinearGaussian1d);
  for (Method method : {Method::kEnki, Method::kEnsrf}) {
    SamplerConfig cfg = SamplerConfig::defaults(method, 10000, 1e-3, 0);
    cfg.snapshot_stride = std::numeric_limits<int>::max();
    const Trajectory traj = run(p, cfg);
    const EnsembleStats st = compute_stats(traj.final_ensemble(), p.model(), false);
    CAPTURE(to_string(method));
    REQUIRE(std::abs(st.mean_u[0] - 1.0) <= 0.05);
    REQUIRE(std::abs(st.cov_uu(0, 0) - 0.5) <= 0.05);
  }
}

TEST_CASE("weighted steps fix degenerate ensembles") {
  const InverseProblem p = builtin_problem(ProblemId::kExample3);
  RandomSource rng(7);
  const WeightedEnsemble e = constant_ensemble(1.1, 6);

  const WeightedEnsemble a = wensrf_step(e, p, 0.01);
  const WeightedEnsemble b = wenki_step(e, p, 0.01, rng);
  for (int n = 0; n < e.size(); ++n) {
    REQUIRE(a.particles()[n][0] == 1.1);
    REQUIRE(b.particles()[n][0] == 1.1);
    REQUIRE(a.weights()[n] == Catch::Approx(1.0 / 6).margin(1e-15));
    REQUIRE(b.weights()[n] == Catch::Approx(1.0 / 6).margin(1e-15));
  }
}

TEST_CASE("weight rates vanish pointwise for linear maps with exact statistics") {
  for (ProblemId id : {ProblemId::kLinearGaussian1d, ProblemId::kLinearGaussian2d}) {
    const InverseProblem p = builtin_problem(id);
    const GaussianFlow flow(p);
    RandomSource rng(11);
    for (int i = 0; i < 10; ++i) {
      const double t = i / 9.0;
      const EnsembleStats st = flow.stats(t);
      for (int trial = 0; trial < 100; ++trial) {
        const Vector u = 3.0 * rng.standard_normal(p.dim_in());
        REQUIRE(std::abs(wenki_rate(p, st, u, t)) <= 1e-8);
        REQUIRE(std::abs(wensrf_rate(p, st, u, t)) <= 1e-8);
      }
    }
  }
}

TEST_CASE("weighted methods track the example 3 posterior") {
  const InverseProblem p = builtin_problem(ProblemId::kExample3);
  for (Method method : {Method::kWenki, Method::kWensrf}) {
    SamplerConfig cfg = SamplerConfig::defaults(method, 500, 1e-3, 0);
    cfg.snapshot_stride = std::numeric_limits<int>::max();
    const Trajectory traj = run(p, cfg);
    CAPTURE(to_string(method));
    REQUIRE(weighted_moment(traj.final_ensemble(), 1) == Catch::Approx(3.845).epsilon(0.05));
  }
}

TEST_CASE("wenkf with one particle normalizes to weight one") {
  const InverseProblem p = builtin_problem(ProblemId::kLinearGaussian1d);
  RandomSource rng(13);
  const WeightedEnsemble e = wenkf_weights(p, 1, 1e-3, rng);
  REQUIRE(e.size() == 1);
  REQUIRE(e.weights()[0] == 1.0);
}

TEST_CASE("a proposal matching the posterior has zero weight variance") {
  // For the 1d linear problem the posterior is N(1, 1/2); weighting draws by
  // posterior over that same Gaussian leaves the weights constant.
  const InverseProblem p = builtin_problem(ProblemId::kLinearGaussian1d);
  const Vector mean = Vector::Constant(1, 1.0);
  const Matrix cov = Matrix::Constant(1, 1, 0.5);
  RandomSource rng(17);
  std::vector<Vector> us;
  std::vector<double> lw;
  for (int n = 0; n < 200; ++n) {
    const Vector u = gaussian_vector(rng, mean, cov);
    us.push_back(u);
    lw.push_back(log_tempered_density(p, u, 1.0) - gaussian_log_density(u, mean, cov));
  }
  const WeightedEnsemble e = normalize_weights(WeightedEnsemble(std::move(us), std::move(lw), 1.0));
  REQUIRE(weight_variance(e) <= 1e-12);
}

TEST_CASE("wenkf approximates the linear posterior well") {
  const InverseProblem p = builtin_problem(ProblemId::kLinearGaussian1d);
  RandomSource rng(19);
  const WeightedEnsemble e = wenkf_weights(p, 10000, 1e-3, rng);
  const std::vector<double> w = e.weights();
  double mean = 0.0;
  for (int n = 0; n < e.size(); ++n) {
    mean += w[n] * e.particles()[n][0];
  }
  REQUIRE(std::abs(mean - 1.0) <= 0.05);
}

TEST_CASE("run with dt=0.25 records exactly five snapshots") {
  const InverseProblem p = builtin_problem(ProblemId::kLinearGaussian1d);
  const Trajectory traj = run(p, SamplerConfig::defaults(Method::kEnsrf, 20, 0.25, 0));
  REQUIRE(traj.snapshots.size() == 5);
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
    REQUIRE(traj.snapshots[i].t() == Catch::Approx(0.25 * i).margin(1e-12));
  }
}

TEST_CASE("identical config and seed give bitwise identical trajectories") {
  const InverseProblem p = builtin_problem(ProblemId::kExample1);
  const SamplerConfig cfg = SamplerConfig::defaults(Method::kWenki, 50, 0.05, 123);
  const Trajectory a = run(p, cfg);
  const Trajectory b = run(p, cfg);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t s = 0; s < a.snapshots.size(); ++s) {
    REQUIRE(a.snapshots[s].log_weights() == b.snapshots[s].log_weights());
    for (int n = 0; n < a.snapshots[s].size(); ++n) {
      REQUIRE(a.snapshots[s].particles()[n] == b.snapshots[s].particles()[n]);
    }
  }
  REQUIRE(a.variance_series == b.variance_series);
}

TEST_CASE("run rejects a dt that does not divide 1") {
  const InverseProblem p = builtin_problem(ProblemId::kLinearGaussian1d);
  REQUIRE_THROWS_AS(run(p, SamplerConfig::defaults(Method::kEnsrf, 10, 0.3, 0)), ConfigError);
  REQUIRE_THROWS_AS(run(p, SamplerConfig::defaults(Method::kEnsrf, 0, 0.25, 0)), ConfigError);
}

TEST_CASE("step failures surface with the failing step index") {
  // The flow drags particles toward u = 5; the forward map turns NaN past
  // 3.2, so a later step must fail and report its index.
  ForwardModel model{1, 1,
                     [](const Vector& u) {
                       const double v = (u[0] - 5.0) * (u[0] - 5.0);
                       return Vector::Constant(1, u[0] > 3.2 ? std::nan("") : v);
                     },
                     [](const Vector& u) { return Matrix::Constant(1, 1, 2.0 * (u[0] - 5.0)); },
                     [](const Vector&, int) { return Matrix::Constant(1, 1, 2.0); }};
  const InverseProblem p(std::move(model), GaussianPrior{Vector::Zero(1), Matrix::Identity(1, 1)},
                         Vector::Zero(1), Matrix::Identity(1, 1));
  try {
    run(p, SamplerConfig::defaults(Method::kEnsrf, 64, 1e-2, 5));
    FAIL("expected a SamplerError");
  } catch (const SamplerError& e) {
    REQUIRE(e.step() >= 1);
    REQUIRE(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("log-weights stay finite on every builtin problem") {
  for (ProblemId id :
       {ProblemId::kExample1, ProblemId::kExample2, ProblemId::kExample3, ProblemId::kExample4,
        ProblemId::kExample5, ProblemId::kLinearGaussian1d, ProblemId::kLinearGaussian2d}) {
    const InverseProblem p = builtin_problem(id);
    const int n = id == ProblemId::kExample2 ? 100 : 200;
    for (Method method : {Method::kWenki, Method::kWensrf}) {
      SamplerConfig cfg = SamplerConfig::defaults(method, n, default_time_step(id), 0);
      cfg.snapshot_stride = std::numeric_limits<int>::max();
      const Trajectory traj = run(p, cfg);
      CAPTURE(to_string(id), to_string(method));
      for (double v : traj.variance_series) {
        REQUIRE(std::isfinite(v));
      }
      for (double lw : traj.final_ensemble().log_weights()) {
        REQUIRE(std::isfinite(lw));
      }
    }
  }
}

TEST_CASE("importance sampling weights degenerate faster than WEnKI on example 3") {
  const InverseProblem p = builtin_problem(ProblemId::kExample3);
  SamplerConfig is_cfg = SamplerConfig::defaults(Method::kIs, 1000, 1e-3, 0);
  SamplerConfig wenki_cfg = SamplerConfig::defaults(Method::kWenki, 1000, 1e-3, 0);
  wenki_cfg.snapshot_stride = std::numeric_limits<int>::max();
  const Trajectory a = run(p, is_cfg);
  const Trajectory b = run(p, wenki_cfg);
  REQUIRE(a.variance_series.back() > b.variance_series.back());
}
