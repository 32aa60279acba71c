#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tempest/csv.hpp"
#include "tempest/oracle.hpp"
#include "tempest/problems.hpp"
#include "tempest/samplers.hpp"

namespace tempest {

/// Inline linear-Gaussian problem (G(u) = A u) supplied directly in a config
/// file instead of a builtin id.
struct LinearProblemSpec {
  Matrix a;
  Vector y;
  Matrix gamma;
  Vector u0;
  Matrix gamma0;
};

struct ExperimentConfig {
  std::optional<ProblemId> problem_id;
  std::optional<LinearProblemSpec> inline_problem;
  Method method = Method::kWenki;
  int n_particles = 0;  // 0: problem default
  double dt = 0.0;      // 0: problem default
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string out_dir = "out";
  std::optional<double> grid_lo;
  std::optional<double> grid_hi;
  std::optional<int> grid_nodes;
  std::vector<int> moment_orders = {1, 2, 3, 4, 5};
  int snapshot_stride = 0;  // 0: thin trajectory CSVs to ~100 snapshots

  void validate() const {
    if (problem_id.has_value() == inline_problem.has_value()) {
      throw ConfigError("config needs exactly one of: builtin problem id, inline problem");
    }
    if (seeds.empty()) {
      throw ConfigError("config needs at least one seed");
    }
    if (moment_orders.empty()) {
      throw ConfigError("config needs at least one moment order");
    }
    for (int k : moment_orders) {
      if (k < 1) {
        throw ConfigError("moment orders must be positive");
      }
    }
    if (grid_lo && grid_hi && !(*grid_lo < *grid_hi)) {
      throw ConfigError("grid_lo must be below grid_hi");
    }
    if (grid_nodes && *grid_nodes < 2) {
      throw ConfigError("grid_nodes must be at least 2");
    }
    sampler_config(seeds.front()).validate();
  }

  InverseProblem make_problem() const {
    if (problem_id) {
      return builtin_problem(*problem_id);
    }
    const LinearProblemSpec& s = *inline_problem;
    const int dim_in = static_cast<int>(s.a.cols());
    const int dim_out = static_cast<int>(s.a.rows());
    Matrix a = s.a;
    ForwardModel model{dim_in, dim_out, [a](const Vector& u) { return Vector(a * u); },
                       [a](const Vector&) { return a; },
                       [dim_in, dim_out](const Vector&, int) {
                         return Matrix(Matrix::Zero(dim_out, dim_in));
                       }};
    return InverseProblem(std::move(model), GaussianPrior{s.u0, s.gamma0}, s.y, s.gamma, s.a);
  }

  double resolved_dt() const {
    if (dt > 0.0) {
      return dt;
    }
    return problem_id ? default_time_step(*problem_id) : 1e-3;
  }

  int resolved_particles() const {
    if (n_particles > 0) {
      return n_particles;
    }
    return problem_id ? default_ensemble_size(*problem_id) : 1000;
  }

  SamplerConfig sampler_config(std::uint64_t seed) const {
    SamplerConfig cfg = SamplerConfig::defaults(method, resolved_particles(), resolved_dt(), seed);
    cfg.snapshot_stride = snapshot_stride;
    return cfg;
  }

  std::vector<GridAxis> make_grid(const InverseProblem& p) const {
    std::vector<GridAxis> axes = default_grid(p);
    for (GridAxis& ax : axes) {
      if (grid_lo) ax.lo = *grid_lo;
      if (grid_hi) ax.hi = *grid_hi;
      if (grid_nodes) ax.nodes = *grid_nodes;
    }
    return axes;
  }

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

namespace detail {

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError("expected a non-empty matrix (array of rows)");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  if (rows > kMaxDim || cols > kMaxDim || cols == 0) {
    throw ConfigError("matrix exceeds supported dimensions");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) {
      throw ConfigError("ragged matrix in config");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || static_cast<Eigen::Index>(j.size()) > kMaxDim) {
    throw ConfigError("expected a vector of supported size");
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = j[i].get<double>();
  }
  return v;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out.push_back(v[i]);
  }
  return out;
}

}  // namespace detail

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  if (problem_id) {
    j["problem"] = std::string(to_string(*problem_id));
  } else {
    j["problem"] = {{"type", "linear_gaussian"},
                    {"a", detail::matrix_to_json(inline_problem->a)},
                    {"y", detail::vector_to_json(inline_problem->y)},
                    {"gamma", detail::matrix_to_json(inline_problem->gamma)},
                    {"u0", detail::vector_to_json(inline_problem->u0)},
                    {"gamma0", detail::matrix_to_json(inline_problem->gamma0)}};
  }
  j["method"] = std::string(to_string(method));
  j["n_particles"] = resolved_particles();
  j["dt"] = resolved_dt();
  j["seeds"] = seeds;
  j["out_dir"] = out_dir;
  if (grid_lo) j["grid_lo"] = *grid_lo;
  if (grid_hi) j["grid_hi"] = *grid_hi;
  if (grid_nodes) j["grid_nodes"] = *grid_nodes;
  j["moment_orders"] = moment_orders;
  j["snapshot_stride"] = snapshot_stride;
  return j;
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (!j.contains("problem") || !j.contains("method")) {
    throw ConfigError("config requires 'problem' and 'method'");
  }
  if (j["problem"].is_string()) {
    const auto id = parse_problem_id(j["problem"].get<std::string>());
    if (!id) {
      throw ConfigError("unknown problem id: " + j["problem"].get<std::string>());
    }
    cfg.problem_id = *id;
  } else if (j["problem"].is_object()) {
    const nlohmann::json& p = j["problem"];
    if (p.value("type", "") != "linear_gaussian") {
      throw ConfigError("inline problems must have type 'linear_gaussian'");
    }
    for (const char* key : {"a", "y", "gamma", "u0", "gamma0"}) {
      if (!p.contains(key)) {
        throw ConfigError(std::string("inline problem missing field '") + key + "'");
      }
    }
    cfg.inline_problem = LinearProblemSpec{
        detail::matrix_from_json(p["a"]), detail::vector_from_json(p["y"]),
        detail::matrix_from_json(p["gamma"]), detail::vector_from_json(p["u0"]),
        detail::matrix_from_json(p["gamma0"])};
  } else {
    throw ConfigError("'problem' must be a builtin id or an inline object");
  }
  const auto method = parse_method(j["method"].get<std::string>());
  if (!method) {
    throw ConfigError("unknown method: " + j["method"].get<std::string>());
  }
  cfg.method = *method;
  cfg.n_particles = j.value("n_particles", 0);
  cfg.dt = j.value("dt", 0.0);
  if (j.contains("seeds")) {
    cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  }
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("grid_lo")) cfg.grid_lo = j["grid_lo"].get<double>();
  if (j.contains("grid_hi")) cfg.grid_hi = j["grid_hi"].get<double>();
  if (j.contains("grid_nodes")) cfg.grid_nodes = j["grid_nodes"].get<int>();
  if (j.contains("moment_orders")) {
    cfg.moment_orders = j["moment_orders"].get<std::vector<int>>();
  }
  cfg.snapshot_stride = j.value("snapshot_stride", 0);
  cfg.validate();
  return cfg;
}

struct MomentRow {
  int k;
  double oracle;
  double estimate;
  double rel_error;
};

struct MomentTable {
  Method method;
  std::vector<MomentRow> rows;
};

namespace detail {

inline void write_moment_table(const std::filesystem::path& path, const MomentTable& table) {
  std::ofstream os(path);
  os << "method,k,oracle,estimate,rel_error\n";
  for (const MomentRow& row : table.rows) {
    os << to_string(table.method) << ',' << row.k << ',' << format_csv(row.oracle) << ','
       << format_csv(row.estimate) << ',' << format_csv(row.rel_error) << "\n";
  }
}

inline void write_histogram(const std::filesystem::path& path, const WeightedEnsemble& e,
                            const std::vector<GridAxis>& axes, int bins = 100) {
  std::ofstream os(path);
  os << "dim,bin_lo,bin_hi,mass\n";
  const std::vector<double> w = e.weights();
  for (std::size_t d = 0; d < axes.size(); ++d) {
    const double lo = axes[d].lo;
    const double width = (axes[d].hi - lo) / bins;
    std::vector<double> mass(bins, 0.0);
    for (int n = 0; n < e.size(); ++n) {
      auto b = static_cast<int>((e.particles()[n][static_cast<Eigen::Index>(d)] - lo) / width);
      b = std::clamp(b, 0, bins - 1);
      mass[b] += w[n];
    }
    for (int b = 0; b < bins; ++b) {
      os << (d + 1) << ',' << format_csv(lo + b * width) << ',' << format_csv(lo + (b + 1) * width)
         << ',' << format_csv(mass[b]) << "\n";
    }
  }
}

inline MomentTable seed_mean_table(Method method, const GridOracle& oracle,
                                   const std::vector<int>& orders,
                                   const std::vector<std::vector<double>>& per_seed_estimates) {
  MomentTable table{method, {}};
  for (std::size_t i = 0; i < orders.size(); ++i) {
    double mean = 0.0;
    for (const auto& est : per_seed_estimates) {
      mean += est[i];
    }
    mean /= static_cast<double>(per_seed_estimates.size());
    const double ref = oracle.moment(1.0, orders[i]);
    table.rows.push_back(MomentRow{orders[i], ref, mean, std::abs(mean - ref) / std::abs(ref)});
  }
  return table;
}

}  // namespace detail

/// Runs the configured method over every seed, writing per-seed trajectory,
/// weight-variance and histogram CSVs plus one aggregate moment table.
/// Returns the CSV paths; a metadata JSON (full config echo plus wall-clock
/// seconds, informational only) lands next to them.
inline std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t_begin = std::chrono::steady_clock::now();
  const InverseProblem problem = cfg.make_problem();
  const std::vector<GridAxis> axes = cfg.make_grid(problem);
  const GridOracle oracle(problem, axes);

  std::filesystem::create_directories(cfg.out_dir);
  std::vector<std::filesystem::path> outputs;
  std::vector<std::vector<double>> per_seed_estimates;

  for (std::uint64_t seed : cfg.seeds) {
    SamplerConfig scfg = cfg.sampler_config(seed);
    if (scfg.snapshot_stride <= 0 && !is_single_shot(cfg.method)) {
      scfg.snapshot_stride = std::max(1, (scfg.step_count() + 99) / 100);
    }
    Trajectory traj;
    try {
      traj = run(problem, scfg);
    } catch (const SamplerError& err) {
      throw SamplerError(err.step(), std::string("seed ") + std::to_string(seed) + ": " +
                                         err.what());
    }

    const std::string tag = "_seed" + std::to_string(seed) + ".csv";
    const std::filesystem::path traj_path = std::filesystem::path(cfg.out_dir) / ("trajectory" + tag);
    {
      std::ofstream os(traj_path);
      write_snapshot_header(os, problem.dim_in());
      for (const WeightedEnsemble& snap : traj.snapshots) {
        write_snapshot_rows(os, snap);
      }
    }
    outputs.push_back(traj_path);

    const std::filesystem::path var_path =
        std::filesystem::path(cfg.out_dir) / ("weight_variance" + tag);
    {
      std::ofstream os(var_path);
      os << "t,var_nw\n";
      for (std::size_t i = 0; i < traj.variance_times.size(); ++i) {
        os << format_csv(traj.variance_times[i]) << ',' << format_csv(traj.variance_series[i])
           << "\n";
      }
    }
    outputs.push_back(var_path);

    const std::filesystem::path hist_path = std::filesystem::path(cfg.out_dir) / ("histogram" + tag);
    detail::write_histogram(hist_path, traj.final_ensemble(), axes);
    outputs.push_back(hist_path);

    std::vector<double> estimates;
    estimates.reserve(cfg.moment_orders.size());
    for (int k : cfg.moment_orders) {
      estimates.push_back(weighted_moment(traj.final_ensemble(), k));
    }
    per_seed_estimates.push_back(std::move(estimates));
  }

  const MomentTable table =
      detail::seed_mean_table(cfg.method, oracle, cfg.moment_orders, per_seed_estimates);
  const std::filesystem::path table_path = std::filesystem::path(cfg.out_dir) / "moments.csv";
  detail::write_moment_table(table_path, table);
  outputs.push_back(table_path);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  nlohmann::json meta = cfg.to_json();
  meta["wall_clock_seconds"] = wall;
  std::ofstream meta_os(std::filesystem::path(cfg.out_dir) / "metadata.json");
  meta_os << meta.dump(2) << "\n";

  return outputs;
}

/// All six methods at the experiment settings of the moment tables
/// (example3: N=2000, example5: N=1000; dt=1e-3; seeds 0..9), each against
/// quadrature reference moments of order 1..5. Writes a seed-mean table and
/// a per-seed table per method.
inline std::map<Method, MomentTable> reproduce_table(ProblemId example,
                                                     const std::string& out_dir) {
  if (example != ProblemId::kExample3 && example != ProblemId::kExample5) {
    throw ConfigError("moment tables are defined for example3 and example5");
  }
  const InverseProblem problem = builtin_problem(example);
  const GridOracle oracle = GridOracle::with_default_grid(problem);
  const int n = example == ProblemId::kExample3 ? 2000 : 1000;
  const double dt = 1e-3;
  const std::vector<int> orders = {1, 2, 3, 4, 5};
  std::filesystem::create_directories(out_dir);

  std::map<Method, MomentTable> tables;
  for (Method method : {Method::kIs, Method::kEnsrf, Method::kEnki, Method::kWensrf,
                        Method::kWenki, Method::kWenkf}) {
    std::vector<std::vector<double>> per_seed;
    std::ofstream per_seed_os(std::filesystem::path(out_dir) /
                              (std::string("table_") + std::string(to_string(method)) +
                               "_per_seed.csv"));
    per_seed_os << "seed,k,estimate\n";
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SamplerConfig scfg = SamplerConfig::defaults(method, n, dt, seed);
      scfg.snapshot_stride = std::numeric_limits<int>::max();  // final ensemble only
      const Trajectory traj = run(problem, scfg);
      std::vector<double> estimates;
      for (int k : orders) {
        estimates.push_back(weighted_moment(traj.final_ensemble(), k));
        per_seed_os << seed << ',' << k << ',' << format_csv(estimates.back()) << "\n";
      }
      per_seed.push_back(std::move(estimates));
    }
    MomentTable table = detail::seed_mean_table(method, oracle, orders, per_seed);
    detail::write_moment_table(std::filesystem::path(out_dir) /
                                   (std::string("table_") + std::string(to_string(method)) + ".csv"),
                               table);
    tables.emplace(method, std::move(table));
  }
  return tables;
}

/// Var(Nw(t)) over the tempering interval for one method and seed. For the
/// weighted methods this is the running trajectory series; for importance
/// sampling the weight at time t reweighs the fixed prior draws by
/// exp(-t Phi), matching how the curves are compared.
inline std::pair<std::vector<double>, std::vector<double>> variance_series(
    const InverseProblem& problem, Method method, int n, double dt, std::uint64_t seed) {
  if (method == Method::kIs) {
    RandomSource rng(seed);
    const std::vector<Vector> us = detail::draw_prior(problem, n, rng);
    std::vector<double> phis(us.size());
    for (std::size_t i = 0; i < us.size(); ++i) {
      phis[i] = misfit(problem, us[i]);
    }
    const int steps = SamplerConfig::defaults(method, n, dt, seed).step_count();
    std::vector<double> times, vars;
    for (int m = 0; m <= steps; ++m) {
      const double t = static_cast<double>(m) * dt;
      std::vector<double> lw(phis.size());
      for (std::size_t i = 0; i < phis.size(); ++i) {
        lw[i] = -t * phis[i];
      }
      const WeightedEnsemble e = normalize_weights(WeightedEnsemble(us, std::move(lw), t));
      times.push_back(t);
      vars.push_back(weight_variance(e));
    }
    return {times, vars};
  }
  if (method != Method::kWenki && method != Method::kWensrf) {
    throw ConfigError("variance series cover is, wenki and wensrf");
  }
  SamplerConfig scfg = SamplerConfig::defaults(method, n, dt, seed);
  scfg.snapshot_stride = std::numeric_limits<int>::max();
  const Trajectory traj = run(problem, scfg);
  std::vector<double> times = {0.0}, vars = {0.0};
  times.insert(times.end(), traj.variance_times.begin(), traj.variance_times.end());
  vars.insert(vars.end(), traj.variance_series.begin(), traj.variance_series.end());
  return {times, vars};
}

/// Writes `t,method,log_var_plus_one` rows for the requested methods.
inline std::filesystem::path weight_variance_report(ProblemId example,
                                                    const std::vector<Method>& methods, int n,
                                                    double dt, std::uint64_t seed,
                                                    const std::string& out_dir) {
  const InverseProblem problem = builtin_problem(example);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path path = std::filesystem::path(out_dir) / "variance_report.csv";
  std::ofstream os(path);
  os << "t,method,log_var_plus_one\n";
  for (Method method : methods) {
    const auto [times, vars] = variance_series(problem, method, n, dt, seed);
    for (std::size_t i = 0; i < times.size(); ++i) {
      os << format_csv(times[i]) << ',' << to_string(method) << ','
         << format_csv(std::log(vars[i] + 1.0)) << "\n";
    }
  }
  return path;
}

}  // namespace tempest
