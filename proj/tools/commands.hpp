#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <string>
#include <vector>

#include "config.hpp"
#include "sirld/sirld.hpp"

namespace sirld::cli {

inline constexpr const char* tool_version = "0.1.0";

/// Everything a subcommand needs, plus the list of files it produced.
struct RunContext {
  Config config;
  std::filesystem::path out_dir;
  std::uint64_t master_seed = 0;
  std::size_t threads = 1;
  std::optional<std::string> path_override;  ///< `rate --path`
  std::vector<std::string> files;

  std::ofstream create(const std::string& name) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / name, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot write '" + (out_dir / name).string() + "'");
    }
    files.push_back(name);
    return out;
  }

  void write_json(const std::string& name, const nlohmann::json& j) {
    auto out = create(name);
    out << j.dump(2) << '\n';
  }
};

enum class Command : std::uint64_t { env, simulate, fluid, rate, estimate_ldp, estimate_mdp, delta };

inline std::uint64_t command_seed(const RunContext& ctx, Command c) {
  return derive_seed(ctx.master_seed, StreamTag::command, static_cast<std::uint64_t>(c));
}

/// Refuses dense environments whose weight matrices (one per worker) exceed [limits] memory_cap_mb.
inline void check_memory(const RunContext& ctx, const WeightDistribution& dist, std::size_t n, std::size_t copies) {
  if (dist.kind == WeightDistribution::Kind::constant) {
    return;
  }
  const double cap_mb = ctx.config.real("limits", "memory_cap_mb", 4096.0);
  const double need_mb = 8.0 * static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(copies) / 1048576.0;
  if (need_mb > cap_mb) {
    std::ostringstream msg;
    msg << "dense environment for n = " << n << " needs " << std::fixed << std::setprecision(0) << need_mb
        << " MB, above the " << cap_mb << " MB cap ([limits] memory_cap_mb)";
    throw ConfigError(msg.str());
  }
}

inline void require_positive(std::uint64_t v, const std::string& what) {
  if (v == 0) {
    throw ConfigError(what + " must be positive");
  }
}

inline nlohmann::json fit_json(const stats::LinearFit& fit) {
  return {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r_squared", fit.r_squared}};
}

inline Conditioning parse_conditioning(const std::string& v) {
  if (v == "automatic") return Conditioning::automatic;
  if (v == "always") return Conditioning::always;
  if (v == "never") return Conditioning::never;
  throw ConfigError("conditioning must be automatic, always or never");
}

inline EstimateOptions estimate_options(const RunContext& ctx, const std::string& section, std::uint64_t seed) {
  EstimateOptions opt;
  const std::string mode = ctx.config.str(section, "environment", "annealed");
  if (mode != "annealed" && mode != "quenched") {
    throw ConfigError("[" + section + "] environment must be annealed or quenched");
  }
  opt.quenched = mode == "quenched";
  opt.quenched_seed = ctx.config.whole(section, "quenched_seed", derive_seed(seed, StreamTag::environment, 0));
  opt.threads = ctx.threads;
  opt.conditioning = parse_conditioning(ctx.config.str(section, "conditioning", "automatic"));
  opt.self_normalized = ctx.config.flag(section, "self_normalized", false);
  opt.a_exponent = ctx.config.real(section, "a_exponent", 0.75);
  return opt;
}

// ---------------------------------------------------------------------------------------------

inline void cmd_env(RunContext& ctx) {
  const Config& c = ctx.config;
  const WeightDistribution dist = c.distribution();
  const std::size_t n = c.whole("env", "n");
  if (n < 2) {
    throw ConfigError("[env] n must be at least 2");
  }
  check_memory(ctx, dist, n, 1);
  const std::uint64_t seed = c.whole("env", "seed", command_seed(ctx, Command::env));
  const Environment env = sample_environment(n, dist, seed);

  std::filesystem::create_directories(ctx.out_dir);
  save_environment((ctx.out_dir / "environment.bin").string(), env);
  ctx.files.push_back("environment.bin");

  std::string method = c.str("env", "delta", n <= delta_exact_max_n ? "exact" : "sampled");
  nlohmann::json report{{"n", n}, {"distribution", dist.describe()}, {"seed", seed}, {"delta_method", method}};
  if (method == "exact") {
    report["delta"] = delta_exact(env);
  } else if (method == "sampled") {
    const std::uint64_t trials = c.whole("env", "delta_trials", 200);
    require_positive(trials, "[env] delta_trials");
    report["delta_trials"] = trials;
    report["delta"] = delta_sampled(env, trials, derive_seed(seed, StreamTag::delta, 0));
  } else if (method != "none") {
    throw ConfigError("[env] delta must be exact, sampled or none");
  }
  ctx.write_json("delta.json", report);
}

inline void cmd_simulate(RunContext& ctx) {
  const Config& c = ctx.config;
  const ModelParams params = c.model();
  const WeightDistribution dist = c.distribution();
  const std::size_t n = c.whole("simulate", "n");
  const std::size_t replicas = c.whole("simulate", "replicas", 1);
  require_positive(replicas, "[simulate] replicas");
  if (n < 2) {
    throw ConfigError("[simulate] n must be at least 2");
  }
  check_memory(ctx, dist, n, 1);
  const std::string init_mode = c.str("simulate", "init", "random");
  if (init_mode != "random" && init_mode != "conditioned") {
    throw ConfigError("[simulate] init must be random or conditioned");
  }
  const bool quenched = c.str("simulate", "environment", "annealed") == "quenched";
  const std::uint64_t seed = command_seed(ctx, Command::simulate);
  const TimeGrid grid(params.T0, c.intervals());

  std::optional<TiltSpec> tilt;
  Path2 reference = fluid_ode(params, dist.mean(), grid.intervals());
  if (c.has("simulate", "tilt")) {
    Path2 g = Path2::read_csv(c.file("simulate", "tilt"));
    reference = tilted_fluid_ode(params, dist.mean(), g, params.initial_point());
    tilt = TiltSpec::ldp(std::move(g));
  }
  const Path2 xhat = reference.resample(grid);

  auto traj_out = ctx.create("trajectories.csv");
  write_trajectory_header(traj_out, true, tilt.has_value());
  auto lln_out = ctx.create("lln.csv");
  lln_out << "replica,t,s,i,s_ref,i_ref\n" << std::setprecision(17);
  auto summary_out = ctx.create("lln_summary.csv");
  summary_out << "replica,sup_distance,max_eps\n" << std::setprecision(17);

  std::optional<Environment> shared;
  if (quenched) {
    shared = sample_environment(n, dist, derive_seed(seed, StreamTag::environment, 0));
  }
  for (std::size_t r = 0; r < replicas; ++r) {
    const Environment env = shared ? *shared : sample_environment(n, dist, derive_seed(seed, StreamTag::environment, r));
    EpidemicState init;
    if (init_mode == "conditioned") {
      init = sample_initial_state_conditioned(n, c.whole("simulate", "s0"), c.whole("simulate", "i0"),
                                              derive_seed(seed, StreamTag::initial_state, r));
    } else {
      init = sample_initial_state(n, params, derive_seed(seed, StreamTag::initial_state, r));
    }
    const std::uint64_t traj_seed = derive_seed(seed, StreamTag::trajectory, r);
    Trajectory traj;
    double max_eps = 0.0;
    if (tilt) {
      WeightedTrajectory w = simulate_tilted(env, params, init, *tilt, traj_seed);
      write_trajectory_rows(traj_out, w.traj, r, TrajectoryCsvExtra{w.log_weight, w.max_eps});
      max_eps = w.max_eps;
      traj = std::move(w.traj);
    } else {
      traj = simulate(env, params, init, traj_seed);
      write_trajectory_rows(traj_out, traj, r);
      const ScalarPath eps = epsilon_path(traj, env, grid);
      for (std::size_t k = 0; k < eps.size(); ++k) {
        max_eps = std::max(max_eps, std::abs(eps[k][0]));
      }
    }
    const Path2 theta = counts_path(traj, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      lln_out << r << ',' << grid[k] << ',' << theta[k][0] << ',' << theta[k][1] << ',' << xhat[k][0] << ','
              << xhat[k][1] << '\n';
    }
    summary_out << r << ',' << sup_norm_distance(theta, xhat) << ',' << max_eps << '\n';
  }
}

inline void cmd_fluid(RunContext& ctx) {
  const Config& c = ctx.config;
  const ModelParams params = c.model();
  const double mean = c.distribution().mean();
  const std::size_t intervals = c.intervals();
  {
    auto out = ctx.create("fluid.csv");
    fluid_ode(params, mean, intervals).write_csv(out);
  }
  if (c.has("fluid", "tilt")) {
    const Path2 g = Path2::read_csv(c.file("fluid", "tilt"));
    auto out = ctx.create("tilted.csv");
    tilted_fluid_ode(params, mean, g, params.initial_point()).write_csv(out);
  }
  if (c.has("fluid", "h1") || c.has("fluid", "h2")) {
    const ControlPair controls = constant_controls(params.T0, c.real("fluid", "h1", 1.0), c.real("fluid", "h2", 1.0),
                                                   intervals);
    auto out = ctx.create("controlled.csv");
    controlled_path(params, mean, controls, params.initial_point()).write_csv(out);
  }
  if (c.has("fluid", "forcing") || c.has("fluid", "forcing_s") || c.has("fluid", "forcing_i")) {
    const Linearization linz = linearize(params, mean, intervals);
    const Path2 g = c.has("fluid", "forcing")
                        ? Path2::read_csv(c.file("fluid", "forcing"))
                        : Path2(linz.grid(), Vec2(c.real("fluid", "forcing_s", 0.0), c.real("fluid", "forcing_i", 0.0)));
    auto out = ctx.create("mdp.csv");
    mdp_tilted_ode(linz, g, Vec2::Zero()).write_csv(out);
  }
}

inline void cmd_rate(RunContext& ctx) {
  const Config& c = ctx.config;
  const ModelParams params = c.model();
  const double mean = c.distribution().mean();
  const std::string file = ctx.path_override ? *ctx.path_override : c.file("rate", "path");
  if (!std::filesystem::exists(file)) {
    throw ConfigError("path file '" + file + "' does not exist");
  }
  const Path2 f = Path2::read_csv(file);
  const std::string space = c.str("rate", "space", "ldp");
  if (space != "ldp" && space != "mdp" && space != "both") {
    throw ConfigError("[rate] space must be ldp, mdp or both");
  }
  const bool variational = c.flag("rate", "variational", true);
  nlohmann::json out{{"path", std::filesystem::path(file).filename().string()}};
  if (space != "mdp") {
    const RateReport r = ldp_rate(f, params, mean);
    nlohmann::json j = r.to_json();
    if (variational && r.finite) {
      j["variational_lower_dynamic"] = i_dyn_variational_lower(f, params, mean);
    }
    out["ldp"] = j;
  }
  if (space != "ldp") {
    const Linearization linz = linearize(params, mean, f.grid().intervals());
    const RateReport r = mdp_rate(f, linz);
    nlohmann::json j = r.to_json();
    if (variational && r.finite) {
      j["variational_lower_dynamic"] = j_dyn_variational_lower(f, linz);
    }
    out["mdp"] = j;
  }
  ctx.write_json("rate.json", out);
}

inline void write_estimates(RunContext& ctx, const std::vector<EstimateReport>& reports, Space space) {
  {
    auto csv = ctx.create("estimates.csv");
    write_estimate_csv_header(csv);
    for (const auto& r : reports) {
      write_estimate_csv_row(csv, r);
    }
  }
  nlohmann::json summary{{"reports", nlohmann::json::array()}};
  for (const auto& r : reports) {
    summary["reports"].push_back(r.to_json());
  }
  if (reports.size() >= 3) {
    const stats::LinearFit fit = rate_slope(reports, space);
    summary["slope"] = fit_json(fit);
    summary["rate_theoretical"] = reports.front().rate_theoretical;
    summary["slope_ratio"] = -fit.slope / reports.front().rate_theoretical;
  } else {
    summary["slope"] = nullptr;
  }
  ctx.write_json("summary.json", summary);
}

inline void cmd_estimate_ldp(RunContext& ctx) {
  const Config& c = ctx.config;
  const std::string sec = "estimate-ldp";
  const ModelParams params = c.model();
  const WeightDistribution dist = c.distribution();
  const auto n_list = c.sizes(sec, "n_list");
  const std::size_t replicas = c.whole(sec, "replicas");
  require_positive(replicas, "[" + sec + "] replicas");
  const double radius = c.real(sec, "radius", 0.05);
  const std::string method = c.str(sec, "method", "is");
  if (method != "is" && method != "plain") {
    throw ConfigError("[" + sec + "] method must be is or plain");
  }
  const std::uint64_t seed = command_seed(ctx, Command::estimate_ldp);
  const EstimateOptions opt = estimate_options(ctx, sec, seed);
  for (std::size_t n : n_list) {
    check_memory(ctx, dist, n, opt.quenched ? 1 : ctx.threads);
  }
  Path2 target = c.has(sec, "target")
                     ? Path2::read_csv(c.file(sec, "target"))
                     : controlled_path(params, dist.mean(),
                                       constant_controls(params.T0, c.real(sec, "h1", 2.0), c.real(sec, "h2", 0.5),
                                                         c.intervals()),
                                       params.initial_point());
  const EventSpec event{std::move(target), radius, Space::ldp};
  std::vector<EstimateReport> reports;
  for (std::size_t n : n_list) {
    const std::uint64_t s = derive_seed(seed, StreamTag::replica, n);
    reports.push_back(method == "is" ? estimate_is_ldp(params, dist, event, n, replicas, s, opt)
                                     : estimate_plain(params, dist, event, n, replicas, s, opt));
  }
  write_estimates(ctx, reports, Space::ldp);
}

inline void cmd_estimate_mdp(RunContext& ctx) {
  const Config& c = ctx.config;
  const std::string sec = "estimate-mdp";
  const ModelParams params = c.model();
  const WeightDistribution dist = c.distribution();
  const auto n_list = c.sizes(sec, "n_list");
  const std::size_t replicas = c.whole(sec, "replicas");
  require_positive(replicas, "[" + sec + "] replicas");
  const double radius = c.real(sec, "radius", 0.3);
  const std::string method = c.str(sec, "method", "is");
  if (method != "is" && method != "plain") {
    throw ConfigError("[" + sec + "] method must be is or plain");
  }
  const std::uint64_t seed = command_seed(ctx, Command::estimate_mdp);
  const EstimateOptions opt = estimate_options(ctx, sec, seed);
  for (std::size_t n : n_list) {
    check_memory(ctx, dist, n, opt.quenched ? 1 : ctx.threads);
  }
  Path2 target;
  if (c.has(sec, "target")) {
    target = Path2::read_csv(c.file(sec, "target"));
  } else {
    const Linearization linz = linearize(params, dist.mean(), c.intervals());
    const Path2 g(linz.grid(), Vec2(c.real(sec, "forcing_s", 0.5), c.real(sec, "forcing_i", 0.5)));
    target = mdp_tilted_ode(linz, g, Vec2::Zero());
  }
  const EventSpec event{std::move(target), radius, Space::mdp};
  std::vector<EstimateReport> reports;
  for (std::size_t n : n_list) {
    const std::uint64_t s = derive_seed(seed, StreamTag::replica, n);
    reports.push_back(method == "is" ? estimate_is_mdp(params, dist, event, n, replicas, s, opt)
                                     : estimate_plain(params, dist, event, n, replicas, s, opt));
  }
  write_estimates(ctx, reports, Space::mdp);
}

/// Exceedance row for one saved environment, e.g. the one a simulation ran on.
inline TailRow tail_row_for(const Environment& env, double eps, const TailScale& scale, bool sampled,
                            std::uint64_t trials, std::uint64_t seed) {
  const auto n = static_cast<double>(env.n());
  const double delta = sampled ? delta_sampled(env, trials, seed) : delta_exact(env);
  const double stat = scale.kind == TailScale::Kind::mdp ? n * delta / std::pow(n, scale.a_exponent) : delta;
  TailRow row;
  row.n = env.n();
  row.eps = eps;
  row.scale = scale.describe();
  row.replicas = 1;
  row.exceed_count = stat > eps ? 1 : 0;
  row.freq = static_cast<double>(row.exceed_count);
  const auto ci = stats::wilson_interval(row.exceed_count, 1);
  row.ci_lo = ci.lo;
  row.ci_hi = ci.hi;
  return row;
}

inline void cmd_delta(RunContext& ctx) {
  const Config& c = ctx.config;
  const std::string scale_name = c.str("delta", "scale", "ldp");
  TailScale scale = TailScale::ldp();
  if (scale_name == "mdp") {
    scale = TailScale::mdp(c.real("delta", "a_exponent", 0.75));
  } else if (scale_name != "ldp") {
    throw ConfigError("[delta] scale must be ldp or mdp");
  }
  TailOptions opt;
  opt.seed = command_seed(ctx, Command::delta);
  const std::string mode = c.str("delta", "mode", "exact");
  if (mode != "exact" && mode != "sampled") {
    throw ConfigError("[delta] mode must be exact or sampled");
  }
  opt.sampled = mode == "sampled";
  opt.sampled_trials = c.whole("delta", "trials", 200);
  const double eps = c.real("delta", "eps");
  if (c.has("delta", "environment_file")) {
    // the same environment as a previous run instead of fresh draws
    const Environment env = load_environment(c.file("delta", "environment_file"));
    auto out = ctx.create("delta_tail.csv");
    write_tail_csv(out, {tail_row_for(env, eps, scale, opt.sampled, opt.sampled_trials,
                                      derive_seed(opt.seed, StreamTag::delta, 0))});
    return;
  }
  const WeightDistribution dist = c.distribution();
  const auto n_list = c.sizes("delta", "n_list");
  const std::size_t replicas = c.whole("delta", "replicas");
  require_positive(replicas, "[delta] replicas");
  for (std::size_t n : n_list) {
    check_memory(ctx, dist, n, 1);
  }
  const auto rows = delta_tail_curve(dist, n_list, eps, replicas, scale, opt);
  auto out = ctx.create("delta_tail.csv");
  write_tail_csv(out, rows);
}

inline void write_manifest(RunContext& ctx, const std::string& command) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(ctx.config.text())));
  std::vector<std::string> files = ctx.files;
  files.push_back("manifest.json");
  ctx.write_json("manifest.json", {{"tool", "sirld"},
                                   {"version", tool_version},
                                   {"command", command},
                                   {"config_hash", hash},
                                   {"master_seed", ctx.master_seed},
                                   {"threads", ctx.threads},
                                   {"files", files}});
}

}  // namespace sirld::cli
