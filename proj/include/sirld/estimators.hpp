#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sirld/environment.hpp"
#include "sirld/fluid.hpp"
#include "sirld/model.hpp"
#include "sirld/path.hpp"
#include "sirld/rates.hpp"
#include "sirld/simulate.hpp"
#include "sirld/stats.hpp"
#include "sirld/tilting.hpp"

/**
 * \file
 * \brief Plain and importance-sampling estimators of ball probabilities around a target path,
 * at large-deviation scale (theta = counts / n) and moderate-deviation scale
 * (nu = n (theta - xhat) / a_n).
 *
 * Replica r draws its environment, initial state and trajectory from streams keyed by r, and
 * results are reduced in replica order, so the output does not depend on the thread count.
 */

namespace sirld {

enum class Space { ldp, mdp };

/// Open ball {x : sup_t |s_t(x - target)| + |i_t(x - target)| < radius}, checked on the target grid.
struct EventSpec {
  Path2 target;
  double radius = 0.1;
  Space space = Space::ldp;

  void validate() const { require(radius > 0.0, "EventSpec: radius must be positive"); }
};

enum class Conditioning { automatic, always, never };

struct EstimateOptions {
  bool quenched = false;             ///< share one environment across replicas
  std::uint64_t quenched_seed = 0;
  std::size_t threads = 1;
  Conditioning conditioning = Conditioning::automatic;
  bool self_normalized = false;
  double a_exponent = 0.75;          ///< a_n = n^a_exponent (moderate deviations)
};

struct EstimateReport {
  std::size_t n = 0;
  double a_n = 0.0;
  std::size_t replicas = 0;
  std::size_t hit_count = 0;
  double estimate = 0.0;
  double log_estimate = -std::numeric_limits<double>::infinity();
  double std_error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double rate_empirical = std::numeric_limits<double>::infinity();
  double rate_theoretical = std::numeric_limits<double>::infinity();
  double ess = 0.0;
  double max_eps = 0.0;
  std::string environment_mode = "annealed";
  std::string method = "plain";

  nlohmann::json to_json() const {
    auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    return {{"n", n},
            {"a_n", num(a_n)},
            {"replicas", replicas},
            {"hit_count", hit_count},
            {"is_estimate", num(estimate)},
            {"log_estimate", num(log_estimate)},
            {"std_error", num(std_error)},
            {"ci_lo", num(ci_lo)},
            {"ci_hi", num(ci_hi)},
            {"rate_empirical", num(rate_empirical)},
            {"rate_theoretical", num(rate_theoretical)},
            {"ess", num(ess)},
            {"max_eps", num(max_eps)},
            {"environment_mode", environment_mode},
            {"method", method}};
  }
};

inline void write_estimate_csv_header(std::ostream& out) {
  out << "n,a_n,replicas,hits,log_estimate,std_error,rate_empirical,rate_theoretical,ess\n";
}

inline void write_estimate_csv_row(std::ostream& out, const EstimateReport& r) {
  out << std::setprecision(17) << r.n << ',' << r.a_n << ',' << r.replicas << ',' << r.hit_count << ','
      << r.log_estimate << ',' << r.std_error << ',' << r.rate_empirical << ',' << r.rate_theoretical << ','
      << r.ess << '\n';
}

/// Runs fn(r) for r in [0, count) on `threads` workers; results are stored by index.
template <class T, class Fn>
std::vector<T> run_replicas(std::size_t count, std::size_t threads, Fn&& fn) {
  std::vector<T> out(count);
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t r = 0; r < count; ++r) {
      out[r] = fn(r);
    }
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t r = w; r < count; r += threads) {
          out[r] = fn(r);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  for (auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return out;
}

namespace detail {

inline Environment replica_environment(std::size_t n, const WeightDistribution& dist, const EstimateOptions& opt,
                                       std::uint64_t seed, std::size_t r) {
  const std::uint64_t env_seed = opt.quenched ? opt.quenched_seed : derive_seed(seed, StreamTag::environment, r);
  return sample_environment(n, dist, env_seed);
}

/// log of the multinomial probability of (s, i, n - s - i) counts under the initial law.
inline double log_multinomial(std::size_t n, std::size_t s, std::size_t i, const ModelParams& p) {
  const std::size_t r = n - s - i;
  const auto d = [](std::size_t k) { return static_cast<double>(k); };
  const auto xlogp = [&](std::size_t k, double prob) { return k == 0 ? 0.0 : d(k) * std::log(prob); };
  return std::lgamma(d(n) + 1.0) - std::lgamma(d(s) + 1.0) - std::lgamma(d(i) + 1.0) - std::lgamma(d(r) + 1.0) +
         xlogp(s, p.p0) + xlogp(i, p.p1) + xlogp(r, 1.0 - p.p0 - p.p1);
}

/// Deviation path of a trajectory in the event's space.
inline Path2 event_path(const Trajectory& traj, const EventSpec& event, const Path2* xhat, double a_n) {
  Path2 theta = counts_path(traj, event.target.grid());
  if (event.space == Space::ldp) {
    return theta;
  }
  const double scale = static_cast<double>(traj.n()) / a_n;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    theta[k] = scale * (theta[k] - (*xhat)[k]);
  }
  return theta;
}

struct ReplicaOutcome {
  bool hit = false;
  double log_weight = 0.0;
  double max_eps = 0.0;
};

inline void summarise_weighted(EstimateReport& rep, const std::vector<ReplicaOutcome>& outcomes, double log_offset,
                               bool self_normalized) {
  std::vector<double> hit_logs;
  std::vector<double> all_logs;
  for (const auto& o : outcomes) {
    all_logs.push_back(o.log_weight);
    if (o.hit) {
      hit_logs.push_back(o.log_weight);
      ++rep.hit_count;
    }
    rep.max_eps = std::max(rep.max_eps, o.max_eps);
  }
  const stats::LogMean lm = stats::log_mean_exp(hit_logs, outcomes.size());
  rep.ess = lm.ess;
  if (self_normalized) {
    const double log_norm = stats::log_mean_exp(all_logs, outcomes.size()).log_mean;
    rep.log_estimate = lm.log_mean - log_norm + log_offset;
    rep.std_error = std::exp(lm.log_std_error - log_norm + log_offset);
  } else {
    rep.log_estimate = lm.log_mean + log_offset;
    rep.std_error = std::exp(lm.log_std_error + log_offset);
  }
  rep.estimate = std::exp(rep.log_estimate);
}

inline void fill_rates(EstimateReport& rep, Space space) {
  const auto n = static_cast<double>(rep.n);
  if (std::isfinite(rep.log_estimate)) {
    rep.rate_empirical = space == Space::ldp ? -rep.log_estimate / n : -(n / (rep.a_n * rep.a_n)) * rep.log_estimate;
  }
}

inline double a_n_of(std::size_t n, double exponent) { return std::pow(static_cast<double>(n), exponent); }

}  // namespace detail

/// Direct frequency estimate of P(path in ball) with a Wilson interval.
inline EstimateReport estimate_plain(const ModelParams& params, const WeightDistribution& dist,
                                     const EventSpec& event, std::size_t n, std::size_t replicas,
                                     std::uint64_t seed, const EstimateOptions& opt = {}) {
  params.validate();
  event.validate();
  require(replicas >= 1, "estimate_plain: replicas must be at least 1");
  require(n >= 2, "estimate_plain: n must be at least 2");
  EstimateReport rep;
  rep.n = n;
  rep.replicas = replicas;
  rep.method = "plain";
  rep.environment_mode = opt.quenched ? "quenched" : "annealed";
  rep.a_n = detail::a_n_of(n, opt.a_exponent);
  Path2 xhat;
  if (event.space == Space::mdp) {
    const Linearization linz = linearize(params, dist.mean(), event.target.grid().intervals());
    xhat = Path2::tabulate(event.target.grid(), [&](double t) { return linz.xhat(t); });
  }
  const Environment shared = opt.quenched ? sample_environment(n, dist, opt.quenched_seed) : Environment{};
  const auto hits = run_replicas<char>(replicas, opt.threads, [&](std::size_t r) -> char {
    const Environment own = opt.quenched ? Environment{} : detail::replica_environment(n, dist, opt, seed, r);
    const Environment& env = opt.quenched ? shared : own;
    const EpidemicState init = sample_initial_state(n, params, derive_seed(seed, StreamTag::initial_state, r));
    const Trajectory traj = simulate(env, params, init, derive_seed(seed, StreamTag::trajectory, r));
    const Path2 path = detail::event_path(traj, event, &xhat, rep.a_n);
    return sup_norm_distance(path, event.target) < event.radius ? 1 : 0;
  });
  for (char h : hits) {
    rep.hit_count += static_cast<std::size_t>(h);
  }
  rep.estimate = static_cast<double>(rep.hit_count) / static_cast<double>(replicas);
  rep.log_estimate = std::log(rep.estimate);
  rep.std_error = std::sqrt(rep.estimate * (1.0 - rep.estimate) / static_cast<double>(replicas));
  const auto ci = stats::wilson_interval(rep.hit_count, replicas);
  rep.ci_lo = ci.lo;
  rep.ci_hi = ci.hi;
  rep.ess = static_cast<double>(rep.hit_count);
  detail::fill_rates(rep, event.space);
  if (event.space == Space::ldp) {
    rep.rate_theoretical = ldp_rate(event.target, params, dist.mean()).total;
  } else {
    rep.rate_theoretical = mdp_rate(event.target, linearize(params, dist.mean(), event.target.grid().intervals())).total;
  }
  return rep;
}

/// Tilt that makes `target` the typical path: controls recovered from the target, then
/// i(g) = -log h1, s(g) = -log h2 - log h1.
inline Path2 ldp_tilt_for(const Path2& target, const ModelParams& params, double mean_rho) {
  return tilt_from_controls(controls_from_path(target, params, mean_rho));
}

/// Importance-sampling estimate at large-deviation scale using the analytic tilt of the target.
/// When the target starts away from (p0, p1) (or conditioning is forced), initial counts are
/// fixed to floor(n f_0) and the exact multinomial probability of that start is folded in.
inline EstimateReport estimate_is_ldp(const ModelParams& params, const WeightDistribution& dist,
                                      const EventSpec& event, std::size_t n, std::size_t replicas,
                                      std::uint64_t seed, const EstimateOptions& opt = {}) {
  params.validate();
  event.validate();
  require(event.space == Space::ldp, "estimate_is_ldp: event must live in theta space");
  require(replicas >= 1, "estimate_is_ldp: replicas must be at least 1");
  require(n >= 2, "estimate_is_ldp: n must be at least 2");
  const RateReport rate = ldp_rate(event.target, params, dist.mean());
  if (!rate.finite) {
    throw NumericRefusal("estimate_is_ldp: target has infinite rate (" + rate.rejection_reason + ")");
  }
  const TiltSpec tilt = TiltSpec::ldp(ldp_tilt_for(event.target, params, dist.mean()));
  const Vec2 f0 = event.target.front();
  const bool condition = opt.conditioning == Conditioning::always ||
                         (opt.conditioning == Conditioning::automatic &&
                          (std::abs(f0[0] - params.p0) > 1e-12 || std::abs(f0[1] - params.p1) > 1e-12));
  const auto s0 = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f0[0]));
  const auto i0 = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f0[1]));
  const double log_offset = condition ? detail::log_multinomial(n, s0, i0, params) : 0.0;

  EstimateReport rep;
  rep.n = n;
  rep.replicas = replicas;
  rep.method = "is-ldp";
  rep.environment_mode = opt.quenched ? "quenched" : "annealed";
  rep.a_n = detail::a_n_of(n, opt.a_exponent);
  const Environment shared = opt.quenched ? sample_environment(n, dist, opt.quenched_seed) : Environment{};
  const auto outcomes = run_replicas<detail::ReplicaOutcome>(replicas, opt.threads, [&](std::size_t r) {
    const Environment own = opt.quenched ? Environment{} : detail::replica_environment(n, dist, opt, seed, r);
    const Environment& env = opt.quenched ? shared : own;
    const std::uint64_t init_seed = derive_seed(seed, StreamTag::initial_state, r);
    const EpidemicState init = condition ? sample_initial_state_conditioned(n, s0, i0, init_seed)
                                         : sample_initial_state(n, params, init_seed);
    const WeightedTrajectory wt =
        simulate_tilted(env, params, init, tilt, derive_seed(seed, StreamTag::trajectory, r));
    const Path2 path = counts_path(wt.traj, event.target.grid());
    return detail::ReplicaOutcome{sup_norm_distance(path, event.target) < event.radius, wt.log_weight, wt.max_eps};
  });
  detail::summarise_weighted(rep, outcomes, log_offset, opt.self_normalized);
  detail::fill_rates(rep, Space::ldp);
  rep.rate_theoretical = rate.total;
  return rep;
}

/// Importance-sampling estimate at moderate-deviation scale. The tilt is the forcing g* with
/// sigma_t g*_t = f'_t - b_t f_t.
inline EstimateReport estimate_is_mdp(const ModelParams& params, const WeightDistribution& dist,
                                      const EventSpec& event, std::size_t n, std::size_t replicas,
                                      std::uint64_t seed, const EstimateOptions& opt = {}) {
  params.validate();
  event.validate();
  require(event.space == Space::mdp, "estimate_is_mdp: event must live in nu space");
  require(replicas >= 1, "estimate_is_mdp: replicas must be at least 1");
  require(n >= 2, "estimate_is_mdp: n must be at least 2");
  require(opt.a_exponent > 0.5 && opt.a_exponent < 1.0, "estimate_is_mdp: a exponent must lie in (0.5,1)");
  const Linearization linz = linearize(params, dist.mean(), event.target.grid().intervals());
  const RateReport rate = mdp_rate(event.target, linz);
  if (!rate.finite) {
    throw NumericRefusal("estimate_is_mdp: " + rate.rejection_reason);
  }
  const double a_n = detail::a_n_of(n, opt.a_exponent);
  const TiltSpec tilt = TiltSpec::mdp(mdp_forcing(event.target, linz), a_n, n);
  const Path2 xhat = Path2::tabulate(event.target.grid(), [&](double t) { return linz.xhat(t); });
  const Vec2 f0 = event.target.front();
  const bool condition = opt.conditioning == Conditioning::always ||
                         (opt.conditioning == Conditioning::automatic && f0.cwiseAbs().maxCoeff() > 1e-12);
  const double dn = static_cast<double>(n);
  const auto s0 = static_cast<std::size_t>(std::max(0.0, std::floor(dn * params.p0 + a_n * f0[0])));
  const auto i0 = static_cast<std::size_t>(std::max(0.0, std::floor(dn * params.p1 + a_n * f0[1])));
  if (condition) {
    require(s0 + i0 <= n, "estimate_is_mdp: conditioned start exceeds n");
  }
  const double log_offset = condition ? detail::log_multinomial(n, s0, i0, params) : 0.0;

  EstimateReport rep;
  rep.n = n;
  rep.a_n = a_n;
  rep.replicas = replicas;
  rep.method = "is-mdp";
  rep.environment_mode = opt.quenched ? "quenched" : "annealed";
  const Environment shared = opt.quenched ? sample_environment(n, dist, opt.quenched_seed) : Environment{};
  const auto outcomes = run_replicas<detail::ReplicaOutcome>(replicas, opt.threads, [&](std::size_t r) {
    const Environment own = opt.quenched ? Environment{} : detail::replica_environment(n, dist, opt, seed, r);
    const Environment& env = opt.quenched ? shared : own;
    const std::uint64_t init_seed = derive_seed(seed, StreamTag::initial_state, r);
    const EpidemicState init = condition ? sample_initial_state_conditioned(n, s0, i0, init_seed)
                                         : sample_initial_state(n, params, init_seed);
    const WeightedTrajectory wt =
        simulate_tilted_mdp(env, params, init, tilt, derive_seed(seed, StreamTag::trajectory, r));
    const Path2 path = detail::event_path(wt.traj, event, &xhat, a_n);
    return detail::ReplicaOutcome{sup_norm_distance(path, event.target) < event.radius, wt.log_weight, wt.max_eps};
  });
  detail::summarise_weighted(rep, outcomes, log_offset, opt.self_normalized);
  detail::fill_rates(rep, Space::mdp);
  rep.rate_theoretical = rate.total;
  return rep;
}

/// Least-squares fit of log_estimate against n (ldp) or a_n^2 / n (mdp).
inline stats::LinearFit rate_slope(const std::vector<EstimateReport>& reports, Space space) {
  require(reports.size() >= 3, "rate_slope: need at least three reports");
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& r : reports) {
    require(std::isfinite(r.log_estimate), "rate_slope: a report has no finite log estimate");
    const auto n = static_cast<double>(r.n);
    x.push_back(space == Space::ldp ? n : r.a_n * r.a_n / n);
    y.push_back(r.log_estimate);
  }
  return stats::least_squares(x, y);
}

}  // namespace sirld
