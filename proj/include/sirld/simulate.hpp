#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "sirld/environment.hpp"
#include "sirld/model.hpp"
#include "sirld/path.hpp"
#include "sirld/rng.hpp"

/**
 * \file
 * \brief Event-driven simulation of the SIR chain on a weighted complete graph.
 *
 * A susceptible vertex i is infected at rate (lambda/n) sum_j rho(i,j) 1{j infected} and an
 * infected vertex recovers at rate 1. The simulator keeps, for every susceptible vertex, its
 * infection pressure sum_j rho(i,j) 1{j infected} together with the total
 * gamma(S, I) = sum_{i in S} pressure[i], so each event costs O(n). Environments drawn from a
 * constant law skip the pressure array entirely: gamma = c S I and the infected vertex is a
 * uniform susceptible.
 */

namespace sirld {

/// Each vertex independently susceptible w.p. p0, infected w.p. p1, removed otherwise.
inline EpidemicState sample_initial_state(std::size_t n, const ModelParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed, StreamTag::initial_state, 0);
  std::vector<Spin> spins(n);
  for (auto& s : spins) {
    const double u = rng.uniform();
    s = u < params.p0 ? Spin::susceptible : (u < params.p0 + params.p1 ? Spin::infected : Spin::removed);
  }
  return EpidemicState::from_spins(std::move(spins));
}

/// Exactly s0 susceptible and i0 infected vertices at uniformly random positions.
inline EpidemicState sample_initial_state_conditioned(std::size_t n, std::size_t s0, std::size_t i0,
                                                      std::uint64_t seed) {
  require(s0 + i0 <= n, "sample_initial_state_conditioned: s0 + i0 exceeds n");
  Rng rng(seed, StreamTag::initial_state, 1);
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) {
    order[k] = k;
  }
  for (std::size_t k = 0; k < s0 + i0; ++k) {
    std::swap(order[k], order[k + rng.below(n - k)]);
  }
  std::vector<Spin> spins(n, Spin::removed);
  for (std::size_t k = 0; k < s0 + i0; ++k) {
    spins[order[k]] = k < s0 ? Spin::susceptible : Spin::infected;
  }
  return EpidemicState::from_spins(std::move(spins));
}

namespace detail {

/// Mutable chain configuration with O(1) class membership and incremental gamma(S, I).
class ChainState {
 public:
  ChainState(const Environment& env, const std::vector<Spin>& spins)
      : env_(env), n_(spins.size()), spins_(spins), pos_(n_, 0) {
    require(env.n() == n_, "environment size does not match the state");
    for (std::size_t v = 0; v < n_; ++v) {
      if (spins_[v] == Spin::susceptible) {
        pos_[v] = sus_.size();
        sus_.push_back(static_cast<std::uint32_t>(v));
      } else if (spins_[v] == Spin::infected) {
        pos_[v] = inf_.size();
        inf_.push_back(static_cast<std::uint32_t>(v));
      }
    }
    if (!env.implicit_constant()) {
      pressure_.assign(n_, 0.0);
      recompute();
    }
  }

  std::size_t S() const noexcept { return sus_.size(); }
  std::size_t I() const noexcept { return inf_.size(); }
  const std::vector<Spin>& spins() const noexcept { return spins_; }

  /// gamma(S_t, I_t).
  double gamma() const noexcept {
    if (env_.implicit_constant()) {
      return env_.dist().a * static_cast<double>(S()) * static_cast<double>(I());
    }
    return gamma_;
  }

  double pressure(std::size_t v) const noexcept {
    if (env_.implicit_constant()) {
      return env_.dist().a * static_cast<double>(I());
    }
    return pressure_[v];
  }

  void infect(std::uint32_t v) {
    assert(spins_[v] == Spin::susceptible);
    remove(sus_, v);
    spins_[v] = Spin::infected;
    pos_[v] = inf_.size();
    inf_.push_back(v);
    if (!env_.implicit_constant()) {
      gamma_ -= pressure_[v];
      const auto col = env_.row(v);
      double added = 0.0;
      for (std::uint32_t w : sus_) {
        pressure_[w] += col[w];
        added += col[w];
      }
      gamma_ += added;
      check_drift();
    }
  }

  void recover(std::uint32_t v) {
    assert(spins_[v] == Spin::infected);
    remove(inf_, v);
    spins_[v] = Spin::removed;
    if (!env_.implicit_constant()) {
      const auto col = env_.row(v);
      double removed = 0.0;
      for (std::uint32_t w : sus_) {
        pressure_[w] -= col[w];
        removed += col[w];
      }
      gamma_ -= removed;
      if (inf_.empty()) {
        gamma_ = 0.0;
      }
      check_drift();
    }
  }

  std::uint32_t pick_infected(Rng& rng) const { return inf_[rng.below(inf_.size())]; }

  /// Susceptible vertex drawn with probability proportional to its pressure. Resyncs gamma
  /// with the scanned total.
  std::uint32_t pick_susceptible(Rng& rng) {
    if (env_.implicit_constant()) {
      return sus_[rng.below(sus_.size())];
    }
    double total = 0.0;
    for (std::uint32_t w : sus_) {
      total += pressure_[w];
    }
    gamma_ = total;
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::uint32_t last = sus_.back();
    for (std::uint32_t w : sus_) {
      if (pressure_[w] > 0.0) {
        acc += pressure_[w];
        last = w;
        if (acc > target) {
          return w;
        }
      }
    }
    return last;
  }

  /// Pressures and gamma from scratch.
  void recompute() {
    if (env_.implicit_constant()) {
      return;
    }
    gamma_ = 0.0;
    for (std::uint32_t w : sus_) {
      const auto r = env_.row(w);
      double p = 0.0;
      for (std::uint32_t j : inf_) {
        p += r[j];
      }
      pressure_[w] = p;
      gamma_ += p;
    }
  }

 private:
  void remove(std::vector<std::uint32_t>& list, std::uint32_t v) {
    const std::size_t at = pos_[v];
    const std::uint32_t moved = list.back();
    list[at] = moved;
    pos_[moved] = at;
    list.pop_back();
  }

  void check_drift() {
#ifndef NDEBUG
    if (++events_since_check_ < 1000) {
      return;
    }
    events_since_check_ = 0;
    const std::vector<double> before = pressure_;
    recompute();
    for (std::uint32_t w : sus_) {
      assert(std::abs(before[w] - pressure_[w]) < 1e-6 * static_cast<double>(n_));
    }
#endif
  }

  const Environment& env_;
  std::size_t n_;
  std::vector<Spin> spins_;
  std::vector<std::size_t> pos_;
  std::vector<std::uint32_t> sus_;
  std::vector<std::uint32_t> inf_;
  std::vector<double> pressure_;
  double gamma_ = 0.0;
#ifndef NDEBUG
  std::size_t events_since_check_ = 0;
#endif
};

/// Rate multipliers of the untilted chain.
struct UnitRates {
  static constexpr bool time_dependent = false;
  double recovery_bound() const noexcept { return 1.0; }
  double infection_bound() const noexcept { return 1.0; }
  double recovery_factor(double) const noexcept { return 1.0; }
  double infection_factor(double) const noexcept { return 1.0; }
};

/// Simulates on [0, T0] with recovery rate factor(t) per infected and infection rate
/// factor(t) (lambda/n) pressure per susceptible. Time-dependent factors use thinning
/// against the policy's bounds.
template <class Rates>
Trajectory run_chain(const Environment& env, const ModelParams& params, const EpidemicState& init,
                     std::uint64_t seed, const Rates& rates) {
  params.validate();
  require(env.n() == init.n(), "simulate: environment and initial state sizes differ");
  Trajectory traj;
  traj.initial_spins = init.spins;
  traj.s0 = init.s_count;
  traj.i0 = init.i_count;
  traj.horizon = params.T0;
  ChainState chain(env, init.spins);
  Rng rng(seed, StreamTag::trajectory, 0);
  const double scale = params.lambda / static_cast<double>(env.n());
  const double bound1 = rates.recovery_bound();
  const double bound2 = rates.infection_bound();
  double t = 0.0;
  while (chain.I() > 0) {
    const double r1 = static_cast<double>(chain.I());
    const double r2 = scale * chain.gamma();
    const double total = r1 * bound1 + r2 * bound2;
    t += rng.exponential(total);
    if (t > params.T0) {
      break;
    }
    const double u = rng.uniform() * total;
    double a1 = r1;
    double a2 = r2;
    if constexpr (Rates::time_dependent) {
      const double f1 = rates.recovery_factor(t);
      const double f2 = rates.infection_factor(t);
      if (f1 > bound1 || f2 > bound2) {
        throw std::logic_error("thinning bound violated");
      }
      a1 *= f1;
      a2 *= f2;
    }
    if (u < a1) {
      const std::uint32_t v = chain.pick_infected(rng);
      chain.recover(v);
      traj.events.push_back({t, v, Transition::recover});
    } else if (u < a1 + a2 && chain.S() > 0) {
      const std::uint32_t v = chain.pick_susceptible(rng);
      chain.infect(v);
      traj.events.push_back({t, v, Transition::infect});
    }
  }
  return traj;
}

}  // namespace detail

/// Exact realisation of the chain up to T0 (Gillespie direct method).
inline Trajectory simulate(const Environment& env, const ModelParams& params, const EpidemicState& init,
                           std::uint64_t seed) {
  return detail::run_chain(env, params, init, seed, detail::UnitRates{});
}

/// Walks a trajectory, calling `on_interval(t_from, t_to, chain)` for each inter-event
/// interval (chain holds the state on that interval) and `on_event(event, chain_before)`
/// before applying each jump.
template <class OnInterval, class OnEvent>
void replay(const Trajectory& traj, const Environment& env, OnInterval&& on_interval, OnEvent&& on_event) {
  detail::ChainState chain(env, traj.initial_spins);
  double t = 0.0;
  for (const Event& e : traj.events) {
    on_interval(t, e.time, chain);
    on_event(e, chain);
    if (e.transition == Transition::infect) {
      chain.infect(e.vertex);
    } else {
      chain.recover(e.vertex);
    }
    t = e.time;
  }
  on_interval(t, traj.horizon, chain);
}

/// (S_t/n, I_t/n) sampled on the grid, right-continuous at event times.
inline Path2 counts_path(const Trajectory& traj, const TimeGrid& grid) {
  const double inv_n = 1.0 / static_cast<double>(traj.n());
  auto s = static_cast<long long>(traj.s0);
  auto i = static_cast<long long>(traj.i0);
  std::size_t next = 0;
  std::vector<Vec2> values(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    while (next < traj.events.size() && traj.events[next].time <= grid[k]) {
      if (traj.events[next].transition == Transition::infect) {
        --s;
        ++i;
      } else {
        --i;
      }
      ++next;
    }
    values[k] = Vec2(static_cast<double>(s) * inv_n, static_cast<double>(i) * inv_n);
  }
  return {grid, std::move(values)};
}

/// epsilon_t = (gamma(S_t, I_t) - E rho S_t I_t) / n^2 on the grid.
inline ScalarPath epsilon_path(const Trajectory& traj, const Environment& env, const TimeGrid& grid) {
  const double n2 = static_cast<double>(env.n()) * static_cast<double>(env.n());
  const double mean = env.mean();
  std::vector<ScalarPath::Vec> values(grid.size());
  std::size_t k = 0;
  auto fill_until = [&](double t_end, bool inclusive, const detail::ChainState& chain) {
    const double eps = (chain.gamma() - mean * static_cast<double>(chain.S()) * static_cast<double>(chain.I())) / n2;
    while (k < grid.size() && (grid[k] < t_end || (inclusive && grid[k] <= t_end))) {
      values[k++] = ScalarPath::Vec(eps);
    }
  };
  replay(
      traj, env, [&](double, double t_to, const detail::ChainState& chain) { fill_until(t_to, t_to >= traj.horizon, chain); },
      [](const Event&, const detail::ChainState&) {});
  return {grid, std::move(values)};
}

struct TrajectoryCsvExtra {
  double log_weight = 0.0;
  double max_eps = 0.0;
};

inline void write_trajectory_header(std::ostream& out, bool with_replica, bool weighted) {
  if (with_replica) {
    out << "replica,";
  }
  out << "time,vertex,transition,S,I";
  if (weighted) {
    out << ",log_weight,max_eps";
  }
  out << '\n';
}

/// One row per event with the counts after the jump. Vertices are 0-based.
inline void write_trajectory_rows(std::ostream& out, const Trajectory& traj, std::optional<std::size_t> replica,
                                  std::optional<TrajectoryCsvExtra> extra = std::nullopt) {
  out << std::setprecision(17);
  auto s = static_cast<long long>(traj.s0);
  auto i = static_cast<long long>(traj.i0);
  for (const Event& e : traj.events) {
    if (e.transition == Transition::infect) {
      --s;
      ++i;
    } else {
      --i;
    }
    if (replica) {
      out << *replica << ',';
    }
    out << e.time << ',' << e.vertex << ',' << to_string(e.transition) << ',' << s << ',' << i;
    if (extra) {
      out << ',' << extra->log_weight << ',' << extra->max_eps;
    }
    out << '\n';
  }
}

inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  write_trajectory_header(out, false, false);
  write_trajectory_rows(out, traj, std::nullopt);
}

}  // namespace sirld
