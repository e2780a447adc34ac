#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sirld/error.hpp"
#include "sirld/path.hpp"

namespace sirld {

/// Infection rate, initial-state law and horizon of the SIR chain.
struct ModelParams {
  double lambda = 1.0;
  double p0 = 0.5;
  double p1 = 0.1;
  double T0 = 1.0;

  /// lambda = 0 is accepted (pure-death chain); everything else must be in range.
  void validate() const {
    require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be a nonnegative finite number");
    require(p0 > 0.0 && p0 < 1.0, "p0 must lie in (0,1)");
    require(p1 > 0.0 && p1 < 1.0, "p1 must lie in (0,1)");
    require(p0 + p1 < 1.0, "p0 + p1 must be below 1");
    require(std::isfinite(T0) && T0 > 0.0, "T0 must be positive");
  }

  Vec2 initial_point() const { return {p0, p1}; }
};

/// Vertex states: susceptible 0, infected 1, removed -1.
enum class Spin : std::int8_t { removed = -1, susceptible = 0, infected = 1 };

struct EpidemicState {
  std::vector<Spin> spins;
  std::size_t s_count = 0;
  std::size_t i_count = 0;

  std::size_t n() const noexcept { return spins.size(); }

  static EpidemicState from_spins(std::vector<Spin> spins) {
    EpidemicState st;
    st.spins = std::move(spins);
    for (Spin s : st.spins) {
      st.s_count += s == Spin::susceptible ? 1 : 0;
      st.i_count += s == Spin::infected ? 1 : 0;
    }
    return st;
  }
};

enum class Transition : std::uint8_t { infect, recover };

inline const char* to_string(Transition t) { return t == Transition::infect ? "infect" : "recover"; }

struct Event {
  double time = 0.0;
  std::uint32_t vertex = 0;
  Transition transition = Transition::recover;
};

/// Initial configuration plus the time-ordered jump history on [0, horizon].
struct Trajectory {
  std::vector<Spin> initial_spins;
  std::size_t s0 = 0;
  std::size_t i0 = 0;
  std::vector<Event> events;
  double horizon = 0.0;

  std::size_t n() const noexcept { return initial_spins.size(); }
};

/// Jump directions and intensities of the density-dependent description.
struct ReactionSystem {
  double infectivity = 1.0;  ///< lambda * E rho

  static Vec2 l1() { return {0.0, -1.0}; }
  static Vec2 l2() { return {-1.0, 1.0}; }
  double H1(const Vec2& x) const { return x[1]; }
  double H2(const Vec2& x) const { return infectivity * x[0] * x[1]; }
  Vec2 drift(const Vec2& x) const { return l1() * H1(x) + l2() * H2(x); }
  Vec2 grad_H1(const Vec2&) const { return {0.0, 1.0}; }
  Vec2 grad_H2(const Vec2& x) const { return {infectivity * x[1], infectivity * x[0]}; }
};

}  // namespace sirld
