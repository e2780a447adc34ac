#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "sirld/environment.hpp"
#include "sirld/fluid.hpp"
#include "sirld/simulate.hpp"
#include "sirld/stats.hpp"

namespace sirld {
namespace {

void expect_valid_trajectory(const Trajectory& traj) {
  std::vector<int> infected(traj.n(), 0);
  std::vector<int> recovered(traj.n(), 0);
  long long s = static_cast<long long>(traj.s0);
  long long i = static_cast<long long>(traj.i0);
  double t = 0.0;
  for (const Event& e : traj.events) {
    ASSERT_GT(e.time, t);
    ASSERT_LE(e.time, traj.horizon);
    t = e.time;
    if (e.transition == Transition::infect) {
      ASSERT_EQ(traj.initial_spins[e.vertex], Spin::susceptible);
      ASSERT_EQ(infected[e.vertex]++, 0);
      --s;
      ++i;
    } else {
      const bool was_infected = traj.initial_spins[e.vertex] == Spin::infected || infected[e.vertex] == 1;
      ASSERT_TRUE(was_infected);
      ASSERT_EQ(recovered[e.vertex]++, 0);
      --i;
    }
    ASSERT_GE(s, 0);
    ASSERT_GE(i, 0);
  }
  EXPECT_LE(traj.events.size(), 2 * traj.s0 + traj.i0);
}

TEST(InitialState, BinomialProportion) {
  const ModelParams p{1.0, 0.98, 0.01, 1.0};
  const std::size_t n = 10000;
  const EpidemicState st = sample_initial_state(n, p, 12);
  const double frac = static_cast<double>(st.s_count) / n;
  EXPECT_LT(std::abs(frac - 0.98), 5.0 * std::sqrt(0.98 * 0.02 / n));
  std::size_t s = 0;
  std::size_t i = 0;
  for (Spin x : st.spins) {
    s += x == Spin::susceptible;
    i += x == Spin::infected;
  }
  EXPECT_EQ(s, st.s_count);
  EXPECT_EQ(i, st.i_count);
}

TEST(InitialState, SingleVertexAndDeterminism) {
  const ModelParams p{1.0, 0.5, 0.3, 1.0};
  EXPECT_EQ(sample_initial_state(1, p, 3).spins.size(), 1u);
  EXPECT_EQ(sample_initial_state(50, p, 3).spins, sample_initial_state(50, p, 3).spins);
}

TEST(InitialState, ConditionedCounts) {
  const EpidemicState all = sample_initial_state_conditioned(5, 5, 0, 1);
  EXPECT_EQ(all.s_count, 5u);
  const EpidemicState none = sample_initial_state_conditioned(5, 0, 0, 1);
  for (Spin x : none.spins) {
    EXPECT_EQ(x, Spin::removed);
  }
  EXPECT_THROW(sample_initial_state_conditioned(5, 4, 2, 1), InvalidInput);
}

TEST(InitialState, ConditionedIsExchangeable) {
  const std::size_t n = 10;
  const std::size_t reps = 20000;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    hits += sample_initial_state_conditioned(n, 3, 2, r).spins[0] == Spin::susceptible;
  }
  const double p = 0.3;
  EXPECT_LT(std::abs(static_cast<double>(hits) / reps - p), 5.0 * std::sqrt(p * (1 - p) / reps));
}

TEST(Simulate, NoInfectedMeansNoEvents) {
  const Environment env = sample_environment(20, WeightDistribution::constant(1.0), 0);
  const EpidemicState init = sample_initial_state_conditioned(20, 20, 0, 1);
  EXPECT_TRUE(simulate(env, ModelParams{3.0, 0.5, 0.3, 5.0}, init, 2).events.empty());
}

TEST(Simulate, TrajectoryInvariants) {
  const ModelParams p{2.5, 0.6, 0.2, 4.0};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Environment env = sample_environment(150, WeightDistribution::exponential(1.0), seed);
    const EpidemicState init = sample_initial_state(150, p, seed);
    expect_valid_trajectory(simulate(env, p, init, seed));
  }
  const Environment k = sample_environment(300, WeightDistribution::constant(1.0), 0);
  expect_valid_trajectory(simulate(k, p, sample_initial_state(300, p, 9), 9));
}

TEST(Simulate, Deterministic) {
  const ModelParams p{2.0, 0.6, 0.1, 3.0};
  const Environment env = sample_environment(80, WeightDistribution::uniform(0.0, 2.0), 4);
  const EpidemicState init = sample_initial_state(80, p, 4);
  std::ostringstream a;
  std::ostringstream b;
  write_trajectory_csv(a, simulate(env, p, init, 5));
  write_trajectory_csv(b, simulate(env, p, init, 5));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Simulate, PureDeathRecoveryTimesAreExponential) {
  const ModelParams p{0.0, 0.2, 0.7, 2.0};
  const std::size_t n = 2000;
  const Environment env = sample_environment(n, WeightDistribution::constant(1.0), 0);
  const EpidemicState init = sample_initial_state_conditioned(n, 400, 1600, 3);
  const Trajectory traj = simulate(env, p, init, 8);
  std::vector<double> times;
  for (const Event& e : traj.events) {
    ASSERT_EQ(e.transition, Transition::recover);
    times.push_back(e.time);
  }
  const double mass = -std::expm1(-p.T0);
  const auto ks = stats::ks_one_sample(times, [&](double t) { return -std::expm1(-t) / mass; });
  EXPECT_GT(ks.p_value, 0.001);
  const double expect = 1600.0 * mass;
  EXPECT_LT(std::abs(static_cast<double>(times.size()) - expect), 5.0 * std::sqrt(1600.0 * mass * (1 - mass)));
}

TEST(Simulate, TwoVertexRace) {
  const double lambda = 6.0;
  const ModelParams p{lambda, 0.5, 0.3, 60.0};
  const Environment env = sample_environment(2, WeightDistribution::constant(1.0), 0);
  const EpidemicState init = EpidemicState::from_spins({Spin::susceptible, Spin::infected});
  const std::size_t reps = 100000;
  std::size_t infect_first = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    const Trajectory traj = simulate(env, p, init, r);
    ASSERT_FALSE(traj.events.empty());
    infect_first += traj.events.front().transition == Transition::infect;
  }
  const double q = (lambda / 2) / (lambda / 2 + 1);
  EXPECT_LT(std::abs(static_cast<double>(infect_first) / reps - q), 5.0 * std::sqrt(q * (1 - q) / reps));
}

TEST(CountsPath, ConstantWithoutEventsAndJumpDirections) {
  Trajectory traj;
  traj.initial_spins = {Spin::susceptible, Spin::susceptible, Spin::infected, Spin::removed};
  traj.s0 = 2;
  traj.i0 = 1;
  traj.horizon = 1.0;
  const TimeGrid grid(1.0, 4);
  const Path2 flat = counts_path(traj, grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EXPECT_EQ(flat[k], Vec2(0.5, 0.25));
  }
  traj.events = {{0.25, 0, Transition::infect}, {0.5, 2, Transition::recover}};
  const Path2 f = counts_path(traj, grid);
  EXPECT_EQ(f[1] - f[0], Vec2(-0.25, 0.25));
  EXPECT_EQ(f[2] - f[1], Vec2(0.0, -0.25));
}

TEST(EpsilonPath, ConstantEnvironmentIsZero) {
  const ModelParams p{2.0, 0.6, 0.2, 3.0};
  const Environment env = sample_environment(100, WeightDistribution::constant(2.0), 0);
  const Trajectory traj = simulate(env, p, sample_initial_state(100, p, 1), 1);
  const ScalarPath eps = epsilon_path(traj, env, TimeGrid(p.T0, 300));
  for (std::size_t k = 0; k < eps.size(); ++k) {
    EXPECT_NEAR(eps[k][0], 0.0, 1e-12);
  }
}

TEST(EpsilonPath, BoundedByDeltaAndZeroWithoutInfected) {
  const ModelParams p{3.0, 0.6, 0.3, 4.0};
  const Environment env = sample_environment(12, WeightDistribution::exponential(1.0), 31);
  const double delta = delta_exact(env);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory traj = simulate(env, p, sample_initial_state(12, p, seed), seed);
    const ScalarPath eps = epsilon_path(traj, env, TimeGrid(p.T0, 400));
    for (std::size_t k = 0; k < eps.size(); ++k) {
      EXPECT_LE(std::abs(eps[k][0]), delta + 1e-12);
    }
    const Path2 counts = counts_path(traj, TimeGrid(p.T0, 400));
    for (std::size_t k = 0; k < eps.size(); ++k) {
      if (counts[k][1] == 0.0) {
        EXPECT_EQ(eps[k][0], 0.0);
      }
    }
  }
}

TEST(ChainState, PressureMatchesDirectSum) {
  const ModelParams p{2.0, 0.5, 0.3, 2.0};
  const std::size_t n = 60;
  const Environment env = sample_environment(n, WeightDistribution::exponential(1.0), 2);
  const Trajectory traj = simulate(env, p, sample_initial_state(n, p, 2), 2);
  std::size_t checked = 0;
  replay(
      traj, env, [](double, double, const detail::ChainState&) {},
      [&](const Event&, const detail::ChainState& chain) {
        for (std::size_t v = 0; v < n; ++v) {
          if (chain.spins()[v] != Spin::susceptible) {
            continue;
          }
          double direct = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            direct += chain.spins()[j] == Spin::infected ? env.weight(v, j) : 0.0;
          }
          EXPECT_NEAR(chain.pressure(v), direct, 1e-10);
          ++checked;
        }
      });
  EXPECT_GT(checked, 0u);
}

TEST(LawOfLargeNumbers, ConstantWeights) {
  const ModelParams p{2.0, 0.6, 0.1, 3.0};
  const std::size_t n = 8000;
  const Environment env = sample_environment(n, WeightDistribution::constant(1.0), 0);
  const TimeGrid grid(p.T0, 600);
  const Path2 xhat = fluid_ode(p, 1.0, 600);
  std::size_t close = 0;
  for (std::uint64_t r = 0; r < 50; ++r) {
    const Trajectory traj = simulate(env, p, sample_initial_state(n, p, 100 + r), 100 + r);
    close += sup_norm_distance(counts_path(traj, grid), xhat) <= 0.05;
  }
  EXPECT_GE(close, 47u);
}

// The spread of the counts at T0 agrees with the linear noise approximation
// Sigma' = B Sigma + Sigma B^T + sigma_t, Sigma_0 = M0, scaled by 1/n.
TEST(LawOfLargeNumbers, FluctuationsMatchLinearNoise) {
  const ModelParams p{2.0, 0.6, 0.1, 3.0};
  const std::size_t n = 2000;
  const std::size_t steps = 3000;
  const Linearization linz = linearize(p, 1.0, steps);
  Mat2 cov = linz.M0();
  const double h = p.T0 / steps;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = k * h;
    const Mat2 b = linz.b(t);
    cov += h * (b * cov + cov * b.transpose() + linz.sigma(t));
  }
  const Environment env = sample_environment(n, WeightDistribution::constant(1.0), 0);
  const TimeGrid grid(p.T0, 60);
  const Vec2 end = fluid_ode(p, 1.0, 60)[60];
  const std::size_t reps = 1000;
  Vec2 sum = Vec2::Zero();
  Vec2 sq = Vec2::Zero();
  for (std::size_t r = 0; r < reps; ++r) {
    const Vec2 d = counts_path(simulate(env, p, sample_initial_state(n, p, r), r), grid)[60] - end;
    sum += d;
    sq += d.cwiseProduct(d);
  }
  for (int c = 0; c < 2; ++c) {
    const double m = sum[c] / reps;
    const double sd = std::sqrt(sq[c] / reps - m * m);
    EXPECT_NEAR(sd / std::sqrt(cov(c, c) / n), 1.0, 0.1) << "coordinate " << c;
  }
}

TEST(TrajectoryCsv, HeaderAndRows) {
  Trajectory traj;
  traj.initial_spins = {Spin::susceptible, Spin::infected};
  traj.s0 = 1;
  traj.i0 = 1;
  traj.horizon = 1.0;
  traj.events = {{0.5, 0, Transition::infect}};
  std::ostringstream out;
  write_trajectory_csv(out, traj);
  EXPECT_EQ(out.str(), "time,vertex,transition,S,I\n0.5,0,infect,0,2\n");
}

}  // namespace
}  // namespace sirld
