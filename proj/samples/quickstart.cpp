// Simulates one epidemic on an exponential(1) environment, compares it with the fluid limit
// and prints the rate of a controlled path.
#include <iostream>

#include "sirld/sirld.hpp"

int main() {
  using namespace sirld;
  const ModelParams params{2.0, 0.6, 0.1, 3.0};
  const auto dist = WeightDistribution::exponential(1.0);
  const std::size_t n = 1000;

  const Environment env = sample_environment(n, dist, 1);
  const EpidemicState init = sample_initial_state(n, params, 2);
  const Trajectory traj = simulate(env, params, init, 3);

  const Path2 fluid = fluid_ode(params, dist.mean());
  const Path2 theta = counts_path(traj, fluid.grid());
  std::cout << "events: " << traj.events.size() << '\n'
            << "sup distance to the fluid limit: " << sup_norm_distance(theta, fluid) << '\n';

  const Path2 f = controlled_path(params, dist.mean(), constant_controls(params.T0, 2.0, 0.5), params.initial_point());
  const RateReport rate = ldp_rate(f, params, dist.mean());
  std::cout << "rate of the controlled path (h1 = 2, h2 = 0.5): " << rate.total << '\n';
}
