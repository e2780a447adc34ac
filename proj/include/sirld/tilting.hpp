#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <vector>

#include "sirld/environment.hpp"
#include "sirld/fluid.hpp"
#include "sirld/model.hpp"
#include "sirld/path.hpp"
#include "sirld/simulate.hpp"

/**
 * \file
 * \brief Exponential martingales of the SIR chain and the tilted simulators they define.
 *
 * For a tilt g and scale kappa (1 at large-deviation scale, a_n/n at moderate-deviation
 * scale) the log density of the tilted law with respect to the original one is
 *
 *   sum over jumps of kappa g(tau) . l  -  int I_u (e^{kappa g.l1} - 1)
 *                                        + (lambda/n) gamma(S_u, I_u) (e^{kappa g.l2} - 1) du.
 *
 * Because g is piecewise linear, the time integrals of e^{kappa g.l} are available in closed
 * form on every grid cell and are tabulated once per tilt.
 */

namespace sirld {

namespace detail {

/// (e^z - 1)/z - 1 without cancellation.
inline double phi_minus_one(double z) {
  if (std::abs(z) < 1e-3) {
    return z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)));
  }
  return (std::expm1(z) - z) / z;
}

/// int_0^L (e^{a0 + beta u} - 1) du.
inline double expm1_integral(double a0, double beta, double L) {
  if (L <= 0.0) {
    return 0.0;
  }
  const double z = beta * L;
  const double pm1 = phi_minus_one(z);
  return L * (std::expm1(a0) * (1.0 + pm1) + pm1);
}

}  // namespace detail

/// A tilt g on [0, T0] with its exponents kappa g.l1 = -kappa i(g) and
/// kappa g.l2 = kappa (i(g) - s(g)) tabulated.
class TiltSpec {
 public:
  enum class Scale { ldp, mdp };

  static TiltSpec ldp(Path2 g) { return TiltSpec(std::move(g), Scale::ldp, 1.0, 0.0); }

  static TiltSpec mdp(Path2 g, double a_n, std::size_t n) {
    require(a_n > 0.0 && n >= 1, "TiltSpec::mdp: a_n and n must be positive");
    return TiltSpec(std::move(g), Scale::mdp, a_n / static_cast<double>(n), a_n);
  }

  Scale scale() const noexcept { return scale_; }
  const Path2& g() const noexcept { return g_; }
  double kappa() const noexcept { return kappa_; }
  double a_n() const noexcept { return a_n_; }

  /// Exponent kappa g_t . l for direction d (0: recovery l1, 1: infection l2).
  double exponent(int d, double t) const {
    const Vec2 gt = g_(t);
    return kappa_ * (d == 0 ? -gt[1] : gt[1] - gt[0]);
  }

  double recovery_factor(double t) const { return std::exp(exponent(0, t)); }
  double infection_factor(double t) const { return std::exp(exponent(1, t)); }
  double recovery_bound() const noexcept { return bound_[0]; }
  double infection_bound() const noexcept { return bound_[1]; }
  const std::vector<double>& node_factors(int d) const { return factor_[d]; }

  /// int_0^t (e^{kappa g_u . l} - 1) du for direction d.
  double cumulative(int d, double t) const {
    const auto [c, w] = g_.grid().locate(t);
    const double h = g_.grid().step();
    const auto& ex = exps_[d];
    return cum_[d][c] + detail::expm1_integral(ex[c], (ex[c + 1] - ex[c]) / h, w * h);
  }

  /// Jump exponent kappa g_t . l for a transition at time t.
  double jump_exponent(Transition tr, double t) const { return exponent(tr == Transition::recover ? 0 : 1, t); }

  /// Rate-policy interface for the simulator.
  static constexpr bool time_dependent = true;

 private:
  TiltSpec(Path2 g, Scale scale, double kappa, double a_n)
      : g_(std::move(g)), scale_(scale), kappa_(kappa), a_n_(a_n) {
    const std::size_t K = g_.size();
    require(K >= 2, "TiltSpec: g needs at least two grid nodes");
    const double h = g_.grid().step();
    for (int d = 0; d < 2; ++d) {
      exps_[d].resize(K);
      factor_[d].resize(K);
      cum_[d].assign(K, 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const Vec2& gk = g_[k];
        exps_[d][k] = kappa_ * (d == 0 ? -gk[1] : gk[1] - gk[0]);
        require(std::isfinite(exps_[d][k]), "TiltSpec: g must be finite");
        factor_[d][k] = std::exp(exps_[d][k]);
      }
      for (std::size_t k = 0; k + 1 < K; ++k) {
        cum_[d][k + 1] = cum_[d][k] + detail::expm1_integral(exps_[d][k], (exps_[d][k + 1] - exps_[d][k]) / h, h);
      }
      // exp of a linear function peaks at a node; the margin absorbs rounding in exp()
      bound_[d] = *std::max_element(factor_[d].begin(), factor_[d].end()) * (1.0 + 4.0 * 0x1.0p-52);
    }
  }

  Path2 g_;
  Scale scale_;
  double kappa_;
  double a_n_;
  std::vector<double> exps_[2];
  std::vector<double> factor_[2];
  std::vector<double> cum_[2];
  double bound_[2] = {1.0, 1.0};
};

struct WeightedTrajectory {
  Trajectory traj;
  double log_weight = 0.0;  ///< log dP/dP_tilt along traj
  double max_eps = 0.0;     ///< max |epsilon_u| over the trajectory
};

struct MartingaleValue {
  double log_value = 0.0;
  double max_eps = 0.0;
};

/// log of the exponential martingale of `tilt` at T0, plus max |epsilon_u|.
inline MartingaleValue evaluate_martingale(const Trajectory& traj, const Environment& env, const ModelParams& params,
                                           const TiltSpec& tilt) {
  require(tilt.g().grid().horizon() >= traj.horizon * (1.0 - 1e-12), "tilt grid is shorter than T0");
  const double scale = params.lambda / static_cast<double>(env.n());
  const double n2 = static_cast<double>(env.n()) * static_cast<double>(env.n());
  const double mean = env.mean();
  double jumps = 0.0;
  double compensator = 0.0;
  double max_eps = 0.0;
  double prev1 = 0.0;
  double prev2 = 0.0;
  replay(
      traj, env,
      [&](double, double t_to, const detail::ChainState& chain) {
        const double c1 = tilt.cumulative(0, t_to);
        const double c2 = tilt.cumulative(1, t_to);
        const double gam = chain.gamma();
        compensator += static_cast<double>(chain.I()) * (c1 - prev1) + scale * gam * (c2 - prev2);
        prev1 = c1;
        prev2 = c2;
        const double eps = (gam - mean * static_cast<double>(chain.S()) * static_cast<double>(chain.I())) / n2;
        max_eps = std::max(max_eps, std::abs(eps));
      },
      [&](const Event& e, const detail::ChainState&) { jumps += tilt.jump_exponent(e.transition, e.time); });
  return {jumps - compensator, max_eps};
}

/// log Lambda_{T0}(g) along a trajectory.
inline double log_lambda(const Trajectory& traj, const Environment& env, const ModelParams& params,
                         const TiltSpec& tilt) {
  require(tilt.scale() == TiltSpec::Scale::ldp, "log_lambda needs a large-deviation tilt");
  return evaluate_martingale(traj, env, params, tilt).log_value;
}

/// log Xi_{T0}(g) along a trajectory. The fluid-limit terms of zeta_g cancel between the
/// boundary terms and the time derivative, leaving the martingale of the tilt (a_n/n) g.
inline double log_xi(const Trajectory& traj, const Environment& env, const ModelParams& params, const TiltSpec& tilt) {
  require(tilt.scale() == TiltSpec::Scale::mdp, "log_xi needs a moderate-deviation tilt");
  return evaluate_martingale(traj, env, params, tilt).log_value;
}

/// Second-order expansion of log Xi in a_n/n:
///   (a_n^2/n) [ g_T . nu_T - g_0 . nu_0 - int g' . nu + (b^n nu) . g + lambda g . l2 (n eps / a_n)
///               + 1/2 g^T sigma^n g + 1/2 lambda (g . l2)^2 eps du ]
/// with nu = n (theta - xhat) / a_n, b^n at the midpoint of theta and xhat (exact for the bilinear
/// infection term) and sigma^n at theta.
inline double log_xi_expanded(const Trajectory& traj, const Environment& env, const ModelParams& params,
                              const Linearization& linz, const TiltSpec& tilt) {
  require(tilt.scale() == TiltSpec::Scale::mdp, "log_xi_expanded needs a moderate-deviation tilt");
  const auto n = static_cast<double>(env.n());
  const double a_n = tilt.a_n();
  const double lambda = params.lambda;
  const double mean = env.mean();
  const Path2& g = tilt.g();
  const Vec2 l2 = ReactionSystem::l2();

  // breakpoints: nodes of the tilt grid and of the fluid grid; events are added during replay
  std::vector<double> nodes;
  for (std::size_t k = 0; k < g.size(); ++k) {
    nodes.push_back(g.grid()[k]);
  }
  for (std::size_t k = 0; k < linz.fluid_fine().size(); ++k) {
    nodes.push_back(linz.fluid_fine().grid()[k]);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  auto g_slope = [&](double a, double b) {
    return g.slope(g.grid().locate(0.5 * (a + b)).first);
  };

  double integral = 0.0;
  Vec2 nu_start = Vec2::Zero();
  Vec2 nu_end = Vec2::Zero();
  bool first = true;
  replay(
      traj, env,
      [&](double t_from, double t_to, const detail::ChainState& chain) {
        const Vec2 theta(static_cast<double>(chain.S()) / n, static_cast<double>(chain.I()) / n);
        const double eps = (chain.gamma() - mean * static_cast<double>(chain.S()) * static_cast<double>(chain.I())) /
                           (n * n);
        const Mat2 sig = linz.sigma_at(theta);
        auto integrand = [&](double u, const Vec2& gp) {
          const Vec2 xh = linz.xhat(u);
          const Vec2 nu = n * (theta - xh) / a_n;
          const Vec2 gu = g(u);
          const Mat2 b = linz.b_at(0.5 * (theta + xh));
          const double gl2 = gu.dot(l2);
          return gp.dot(nu) + (b * nu).dot(gu) + lambda * gl2 * (n * eps / a_n) + 0.5 * gu.dot(sig * gu) +
                 0.5 * lambda * gl2 * gl2 * eps;
        };
        if (first) {
          nu_start = n * (theta - linz.xhat(0.0)) / a_n;
          first = false;
        }
        if (t_to >= traj.horizon) {
          nu_end = n * (theta - linz.xhat(traj.horizon)) / a_n;
        }
        auto it = std::upper_bound(nodes.begin(), nodes.end(), t_from);
        double a = t_from;
        while (a < t_to) {
          const double b = (it != nodes.end() && *it < t_to) ? *it++ : t_to;
          if (b > a) {
            const Vec2 gp = g_slope(a, b);
            const double m = 0.5 * (a + b);
            integral += (b - a) / 6.0 * (integrand(a, gp) + 4.0 * integrand(m, gp) + integrand(b, gp));
          }
          a = b;
        }
      },
      [](const Event&, const detail::ChainState&) {});
  return (a_n * a_n / n) * (g(traj.horizon).dot(nu_end) - g(0.0).dot(nu_start) - integral);
}

/// Tilted chain: recovery at rate e^{kappa g.l1} per infected, infection at e^{kappa g.l2}
/// times the original intensity. Simulated by thinning; the weight is -log of the martingale.
inline WeightedTrajectory simulate_tilted(const Environment& env, const ModelParams& params, const EpidemicState& init,
                                          const TiltSpec& tilt, std::uint64_t seed) {
  require(tilt.g().grid().horizon() >= params.T0 * (1.0 - 1e-12), "tilt grid is shorter than T0");
  WeightedTrajectory out;
  out.traj = detail::run_chain(env, params, init, seed, tilt);
  const MartingaleValue mv = evaluate_martingale(out.traj, env, params, tilt);
  out.log_weight = -mv.log_value;
  out.max_eps = mv.max_eps;
  return out;
}

/// Moderate-deviation variant: identical mechanics with the (a_n/n)-scaled tilt.
inline WeightedTrajectory simulate_tilted_mdp(const Environment& env, const ModelParams& params,
                                              const EpidemicState& init, const TiltSpec& tilt, std::uint64_t seed) {
  require(tilt.scale() == TiltSpec::Scale::mdp, "simulate_tilted_mdp needs a moderate-deviation tilt");
  return simulate_tilted(env, params, init, tilt, seed);
}

inline void write_weighted_csv(std::ostream& out, const std::vector<WeightedTrajectory>& runs) {
  write_trajectory_header(out, true, true);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    write_trajectory_rows(out, runs[r].traj, r, TrajectoryCsvExtra{runs[r].log_weight, runs[r].max_eps});
  }
}

}  // namespace sirld
