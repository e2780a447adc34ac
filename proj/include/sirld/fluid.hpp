#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sirld/error.hpp"
#include "sirld/model.hpp"
#include "sirld/path.hpp"

/**
 * \file
 * \brief Deterministic ODE layer: the fluid limit, its exponentially tilted and
 * rate-controlled variants, and the linearisation used at moderate-deviation scale.
 *
 * All integrators are classic fixed-step RK4 on the grid of the supplied data. Grid data
 * (tilts, controls) is interpolated linearly at half steps.
 */

namespace sirld {

inline constexpr std::size_t default_intervals = 2000;

/// Fixed-step RK4 for x' = rhs(t, x) on `grid`, starting at x0.
template <class Rhs>
Path2 rk4(const TimeGrid& grid, const Vec2& x0, Rhs&& rhs) {
  const double h = grid.step();
  std::vector<Vec2> xs(grid.size());
  xs[0] = x0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double t = grid[k];
    const double tm = 0.5 * (grid[k] + grid[k + 1]);
    const Vec2& x = xs[k];
    const Vec2 k1 = rhs(t, x);
    const Vec2 k2 = rhs(tm, Vec2(x + 0.5 * h * k1));
    const Vec2 k3 = rhs(tm, Vec2(x + 0.5 * h * k2));
    const Vec2 k4 = rhs(grid[k + 1], Vec2(x + h * k3));
    xs[k + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return {grid, std::move(xs)};
}

/// Fluid limit s' = -lambda E rho s i, i' = -i + lambda E rho s i from (p0, p1).
inline Path2 fluid_ode(const ModelParams& params, double mean_rho, std::size_t intervals = default_intervals) {
  params.validate();
  const ReactionSystem sys{params.lambda * mean_rho};
  return rk4(TimeGrid(params.T0, intervals), params.initial_point(),
             [&](double, const Vec2& x) { return sys.drift(x); });
}

/// Fluid limit under tilt g: recovery scaled by exp(-i(g)), infection by exp(i(g) - s(g)).
inline Path2 tilted_fluid_ode(const ModelParams& params, double mean_rho, const Path2& g, const Vec2& x0) {
  params.validate();
  const double beta = params.lambda * mean_rho;
  return rk4(g.grid(), x0, [&](double t, const Vec2& x) {
    const Vec2 gt = g(t);
    const double h1 = std::exp(-gt[1]);
    const double h2 = std::exp(gt[1] - gt[0]);
    const double inf = h2 * beta * x[0] * x[1];
    return Vec2(-inf, -h1 * x[1] + inf);
  });
}

/// Recovery (h1) and infection (h2) rate multipliers.
struct ControlPair {
  ScalarPath h1;
  ScalarPath h2;
};

/// Solves s' = -h2 lambda E rho s i, i' = -h1 i + h2 lambda E rho s i on `grid` (defaults to the
/// control grid). When the control grid is a refinement of `grid`, half steps hit control nodes.
inline Path2 controlled_path(const ModelParams& params, double mean_rho, const ControlPair& controls, const Vec2& x0,
                             std::optional<TimeGrid> grid = std::nullopt) {
  params.validate();
  require(controls.h1.grid() == controls.h2.grid(), "controlled_path: h1 and h2 grids differ");
  for (std::size_t k = 0; k < controls.h1.size(); ++k) {
    require(controls.h1[k][0] >= 0.0 && controls.h2[k][0] >= 0.0, "controlled_path: controls must be nonnegative");
  }
  const double beta = params.lambda * mean_rho;
  return rk4(grid.value_or(controls.h1.grid()), x0, [&](double t, const Vec2& x) {
    const double inf = controls.h2(t)[0] * beta * x[0] * x[1];
    return Vec2(-inf, -controls.h1(t)[0] * x[1] + inf);
  });
}

/// Constant controls on a grid of `intervals` cells over [0, T0].
inline ControlPair constant_controls(double T0, double h1, double h2, std::size_t intervals = default_intervals) {
  TimeGrid grid(T0, intervals);
  return {ScalarPath(grid, ScalarPath::Vec(h1)), ScalarPath(grid, ScalarPath::Vec(h2))};
}

/// Controls equivalent to tilt g, tabulated on the refined grid of g so that RK4 on g's own
/// grid reads them exactly at half steps.
inline ControlPair controls_from_tilt(const Path2& g) {
  const TimeGrid fine = g.grid().refined();
  ControlPair c{ScalarPath(fine), ScalarPath(fine)};
  for (std::size_t m = 0; m < fine.size(); ++m) {
    const Vec2 gt = g(fine[m]);
    c.h1[m][0] = std::exp(-gt[1]);
    c.h2[m][0] = std::exp(gt[1] - gt[0]);
  }
  return c;
}

/// Tilt whose controls are (h1, h2): i(g) = -log h1, s(g) = -log h2 - log h1. Controls must be positive.
inline Path2 tilt_from_controls(const ControlPair& c) {
  require(c.h1.grid() == c.h2.grid(), "tilt_from_controls: h1 and h2 grids differ");
  Path2 g(c.h1.grid());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double h1 = c.h1[k][0];
    const double h2 = c.h2[k][0];
    if (!(h1 > 0.0 && h2 > 0.0)) {
      throw NumericRefusal("tilt_from_controls: controls must be strictly positive");
    }
    g[k] = Vec2(-std::log(h2) - std::log(h1), -std::log(h1));
  }
  return g;
}

inline constexpr double degenerate_infected_level = 1e-10;
inline constexpr double control_negativity_tolerance = 1e-8;

/// Recovers (h1, h2) from a path by finite differences. Where i < 1e-10 the controls are set
/// to (1, 1); so is h2 where s < 1e-10. Throws NumericRefusal for controls below -1e-8.
inline ControlPair controls_from_path(const Path2& f, const ModelParams& params, double mean_rho) {
  const double beta = params.lambda * mean_rho;
  const Path2 df = f.derivative();
  ControlPair c{ScalarPath(f.grid()), ScalarPath(f.grid())};
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double s = f[k][0];
    const double i = f[k][1];
    double h1 = 1.0;
    double h2 = 1.0;
    if (i >= degenerate_infected_level) {
      h1 = -(df[k][0] + df[k][1]) / i;
      if (s >= degenerate_infected_level && beta > 0.0) {
        h2 = -df[k][0] / (beta * s * i);
      } else if (std::abs(df[k][0]) > control_negativity_tolerance) {
        throw NumericRefusal("controls_from_path: s moves where the infection intensity vanishes (t = " +
                             std::to_string(f.grid()[k]) + ")");
      }
    }
    if (h1 < -control_negativity_tolerance || h2 < -control_negativity_tolerance) {
      throw NumericRefusal("controls_from_path: path is not admissible, negative control at t = " +
                           std::to_string(f.grid()[k]));
    }
    c.h1[k][0] = std::max(h1, 0.0);
    c.h2[k][0] = std::max(h2, 0.0);
  }
  return c;
}

/// Linearisation of the drift along the fluid limit.
class Linearization {
 public:
  Linearization(const ModelParams& params, double mean_rho, std::size_t intervals = default_intervals)
      : params_(params),
        beta_(params.lambda * mean_rho),
        intervals_(intervals),
        fine_(fluid_ode(params, mean_rho, 2 * intervals)) {}

  const ModelParams& params() const noexcept { return params_; }
  double infectivity() const noexcept { return beta_; }
  TimeGrid grid() const { return {params_.T0, intervals_}; }

  /// Fluid limit on the refined grid (twice the intervals).
  const Path2& fluid_fine() const noexcept { return fine_; }

  /// Fluid limit on the working grid.
  Path2 fluid() const {
    const TimeGrid g = grid();
    std::vector<Vec2> v(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      v[k] = fine_[2 * k];
    }
    return {g, std::move(v)};
  }

  Vec2 xhat(double t) const { return fine_(t); }

  Mat2 b_at(const Vec2& x) const {
    Mat2 m;
    m << -beta_ * x[1], -beta_ * x[0], beta_ * x[1], beta_ * x[0] - 1.0;
    return m;
  }

  /// Covariance-rate matrix at state x: l1 H1 l1^T + l2 H2 l2^T.
  Mat2 sigma_at(const Vec2& x) const {
    const double a = beta_ * x[0] * x[1];
    Mat2 m;
    m << a, -a, -a, a + x[1];
    return m;
  }

  Mat2 b(double t) const { return b_at(xhat(t)); }
  Mat2 sigma(double t) const { return sigma_at(xhat(t)); }

  Mat2 M0() const {
    const double p0 = params_.p0;
    const double p1 = params_.p1;
    Mat2 m;
    m << p0 * (1.0 - p0), -p0 * p1, -p0 * p1, p1 * (1.0 - p1);
    return m;
  }

 private:
  ModelParams params_;
  double beta_;
  std::size_t intervals_;
  Path2 fine_;
};

inline Linearization linearize(const ModelParams& params, double mean_rho,
                               std::size_t intervals = default_intervals) {
  params.validate();
  return {params, mean_rho, intervals};
}

/// x' = b_t x + sigma_t g_t from x0.
inline Path2 mdp_tilted_ode(const Linearization& linz, const Path2& g, const Vec2& x0) {
  require(std::abs(g.grid().horizon() - linz.params().T0) <= 1e-12 * linz.params().T0,
          "mdp_tilted_ode: g must cover [0, T0]");
  return rk4(g.grid(), x0, [&](double t, const Vec2& x) {
    const Vec2 xh = linz.xhat(t);
    return Vec2(linz.b_at(xh) * x + linz.sigma_at(xh) * g(t));
  });
}

inline constexpr double max_sigma_condition = 1e12;

/// Condition number of a symmetric PSD 2x2 matrix (infinite when singular).
inline double condition_number(const Mat2& m) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()[0];
  const double hi = es.eigenvalues()[1];
  if (lo <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return hi / lo;
}

/// Forcing g with sigma_t g_t = f'_t - b_t f_t at every node.
inline Path2 mdp_forcing(const Path2& f, const Linearization& linz) {
  const Path2 df = f.derivative();
  Path2 g(f.grid());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double t = f.grid()[k];
    const Mat2 sig = linz.sigma(t);
    if (condition_number(sig) > max_sigma_condition) {
      throw NumericRefusal("sigma_t is near-singular at t = " + std::to_string(t));
    }
    g[k] = sig.ldlt().solve(Vec2(df[k] - linz.b(t) * f[k]));
  }
  return g;
}

}  // namespace sirld
