#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sirld/error.hpp"
#include "sirld/fluid.hpp"
#include "sirld/model.hpp"
#include "sirld/path.hpp"

/**
 * \file
 * \brief Large- and moderate-deviation rate functionals of the SIR chain.
 *
 * Closed forms are integrated with the trapezoid rule on the path's own grid, using the
 * same second-order finite differences as `PathFunction::derivative`. Variational lower
 * bounds maximise the defining functional over a finite family of test functions.
 */

namespace sirld {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

/// x log x with 0 log 0 = 0.
inline double xlogx(double x) { return x < 1e-300 ? 0.0 : x * std::log(x); }

/// Cost of a rate multiplier h: h log h - h + 1.
inline double control_cost(double h) { return xlogx(h) - h + 1.0; }

struct RateReport {
  double total = infinity;
  double initial_part = 0.0;
  double dynamic_part = infinity;
  std::optional<ScalarPath> density;
  bool finite = false;
  std::string rejection_reason;

  static RateReport rejected(std::string reason) {
    RateReport r;
    r.rejection_reason = std::move(reason);
    return r;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["total"] = finite ? nlohmann::json(total) : nlohmann::json(nullptr);
    j["initial_part"] = std::isfinite(initial_part) ? nlohmann::json(initial_part) : nlohmann::json(nullptr);
    j["dynamic_part"] = finite ? nlohmann::json(dynamic_part) : nlohmann::json(nullptr);
    j["finite"] = finite;
    j["rejection_reason"] = rejection_reason.empty() ? nlohmann::json(nullptr) : nlohmann::json(rejection_reason);
    return j;
  }
};

// ---------------------------------------------------------------------------------------
// Initial-state functionals

/// Relative entropy of (s, i, 1-s-i) with respect to (p0, p1, 1-p0-p1); +inf off the simplex.
inline double i_ini(const Vec2& x, const ModelParams& params) {
  const double s = x[0];
  const double i = x[1];
  const double r = 1.0 - s - i;
  if (s < 0.0 || i < 0.0 || r < 0.0) {
    return infinity;
  }
  const double q = 1.0 - params.p0 - params.p1;
  const auto term = [](double a, double p) { return a < 1e-300 ? 0.0 : a * std::log(a / p); };
  return term(s, params.p0) + term(i, params.p1) + term(r, q);
}

/// log E exp(y . (1{spin=0}, 1{spin=1})) under the initial law.
inline double initial_log_mgf(const Vec2& y, const ModelParams& params) {
  return std::log(1.0 - params.p0 - params.p1 + std::exp(y[0]) * params.p0 + std::exp(y[1]) * params.p1);
}

struct VariationalPoint {
  double value = 0.0;
  Vec2 y = Vec2::Zero();
};

/// sup_y { y . x - log(1 - p0 - p1 + e^{s_y} p0 + e^{i_y} p1) } from the stationarity
/// conditions, with a damped Newton fallback. x must be strictly inside the simplex.
inline VariationalPoint i_ini_variational(const Vec2& x, const ModelParams& params, int newton_budget = 100) {
  const double s = x[0];
  const double i = x[1];
  const double r = 1.0 - s - i;
  require(s > 0.0 && i > 0.0 && r > 0.0, "i_ini_variational: x must be interior (use i_ini)");
  const double q = 1.0 - params.p0 - params.p1;
  const auto objective = [&](const Vec2& y) { return y.dot(x) - initial_log_mgf(y, params); };
  Vec2 y(std::log(s * q / (params.p0 * r)), std::log(i * q / (params.p1 * r)));
  if (y.allFinite() && std::isfinite(objective(y))) {
    return {objective(y), y};
  }
  y.setZero();
  for (int it = 0; it < newton_budget; ++it) {
    const Vec2 w(std::exp(y[0]) * params.p0, std::exp(y[1]) * params.p1);
    const double z = q + w.sum();
    const Vec2 pi = w / z;
    const Vec2 grad = x - pi;
    Mat2 hess;
    hess << pi[0] * (1.0 - pi[0]), -pi[0] * pi[1], -pi[0] * pi[1], pi[1] * (1.0 - pi[1]);
    const Vec2 step = hess.ldlt().solve(grad);
    double t = 1.0;
    const double f0 = objective(y);
    while (t > 1e-12 && !(objective(y + t * step) >= f0)) {
      t *= 0.5;
    }
    y += t * step;
    if (grad.norm() < 1e-14) {
      break;
    }
  }
  return {objective(y), y};
}

/// 1/2 x^T M0^{-1} x.
inline double j_ini(const Vec2& x, const ModelParams& params) {
  const double p0 = params.p0;
  const double p1 = params.p1;
  Mat2 m0;
  m0 << p0 * (1.0 - p0), -p0 * p1, -p0 * p1, p1 * (1.0 - p1);
  return 0.5 * x.dot(m0.ldlt().solve(x));
}

// ---------------------------------------------------------------------------------------
// Admissible paths

inline constexpr double monotonicity_tolerance = 1e-9;

/// Empty string when f is admissible: nonnegative, s and s+i non-increasing, and constant
/// once i reaches zero. Otherwise the reason.
inline std::string admissibility_violation(const Path2& f) {
  const double tol = monotonicity_tolerance;
  bool absorbed = false;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double t = f.grid()[k];
    if (f[k][0] < -tol || f[k][1] < -tol) {
      return "negative coordinate at t = " + std::to_string(t);
    }
    if (f[k].sum() > 1.0 + tol) {
      return "s + i exceeds 1 at t = " + std::to_string(t);
    }
    if (k > 0) {
      if (f[k][0] > f[k - 1][0] + tol) {
        return "s increases at t = " + std::to_string(t);
      }
      if (f[k].sum() > f[k - 1].sum() + tol) {
        return "s + i increases at t = " + std::to_string(t);
      }
      if (absorbed && (std::abs(f[k][1]) > tol || std::abs(f[k][0] - f[k - 1][0]) > tol)) {
        return "path leaves the absorbing state i = 0 at t = " + std::to_string(t);
      }
    }
    absorbed = absorbed || std::abs(f[k][1]) <= degenerate_infected_level;
  }
  return {};
}

// ---------------------------------------------------------------------------------------
// Dynamic LDP functional

/// Integral of i phi(h1) + lambda E rho s i phi(h2) along f, phi(h) = h log h - h + 1, with
/// h1 i = -(s+i)' and h2 lambda E rho s i = -s'. This is the Lagrangian form with the
/// compensating terms folded in. +inf outside the admissible set.
inline RateReport i_dyn(const Path2& f, const ModelParams& params, double mean_rho) {
  if (auto why = admissibility_violation(f); !why.empty()) {
    return RateReport::rejected(why);
  }
  const double beta = params.lambda * mean_rho;
  const Path2 df = f.derivative();
  const double slack = monotonicity_tolerance / f.grid().step();
  ScalarPath density(f.grid());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double s = std::max(f[k][0], 0.0);
    const double i = std::max(f[k][1], 0.0);
    const double recov = -(df[k][0] + df[k][1]);
    const double infec = -df[k][0];
    if (recov < -slack || infec < -slack) {
      return RateReport::rejected("derivative has the wrong sign at t = " + std::to_string(f.grid()[k]));
    }
    const double a = std::max(recov, 0.0);
    const double b = std::max(infec, 0.0);
    const double h_inf = beta * s * i;
    double value = 0.0;
    if (i > 0.0) {
      value += xlogx(a) - a * std::log(i) - a + i;
    } else if (a > slack) {
      return RateReport::rejected("recovery flux without infecteds at t = " + std::to_string(f.grid()[k]));
    }
    if (h_inf > 0.0) {
      value += xlogx(b) - b * std::log(h_inf) - b + h_inf;
    } else if (b > slack) {
      return RateReport::rejected("infection flux without infection intensity at t = " +
                                  std::to_string(f.grid()[k]));
    }
    density[k][0] = value;
  }
  RateReport r;
  r.initial_part = 0.0;
  r.dynamic_part = density.integrate([](const ScalarPath::Vec& v) { return v[0]; });
  r.total = r.dynamic_part;
  r.density = std::move(density);
  r.finite = true;
  return r;
}

/// I_ini(f_0) + I_dyn(f).
inline RateReport ldp_rate(const Path2& f, const ModelParams& params, double mean_rho) {
  RateReport r = i_dyn(f, params, mean_rho);
  r.initial_part = i_ini(f.front(), params);
  if (!std::isfinite(r.initial_part)) {
    r.finite = false;
    r.total = infinity;
    if (r.rejection_reason.empty()) {
      r.rejection_reason = "initial point outside the simplex";
    }
    return r;
  }
  if (r.finite) {
    r.total = r.initial_part + r.dynamic_part;
  }
  return r;
}

// ---------------------------------------------------------------------------------------
// Test-function families

/// Per-coordinate basis: tau^k for k = 0..degree and sin/cos(pi k t / T) for k = 1..harmonics,
/// with tau = t / T.
struct TestFamily {
  int degree = 6;
  int harmonics = 4;
  std::vector<Path2> extra;        ///< additional directions
  std::optional<Path2> offset;     ///< search is over offset + span
  bool use_basis = true;

  static TestFamily zero_only() {
    TestFamily f;
    f.use_basis = false;
    return f;
  }

  std::vector<Path2> directions(const TimeGrid& grid) const {
    std::vector<Path2> dirs;
    if (use_basis) {
      const double T = grid.horizon();
      std::vector<std::function<double(double)>> scalar;
      for (int k = 0; k <= degree; ++k) {
        scalar.emplace_back([k, T](double t) { return std::pow(t / T, k); });
      }
      for (int k = 1; k <= harmonics; ++k) {
        scalar.emplace_back([k, T](double t) { return std::sin(std::numbers::pi * k * t / T); });
        scalar.emplace_back([k, T](double t) { return std::cos(std::numbers::pi * k * t / T); });
      }
      for (const auto& fn : scalar) {
        for (int c = 0; c < 2; ++c) {
          dirs.push_back(Path2::tabulate(grid, [&](double t) {
            Vec2 v = Vec2::Zero();
            v[c] = fn(t);
            return v;
          }));
        }
      }
    }
    for (const auto& e : extra) {
      require(e.grid() == grid, "TestFamily: extra direction on a different grid");
      dirs.push_back(e);
    }
    return dirs;
  }
};

/// Phi_f(g) = int g . f' - int (e^{g.l1} - 1) i + lambda E rho (e^{g.l2} - 1) s i.
inline double phi_functional(const Path2& f, const Path2& df, const Path2& g, double beta) {
  double sum = 0.0;
  const std::size_t last = f.size() - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    const double s = f[k][0];
    const double i = f[k][1];
    const double u1 = -g[k][1];
    const double u2 = g[k][1] - g[k][0];
    const double v = g[k].dot(df[k]) - std::expm1(u1) * i - beta * std::expm1(u2) * s * i;
    sum += (k == 0 || k == last) ? 0.5 * v : v;
  }
  return sum * f.grid().step();
}

/// Maximises Phi_f over offset + span(directions) by damped Newton (Phi is concave in g).
/// Returns the best value found, a lower bound on I_dyn(f) up to quadrature.
inline double i_dyn_variational_lower(const Path2& f, const ModelParams& params, double mean_rho,
                                      const TestFamily& family = {}, int max_iterations = 200) {
  const double beta = params.lambda * mean_rho;
  const Path2 df = f.derivative();
  const Path2 base = family.offset.value_or(Path2(f.grid()));
  require(base.grid() == f.grid(), "i_dyn_variational_lower: offset grid differs from path grid");
  for (const auto& v : base.values()) {
    require(v.allFinite(), "i_dyn_variational_lower: offset must be finite");
  }
  const std::vector<Path2> dirs = family.directions(f.grid());
  const auto m = static_cast<Eigen::Index>(dirs.size());
  const double h = f.grid().step();
  const std::size_t last = f.size() - 1;
  const Vec2 l1 = ReactionSystem::l1();
  const Vec2 l2 = ReactionSystem::l2();

  auto build = [&](const Eigen::VectorXd& c) {
    Path2 g = base;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (c[j] != 0.0) {
        for (std::size_t k = 0; k < g.size(); ++k) {
          g[k] += c[j] * dirs[static_cast<std::size_t>(j)][k];
        }
      }
    }
    return g;
  };

  Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
  Path2 g = base;
  double best = phi_functional(f, df, g, beta);
  if (m == 0) {
    return best;
  }
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t k = 0; k <= last; ++k) {
      const double w = (k == 0 || k == last) ? 0.5 * h : h;
      const double s = f[k][0];
      const double i = f[k][1];
      const double e1 = std::exp(-g[k][1]) * i;
      const double e2 = beta * std::exp(g[k][1] - g[k][0]) * s * i;
      const Vec2 pointwise = df[k] - e1 * l1 - e2 * l2;
      const Mat2 curv = e1 * l1 * l1.transpose() + e2 * l2 * l2.transpose();
      Eigen::VectorXd phi(m);
      Eigen::Matrix<double, 2, Eigen::Dynamic> basis(2, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        basis.col(j) = dirs[static_cast<std::size_t>(j)][k];
      }
      grad.noalias() += w * basis.transpose() * pointwise;
      hess.noalias() += w * basis.transpose() * curv * basis;
    }
    if (grad.norm() < 1e-13) {
      break;
    }
    // small ridge keeps the step defined when directions are nearly dependent
    hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    bool moved = false;
    while (t > 1e-10) {
      const Eigen::VectorXd trial = c + t * step;
      Path2 gt = build(trial);
      const double val = phi_functional(f, df, gt, beta);
      if (std::isfinite(val) && val > best) {
        moved = val > best + 1e-15 * (1.0 + std::abs(best));
        best = val;
        c = trial;
        g = std::move(gt);
        break;
      }
      t *= 0.5;
    }
    if (!moved) {
      break;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------------------
// Moderate-deviation functionals

/// 1/2 int (f' - b f)^T sigma^{-1} (f' - b f) along the fluid limit.
inline RateReport j_dyn(const Path2& f, const Linearization& linz) {
  const Path2 df = f.derivative();
  ScalarPath density(f.grid());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double t = f.grid()[k];
    const Mat2 sig = linz.sigma(t);
    if (condition_number(sig) > max_sigma_condition) {
      return RateReport::rejected("sigma_t is near-singular at t = " + std::to_string(t));
    }
    const Vec2 r = df[k] - linz.b(t) * f[k];
    density[k][0] = 0.5 * r.dot(sig.ldlt().solve(r));
  }
  RateReport rep;
  rep.dynamic_part = density.integrate([](const ScalarPath::Vec& v) { return v[0]; });
  rep.total = rep.dynamic_part;
  rep.density = std::move(density);
  rep.finite = true;
  return rep;
}

/// J_ini(f_0) + J_dyn(f).
inline RateReport mdp_rate(const Path2& f, const Linearization& linz) {
  RateReport r = j_dyn(f, linz);
  r.initial_part = j_ini(f.front(), linz.params());
  if (r.finite) {
    r.total = r.initial_part + r.dynamic_part;
  }
  return r;
}

/// L_f(g) = int g . (f' - b f) - 1/2 int g^T sigma g.
inline double mdp_functional(const Path2& f, const Path2& df, const Path2& g, const Linearization& linz) {
  double sum = 0.0;
  const std::size_t last = f.size() - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    const double t = f.grid()[k];
    const Vec2 r = df[k] - linz.b(t) * f[k];
    const double v = g[k].dot(r) - 0.5 * g[k].dot(linz.sigma(t) * g[k]);
    sum += (k == 0 || k == last) ? 0.5 * v : v;
  }
  return sum * f.grid().step();
}

/// Maximises L_f over span(directions) exactly (L_f is a concave quadratic in the coefficients)
/// and returns L_f at the maximiser.
inline double j_dyn_variational_lower(const Path2& f, const Linearization& linz, const TestFamily& family = {}) {
  const Path2 df = f.derivative();
  const std::vector<Path2> dirs = family.directions(f.grid());
  const auto m = static_cast<Eigen::Index>(dirs.size());
  if (m == 0) {
    return 0.0;
  }
  const double h = f.grid().step();
  const std::size_t last = f.size() - 1;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t k = 0; k <= last; ++k) {
    const double w = (k == 0 || k == last) ? 0.5 * h : h;
    const double t = f.grid()[k];
    const Vec2 r = df[k] - linz.b(t) * f[k];
    const Mat2 sig = linz.sigma(t);
    Eigen::Matrix<double, 2, Eigen::Dynamic> basis(2, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      basis.col(j) = dirs[static_cast<std::size_t>(j)][k];
    }
    v.noalias() += w * basis.transpose() * r;
    A.noalias() += w * basis.transpose() * sig * basis;
  }
  const Eigen::VectorXd c = A.completeOrthogonalDecomposition().solve(v);
  Path2 g(f.grid());
  for (Eigen::Index j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k] += c[j] * dirs[static_cast<std::size_t>(j)][k];
    }
  }
  return std::max(0.0, mdp_functional(f, df, g, linz));
}

}  // namespace sirld
