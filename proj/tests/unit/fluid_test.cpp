#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sirld/fluid.hpp"

namespace sirld {
namespace {

const ModelParams base{2.0, 0.6, 0.1, 3.0};

Path2 smooth_tilt(const TimeGrid& grid) {
  return Path2::tabulate(grid, [](double t) { return Vec2(0.4 * std::sin(t), -0.3 + 0.2 * std::cos(2 * t)); });
}

TEST(FluidOde, NoInfectedStaysPut) {
  const Path2 g(TimeGrid(3.0, 300));
  const Path2 x = tilted_fluid_ode(base, 1.0, g, Vec2(0.6, 0.0));
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_EQ(x[k], Vec2(0.6, 0.0));
  }
}

TEST(FluidOde, InitialDerivative) {
  const ReactionSystem sys{2.0};
  const Vec2 d = sys.drift(Vec2(0.5, 0.3));
  EXPECT_DOUBLE_EQ(d[0], -0.3);
  EXPECT_NEAR(d[1], 0.0, 1e-16);
}

TEST(FluidOde, PureDeathClosedForm) {
  const ModelParams p{0.0, 0.5, 0.3, 4.0};
  const Path2 x = fluid_ode(p, 1.0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double t = x.grid()[k];
    EXPECT_NEAR(x[k][0], 0.5, 1e-15);
    EXPECT_NEAR(x[k][1], 0.3 * std::exp(-t), 1e-8);
  }
}

TEST(FluidOde, StaysInSimplex) {
  for (double lambda : {0.5, 2.0, 8.0}) {
    const Path2 x = fluid_ode(ModelParams{lambda, 0.7, 0.25, 10.0}, 1.5);
    for (std::size_t k = 0; k < x.size(); ++k) {
      EXPECT_GE(x[k][0], -1e-9);
      EXPECT_GE(x[k][1], -1e-9);
      EXPECT_LE(x[k][0] + x[k][1], 1.0 + 1e-9);
    }
  }
}

TEST(FluidOde, FourthOrderConvergence) {
  const Path2 ref = fluid_ode(base, 1.0, 1600);
  auto err = [&](std::size_t k) {
    const Path2 x = fluid_ode(base, 1.0, k);
    return sup_norm_distance(x, ref.resample(x.grid()));
  };
  const double ratio = err(25) / err(50);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(TiltedFluid, ZeroTiltIsFluid) {
  const Path2 g(TimeGrid(base.T0, default_intervals));
  EXPECT_LT(sup_norm_distance(tilted_fluid_ode(base, 1.0, g, base.initial_point()), fluid_ode(base, 1.0)), 1e-12);
}

TEST(TiltedFluid, ConstantTiltRescalesRates) {
  // g = (0, c): recovery scaled by e^{-c}, infection by e^{c}.
  const double c = 0.4;
  const Path2 g(TimeGrid(base.T0, 1000), Vec2(0.0, c));
  const Path2 tilted = tilted_fluid_ode(base, 1.0, g, base.initial_point());
  const Path2 ctrl = controlled_path(base, 1.0, constant_controls(base.T0, std::exp(-c), std::exp(c), 1000),
                                     base.initial_point());
  EXPECT_LT(sup_norm_distance(tilted, ctrl), 1e-13);
}

TEST(TiltedFluid, MonotoneForAnyTilt) {
  const Path2 x = tilted_fluid_ode(base, 1.0, smooth_tilt(TimeGrid(base.T0, 800)), Vec2(0.5, 0.3));
  for (std::size_t k = 1; k < x.size(); ++k) {
    EXPECT_LE(x[k][0], x[k - 1][0] + 1e-15);
    EXPECT_LE(x[k][0] + x[k][1], x[k - 1][0] + x[k - 1][1] + 1e-15);
  }
}

TEST(ControlledPath, UnitControlsGiveFluid) {
  const Path2 x = controlled_path(base, 1.0, constant_controls(base.T0, 1.0, 1.0), base.initial_point());
  EXPECT_LT(sup_norm_distance(x, fluid_ode(base, 1.0)), 1e-14);
}

TEST(ControlledPath, NoInfectionFreezesS) {
  const double h1 = 1.7;
  const Path2 x = controlled_path(base, 1.0, constant_controls(base.T0, h1, 0.0), base.initial_point());
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_EQ(x[k][0], base.p0);
    EXPECT_NEAR(x[k][1], base.p1 * std::exp(-h1 * x.grid()[k]), 1e-10);
  }
}

TEST(ControlledPath, RoundTripWithTilt) {
  const Path2 g = smooth_tilt(TimeGrid(base.T0, 1000));
  const Path2 via_controls = controlled_path(base, 1.3, controls_from_tilt(g), base.initial_point(), g.grid());
  const Path2 direct = tilted_fluid_ode(base, 1.3, g, base.initial_point());
  EXPECT_LT(sup_norm_distance(via_controls, direct), 1e-10);

  const Path2 back = tilt_from_controls(controls_from_tilt(g));
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR((back[2 * k] - g[k]).norm(), 0.0, 1e-12);
  }
}

TEST(ControlsFromPath, FluidGivesUnitControls) {
  const ControlPair c = controls_from_path(fluid_ode(base, 1.0), base, 1.0);
  for (std::size_t k = 0; k < c.h1.size(); ++k) {
    EXPECT_NEAR(c.h1[k][0], 1.0, 1e-5);
    EXPECT_NEAR(c.h2[k][0], 1.0, 1e-5);
  }
}

TEST(ControlsFromPath, RecoversConstantControls) {
  const Path2 f = controlled_path(base, 1.0, constant_controls(base.T0, 2.0, 0.5), base.initial_point());
  const ControlPair c = controls_from_path(f, base, 1.0);
  for (std::size_t k = 0; k < c.h1.size(); ++k) {
    EXPECT_NEAR(c.h1[k][0], 2.0, 1e-5);
    EXPECT_NEAR(c.h2[k][0], 0.5, 1e-5);
  }
}

TEST(ControlsFromPath, DegenerateAndConstantPaths) {
  const Path2 dead(TimeGrid(1.0, 10), Vec2(0.4, 0.0));
  const ControlPair c = controls_from_path(dead, base, 1.0);
  for (std::size_t k = 0; k < c.h1.size(); ++k) {
    EXPECT_EQ(c.h1[k][0], 1.0);
    EXPECT_EQ(c.h2[k][0], 1.0);
  }
  const Path2 still(TimeGrid(1.0, 10), Vec2(0.4, 0.2));
  const ControlPair z = controls_from_path(still, base, 1.0);
  for (std::size_t k = 0; k < z.h1.size(); ++k) {
    EXPECT_NEAR(z.h1[k][0], 0.0, 1e-12);
    EXPECT_NEAR(z.h2[k][0], 0.0, 1e-12);
  }
}

TEST(ControlsFromPath, RejectsGrowingSusceptibles) {
  const Path2 bad = Path2::tabulate(TimeGrid(1.0, 50), [](double t) { return Vec2(0.3 + 0.1 * t, 0.2); });
  EXPECT_THROW(controls_from_path(bad, base, 1.0), NumericRefusal);
}

TEST(Linearization, MatricesAlongFluid) {
  const Linearization linz = linearize(base, 1.5);
  const double beta = base.lambda * 1.5;
  for (double t : {0.0, 0.7, 1.9, 3.0}) {
    const Vec2 x = linz.xhat(t);
    const Mat2 s = linz.sigma(t);
    EXPECT_DOUBLE_EQ(s(0, 0), beta * x[0] * x[1]);
    EXPECT_DOUBLE_EQ(s(0, 1), -s(0, 0));
    EXPECT_NEAR(s.trace(), 2 * beta * x[0] * x[1] + x[1], 1e-15);

    const ReactionSystem sys{beta};
    const Vec2 l1 = ReactionSystem::l1();
    const Vec2 l2 = ReactionSystem::l2();
    const Mat2 assembled = l1 * sys.H1(x) * l1.transpose() + l2 * sys.H2(x) * l2.transpose();
    EXPECT_LT((assembled - s).cwiseAbs().maxCoeff(), 1e-14);
    const Mat2 b = l1 * sys.grad_H1(x).transpose() + l2 * sys.grad_H2(x).transpose();
    EXPECT_LT((b - linz.b(t)).cwiseAbs().maxCoeff(), 1e-14);

    Eigen::SelfAdjointEigenSolver<Mat2> es(s);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
  }
  const Mat2 m0 = linz.M0();
  EXPECT_DOUBLE_EQ(m0(0, 0), 0.6 * 0.4);
  EXPECT_DOUBLE_EQ(m0(0, 1), -0.06);
  EXPECT_GT(m0.determinant(), 0.0);
}

TEST(MdpTiltedOde, ZeroForcingFromZero) {
  const Linearization linz = linearize(base, 1.0);
  const Path2 x = mdp_tilted_ode(linz, Path2(linz.grid()), Vec2::Zero());
  EXPECT_EQ(sup_norm(x), 0.0);
}

TEST(MdpTiltedOde, LinearInStartAndForcing) {
  const Linearization linz = linearize(base, 1.0, 1000);
  const Path2 zero(linz.grid());
  const Vec2 a(0.3, -0.2);
  const Vec2 b(-0.1, 0.5);
  const Path2 xa = mdp_tilted_ode(linz, zero, a);
  const Path2 xb = mdp_tilted_ode(linz, zero, b);
  const Path2 xab = mdp_tilted_ode(linz, zero, Vec2(2 * a + b));
  EXPECT_LT(sup_norm_distance(xab, 2.0 * xa + xb), 1e-10);

  const Path2 g1 = smooth_tilt(linz.grid());
  const Path2 g2 = Path2::tabulate(linz.grid(), [](double t) { return Vec2(1.0, t); });
  const Path2 y12 = mdp_tilted_ode(linz, g1 + g2, Vec2::Zero());
  const Path2 y1 = mdp_tilted_ode(linz, g1, Vec2::Zero());
  const Path2 y2 = mdp_tilted_ode(linz, g2, Vec2::Zero());
  EXPECT_LT(sup_norm_distance(y12, y1 + y2), 1e-10);
}

TEST(MdpForcing, RecoversForcing) {
  const Linearization linz = linearize(base, 1.0, 2000);
  const Path2 g(linz.grid(), Vec2(0.5, 0.5));
  const Path2 f = mdp_tilted_ode(linz, g, Vec2::Zero());
  const Path2 back = mdp_forcing(f, linz);
  const Path2 df = f.derivative();
  double residual = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double t = f.grid()[k];
    residual = std::max(residual, (linz.sigma(t) * back[k] - (df[k] - linz.b(t) * f[k])).norm());
  }
  EXPECT_LT(residual, 1e-8);
  // Away from the endpoints the finite-difference derivative is accurate enough to see g itself.
  EXPECT_NEAR(back[1000][0], 0.5, 1e-3);
  EXPECT_NEAR(back[1000][1], 0.5, 1e-3);
}

TEST(PathCsv, RoundTripAndValidation) {
  const Path2 x = fluid_ode(base, 1.0, 40);
  std::stringstream buf;
  x.write_csv(buf);
  EXPECT_EQ(buf.str().substr(0, 6), "t,s,i\n");
  const Path2 back = Path2::read_csv(buf);
  EXPECT_EQ(sup_norm_distance(x, back), 0.0);

  std::stringstream bad("t,s,i\n0,0.5,0.1\n0.3,0.5,0.1\n1.0,0.5,0.1\n");
  EXPECT_THROW(Path2::read_csv(bad), InvalidInput);
}

}  // namespace
}  // namespace sirld
