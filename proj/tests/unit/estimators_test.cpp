#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sirld/estimators.hpp"

namespace sirld {
namespace {

const ModelParams base{2.0, 0.6, 0.2, 2.0};
const auto unit = WeightDistribution::constant(1.0);

Path2 controlled_target(double h1, double h2, std::size_t intervals = 200) {
  return controlled_path(base, 1.0, constant_controls(base.T0, h1, h2, intervals), base.initial_point());
}

TEST(EstimatePlain, HugeBallIsCertain) {
  const EventSpec event{fluid_ode(base, 1.0, 200), 10.0, Space::ldp};
  const EstimateReport r = estimate_plain(base, unit, event, 30, 200, 1);
  EXPECT_EQ(r.hit_count, 200u);
  EXPECT_EQ(r.log_estimate, 0.0);
  EXPECT_EQ(r.rate_empirical, 0.0);
  EXPECT_NEAR(r.rate_theoretical, 0.0, 1e-6);
}

TEST(EstimatePlain, HitsGrowWithRadius) {
  const Path2 target = fluid_ode(base, 1.0, 200);
  std::size_t prev = 0;
  for (double radius : {0.05, 0.1, 0.2, 0.4}) {
    const EstimateReport r = estimate_plain(base, unit, EventSpec{target, radius, Space::ldp}, 40, 500, 3);
    EXPECT_GE(r.hit_count, prev);
    EXPECT_GE(r.ci_hi, r.estimate);
    EXPECT_LE(r.ci_lo, r.estimate);
    prev = r.hit_count;
  }
}

TEST(EstimatePlain, ThreadCountDoesNotChangeResults) {
  const EventSpec event{controlled_target(1.3, 0.8), 0.2, Space::ldp};
  const auto dist = WeightDistribution::exponential(1.0);
  EstimateOptions one;
  EstimateOptions three;
  three.threads = 3;
  EXPECT_EQ(estimate_plain(base, dist, event, 30, 300, 9, one).hit_count,
            estimate_plain(base, dist, event, 30, 300, 9, three).hit_count);
  const EstimateReport a = estimate_is_ldp(base, dist, event, 30, 300, 9, one);
  const EstimateReport b = estimate_is_ldp(base, dist, event, 30, 300, 9, three);
  EXPECT_EQ(a.log_estimate, b.log_estimate);
}

// With an event that always happens, the importance weights must average to one.
TEST(EstimateIsLdp, UnbiasedForTheWholeSpace) {
  const EventSpec event{controlled_target(1.6, 0.6), 1e6, Space::ldp};
  const EstimateReport r = estimate_is_ldp(base, unit, event, 30, 20000, 5);
  EXPECT_EQ(r.hit_count, 20000u);
  EXPECT_LT(std::abs(r.estimate - 1.0), 4.0 * r.std_error);
}

TEST(EstimateIsLdp, AgreesWithPlainMonteCarlo) {
  const std::size_t n = 40;
  const EventSpec event{controlled_target(1.5, 0.7), 0.15, Space::ldp};
  const EstimateReport plain = estimate_plain(base, unit, event, n, 40000, 11);
  const EstimateReport is = estimate_is_ldp(base, unit, event, n, 20000, 12);
  ASSERT_GT(plain.hit_count, 50u);
  EXPECT_LT(std::abs(plain.estimate - is.estimate), 4.0 * std::hypot(plain.std_error, is.std_error));
  EXPECT_GT(is.hit_count, plain.hit_count / 2);
  EXPECT_GT(is.ess, 10.0);
  EXPECT_LE(is.ess, static_cast<double>(is.hit_count) + 1e-9);
}

// Conditioning on the start fixes floor(n f_0) and adds the multinomial probability of it.
TEST(EstimateIsLdp, ConditionedStartAddsMultinomialOffset) {
  EXPECT_NEAR(detail::log_multinomial(3, 1, 1, base), std::log(6.0 * 0.6 * 0.2 * 0.2), 1e-12);
  EXPECT_NEAR(detail::log_multinomial(2, 2, 0, base), 2.0 * std::log(0.6), 1e-12);

  const Path2 target = controlled_path(base, 1.0, constant_controls(base.T0, 1.0, 1.0, 200), Vec2(0.5, 0.25));
  const std::size_t n = 20;
  const EventSpec whole{target, 1e6, Space::ldp};
  const EstimateReport r = estimate_is_ldp(base, unit, whole, n, 200, 2);
  // The recovered tilt is numerically zero, so only the offset remains.
  EXPECT_NEAR(r.log_estimate, detail::log_multinomial(n, 10, 5, base), 1e-3);
  EXPECT_GT(r.rate_theoretical, 0.0);
}

TEST(EstimateIsLdp, RefusesInfiniteRateTargets) {
  const Path2 rising = Path2::tabulate(TimeGrid(base.T0, 50), [](double t) { return Vec2(0.6 + 0.01 * t, 0.2); });
  EXPECT_THROW(estimate_is_ldp(base, unit, EventSpec{rising, 0.1, Space::ldp}, 20, 10, 1), NumericRefusal);
  EXPECT_THROW(estimate_is_ldp(base, unit, EventSpec{rising, 0.1, Space::mdp}, 20, 10, 1), InvalidInput);
  EXPECT_THROW(estimate_plain(base, unit, EventSpec{rising, 0.0, Space::ldp}, 20, 10, 1), InvalidInput);
  EXPECT_THROW(estimate_plain(base, unit, EventSpec{rising, 0.1, Space::ldp}, 20, 0, 1), InvalidInput);
}

TEST(EstimateIsMdp, UnbiasedForTheWholeSpaceAndAgreesWithPlain) {
  const std::size_t n = 400;
  const Linearization linz = linearize(base, 1.0, 200);
  const Path2 target = mdp_tilted_ode(linz, Path2(linz.grid(), Vec2(0.5, 0.5)), Vec2::Zero());
  const EstimateReport whole = estimate_is_mdp(base, unit, EventSpec{target, 1e6, Space::mdp}, n, 5000, 3);
  EXPECT_LT(std::abs(whole.estimate - 1.0), 4.0 * whole.std_error);

  const EventSpec event{target, 0.4, Space::mdp};
  const EstimateReport plain = estimate_plain(base, unit, event, n, 20000, 4);
  const EstimateReport is = estimate_is_mdp(base, unit, event, n, 10000, 5);
  ASSERT_GT(plain.hit_count, 50u);
  EXPECT_LT(std::abs(plain.estimate - is.estimate), 4.0 * std::hypot(plain.std_error, is.std_error));
  EXPECT_NEAR(is.a_n, std::pow(400.0, 0.75), 1e-9);
  EXPECT_NEAR(is.rate_empirical, -(n / (is.a_n * is.a_n)) * is.log_estimate, 1e-12);

  EstimateOptions bad;
  bad.a_exponent = 1.0;
  EXPECT_THROW(estimate_is_mdp(base, unit, event, n, 10, 5, bad), InvalidInput);
}

TEST(EstimateIsLdp, EffectiveSampleSizeBeatsPlainHits) {
  const EventSpec event{controlled_target(1.5, 0.6, 1000), 0.05, Space::ldp};
  const std::size_t n = 100;
  const EstimateReport plain = estimate_plain(base, unit, event, n, 20000, 1);
  const EstimateReport is = estimate_is_ldp(base, unit, event, n, 20000, 2);
  ASSERT_GT(plain.hit_count, 0u);
  EXPECT_GE(is.ess, 10.0 * std::max<double>(1.0, static_cast<double>(plain.hit_count)));
}

TEST(RateSlope, RecoversSyntheticSlope) {
  std::vector<EstimateReport> reports;
  for (std::size_t n : {100u, 200u, 400u}) {
    EstimateReport r;
    r.n = n;
    r.a_n = std::pow(static_cast<double>(n), 0.75);
    r.log_estimate = -0.3 * static_cast<double>(n) + 1.5;
    reports.push_back(r);
  }
  const stats::LinearFit fit = rate_slope(reports, Space::ldp);
  EXPECT_NEAR(fit.slope, -0.3, 1e-12);
  EXPECT_NEAR(fit.intercept, 1.5, 1e-9);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);

  for (auto& r : reports) {
    r.log_estimate = -0.2 * r.a_n * r.a_n / static_cast<double>(r.n);
  }
  EXPECT_NEAR(rate_slope(reports, Space::mdp).slope, -0.2, 1e-12);

  reports.pop_back();
  EXPECT_THROW(rate_slope(reports, Space::ldp), InvalidInput);
}

TEST(EstimateCsv, HeaderAndRow) {
  std::ostringstream out;
  write_estimate_csv_header(out);
  EstimateReport r;
  r.n = 10;
  r.replicas = 5;
  write_estimate_csv_row(out, r);
  std::istringstream in(out.str());
  std::string header;
  std::string row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "n,a_n,replicas,hits,log_estimate,std_error,rate_empirical,rate_theoretical,ess");
  EXPECT_EQ(row.substr(0, 7), "10,0,5,");
  EXPECT_TRUE(r.to_json()["log_estimate"].is_null());
}

TEST(EstimatePlain, QuenchedModeSharesOneEnvironment) {
  EstimateOptions opt;
  opt.quenched = true;
  opt.quenched_seed = 77;
  const EventSpec event{controlled_target(1.3, 0.8), 0.2, Space::ldp};
  const auto dist = WeightDistribution::exponential(1.0);
  const EstimateReport r = estimate_plain(base, dist, event, 30, 100, 1, opt);
  EXPECT_EQ(r.environment_mode, "quenched");
  opt.quenched_seed = 78;
  const EstimateReport other = estimate_plain(base, dist, event, 30, 100, 1, opt);
  EXPECT_EQ(other.environment_mode, "quenched");
  EXPECT_EQ(estimate_plain(base, dist, event, 30, 100, 1).environment_mode, "annealed");
}

}  // namespace
}  // namespace sirld
