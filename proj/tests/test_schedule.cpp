#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "nase/schedule.hpp"
#include "support.hpp"

using namespace nase;

namespace {

Schedule toy() { return build_schedule(2, BetaSpec::explicit_values({0.5, 0.5}), WeightSpec::explicit_values({0, 0, 1})); }

void expect_estimate_matches(const Schedule& s, int t, int prev, double x0, double y, std::size_t n, Rng& rng,
                             double z = 3.0) {
  const auto est = nase::testing::estimate_posterior(s, t, prev, x0, y, n, rng);
  const auto pred = nase::testing::predict_posterior(s, t, prev, x0, y, est.x_mean);
  const double floor = 1e-9;
  EXPECT_LE(std::abs(est.slope - pred.slope), z * est.slope_se + floor) << "t=" << t << " prev=" << prev;
  EXPECT_LE(std::abs(est.mean_at_x - pred.mean_at_x), z * est.mean_at_x_se + floor) << "t=" << t << " prev=" << prev;
  EXPECT_LE(std::abs(est.variance - pred.variance), z * est.variance_se + floor) << "t=" << t << " prev=" << prev;
}

}  // namespace

TEST(Schedule, ToyValues) {
  const Schedule s = toy();
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.5);
  EXPECT_DOUBLE_EQ(s.alpha_bar(2), 0.25);
  EXPECT_DOUBLE_EQ(s.delta(0), 0.0);
  EXPECT_NEAR(s.delta(1), 0.5, 1e-15);
  EXPECT_NEAR(s.delta(2), 0.5, 1e-15);

  // Hand-derived: at t = 2, x_2 carries no information about x_1.
  const auto& c2 = s.coeffs(2);
  EXPECT_NEAR(c2.c_xt, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(c2.c_yt, 0.0, 1e-12);
  EXPECT_NEAR(c2.c_eps, std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(c2.delta_tilde, 0.5, 1e-12);
  const auto& c1 = s.coeffs(1);
  EXPECT_NEAR(c1.c_xt, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(c1.c_yt, 0.0, 1e-12);
  EXPECT_NEAR(c1.c_eps, 1.0, 1e-12);
  EXPECT_EQ(c1.delta_tilde, 0.0);
}

TEST(Schedule, ZeroWeightIsVanillaDdpm) {
  const Schedule s = build_schedule(50, BetaSpec::linear(1e-4, 0.035), WeightSpec::zero());
  for (int t = 1; t <= 50; ++t) {
    EXPECT_NEAR(s.delta(t), 1.0 - s.alpha_bar(t), 1e-15);
    const auto& c = s.coeffs(t);
    const double a = s.alpha(t), ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1);
    EXPECT_NEAR(c.c_xt, 1.0 / std::sqrt(a), 1e-10) << t;
    EXPECT_NEAR(c.c_yt, 0.0, 1e-10) << t;
    EXPECT_NEAR(c.c_eps, s.beta(t) / (std::sqrt(a) * std::sqrt(1.0 - ab)), 1e-10) << t;
    EXPECT_NEAR(c.delta_tilde, (1.0 - ab_prev) / (1.0 - ab) * s.beta(t), 1e-10) << t;
    EXPECT_NEAR(c.delta_tilde, s.beta_tilde(t), 1e-12) << t;
  }
}

TEST(Schedule, ZeroWeightMeanMatchesDdpmOnVectors) {
  const Schedule s = build_schedule(20, BetaSpec::linear(1e-3, 0.1), WeightSpec::zero());
  Rng r(31);
  for (std::size_t dim = 1; dim <= 8; ++dim) {
    for (int t = 1; t <= 20; ++t) {
      const auto& c = s.coeffs(t);
      for (std::size_t i = 0; i < dim; ++i) {
        const double x = r.normal(), y = r.normal(), e = r.normal();
        const double ours = c.c_xt * x + c.c_yt * y - c.c_eps * e;
        const double ddpm =
            (x - s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t)) * e) / std::sqrt(s.alpha(t));
        EXPECT_NEAR(ours, ddpm, 1e-10);
      }
    }
  }
}

TEST(Schedule, DefaultInvariants) {
  const Schedule s = build_schedule(50);
  EXPECT_EQ(s.steps(), 50);
  EXPECT_NEAR(s.w(50), 1.0, 1e-12);
  EXPECT_EQ(s.w(0), 0.0);
  for (int t = 1; t <= 50; ++t) {
    EXPECT_GE(s.w(t), s.w(t - 1));
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.delta(t), 0.0);
    if (t < 50) EXPECT_LT(s.w(t), 1.0);
    if (t > 1) EXPECT_GT(s.coeffs(t).delta_tilde, 0.0);
  }
  EXPECT_EQ(s.coeffs(1).delta_tilde, 0.0);
}

TEST(Schedule, UnitKappaIsInfeasible) {
  // w = sqrt((1 - abar) / abar) makes the marginal variance vanish exactly.
  EXPECT_THROW(build_schedule(50, BetaSpec::linear(1e-4, 0.035), WeightSpec::scaled_ratio(1.0)), ScheduleError);
}

TEST(Schedule, UnitFinalWeightNeedsEnoughNoise) {
  // With w = kappa sqrt((1 - abar) / abar), delta = (1 - abar)(1 - kappa^2), so
  // w_T = 1 is reachable only while abar_T < 0.5.
  EXPECT_THROW(build_schedule(10), ScheduleError);
  const Schedule s = nase::testing::short_schedule(10);
  EXPECT_LT(s.alpha_bar(10), 0.5);
  EXPECT_EQ(s.w(10), 1.0);
  const double kappa = std::sqrt(s.alpha_bar(10) / (1 - s.alpha_bar(10)));
  for (int t = 1; t <= 10; ++t) EXPECT_NEAR(s.delta(t), (1 - s.alpha_bar(t)) * (1 - kappa * kappa), 1e-12) << t;
}

TEST(Schedule, FirstStepIsDeterministicReconstruction) {
  const Schedule s = build_schedule(50);
  const auto& c = s.coeffs(1);
  EXPECT_EQ(c.delta_tilde, 0.0);
  // With the oracle C_1 the mean equals x0 for any x_1 and y.
  Rng r(4);
  const double ab = s.alpha_bar(1);
  for (int i = 0; i < 20; ++i) {
    const double x0 = r.normal(), y = r.normal(), x1 = r.normal();
    const double oracle = (x1 - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
    EXPECT_NEAR(c.c_xt * x1 + c.c_yt * y - c.c_eps * oracle, x0, 1e-10);
  }
}

TEST(Schedule, SingleStepJumpEqualsStepCoefficients) {
  const Schedule s = build_schedule(50);
  for (int t = 1; t <= 50; ++t) {
    const auto a = derive_posterior(s, t, t - 1);
    const auto& b = s.coeffs(t);
    EXPECT_NEAR(a.c_xt, b.c_xt, 1e-14);
    EXPECT_NEAR(a.c_yt, b.c_yt, 1e-14);
    EXPECT_NEAR(a.c_eps, b.c_eps, 1e-14);
    EXPECT_NEAR(a.delta_tilde, b.delta_tilde, 1e-14);
  }
}

TEST(Schedule, JsonRoundTrip) {
  const Schedule s = build_schedule(50);
  EXPECT_EQ(Schedule::from_json(s.to_json()), s);
  EXPECT_THROW(Schedule::from_json(nlohmann::json::parse(R"({"steps": 3})")), ScheduleError);
}

TEST(Schedule, FamilyThreshold) {
  EXPECT_NEAR(nase::testing::family_z(1), 3.0, 1e-9);
  // Bonferroni over 36 checks.
  const double z = nase::testing::family_z(36);
  EXPECT_NEAR(36 * std::erfc(z / std::sqrt(2.0)), std::erfc(3 / std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(z, 3.9599, 1e-4);
}

TEST(Schedule, Errors) {
  EXPECT_THROW(build_schedule(1), ScheduleError);
  EXPECT_THROW(build_schedule(2, BetaSpec::explicit_values({0.5})), ScheduleError);
  EXPECT_THROW(build_schedule(2, BetaSpec::explicit_values({0.5, 1.0})), ScheduleError);
  EXPECT_THROW(build_schedule(2, BetaSpec::explicit_values({0.5, 0.5}), WeightSpec::explicit_values({0.1, 0.5, 1})),
               ScheduleError);
  EXPECT_THROW(build_schedule(2, BetaSpec::explicit_values({0.5, 0.5}), WeightSpec::explicit_values({0, 0.5, 0.4})),
               ScheduleError);
  EXPECT_THROW(build_schedule(3, BetaSpec::explicit_values({0.5, 0.5, 0.5}), WeightSpec::explicit_values({0, 1, 1, 1})),
               ScheduleError);
  const Schedule s = nase::testing::short_schedule(10);
  EXPECT_THROW(s.coeffs(0), ScheduleError);
  EXPECT_THROW(s.alpha_bar(11), ScheduleError);
  EXPECT_THROW(derive_posterior(s, 5, 5), ScheduleError);
  EXPECT_THROW(derive_posterior(s, 11), ScheduleError);
}

TEST(Schedule, ToyPosteriorMatchesMonteCarlo) {
  Rng r(77);
  const Schedule s = toy();
  expect_estimate_matches(s, 2, 1, 0.7, -0.4, 1'000'000, r);
  expect_estimate_matches(s, 1, 0, 0.7, -0.4, 1000, r);
}

TEST(Schedule, RandomSchedulePosteriorsMatchMonteCarlo) {
  Rng r(78);
  const double z = nase::testing::family_z(2 * 6 * 3);
  for (int trial = 0; trial < 2; ++trial) {
    const Schedule s = nase::testing::random_schedule(r, 5);
    const double x0 = r.uniform(-1, 1), y = r.uniform(-1, 1);
    for (int t = 1; t <= 5; ++t) expect_estimate_matches(s, t, t - 1, x0, y, 200'000, r, z);
    expect_estimate_matches(s, 5, 2, x0, y, 200'000, r, z);
  }
}

TEST(Schedule, ReverseStepReproducesPreviousMarginal) {
  Rng r(79);
  const Schedule s = nase::testing::random_schedule(r, 6);
  const double x0 = 0.3, y = -0.8;
  constexpr int n = 400'000;
  for (int t = 2; t <= 6; ++t) {
    const auto& c = s.coeffs(t);
    const double ab = s.alpha_bar(t);
    double m = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double xt = s.clean_gain(t) * x0 + s.noisy_gain(t) * y + std::sqrt(s.delta(t)) * r.normal();
      const double oracle = (xt - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
      const double xp = c.c_xt * xt + c.c_yt * y - c.c_eps * oracle + std::sqrt(c.delta_tilde) * r.normal();
      m += xp;
      m2 += xp * xp;
    }
    m /= n;
    const double var = m2 / n - m * m;
    const double want_mean = (1.0 - s.w(t - 1)) * std::sqrt(s.alpha_bar(t - 1)) * x0 +
                             s.w(t - 1) * std::sqrt(s.alpha_bar(t - 1)) * y;
    const double want_var = s.delta(t - 1);
    EXPECT_LE(std::abs(m - want_mean), 3 * std::sqrt(want_var / n)) << t;
    EXPECT_LE(std::abs(var - want_var), 3 * want_var * std::sqrt(2.0 / n)) << t;
  }
}
