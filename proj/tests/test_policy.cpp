#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dlpo/errors.hpp"
#include "dlpo/policy.hpp"
#include "test_util.hpp"

namespace dlpo {
namespace {

TEST(LogprobStep, StandardNormalMode) {
  const std::vector<double> zero{0.0};
  EXPECT_NEAR(logprob_step(zero, 1.0, zero), -0.91893853320467274, 1e-15);
}

TEST(LogprobStep, AtMeanAnyDimension) {
  for (const std::size_t n : {1u, 5u, 128u}) {
    const std::vector<double> mu(n, 0.3);
    const double s2 = 0.37;
    EXPECT_NEAR(logprob_step(mu, s2, mu),
                -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * s2), 1e-12);
  }
}

TEST(LogprobStep, QuadratureNormalizesToOne) {
  for (const double s2 : {1e-6, 0.01, 0.5, 3.0}) {
    const double sigma = std::sqrt(s2);
    const std::vector<double> mu{0.4};
    // Composite Simpson on [mu - 10 sigma, mu + 10 sigma].
    const int m = 4000;
    const double a = mu[0] - 10.0 * sigma, h = 20.0 * sigma / m;
    double acc = 0.0;
    for (int i = 0; i <= m; ++i) {
      const std::vector<double> x{a + i * h};
      const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * std::exp(logprob_step(mu, s2, x));
    }
    EXPECT_NEAR(acc * h / 3.0, 1.0, 1e-6) << "sigma2=" << s2;
  }
}

TEST(LogprobStep, RejectsNonPositiveVariance) {
  const std::vector<double> v{0.0};
  EXPECT_THROW(logprob_step(v, 0.0, v), ArgumentError);
  EXPECT_THROW(logprob_step(v, -1.0, v), ArgumentError);
  EXPECT_THROW(kl_step(v, v, 0.0), ArgumentError);
}

TEST(KlStep, ClosedFormValues) {
  const std::vector<double> a{0.0}, b{1.0};
  EXPECT_EQ(kl_step(a, a, 0.7), 0.0);
  EXPECT_DOUBLE_EQ(kl_step(a, b, 0.5), 1.0);
}

TEST(KlStep, NonNegativeAndZeroOnlyAtEqualMeans) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<double> a = testing::normal_vector(4, rng);
    std::vector<double> b = a;
    const double s2 = 0.01 + rng.uniform();
    EXPECT_EQ(kl_step(a, b, s2), 0.0);
    b[static_cast<std::size_t>(trial % 4)] += 1e-3;
    EXPECT_GT(kl_step(a, b, s2), 0.0);
  }
}

TEST(KlStep, MatchesMonteCarlo) {
  const std::vector<double> mu_a{0.3, -0.2}, mu_b{-0.1, 0.4};
  const double s2 = 0.6;
  Rng rng(4);
  const int draws = 100000;
  double sum = 0.0, sq = 0.0;
  std::vector<double> x(2);
  for (int i = 0; i < draws; ++i) {
    for (int j = 0; j < 2; ++j) x[j] = mu_a[j] + std::sqrt(s2) * rng.normal();
    const double d = logprob_step(mu_a, s2, x) - logprob_step(mu_b, s2, x);
    sum += d;
    sq += d * d;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sq / draws - mean * mean) / draws);
  EXPECT_NEAR(mean, kl_step(mu_a, mu_b, s2), 3.0 * se);
}

class PolicyTest : public ::testing::Test {
 protected:
  Denoiser net{testing::small_dims()};
  Schedule sched = testing::small_schedule(net.dims().steps);
};

TEST_F(PolicyTest, TrajectoryShapeAndDeterminism) {
  const std::vector<double> p = net.init(1);
  Rng a(10), b(10);
  const Trajectory t1 = sample_trajectory(net, p, 2, sched, a);
  const Trajectory t2 = sample_trajectory(net, p, 2, sched, b);
  EXPECT_EQ(t1.states.size(), net.dims().steps + 1);
  EXPECT_EQ(t1.logp.size(), net.dims().steps);
  EXPECT_EQ(t1.eps_pred.size(), net.dims().steps);
  EXPECT_FALSE(t1.reward.has_value());
  EXPECT_EQ(t1.c, 2);
  EXPECT_EQ(t1.states, t2.states);
  EXPECT_EQ(t1.logp, t2.logp);
  for (const double lp : t1.logp) EXPECT_TRUE(std::isfinite(lp));
}

TEST_F(PolicyTest, ZeroNetworkFollowsScaledChain) {
  const std::vector<double> p(net.param_count(), 0.0);
  Rng rng(11), replay(11);
  const Trajectory traj = sample_trajectory(net, p, 0, sched, rng);
  const std::size_t n = net.dims().n;
  std::vector<double> x(n);
  for (auto& v : x) v = replay.normal();
  EXPECT_EQ(traj.states[0], x);
  for (int t = sched.steps; t >= 1; --t) {
    const double sigma = std::sqrt(sched.sigma2_at(t));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = x[i] / std::sqrt(sched.alpha_at(t)) + sigma * replay.normal();
    }
    EXPECT_LT(testing::max_abs_diff(traj.state_at(t - 1), x), 1e-12) << "t=" << t;
  }
}

TEST_F(PolicyTest, StoredLogpMatchesRecomputation) {
  const std::vector<double> p = net.init(2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Trajectory traj = sample_trajectory(net, p, 1, sched, rng);
    const std::vector<double> again = step_logps(traj, net, p, sched);
    for (std::size_t i = 0; i < again.size(); ++i) EXPECT_NEAR(again[i], traj.logp[i], 1e-9);
  }
}

TEST_F(PolicyTest, LogpDiffZeroForSameParams) {
  const std::vector<double> p = net.init(3);
  Rng rng(5);
  const Trajectory traj = sample_trajectory(net, p, 0, sched, rng);
  EXPECT_EQ(traj_logp_diff(traj, net, p, p, sched), 0.0);
}

TEST_F(PolicyTest, LogpDiffExpectationIsNonNegative) {
  const std::vector<double> a = net.init(4);
  std::vector<double> b = a;
  Rng perturb(6);
  for (auto& v : b) v += 0.05 * perturb.normal();
  const int draws = 4000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    Rng rng = Rng::stream(7, static_cast<std::uint64_t>(i));
    const Trajectory traj = sample_trajectory(net, a, i % 3, sched, rng);
    const double d = traj_logp_diff(traj, net, a, b, sched);
    sum += d;
    sq += d * d;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sq / draws - mean * mean) / draws);
  EXPECT_GE(mean, -3.0 * se);
}

TEST_F(PolicyTest, SingleStepDiffIsLogprobDifference) {
  const DenoiserDims d = testing::small_dims(4, 2, 1);
  const Denoiser one(d);
  const Schedule s1 = make_schedule(1, 0.3, 0.3, 1e-6);
  const std::vector<double> a = one.init(8), b = one.init(9);
  Rng rng(10);
  const Trajectory traj = sample_trajectory(one, a, 1, s1, rng);
  const std::vector<double> mu_a =
      mu_from_eps(traj.states[0], one.predict_eps(a, traj.states[0], 1, 1), 1, s1);
  const std::vector<double> mu_b =
      mu_from_eps(traj.states[0], one.predict_eps(b, traj.states[0], 1, 1), 1, s1);
  const double expected =
      logprob_step(mu_a, s1.sigma2_at(1), traj.x0()) - logprob_step(mu_b, s1.sigma2_at(1), traj.x0());
  EXPECT_NEAR(traj_logp_diff(traj, one, a, b, s1), expected, 1e-12);
}

// One-step, one-dimensional model whose noise prediction is the exact
// posterior for point-mass data at `a`: x_0 should be N(a, beta_1).
TEST(PolicyDistribution, PerfectOneStepModel) {
  DenoiserDims d;
  d.n = 1;
  d.k = 1;
  d.steps = 1;
  d.d_c = 1;
  d.d_t = 1;
  d.h1 = 1;
  d.h2 = 1;
  const Denoiser net(d);
  const double beta = 0.3, a = 0.8;
  const Schedule s = make_schedule(1, beta, beta, 1e-6);
  // eps(x) = (x - sqrt(alpha) a) / sqrt(beta), built from tanh in its linear
  // regime: w3 * tanh(w2 * tanh(w1 x)) ~= w3 w2 w1 x.
  const double w1 = 1e-4, w2 = 1e-4;
  std::vector<double> p(net.param_count(), 0.0);
  const DenoiserLayout& l = net.layout();
  p[l.w1x] = w1;
  p[l.w2] = w2;
  p[l.w3] = 1.0 / (std::sqrt(beta) * w1 * w2);
  p[l.b3] = -std::sqrt(1.0 - beta) * a / std::sqrt(beta);

  const int draws = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    Rng rng = Rng::stream(12, static_cast<std::uint64_t>(i));
    const double x0 = sample_trajectory(net, p, 0, s, rng).x0()[0];
    sum += x0;
    sq += x0 * x0;
  }
  const double mean = sum / draws;
  const double var = sq / draws - mean * mean;
  EXPECT_NEAR(mean, a, 3.0 * std::sqrt(beta / draws));
  EXPECT_NEAR(var, beta, 3.0 * std::sqrt(2.0 * beta * beta / draws));
}

TEST_F(PolicyTest, CachedResidualMatchesFreshPrediction) {
  const std::vector<double> p = net.init(13);
  Rng rng(14);
  const Trajectory traj = sample_trajectory(net, p, 2, sched, rng);
  for (int t = 1; t <= sched.steps; ++t) {
    const std::vector<double> target = implied_noise(traj.state_at(t), traj.x0(), t, sched);
    const std::vector<double> pred = net.predict_eps(p, traj.state_at(t), 2, t);
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sq += (target[i] - pred[i]) * (target[i] - pred[i]);
    EXPECT_DOUBLE_EQ(cached_residual(traj, t, sched), std::sqrt(sq));
  }
}

}  // namespace
}  // namespace dlpo
