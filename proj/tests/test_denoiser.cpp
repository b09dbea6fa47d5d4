#include <gtest/gtest.h>

#include <cmath>

#include "dlpo/autograd.hpp"
#include "dlpo/denoiser.hpp"
#include "dlpo/errors.hpp"
#include "test_util.hpp"

namespace dlpo {
namespace {

TEST(DenoiserLayout, DefaultTotal) {
  const DenoiserDims d;
  const DenoiserLayout l = DenoiserLayout::from(d);
  const std::size_t expected = d.d_c * d.k + d.d_t * d.steps +
                               d.h1 * (d.n + d.d_c + d.d_t) + d.h1 + d.h2 * d.h1 + d.h2 +
                               d.n * d.h2 + d.n;
  EXPECT_EQ(l.total, expected);
  EXPECT_EQ(Denoiser(d).param_count(), expected);
  EXPECT_LT(l.emb_c, l.emb_t);
  EXPECT_LT(l.w3, l.b3);
  EXPECT_EQ(l.b3 + d.n, l.total);
}

TEST(Denoiser, ZeroParamsGiveZeroOutput) {
  const Denoiser net(testing::small_dims());
  const std::vector<double> p(net.param_count(), 0.0);
  Rng rng(1);
  const std::vector<double> x = testing::normal_vector(net.dims().n, rng);
  for (const double v : net.predict_eps(p, x, 1, 2)) EXPECT_EQ(v, 0.0);
}

TEST(Denoiser, DeterministicForward) {
  const Denoiser net{DenoiserDims{}};
  const std::vector<double> p1 = net.init(9), p2 = net.init(9);
  EXPECT_EQ(p1, p2);
  Rng rng(2);
  const std::vector<double> x = testing::normal_vector(net.dims().n, rng);
  EXPECT_EQ(net.predict_eps(p1, x, 3, 7), net.predict_eps(p2, x, 3, 7));
}

TEST(Denoiser, OutputBiasMovesOneCoordinate) {
  const Denoiser net(testing::small_dims());
  std::vector<double> p = net.init(3);
  Rng rng(3);
  const std::vector<double> x = testing::normal_vector(net.dims().n, rng);
  const std::vector<double> before = net.predict_eps(p, x, 0, 1);
  const std::size_t j = 2;
  const double delta = 0.125;
  p[net.layout().b3 + j] += delta;
  const std::vector<double> after = net.predict_eps(p, x, 0, 1);
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (i == j) {
      EXPECT_NEAR(after[i] - before[i], delta, 1e-15);
    } else {
      EXPECT_EQ(after[i], before[i]);
    }
  }
}

TEST(Denoiser, InitRespectsFanInBounds) {
  const DenoiserDims d;
  const Denoiser net(d);
  const std::vector<double> p = net.init(4);
  const DenoiserLayout& l = net.layout();
  const double b1 = 1.0 / std::sqrt(static_cast<double>(d.n + d.d_c + d.d_t));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(d.h1));
  const double b3 = 1.0 / std::sqrt(static_cast<double>(d.h2));
  for (std::size_t i = l.w1x; i < l.w2; ++i) EXPECT_LE(std::abs(p[i]), b1);
  for (std::size_t i = l.w2; i < l.w3; ++i) EXPECT_LE(std::abs(p[i]), b2);
  for (std::size_t i = l.w3; i < l.total; ++i) EXPECT_LE(std::abs(p[i]), b3);
  const auto rms = [&](std::size_t from, std::size_t to) {
    double sq = 0.0;
    for (std::size_t i = from; i < to; ++i) sq += p[i] * p[i];
    return std::sqrt(sq / static_cast<double>(to - from));
  };
  EXPECT_NEAR(rms(l.emb_c, l.emb_t), kCondEmbStd, 0.3 * kCondEmbStd);
  EXPECT_NEAR(rms(l.emb_t, l.w1x), kStepEmbStd, 0.3 * kStepEmbStd);
}

TEST(Denoiser, ArgumentChecks) {
  const Denoiser net(testing::small_dims());
  const std::vector<double> p = net.init(1);
  const std::vector<double> x(net.dims().n, 0.0);
  const std::vector<double> short_x(net.dims().n - 1, 0.0);
  EXPECT_THROW(net.predict_eps(p, x, 0, 0), ArgumentError);
  EXPECT_THROW(net.predict_eps(p, x, 0, 5), ArgumentError);
  EXPECT_THROW(net.predict_eps(p, x, 3, 1), ArgumentError);
  EXPECT_THROW(net.predict_eps(p, x, -1, 1), ArgumentError);
  EXPECT_THROW(net.predict_eps(p, short_x, 0, 1), ArgumentError);
  EXPECT_THROW(net.predict_eps(std::vector<double>(3, 0.0), x, 0, 1), ArgumentError);
}

TEST(Denoiser, TapeForwardMatchesDirectForwardBitwise) {
  const Denoiser net{DenoiserDims{}};
  const std::vector<double> p = net.init(5);
  const DenoiserDims& d = net.dims();
  ad::Tape tape(net.param_count(), d.n + d.k + d.steps);
  const ad::Var out = net.build(tape, tape.input(0, d.n), tape.input(d.n, d.k),
                                tape.input(d.n + d.k, d.steps));
  tape.sum(out);
  Rng rng(6);
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<double> in = testing::normal_vector(d.n + d.k + d.steps, rng);
    const int c = trial % static_cast<int>(d.k);
    const int t = 1 + trial * 3;
    net.write_onehots(c, t, std::span<double>(in).subspan(d.n));
    tape.forward(p, in);
    const auto direct = net.predict_eps(p, std::span<const double>(in).first(d.n), c, t);
    const auto taped = tape.value(out);
    ASSERT_EQ(direct.size(), taped.size());
    for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_EQ(direct[i], taped[i]);
  }
}

TEST(Denoiser, ForwardGradientMatchesFiniteDifferences) {
  const Denoiser net(testing::small_dims());
  const DenoiserDims& d = net.dims();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng = Rng::stream(seed, 31);
    const std::vector<double> p = net.init(seed);
    std::vector<double> in = testing::normal_vector(d.n + d.k + d.steps + d.n, rng);
    net.write_onehots(static_cast<int>(seed % d.k), 1 + static_cast<int>(seed % d.steps),
                      std::span<double>(in).subspan(d.n, d.k + d.steps));
    ad::Tape tape(net.param_count(), in.size());
    const ad::Var eps = net.build(tape, tape.input(0, d.n), tape.input(d.n, d.k),
                                  tape.input(d.n + d.k, d.steps));
    tape.sum(tape.mul(eps, tape.input(d.n + d.k + d.steps, d.n)));
    const ad::Objective f = [&](std::span<const double> params, std::span<double> grad) {
      const double v = tape.forward(params, in);
      if (!grad.empty()) tape.backward_into(grad);
      return v;
    };
    EXPECT_LT(ad::finite_diff_check(f, p, 1e-5), 1e-4);
  }
}

TEST(MuFromEps, ZeroNoiseScalesState) {
  const Schedule s = make_schedule(3, 0.1, 0.3, 1e-6);
  const std::vector<double> x{1.0, -2.0}, zero(2, 0.0);
  const std::vector<double> mu = mu_from_eps(x, zero, 2, s);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(mu[i], x[i] / std::sqrt(s.alpha_at(2)), 1e-15);
}

TEST(MuFromEps, ImpliedNoiseGivesPosteriorMean) {
  const Schedule s = make_schedule(10, 1e-3, 0.6, 1e-6);
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = 1 + trial % 10;
    const std::vector<double> x0 = testing::normal_vector(12, rng);
    const std::vector<double> xt = testing::normal_vector(12, rng);
    const std::vector<double> mu = mu_from_eps(xt, implied_noise(xt, x0, t, s), t, s);
    EXPECT_LT(testing::max_abs_diff(mu, posterior_mean(xt, x0, t, s)), 1e-10) << "t=" << t;
  }
}

TEST(MuFromEps, IdentityWhenAlphaIsOne) {
  const Schedule s = make_schedule(1, 1e-15, 1e-15, 1e-20);
  const std::vector<double> x{0.7, -0.1}, eps{3.0, 1.0};
  const std::vector<double> mu = mu_from_eps(x, eps, 1, s);
  EXPECT_NEAR(mu[0], 0.7, 1e-6);
  EXPECT_NEAR(mu[1], -0.1, 1e-6);
}

TEST(MuFromEps, StepOutOfRange) {
  const Schedule s = make_schedule(2, 0.1, 0.2, 1e-6);
  const std::vector<double> v(2, 0.0);
  EXPECT_THROW(mu_from_eps(v, v, 3, s), ArgumentError);
}

}  // namespace
}  // namespace dlpo
