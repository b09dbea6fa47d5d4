#include "dlpo/policy.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dlpo/errors.hpp"

namespace dlpo {

namespace {

void check_trajectory(const Trajectory& traj, const Denoiser& net,
                      const Schedule& sched) {
  const auto steps = static_cast<std::size_t>(sched.steps);
  if (traj.logp.size() != steps || traj.states.size() != steps + 1) {
    throw ArgumentError("trajectory does not match the schedule length");
  }
  for (const auto& s : traj.states) {
    if (s.size() != net.dims().n) {
      throw ArgumentError("trajectory state has wrong length");
    }
  }
}

}  // namespace

Trajectory sample_trajectory(const Denoiser& net, std::span<const double> params,
                             int c, const Schedule& sched, Rng& rng) {
  const std::size_t n = net.dims().n;
  const int steps = sched.steps;
  net.check_args(n, c, steps);

  Trajectory traj;
  traj.c = c;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.logp.reserve(static_cast<std::size_t>(steps));
  traj.eps_pred.reserve(static_cast<std::size_t>(steps));

  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  traj.states.push_back(x);

  std::vector<double> eps(n);
  for (int t = steps; t >= 1; --t) {
    net.predict_eps_into(params, traj.states.back(), c, t, eps);
    const std::vector<double> mu = mu_from_eps(traj.states.back(), eps, t, sched);
    const double sigma2 = sched.sigma2_at(t);
    const double sigma = std::sqrt(sigma2);
    for (std::size_t i = 0; i < n; ++i) x[i] = mu[i] + sigma * rng.normal();
    traj.logp.push_back(logprob_step(mu, sigma2, x));
    traj.eps_pred.push_back(eps);
    traj.states.push_back(x);
  }
  return traj;
}

double logprob_step(std::span<const double> mu, double sigma2,
                    std::span<const double> x) {
  if (!(sigma2 > 0.0)) throw ArgumentError("logprob_step: sigma2 must be > 0");
  if (mu.size() != x.size()) throw ArgumentError("logprob_step: length mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mu[i];
    sq += d * d;
  }
  const double n = static_cast<double>(x.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) -
         sq / (2.0 * sigma2);
}

double kl_step(std::span<const double> mu_a, std::span<const double> mu_b,
               double sigma2) {
  if (!(sigma2 > 0.0)) throw ArgumentError("kl_step: sigma2 must be > 0");
  if (mu_a.size() != mu_b.size()) throw ArgumentError("kl_step: length mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double d = mu_a[i] - mu_b[i];
    sq += d * d;
  }
  return sq / (2.0 * sigma2);
}

std::vector<double> step_logps(const Trajectory& traj, const Denoiser& net,
                               std::span<const double> params,
                               const Schedule& sched) {
  check_trajectory(traj, net, sched);
  const int steps = sched.steps;
  std::vector<double> out(static_cast<std::size_t>(steps));
  std::vector<double> eps(net.dims().n);
  for (int i = 0; i < steps; ++i) {
    const int t = steps - i;
    const auto& x_t = traj.states[static_cast<std::size_t>(i)];
    net.predict_eps_into(params, x_t, traj.c, t, eps);
    const std::vector<double> mu = mu_from_eps(x_t, eps, t, sched);
    out[static_cast<std::size_t>(i)] = logprob_step(
        mu, sched.sigma2_at(t), traj.states[static_cast<std::size_t>(i) + 1]);
  }
  return out;
}

double traj_logp_diff(const Trajectory& traj, const Denoiser& net,
                      std::span<const double> params_a,
                      std::span<const double> params_b, const Schedule& sched) {
  const std::vector<double> a = step_logps(traj, net, params_a, sched);
  const std::vector<double> b = step_logps(traj, net, params_b, sched);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += a[i] - b[i];
  return total;
}

double cached_residual(const Trajectory& traj, int t, const Schedule& sched) {
  sched.check_step(t);
  const std::vector<double> target =
      implied_noise(traj.state_at(t), traj.x0(), t, sched);
  const auto& eps = traj.eps_pred[static_cast<std::size_t>(traj.steps() - t)];
  double sq = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = target[i] - eps[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

}  // namespace dlpo
