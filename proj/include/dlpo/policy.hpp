#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dlpo/denoiser.hpp"
#include "dlpo/diffusion.hpp"
#include "dlpo/rng.hpp"

namespace dlpo {

// One rollout of the reverse process viewed as a T-step MDP: state i is
// (c, x_{T-i}), action i is x_{T-i-1}, transitions are deterministic and the
// only reward is the terminal score of x_0.
struct Trajectory {
  int c = 0;
  std::vector<std::vector<double>> states;    // x_T, x_{T-1}, ..., x_0
  std::vector<double> logp;                   // log p(x_{T-i-1} | x_{T-i}, c)
  std::vector<std::vector<double>> eps_pred;  // eps_theta at each visited state
  std::optional<double> reward;

  int steps() const { return static_cast<int>(logp.size()); }
  const std::vector<double>& x0() const { return states.back(); }
  // x_t for diffusion step t in 0..steps.
  const std::vector<double>& state_at(int t) const {
    return states[static_cast<std::size_t>(steps() - t)];
  }
};

// Ancestral sampling: x_T ~ N(0, I), then x_{t-1} ~ N(mu_theta(x_t), sigma2_t I).
Trajectory sample_trajectory(const Denoiser& net, std::span<const double> params,
                             int c, const Schedule& sched, Rng& rng);

// Diagonal Gaussian log-density N(x; mu, sigma2 I).
double logprob_step(std::span<const double> mu, double sigma2,
                    std::span<const double> x);

// KL(N(mu_a, sigma2 I) || N(mu_b, sigma2 I)).
double kl_step(std::span<const double> mu_a, std::span<const double> mu_b,
               double sigma2);

// Per-step log-densities of the stored actions under `params`.
std::vector<double> step_logps(const Trajectory& traj, const Denoiser& net,
                               std::span<const double> params,
                               const Schedule& sched);

// sum_i [log p_a(action_i | state_i) - log p_b(action_i | state_i)], with both
// models evaluated on the stored states. Sampled from model a, its mean is
// the trajectory-level KL(p_a || p_b).
double traj_logp_diff(const Trajectory& traj, const Denoiser& net,
                      std::span<const double> params_a,
                      std::span<const double> params_b, const Schedule& sched);

// ||implied_noise(x_t, x_0, t) - eps|| at step t, with eps the cached
// prediction from the rollout.
double cached_residual(const Trajectory& traj, int t, const Schedule& sched);

}  // namespace dlpo
