#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dlpo {

// Linear variance schedule and the quantities derived from it. Arrays are
// stored 0-based; the accessors take the diffusion step t in 1..steps.
struct Schedule {
  int steps = 0;
  double sigma2_min = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product of alpha
  std::vector<double> sigma2;     // reverse-step variance, floored

  double beta_at(int t) const { return beta[index(t)]; }
  double alpha_at(int t) const { return alpha[index(t)]; }
  double alpha_bar_at(int t) const { return alpha_bar[index(t)]; }
  double sigma2_at(int t) const { return sigma2[index(t)]; }

  // Throws ArgumentError unless 1 <= t <= steps.
  void check_step(int t) const;

 private:
  std::size_t index(int t) const {
    check_step(t);
    return static_cast<std::size_t>(t - 1);
  }
};

// beta interpolates linearly from beta_start (t = 1) to beta_end (t = steps).
// sigma2[t] is the DDPM posterior variance beta_t (1 - abar_{t-1}) / (1 - abar_t)
// with sigma2[1] = beta_1, floored at sigma2_min.
Schedule make_schedule(int steps, double beta_start, double beta_end,
                       double sigma2_min);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
std::vector<double> q_sample(std::span<const double> x0, int t,
                             std::span<const double> eps, const Schedule& s);

// The noise that q_sample would have needed to turn x0 into x_t.
std::vector<double> implied_noise(std::span<const double> x_t,
                                  std::span<const double> x0, int t,
                                  const Schedule& s);

// Mean of q(x_{t-1} | x_t, x0). Returns x0 at t = 1.
std::vector<double> posterior_mean(std::span<const double> x_t,
                                   std::span<const double> x0, int t,
                                   const Schedule& s);

}  // namespace dlpo
