#include "dlpo/diffusion.hpp"

#include <cmath>
#include <string>

#include "dlpo/errors.hpp"

namespace dlpo {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b,
                   const char* what) {
  if (a.size() != b.size()) {
    throw ArgumentError(std::string(what) + ": length mismatch (" +
                        std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
}

}  // namespace

void Schedule::check_step(int t) const {
  if (t < 1 || t > steps) {
    throw ArgumentError("diffusion step " + std::to_string(t) +
                        " outside 1.." + std::to_string(steps));
  }
}

Schedule make_schedule(int steps, double beta_start, double beta_end,
                       double sigma2_min) {
  if (steps < 1) throw ConfigError("schedule: step count must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  if (!(sigma2_min > 0.0)) throw ConfigError("schedule: sigma2_min must be > 0");

  Schedule s;
  s.steps = steps;
  s.sigma2_min = sigma2_min;
  const auto n = static_cast<std::size_t>(steps);
  s.beta.resize(n);
  s.alpha.resize(n);
  s.alpha_bar.resize(n);
  s.sigma2.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const double frac =
        n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    s.alpha_bar[i] = i == 0 ? s.alpha[0] : s.alpha_bar[i - 1] * s.alpha[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double var =
        i == 0 ? s.beta[0]
               : s.beta[i] * (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]);
    s.sigma2[i] = std::max(var, sigma2_min);
  }
  return s;
}

std::vector<double> q_sample(std::span<const double> x0, int t,
                             std::span<const double> eps, const Schedule& s) {
  check_lengths(x0, eps, "q_sample");
  const double ab = s.alpha_bar_at(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

std::vector<double> implied_noise(std::span<const double> x_t,
                                  std::span<const double> x0, int t,
                                  const Schedule& s) {
  check_lengths(x_t, x0, "implied_noise");
  const double ab = s.alpha_bar_at(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - a * x0[i]) / b;
  return out;
}

std::vector<double> posterior_mean(std::span<const double> x_t,
                                   std::span<const double> x0, int t,
                                   const Schedule& s) {
  check_lengths(x_t, x0, "posterior_mean");
  s.check_step(t);
  if (t == 1) return {x0.begin(), x0.end()};
  const double ab = s.alpha_bar_at(t);
  const double ab_prev = s.alpha_bar_at(t - 1);
  const double coeff_x0 = std::sqrt(ab_prev) * s.beta_at(t) / (1.0 - ab);
  const double coeff_xt = std::sqrt(s.alpha_at(t)) * (1.0 - ab_prev) / (1.0 - ab);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = coeff_x0 * x0[i] + coeff_xt * x_t[i];
  }
  return out;
}

}  // namespace dlpo
