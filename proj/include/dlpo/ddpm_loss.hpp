#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "dlpo/autograd.hpp"
#include "dlpo/denoiser.hpp"
#include "dlpo/diffusion.hpp"
#include "dlpo/rng.hpp"

namespace dlpo {

// Norm applied to the noise residual eps - eps_theta.
enum class LossNorm { kL2, kL2Squared };

LossNorm parse_loss_norm(std::string_view text);
std::string_view to_string(LossNorm norm);

// A clean training waveform and its condition class.
struct LabeledWave {
  std::vector<double> x0;
  int c = 0;
};

// The step and noise used to corrupt one batch element.
struct NoiseDraw {
  int t = 1;
  std::vector<double> eps;
};

struct LossAndGrad {
  double value = 0.0;
  std::vector<double> grad;
};

// Draws t ~ U{1..steps}, then eps ~ N(0, I_n), for each of `count` elements.
std::vector<NoiseDraw> draw_noise(std::size_t count, std::size_t n, int steps,
                                  Rng& rng);

// Mean over the batch of ||eps - eps_theta(q_sample(x0, t, eps), c, t)|| with
// the given draws, and its gradient with respect to params.
LossAndGrad ddpm_loss(const Denoiser& net, std::span<const double> params,
                      std::span<const LabeledWave> batch,
                      std::span<const NoiseDraw> draws, const Schedule& sched,
                      LossNorm norm = LossNorm::kL2);

// Same, drawing the noise from `rng` first.
LossAndGrad ddpm_loss(const Denoiser& net, std::span<const double> params,
                      std::span<const LabeledWave> batch, Rng& rng,
                      const Schedule& sched, LossNorm norm = LossNorm::kL2);

// Appends ||a - b|| (or its square) to the tape.
ad::Var residual_norm(ad::Tape& tape, ad::Var a, ad::Var b, LossNorm norm);

}  // namespace dlpo
