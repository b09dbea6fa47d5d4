#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dlpo/ddpm_loss.hpp"
#include "dlpo/denoiser.hpp"
#include "dlpo/diffusion.hpp"
#include "dlpo/policy.hpp"
#include "dlpo/rng.hpp"

namespace dlpo {

enum class Algo { kRwr, kDdpo, kDpok, kKlinr, kDlpo, kOnlyDl };
enum class BaselineMode { kNone, kMovingAverage };
// How the diffusion-loss term enters DLPO/OnlyDL:
//   kDirectGrad:   alpha * REINFORCE + beta * pathwise gradient of the residual
//   kShapedReward: REINFORCE with per-trajectory weight (alpha r - beta d)
enum class DlpoMode { kDirectGrad, kShapedReward };
// Which steps carry the residual term: one uniform t per trajectory, or the
// mean over all steps.
enum class StepSampling { kSingleUniform, kAllSteps };
// Where eps~ comes from: the trajectory's own (x_t, x_0), or fresh forward
// diffusion of dataset waveforms.
enum class DlSource { kTrajectory, kDataset };

inline constexpr Algo kAllAlgos[] = {Algo::kRwr,   Algo::kDdpo, Algo::kDpok,
                                     Algo::kKlinr, Algo::kDlpo, Algo::kOnlyDl};

Algo parse_algo(std::string_view text);
std::string_view to_string(Algo algo);
BaselineMode parse_baseline(std::string_view text);
std::string_view to_string(BaselineMode mode);
DlpoMode parse_dlpo_mode(std::string_view text);
std::string_view to_string(DlpoMode mode);
StepSampling parse_step_sampling(std::string_view text);
std::string_view to_string(StepSampling mode);
DlSource parse_dl_source(std::string_view text);
std::string_view to_string(DlSource source);

struct RLConfig {
  Algo algo = Algo::kDlpo;
  double alpha = 1.0;  // reward weight
  double beta = 0.1;   // regularizer weight (KL for DPOK, residual for DLPO)
  BaselineMode baseline = BaselineMode::kMovingAverage;
  double baseline_decay = 0.9;
  DlpoMode dlpo_mode = DlpoMode::kDirectGrad;
  StepSampling dlpo_t_sampling = StepSampling::kSingleUniform;
  DlSource dl_source = DlSource::kTrajectory;
  std::size_t batch_size = 16;
  LossNorm loss_norm = LossNorm::kL2;

  void validate() const;
};

struct GradEstimate {
  std::vector<double> grad;  // descent direction on the objective
  double mean_reward = 0.0;
  // Batch mean of the per-trajectory return the baseline offsets: r, or the
  // shaped return (KLinR, shaped_reward mode).
  double mean_return = 0.0;
  double mean_kl = 0.0;        // per-trajectory KL or log-density gap, when used
  double mean_residual = 0.0;  // mean diffusion residual, when used
};

// Everything an estimator needs besides the trajectories. `params` and
// `pretrained` are read-only for the duration of the call. `baseline` is the
// running average of mean_return kept by the trainer; ignored when
// cfg.baseline is kNone. `dataset` is only read when cfg.dl_source is kDataset.
struct EstimatorContext {
  const Denoiser& net;
  std::span<const double> params;
  std::span<const double> pretrained;
  const Schedule& sched;
  const RLConfig& cfg;
  double baseline = 0.0;
  std::span<const LabeledWave> dataset = {};
};

// Reward-weighted regression on trajectories from the pretrained model:
// descent on E[r * D] where -D (the residual at one uniform t) stands in for
// log p(x_0 | c).
GradEstimate grad_rwr(std::span<const Trajectory> batch,
                      const EstimatorContext& ctx, Rng& rng);

// REINFORCE: -(1/B) sum_b r_b sum_t grad log p(x_{t-1} | x_t, c).
GradEstimate grad_ddpo(std::span<const Trajectory> batch,
                       const EstimatorContext& ctx, Rng& rng);

// alpha * REINFORCE + beta * grad (1/B) sum_b sum_t KL(p_theta || p_pre), the
// KL differentiated through mu_theta on the stored states.
GradEstimate grad_dpok(std::span<const Trajectory> batch,
                       const EstimatorContext& ctx, Rng& rng);

// REINFORCE with the shaped reward r - sum_t [log p_theta - log p_pre].
GradEstimate grad_klinr(std::span<const Trajectory> batch,
                        const EstimatorContext& ctx, Rng& rng);

// REINFORCE plus the diffusion residual ||eps~ - eps_theta||, per dlpo_mode.
GradEstimate grad_dlpo(std::span<const Trajectory> batch,
                       const EstimatorContext& ctx, Rng& rng);

// grad_dlpo with alpha = 0.
GradEstimate grad_onlydl(std::span<const Trajectory> batch,
                         const EstimatorContext& ctx, Rng& rng);

// Dispatches on ctx.cfg.algo.
GradEstimate estimate_gradient(std::span<const Trajectory> batch,
                               const EstimatorContext& ctx, Rng& rng);

}  // namespace dlpo
