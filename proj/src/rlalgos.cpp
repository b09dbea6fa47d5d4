#include "dlpo/rlalgos.hpp"

#include <cmath>
#include <string>

#include "dlpo/errors.hpp"
#include "dlpo/parallel.hpp"

namespace dlpo {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const char* key,
             const std::pair<std::string_view, E> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (text == name) return value;
  }
  std::string options;
  for (const auto& [name, value] : table) {
    if (!options.empty()) options += ", ";
    options += name;
  }
  throw ConfigError(std::string(key) + " must be one of {" + options +
                    "}, got '" + std::string(text) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E value,
                           const std::pair<std::string_view, E> (&table)[N]) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::pair<std::string_view, Algo> kAlgoNames[] = {
    {"rwr", Algo::kRwr},     {"ddpo", Algo::kDdpo}, {"dpok", Algo::kDpok},
    {"klinr", Algo::kKlinr}, {"dlpo", Algo::kDlpo}, {"onlydl", Algo::kOnlyDl}};
constexpr std::pair<std::string_view, BaselineMode> kBaselineNames[] = {
    {"none", BaselineMode::kNone}, {"moving_average", BaselineMode::kMovingAverage}};
constexpr std::pair<std::string_view, DlpoMode> kDlpoModeNames[] = {
    {"direct_grad", DlpoMode::kDirectGrad},
    {"shaped_reward", DlpoMode::kShapedReward}};
constexpr std::pair<std::string_view, StepSampling> kSamplingNames[] = {
    {"single_uniform", StepSampling::kSingleUniform},
    {"all_steps", StepSampling::kAllSteps}};
constexpr std::pair<std::string_view, DlSource> kSourceNames[] = {
    {"trajectory", DlSource::kTrajectory}, {"dataset", DlSource::kDataset}};

// Weights of the three per-step terms in the step objective.
struct StepWeights {
  double logp = 0.0;
  double kl = 0.0;
  double dl = 0.0;

  bool active() const { return logp != 0.0 || kl != 0.0 || dl != 0.0; }
};

// Tape for one MDP step of one trajectory:
//   w_lp * log p_theta(x_prev | x_t)   (up to its parameter-free constant)
// + w_kl * KL(N(mu_theta) || N(mu_pre))
// + w_dl * ||eps~ - eps_theta(x_t, c, t)||
// Inputs: x_t | onehot(c) | onehot(t) | x_prev | mu_pre | eps~ |
//         mu scale | mu eps scale | 1/(2 sigma2) | w_lp | w_kl | w_dl
class StepObjective {
 public:
  StepObjective(const Denoiser& net, LossNorm norm)
      : n_(net.dims().n),
        onehots_(net.dims().k + net.dims().steps),
        x_prev_(n_ + onehots_),
        mu_pre_(x_prev_ + n_),
        eps_tilde_(mu_pre_ + n_),
        scalars_(eps_tilde_ + n_),
        tape_(net.param_count(), scalars_ + 6) {
    const auto& d = net.dims();
    const ad::Var x = tape_.input(0, n_);
    const ad::Var oc = tape_.input(n_, d.k);
    const ad::Var ot = tape_.input(n_ + d.k, d.steps);
    const ad::Var x_prev = tape_.input(x_prev_, n_);
    const ad::Var mu_pre = tape_.input(mu_pre_, n_);
    const ad::Var eps_tilde = tape_.input(eps_tilde_, n_);
    const ad::Var scale = tape_.input(scalars_, 1);
    const ad::Var eps_scale = tape_.input(scalars_ + 1, 1);
    const ad::Var inv2s = tape_.input(scalars_ + 2, 1);
    const ad::Var w_lp = tape_.input(scalars_ + 3, 1);
    const ad::Var w_kl = tape_.input(scalars_ + 4, 1);
    const ad::Var w_dl = tape_.input(scalars_ + 5, 1);

    const ad::Var eps = net.build(tape_, x, oc, ot);
    const ad::Var mu = tape_.sub(tape_.mul(scale, x), tape_.mul(eps_scale, eps));
    const ad::Var lp = tape_.mul(
        tape_.scale(tape_.sum(tape_.square(tape_.sub(x_prev, mu))), -1.0), inv2s);
    kl_ = tape_.mul(tape_.sum(tape_.square(tape_.sub(mu, mu_pre))), inv2s);
    dl_ = residual_norm(tape_, eps_tilde, eps, norm);
    tape_.set_output(tape_.add(
        tape_.add(tape_.mul(w_lp, lp), tape_.mul(w_kl, kl_)),
        tape_.mul(w_dl, dl_)));
  }

  std::size_t input_count() const { return scalars_ + 6; }

  // Fills `in` for step i of `traj` and returns after accumulating the
  // weighted gradient into `acc`. Reports the KL and residual values.
  void accumulate(const EstimatorContext& ctx, const Trajectory& traj,
                  std::size_t i, const StepWeights& w, std::vector<double>& in,
                  std::span<double> acc, double* kl_out, double* dl_out) {
    const Denoiser& net = ctx.net;
    const Schedule& sched = ctx.sched;
    const int t = sched.steps - static_cast<int>(i);
    const auto& x_t = traj.states[i];

    std::copy(x_t.begin(), x_t.end(), in.begin());
    net.write_onehots(traj.c, t, std::span<double>(in).subspan(n_, onehots_));
    const auto& x_prev = traj.states[i + 1];
    std::copy(x_prev.begin(), x_prev.end(), in.begin() + off(x_prev_));

    const MuCoefficients k = mu_coefficients(t, sched);
    if (w.kl != 0.0) {
      thread_local std::vector<double> eps_pre;
      eps_pre.resize(n_);
      net.predict_eps_into(ctx.pretrained, x_t, traj.c, t, eps_pre);
      for (std::size_t j = 0; j < n_; ++j) {
        in[mu_pre_ + j] = k.scale * x_t[j] - k.eps_scale * eps_pre[j];
      }
    } else {
      std::fill_n(in.begin() + off(mu_pre_), n_, 0.0);
    }
    if (w.dl != 0.0) {
      const std::vector<double> target = implied_noise(x_t, traj.x0(), t, sched);
      std::copy(target.begin(), target.end(), in.begin() + off(eps_tilde_));
    } else {
      std::fill_n(in.begin() + off(eps_tilde_), n_, 0.0);
    }
    in[scalars_] = k.scale;
    in[scalars_ + 1] = k.eps_scale;
    in[scalars_ + 2] = 1.0 / (2.0 * sched.sigma2_at(t));
    in[scalars_ + 3] = w.logp;
    in[scalars_ + 4] = w.kl;
    in[scalars_ + 5] = w.dl;

    tape_.forward(ctx.params, in);
    *kl_out = tape_.value(kl_)[0];
    *dl_out = tape_.value(dl_)[0];
    tape_.backward_into(acc, 1.0);
  }

 private:
  static std::ptrdiff_t off(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

  std::size_t n_;
  std::size_t onehots_;
  std::size_t x_prev_;
  std::size_t mu_pre_;
  std::size_t eps_tilde_;
  std::size_t scalars_;
  ad::Tape tape_;
  ad::Var kl_{};
  ad::Var dl_{};
};

using WeightTable = std::vector<std::vector<StepWeights>>;  // [trajectory][step]

struct PlanTotals {
  std::vector<double> kl;        // per trajectory, sum over weighted steps
  std::vector<double> residual;  // per trajectory, sum over dl-weighted steps
  std::vector<int> residual_count;
};

std::vector<double> run_plan(std::span<const Trajectory> batch,
                             const EstimatorContext& ctx,
                             const WeightTable& weights, PlanTotals* totals) {
  std::vector<double> grad(ctx.net.param_count(), 0.0);
  StepObjective proto(ctx.net, ctx.cfg.loss_norm);
  std::vector<StepObjective> objectives(worker_count(), proto);
  std::vector<std::vector<double>> inputs(
      objectives.size(), std::vector<double>(proto.input_count(), 0.0));
  totals->kl.assign(batch.size(), 0.0);
  totals->residual.assign(batch.size(), 0.0);
  totals->residual_count.assign(batch.size(), 0);

  reduce_blocks(batch.size(), grad,
                [&](std::size_t b, std::size_t worker, std::span<double> acc) {
                  const Trajectory& traj = batch[b];
                  for (std::size_t i = 0; i < weights[b].size(); ++i) {
                    const StepWeights& w = weights[b][i];
                    if (!w.active()) continue;
                    double kl = 0.0;
                    double dl = 0.0;
                    objectives[worker].accumulate(ctx, traj, i, w,
                                                  inputs[worker], acc, &kl, &dl);
                    if (w.kl != 0.0) totals->kl[b] += kl;
                    if (w.dl != 0.0) {
                      totals->residual[b] += dl;
                      totals->residual_count[b] += 1;
                    }
                  }
                });
  return grad;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void check_batch(std::span<const Trajectory> batch, const EstimatorContext& ctx) {
  if (batch.empty()) throw ArgumentError("estimator: empty trajectory batch");
  if (ctx.params.size() != ctx.net.param_count() ||
      ctx.pretrained.size() != ctx.net.param_count()) {
    throw ArgumentError("estimator: parameter vectors have wrong length");
  }
  if (static_cast<std::size_t>(ctx.sched.steps) != ctx.net.dims().steps) {
    throw ArgumentError("estimator: schedule and denoiser disagree on steps");
  }
  for (const Trajectory& traj : batch) {
    if (!traj.reward) throw StateError("estimator: trajectory has no reward");
    if (traj.steps() != ctx.sched.steps ||
        traj.states.size() != static_cast<std::size_t>(ctx.sched.steps) + 1) {
      throw ArgumentError("estimator: trajectory length does not match schedule");
    }
  }
}

double centered(double reward, const EstimatorContext& ctx) {
  return ctx.cfg.baseline == BaselineMode::kMovingAverage ? reward - ctx.baseline
                                                          : reward;
}

std::vector<double> rewards_of(std::span<const Trajectory> batch) {
  std::vector<double> r(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) r[b] = *batch[b].reward;
  return r;
}

// Step index i (0-based from x_T) that carries diffusion step t.
std::size_t step_index(int t, const Schedule& sched) {
  return static_cast<std::size_t>(sched.steps - t);
}

// Fills every step's log-density weight with -(alpha * advantage_b) / B.
WeightTable reinforce_weights(std::span<const double> advantages, double alpha,
                              const Schedule& sched) {
  const double inv_b = 1.0 / static_cast<double>(advantages.size());
  WeightTable w(advantages.size(),
                std::vector<StepWeights>(static_cast<std::size_t>(sched.steps)));
  for (std::size_t b = 0; b < advantages.size(); ++b) {
    const double lp = -(alpha * advantages[b]) * inv_b;
    for (auto& s : w[b]) s.logp = lp;
  }
  return w;
}

// ||eps - eps_theta(q_sample(x0, t, eps), c, t)|| without gradient.
double detached_residual(const Denoiser& net, std::span<const double> params,
                         const LabeledWave& item, const NoiseDraw& draw,
                         const Schedule& sched, LossNorm norm) {
  const std::vector<double> xt = q_sample(item.x0, draw.t, draw.eps, sched);
  const std::vector<double> pred = net.predict_eps(params, xt, item.c, draw.t);
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = draw.eps[i] - pred[i];
    sq += d * d;
  }
  return norm == LossNorm::kL2 ? std::sqrt(sq) : sq;
}

// Residual at the trajectory's own state, under the current parameters.
double trajectory_residual(const EstimatorContext& ctx, const Trajectory& traj,
                           int t) {
  const auto& x_t = traj.state_at(t);
  const std::vector<double> target = implied_noise(x_t, traj.x0(), t, ctx.sched);
  const std::vector<double> pred = ctx.net.predict_eps(ctx.params, x_t, traj.c, t);
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = target[i] - pred[i];
    sq += d * d;
  }
  return ctx.cfg.loss_norm == LossNorm::kL2 ? std::sqrt(sq) : sq;
}

struct DatasetDraws {
  std::vector<LabeledWave> items;
  std::vector<NoiseDraw> draws;
};

DatasetDraws draw_dataset(const EstimatorContext& ctx, std::size_t count,
                          Rng& rng) {
  if (ctx.dataset.empty()) {
    throw ArgumentError("estimator: dl_source = dataset needs a dataset");
  }
  DatasetDraws out;
  out.items.reserve(count);
  const int last = static_cast<int>(ctx.dataset.size()) - 1;
  for (std::size_t b = 0; b < count; ++b) {
    out.items.push_back(ctx.dataset[static_cast<std::size_t>(rng.uniform_int(0, last))]);
  }
  out.draws = draw_noise(count, ctx.net.dims().n, ctx.sched.steps, rng);
  return out;
}

GradEstimate reinforce(std::span<const Trajectory> batch,
                       const EstimatorContext& ctx,
                       std::span<const double> advantages, double alpha) {
  PlanTotals totals;
  GradEstimate out;
  out.grad = run_plan(batch, ctx, reinforce_weights(advantages, alpha, ctx.sched),
                      &totals);
  out.mean_reward = mean(rewards_of(batch));
  out.mean_return = out.mean_reward;
  return out;
}

}  // namespace

Algo parse_algo(std::string_view text) { return parse_enum(text, "algo", kAlgoNames); }
std::string_view to_string(Algo algo) { return enum_name(algo, kAlgoNames); }
BaselineMode parse_baseline(std::string_view text) {
  return parse_enum(text, "baseline", kBaselineNames);
}
std::string_view to_string(BaselineMode mode) { return enum_name(mode, kBaselineNames); }
DlpoMode parse_dlpo_mode(std::string_view text) {
  return parse_enum(text, "dlpo_mode", kDlpoModeNames);
}
std::string_view to_string(DlpoMode mode) { return enum_name(mode, kDlpoModeNames); }
StepSampling parse_step_sampling(std::string_view text) {
  return parse_enum(text, "dlpo_t_sampling", kSamplingNames);
}
std::string_view to_string(StepSampling mode) { return enum_name(mode, kSamplingNames); }
DlSource parse_dl_source(std::string_view text) {
  return parse_enum(text, "dl_source", kSourceNames);
}
std::string_view to_string(DlSource source) { return enum_name(source, kSourceNames); }

void RLConfig::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("alpha must be finite and >= 0");
  if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta must be finite and >= 0");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) {
    throw ConfigError("baseline_decay must be in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
}

GradEstimate grad_rwr(std::span<const Trajectory> batch,
                      const EstimatorContext& ctx, Rng& rng) {
  check_batch(batch, ctx);
  const std::size_t count = batch.size();
  const double inv_b = 1.0 / static_cast<double>(count);
  std::vector<double> adv(count);
  for (std::size_t b = 0; b < count; ++b) adv[b] = centered(*batch[b].reward, ctx);

  GradEstimate out;
  out.mean_reward = mean(rewards_of(batch));
  out.mean_return = out.mean_reward;
  // The surrogate scores the generated x_0 itself, so dl_source is ignored.
  WeightTable w(count,
                std::vector<StepWeights>(static_cast<std::size_t>(ctx.sched.steps)));
  for (std::size_t b = 0; b < count; ++b) {
    const int t = rng.uniform_int(1, ctx.sched.steps);
    w[b][step_index(t, ctx.sched)].dl = adv[b] * inv_b;
  }
  PlanTotals totals;
  out.grad = run_plan(batch, ctx, w, &totals);
  double res = 0.0;
  int n = 0;
  for (std::size_t b = 0; b < count; ++b) {
    res += totals.residual[b];
    n += totals.residual_count[b];
  }
  out.mean_residual = n > 0 ? res / n : 0.0;
  return out;
}

GradEstimate grad_ddpo(std::span<const Trajectory> batch,
                       const EstimatorContext& ctx, Rng& /*rng*/) {
  check_batch(batch, ctx);
  std::vector<double> adv(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) adv[b] = centered(*batch[b].reward, ctx);
  return reinforce(batch, ctx, adv, 1.0);
}

GradEstimate grad_dpok(std::span<const Trajectory> batch,
                       const EstimatorContext& ctx, Rng& /*rng*/) {
  check_batch(batch, ctx);
  const std::size_t count = batch.size();
  const double inv_b = 1.0 / static_cast<double>(count);
  std::vector<double> adv(count);
  for (std::size_t b = 0; b < count; ++b) adv[b] = centered(*batch[b].reward, ctx);

  WeightTable w = reinforce_weights(adv, ctx.cfg.alpha, ctx.sched);
  const double kl_weight = ctx.cfg.beta * inv_b;
  for (auto& row : w) {
    for (auto& s : row) s.kl = kl_weight;
  }
  PlanTotals totals;
  GradEstimate out;
  out.grad = run_plan(batch, ctx, w, &totals);
  out.mean_reward = mean(rewards_of(batch));
  out.mean_return = out.mean_reward;
  out.mean_kl = kl_weight != 0.0 ? mean(totals.kl) : 0.0;
  return out;
}

GradEstimate grad_klinr(std::span<const Trajectory> batch,
                        const EstimatorContext& ctx, Rng& /*rng*/) {
  check_batch(batch, ctx);
  const std::size_t count = batch.size();
  std::vector<double> gap(count);
  parallel_for(count, [&](std::size_t b, std::size_t) {
    gap[b] = traj_logp_diff(batch[b], ctx.net, ctx.params, ctx.pretrained, ctx.sched);
  });
  std::vector<double> ret(count), adv(count);
  for (std::size_t b = 0; b < count; ++b) {
    ret[b] = *batch[b].reward - gap[b];
    adv[b] = centered(ret[b], ctx);
  }
  GradEstimate out = reinforce(batch, ctx, adv, 1.0);
  out.mean_return = mean(ret);
  out.mean_kl = mean(gap);
  return out;
}

GradEstimate grad_dlpo(std::span<const Trajectory> batch,
                       const EstimatorContext& ctx, Rng& rng) {
  check_batch(batch, ctx);
  const RLConfig& cfg = ctx.cfg;
  const Schedule& sched = ctx.sched;
  const std::size_t count = batch.size();
  const std::size_t steps = static_cast<std::size_t>(sched.steps);
  const double inv_b = 1.0 / static_cast<double>(count);
  std::vector<double> adv(count);
  for (std::size_t b = 0; b < count; ++b) adv[b] = centered(*batch[b].reward, ctx);

  // Diffusion steps carrying the residual term for each trajectory.
  std::vector<std::vector<int>> dl_steps(count);
  for (auto& ts : dl_steps) {
    if (cfg.dlpo_t_sampling == StepSampling::kSingleUniform) {
      ts.push_back(rng.uniform_int(1, sched.steps));
    } else {
      for (int t = sched.steps; t >= 1; --t) ts.push_back(t);
    }
  }
  const double per_step = cfg.dlpo_t_sampling == StepSampling::kSingleUniform
                              ? 1.0
                              : 1.0 / static_cast<double>(steps);

  GradEstimate out;
  out.mean_reward = mean(rewards_of(batch));
  out.mean_return = out.mean_reward;

  if (cfg.dlpo_mode == DlpoMode::kShapedReward) {
    // Per-trajectory residual d_b, detached, folded into the REINFORCE weight.
    std::vector<double> d(count, 0.0);
    if (cfg.dl_source == DlSource::kDataset) {
      const DatasetDraws data = draw_dataset(ctx, count, rng);
      parallel_for(count, [&](std::size_t b, std::size_t) {
        d[b] = detached_residual(ctx.net, ctx.params, data.items[b],
                                 data.draws[b], sched, cfg.loss_norm);
      });
    } else {
      parallel_for(count, [&](std::size_t b, std::size_t) {
        double acc = 0.0;
        for (const int t : dl_steps[b]) acc += trajectory_residual(ctx, batch[b], t);
        d[b] = acc * per_step;
      });
    }
    std::vector<double> ret(count), shaped(count);
    for (std::size_t b = 0; b < count; ++b) {
      ret[b] = cfg.alpha * *batch[b].reward - cfg.beta * d[b];
      shaped[b] = centered(ret[b], ctx);
    }
    out.mean_return = mean(ret);
    PlanTotals totals;
    out.grad = run_plan(batch, ctx, reinforce_weights(shaped, 1.0, sched), &totals);
    out.mean_residual = mean(d);
    return out;
  }

  WeightTable w = reinforce_weights(adv, cfg.alpha, sched);
  if (cfg.dl_source == DlSource::kTrajectory) {
    const double dl_weight = cfg.beta * inv_b * per_step;
    for (std::size_t b = 0; b < count; ++b) {
      for (const int t : dl_steps[b]) w[b][step_index(t, sched)].dl = dl_weight;
    }
  }
  PlanTotals totals;
  out.grad = run_plan(batch, ctx, w, &totals);

  if (cfg.dl_source == DlSource::kDataset) {
    const DatasetDraws data = draw_dataset(ctx, count, rng);
    const LossAndGrad dl = ddpm_loss(ctx.net, ctx.params, data.items, data.draws,
                                     sched, cfg.loss_norm);
    for (std::size_t j = 0; j < out.grad.size(); ++j) out.grad[j] += cfg.beta * dl.grad[j];
    out.mean_residual = dl.value;
  } else {
    double res = 0.0;
    int n = 0;
    for (std::size_t b = 0; b < count; ++b) {
      res += totals.residual[b];
      n += totals.residual_count[b];
    }
    out.mean_residual = n > 0 ? res / n : 0.0;
  }
  return out;
}

GradEstimate grad_onlydl(std::span<const Trajectory> batch,
                         const EstimatorContext& ctx, Rng& rng) {
  RLConfig cfg = ctx.cfg;
  cfg.alpha = 0.0;
  EstimatorContext inner{ctx.net,  ctx.params,   ctx.pretrained, ctx.sched,
                         cfg,      ctx.baseline, ctx.dataset};
  return grad_dlpo(batch, inner, rng);
}

GradEstimate estimate_gradient(std::span<const Trajectory> batch,
                               const EstimatorContext& ctx, Rng& rng) {
  switch (ctx.cfg.algo) {
    case Algo::kRwr: return grad_rwr(batch, ctx, rng);
    case Algo::kDdpo: return grad_ddpo(batch, ctx, rng);
    case Algo::kDpok: return grad_dpok(batch, ctx, rng);
    case Algo::kKlinr: return grad_klinr(batch, ctx, rng);
    case Algo::kDlpo: return grad_dlpo(batch, ctx, rng);
    case Algo::kOnlyDl: return grad_onlydl(batch, ctx, rng);
  }
  throw ConfigError("unknown algorithm");
}

}  // namespace dlpo
