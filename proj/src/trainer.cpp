#include "dlpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dlpo/errors.hpp"
#include "dlpo/parallel.hpp"

namespace dlpo {

namespace {

// First key of every Rng::stream derived from a run seed.
enum StreamTag : std::uint64_t {
  kTagShuffle = 1,
  kTagNoise = 2,
  kTagRound = 3,
  kTagSample = 4,
  kTagPool = 5,
  kTagEstimator = 6,
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void put_cell(std::ostringstream& out, double v) {
  if (std::isnan(v)) return;
  out << v;
}

// Mean L2 residual over every step, using the stored predictions.
double mean_cached_residual(const Trajectory& traj, const Schedule& sched) {
  double acc = 0.0;
  for (int t = 1; t <= traj.steps(); ++t) acc += cached_residual(traj, t, sched);
  return acc / traj.steps();
}

// Same quantity with predictions recomputed under `params`.
double mean_residual_under(const Experiment& exp, std::span<const double> params,
                           const Trajectory& traj) {
  thread_local std::vector<double> pred;
  pred.resize(exp.net.dims().n);
  double acc = 0.0;
  for (int t = 1; t <= traj.steps(); ++t) {
    const auto& x_t = traj.state_at(t);
    const std::vector<double> target = implied_noise(x_t, traj.x0(), t, exp.sched);
    exp.net.predict_eps_into(params, x_t, traj.c, t, pred);
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = target[i] - pred[i];
      sq += d * d;
    }
    acc += std::sqrt(sq);
  }
  return acc / traj.steps();
}

template <typename F>
double mean_of(std::size_t count, F&& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) s += f(i);
  return s / static_cast<double>(count);
}

}  // namespace

TrainState TrainState::fresh(std::vector<double> params, std::uint64_t seed) {
  TrainState s;
  s.adam_m.assign(params.size(), 0.0);
  s.adam_v.assign(params.size(), 0.0);
  s.params = std::move(params);
  s.rng_seed = seed;
  return s;
}

void adam_step(TrainState& state, std::span<const double> grad,
               const AdamConfig& cfg) {
  const std::size_t n = state.params.size();
  if (grad.size() != n || state.adam_m.size() != n || state.adam_v.size() != n) {
    throw ArgumentError("adam_update: gradient and state lengths differ");
  }
  if (!(cfg.lr > 0.0)) throw ArgumentError("adam_update: lr must be > 0");
  state.step += 1;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, step);
  const double c2 = 1.0 - std::pow(cfg.beta2, step);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    state.adam_m[i] = cfg.beta1 * state.adam_m[i] + (1.0 - cfg.beta1) * g;
    state.adam_v[i] = cfg.beta2 * state.adam_v[i] + (1.0 - cfg.beta2) * (g * g);
    const double m_hat = state.adam_m[i] / c1;
    const double v_hat = state.adam_v[i] / c2;
    state.params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

TrainState adam_update(TrainState state, std::span<const double> grad,
                       const AdamConfig& cfg) {
  adam_step(state, grad, cfg);
  return state;
}

MetricsRow::MetricsRow()
    : reward_mos(kNaN), heldout(kNaN), recovery_err(kNaN), diff_loss(kNaN), kl(kNaN) {}

std::string metrics_header() {
  return "step,reward_mos,heldout,recovery_err,diff_loss,kl,algo,seed";
}

std::string to_csv(const MetricsRow& row) {
  std::ostringstream out;
  out.precision(17);
  out << row.step << ',';
  put_cell(out, row.reward_mos);
  out << ',';
  put_cell(out, row.heldout);
  out << ',';
  put_cell(out, row.recovery_err);
  out << ',';
  put_cell(out, row.diff_loss);
  out << ',';
  put_cell(out, row.kl);
  out << ',' << row.algo << ',' << row.seed;
  return out.str();
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = metrics_header() + "\n";
  for (const MetricsRow& row : rows) out += to_csv(row) + "\n";
  return out;
}

Experiment::Experiment(const DenoiserDims& dims, Schedule sched_in,
                       ConditionSpec spec_in, RewardWeights weights_in,
                       LossNorm norm_in)
    : net(dims),
      sched(std::move(sched_in)),
      spec(std::move(spec_in)),
      weights(weights_in),
      norm(norm_in) {
  if (static_cast<std::size_t>(sched.steps) != dims.steps) {
    throw ConfigError("schedule has " + std::to_string(sched.steps) +
                      " steps but the denoiser expects " + std::to_string(dims.steps));
  }
  if (spec.n != dims.n || spec.k() != dims.k) {
    throw ConfigError("condition spec does not match the denoiser's n and k");
  }
  spec.validate();
}

Scores score(const Experiment& exp, const Trajectory& traj) {
  Scores s;
  s.reward_mos = reward_mos(traj.x0(), traj.c, exp.spec, exp.weights);
  s.heldout = reward_heldout(traj.x0(), traj.c, exp.spec, exp.weights);
  s.recovered = condition_recovery(traj.x0(), exp.spec) == traj.c;
  return s;
}

std::vector<int> all_classes(const Experiment& exp) {
  std::vector<int> out(exp.spec.k());
  std::iota(out.begin(), out.end(), 0);
  return out;
}

MetricsRow evaluate(const Experiment& exp, std::span<const double> params,
                    std::span<const int> conditions, std::size_t n_per_condition,
                    std::uint64_t seed) {
  if (n_per_condition == 0) throw ArgumentError("evaluate: n_per_condition must be >= 1");
  if (conditions.empty()) throw ArgumentError("evaluate: empty condition set");
  for (const int c : conditions) {
    if (c < 0 || static_cast<std::size_t>(c) >= exp.spec.k()) {
      throw ArgumentError("evaluate: condition " + std::to_string(c) + " out of range");
    }
  }
  const std::size_t total = conditions.size() * n_per_condition;
  std::vector<Scores> scores(total);
  std::vector<double> residual(total);
  parallel_for(total, [&](std::size_t i, std::size_t) {
    const int c = conditions[i / n_per_condition];
    const std::size_t j = i % n_per_condition;
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(c), j);
    const Trajectory traj = sample_trajectory(exp.net, params, c, exp.sched, rng);
    scores[i] = score(exp, traj);
    residual[i] = mean_cached_residual(traj, exp.sched);
  });
  MetricsRow row;
  row.reward_mos = mean_of(total, [&](std::size_t i) { return scores[i].reward_mos; });
  row.heldout = mean_of(total, [&](std::size_t i) { return scores[i].heldout; });
  row.recovery_err =
      mean_of(total, [&](std::size_t i) { return scores[i].recovered ? 0.0 : 1.0; });
  row.diff_loss = mean_of(total, [&](std::size_t i) { return residual[i]; });
  row.seed = seed;
  return row;
}

PretrainResult pretrain(const Experiment& exp, const PretrainConfig& cfg,
                        std::span<const LabeledWave> dataset,
                        std::vector<double> init) {
  if (dataset.empty()) throw ArgumentError("pretrain: empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("pretrain_batch_size must be >= 1");
  if (init.size() != exp.net.param_count()) {
    throw ArgumentError("pretrain: initial parameters have wrong length");
  }
  PretrainResult result{TrainState::fresh(std::move(init), cfg.seed), {}};
  TrainState& state = result.state;

  std::vector<std::size_t> order(dataset.size());
  std::vector<LabeledWave> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = Rng::stream(cfg.seed, kTagShuffle, epoch);
    std::shuffle(order.begin(), order.end(), shuffle.engine());

    double loss_sum = 0.0;
    for (std::size_t start = 0, mb = 0; start < order.size();
         start += cfg.batch_size, ++mb) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
      Rng noise = Rng::stream(cfg.seed, kTagNoise, epoch, mb);
      const LossAndGrad lg = ddpm_loss(exp.net, state.params, batch, noise,
                                       exp.sched, exp.norm);
      adam_step(state, lg.grad, cfg.adam);
      loss_sum += lg.value * static_cast<double>(end - start);
    }
    MetricsRow row;
    row.step = epoch;
    row.diff_loss = loss_sum / static_cast<double>(order.size());
    row.algo = "pretrain";
    row.seed = cfg.seed;
    result.log.push_back(std::move(row));
  }
  return result;
}

std::vector<CheckpointRecord> offer_checkpoint(std::vector<CheckpointRecord>& topk,
                                               const CheckpointRecord& candidate) {
  auto pos = std::find_if(topk.begin(), topk.end(), [&](const CheckpointRecord& r) {
    return candidate.score > r.score;
  });
  topk.insert(pos, candidate);
  std::vector<CheckpointRecord> evicted;
  while (topk.size() > kTopK) {
    evicted.push_back(topk.back());
    topk.pop_back();
  }
  return evicted;
}

FinetuneResult finetune(const Experiment& exp, const FinetuneConfig& cfg,
                        TrainState state, std::span<const double> pretrained,
                        std::span<const LabeledWave> dataset) {
  cfg.rl.validate();
  if (cfg.rl.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (cfg.eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (pretrained.size() != exp.net.param_count() ||
      state.params.size() != exp.net.param_count()) {
    throw ArgumentError("finetune: parameter vectors have wrong length");
  }
  FinetuneResult result;
  if (cfg.rounds == 0) {
    result.state = std::move(state);
    return result;
  }
  if (cfg.rl.algo == Algo::kRwr && cfg.rwr_pool == 0) {
    throw ConfigError("rwr_pool must be >= 1");
  }

  const std::string algo(to_string(cfg.rl.algo));
  const std::vector<int> classes = all_classes(exp);
  const int k = static_cast<int>(classes.size());
  const std::size_t batch_size = cfg.rl.batch_size;

  auto validate = [&](std::size_t round) {
    MetricsRow row = evaluate(exp, state.params, classes, cfg.val_per_class, cfg.val_seed);
    row.step = round;
    row.algo = algo;
    row.seed = cfg.seed;
    result.val_log.push_back(row);
    return row;
  };

  const MetricsRow initial = validate(0);
  // Start the baseline at the pretrained model's expected return.
  state.reward_baseline = initial.reward_mos;
  if (cfg.rl.dlpo_mode == DlpoMode::kShapedReward &&
      (cfg.rl.algo == Algo::kDlpo || cfg.rl.algo == Algo::kOnlyDl)) {
    const double alpha = cfg.rl.algo == Algo::kOnlyDl ? 0.0 : cfg.rl.alpha;
    state.reward_baseline = alpha * initial.reward_mos - cfg.rl.beta * initial.diff_loss;
  }

  // Static pool of pretrained-model samples for RWR, scored once.
  std::vector<Trajectory> pool;
  if (cfg.rl.algo == Algo::kRwr) {
    pool.resize(cfg.rwr_pool);
    parallel_for(pool.size(), [&](std::size_t i, std::size_t) {
      Rng rng = Rng::stream(cfg.seed, kTagPool, i);
      const int c = static_cast<int>(i % static_cast<std::size_t>(k));
      pool[i] = sample_trajectory(exp.net, pretrained, c, exp.sched, rng);
      pool[i].reward = reward_mos(pool[i].x0(), c, exp.spec, exp.weights);
    });
  }

  std::vector<Trajectory> batch(batch_size);
  std::vector<Scores> scores(batch_size);
  std::vector<double> residual(batch_size);
  std::vector<double> gap(batch_size);
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    Rng round_rng = Rng::stream(cfg.seed, kTagRound, round);
    if (cfg.rl.algo == Algo::kRwr) {
      const int last = static_cast<int>(pool.size()) - 1;
      for (auto& traj : batch) {
        traj = pool[static_cast<std::size_t>(round_rng.uniform_int(0, last))];
      }
    } else {
      std::vector<int> conds(batch_size);
      for (auto& c : conds) c = round_rng.uniform_int(0, k - 1);
      parallel_for(batch_size, [&](std::size_t b, std::size_t) {
        Rng rng = Rng::stream(cfg.seed, kTagSample, round, b);
        batch[b] = sample_trajectory(exp.net, state.params, conds[b], exp.sched, rng);
      });
    }
    parallel_for(batch_size, [&](std::size_t b, std::size_t) {
      scores[b] = score(exp, batch[b]);
      batch[b].reward = scores[b].reward_mos;
      residual[b] = cfg.rl.algo == Algo::kRwr
                        ? mean_residual_under(exp, state.params, batch[b])
                        : mean_cached_residual(batch[b], exp.sched);
      gap[b] = traj_logp_diff(batch[b], exp.net, state.params, pretrained, exp.sched);
    });

    Rng est_rng = Rng::stream(cfg.seed, kTagEstimator, round);
    const EstimatorContext ctx{exp.net, state.params,         pretrained, exp.sched,
                               cfg.rl,  state.reward_baseline, dataset};
    const GradEstimate est = estimate_gradient(batch, ctx, est_rng);
    adam_step(state, est.grad, cfg.adam);
    if (cfg.rl.baseline == BaselineMode::kMovingAverage) {
      state.reward_baseline = cfg.rl.baseline_decay * state.reward_baseline +
                              (1.0 - cfg.rl.baseline_decay) * est.mean_return;
    }

    MetricsRow row;
    row.step = round;
    row.reward_mos = mean_of(batch_size, [&](std::size_t b) { return scores[b].reward_mos; });
    row.heldout = mean_of(batch_size, [&](std::size_t b) { return scores[b].heldout; });
    row.recovery_err =
        mean_of(batch_size, [&](std::size_t b) { return scores[b].recovered ? 0.0 : 1.0; });
    row.diff_loss = mean_of(batch_size, [&](std::size_t b) { return residual[b]; });
    row.kl = mean_of(batch_size, [&](std::size_t b) { return gap[b]; });
    row.algo = algo;
    row.seed = cfg.seed;
    result.train_log.push_back(std::move(row));

    if (round % cfg.eval_every != 0 && round != cfg.rounds) continue;
    const MetricsRow val = validate(round);
    CheckpointRecord candidate{val.reward_mos, {}, round};
    if (!cfg.out_dir.empty()) {
      candidate.path = cfg.out_dir / ("ckpt_step" + std::to_string(round) + ".bin");
    }
    const std::vector<CheckpointRecord> evicted = offer_checkpoint(state.topk, candidate);
    const bool kept = std::none_of(evicted.begin(), evicted.end(),
                                   [&](const CheckpointRecord& r) { return r.step == round; });
    if (kept) {
      if (!candidate.path.empty()) save_checkpoint(candidate.path, state.params, cfg.meta);
      result.best.push_back({candidate.score, round, state.params});
    }
    for (const CheckpointRecord& r : evicted) {
      if (r.step == round) continue;
      std::erase_if(result.best, [&](const BestCheckpoint& b) { return b.step == r.step; });
      if (!r.path.empty()) {
        std::error_code ec;
        std::filesystem::remove(r.path, ec);
        std::filesystem::remove(meta_path(r.path), ec);
      }
    }
  }
  std::stable_sort(result.best.begin(), result.best.end(),
                   [](const BestCheckpoint& a, const BestCheckpoint& b) {
                     return a.score > b.score;
                   });
  result.state = std::move(state);
  return result;
}

}  // namespace dlpo
