#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dlpo/checkpoint.hpp"
#include "dlpo/ddpm_loss.hpp"
#include "dlpo/denoiser.hpp"
#include "dlpo/diffusion.hpp"
#include "dlpo/policy.hpp"
#include "dlpo/rewards.hpp"
#include "dlpo/rlalgos.hpp"

namespace dlpo {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct CheckpointRecord {
  double score = 0.0;
  std::filesystem::path path;  // empty when checkpoints are kept in memory only
  std::size_t step = 0;
};

inline constexpr std::size_t kTopK = 3;

struct TrainState {
  std::vector<double> params;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::size_t step = 0;  // optimizer steps taken
  double reward_baseline = 0.0;
  std::uint64_t rng_seed = 0;
  std::vector<CheckpointRecord> topk;  // descending by score, at most kTopK

  static TrainState fresh(std::vector<double> params, std::uint64_t seed);
};

// Adam with bias correction; increments state.step.
// Throws ArgumentError on a length mismatch or lr <= 0.
void adam_step(TrainState& state, std::span<const double> grad,
               const AdamConfig& cfg);
TrainState adam_update(TrainState state, std::span<const double> grad,
                       const AdamConfig& cfg);

// Unevaluated fields are NaN and print as empty CSV cells.
struct MetricsRow {
  std::size_t step = 0;
  double reward_mos;
  double heldout;
  double recovery_err;
  double diff_loss;
  double kl;
  std::string algo;
  std::uint64_t seed = 0;

  MetricsRow();
};

std::string metrics_header();
std::string to_csv(const MetricsRow& row);
std::string metrics_csv(std::span<const MetricsRow> rows);

// Model, schedule and scorer shared by every stage of a run.
struct Experiment {
  Experiment(const DenoiserDims& dims, Schedule sched, ConditionSpec spec,
             RewardWeights weights, LossNorm norm);

  Denoiser net;
  Schedule sched;
  ConditionSpec spec;
  RewardWeights weights;
  LossNorm norm;
};

// Per-trajectory scores under the experiment's proxies.
struct Scores {
  double reward_mos = 0.0;
  double heldout = 0.0;
  bool recovered = false;
};
Scores score(const Experiment& exp, const Trajectory& traj);

// Samples n_per_condition trajectories for each condition; trajectory j of
// class c uses stream (seed, c, j). Throws ArgumentError when
// n_per_condition is 0 or a condition is out of range.
MetricsRow evaluate(const Experiment& exp, std::span<const double> params,
                    std::span<const int> conditions, std::size_t n_per_condition,
                    std::uint64_t seed);

std::vector<int> all_classes(const Experiment& exp);

struct PretrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  AdamConfig adam{1e-3};
  std::uint64_t seed = 0;
};

struct PretrainResult {
  TrainState state;
  std::vector<MetricsRow> log;  // one row per epoch; diff_loss = epoch mean
};

// Minibatch Adam on the DDPM loss from `init`. Throws ArgumentError on an
// empty dataset and ConfigError on a zero batch size.
PretrainResult pretrain(const Experiment& exp, const PretrainConfig& cfg,
                        std::span<const LabeledWave> dataset,
                        std::vector<double> init);

struct FinetuneConfig {
  RLConfig rl;
  std::size_t rounds = 300;
  AdamConfig adam{1e-4};
  std::size_t eval_every = 10;
  std::size_t val_per_class = 8;
  std::uint64_t val_seed = 1000;
  std::size_t rwr_pool = 1024;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // top-k checkpoints written here when set
  CheckpointMeta meta;
};

struct BestCheckpoint {
  double score = 0.0;
  std::size_t step = 0;
  std::vector<double> params;
};

struct FinetuneResult {
  TrainState state;
  std::vector<MetricsRow> train_log;  // batch statistics, one row per round
  std::vector<MetricsRow> val_log;    // validation set: round 0, every eval_every, last
  std::vector<BestCheckpoint> best;   // mirrors state.topk
};

// One sampling round and one optimizer step per round. `pretrained` is the
// frozen reference for DPOK/KLinR and the RWR sample pool. `dataset` is read
// only when rl.dl_source is dataset. rounds = 0 returns `state` unchanged.
FinetuneResult finetune(const Experiment& exp, const FinetuneConfig& cfg,
                        TrainState state, std::span<const double> pretrained,
                        std::span<const LabeledWave> dataset = {});

// Inserts into `topk` (descending, at most kTopK). A candidate displaces only
// entries with a strictly lower score. Returns the records that fell off,
// which is the candidate itself when it did not qualify.
std::vector<CheckpointRecord> offer_checkpoint(std::vector<CheckpointRecord>& topk,
                                               const CheckpointRecord& candidate);

}  // namespace dlpo
