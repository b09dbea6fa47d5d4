#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dlpo/trainer.hpp"

namespace dlpo {

// Every tunable of a run. Parsed from `key = value` lines; `#` starts a
// comment. The key registry below is the only list of keys.
struct RunConfig {
  std::uint64_t seed = 0;

  DenoiserDims dims;
  double beta_start = 1e-3;
  double beta_end = 0.6;
  double sigma2_min = 1e-6;
  LossNorm loss_norm = LossNorm::kL2;

  double amplitude = 1.0;
  double obs_noise = 0.01;
  RewardWeights weights;

  std::size_t dataset_size = 2000;
  std::size_t epochs = 200;
  std::size_t pretrain_batch_size = 32;
  double pretrain_lr = 1e-3;

  RLConfig rl;
  std::size_t rounds = 300;
  AdamConfig adam{1e-4};
  std::size_t eval_every = 10;
  std::size_t val_per_class = 8;
  std::uint64_t val_seed = 1000;
  std::uint64_t test_seed = 2000;
  std::size_t eval_per_condition = 32;
  std::size_t rwr_pool = 1024;
  std::size_t compare_seeds = 3;

  // Cross-key checks. Throws ConfigError naming the key.
  void validate() const;
};

struct ConfigKey {
  std::string_view name;
  std::string_view help;
  // Throws ConfigError (without line) on a malformed or out-of-range value.
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

// Throws ConfigError carrying the 1-based line of the offending entry.
RunConfig parse_config(std::string_view text);
// Throws IoError when unreadable, ConfigError otherwise.
RunConfig load_config(const std::filesystem::path& path);

// One `key = value` line per key, registry order.
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// "  key  (default: value)  help" lines for --help.
std::string describe_config_keys();

Experiment make_experiment(const RunConfig& cfg);
PretrainConfig make_pretrain_config(const RunConfig& cfg);
FinetuneConfig make_finetune_config(const RunConfig& cfg);
CheckpointMeta make_meta(const RunConfig& cfg);

// Synthetic training set; depends only on cfg.seed and the condition spec.
std::vector<LabeledWave> make_training_set(const Experiment& exp,
                                           const RunConfig& cfg);

}  // namespace dlpo
