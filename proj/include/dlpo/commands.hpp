#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dlpo/config.hpp"

namespace dlpo {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitCorrupt = 4;

struct CommandOptions {
  std::optional<std::filesystem::path> config;  // defaults when absent
  std::filesystem::path ckpt;
  std::optional<std::string> algo;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
};

// Each returns an exit code; failures print one `error: ...` line to `err`.
int cmd_pretrain(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_finetune(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_eval(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_compare(const CommandOptions& opts, std::ostream& log, std::ostream& err);

struct CompareRun {
  Algo algo;
  std::uint64_t seed;
  std::size_t best_step;  // 0 when no validation pass ran
  MetricsRow test;
};

struct TableRow {
  std::string algo;
  double reward_mos = 0.0;
  double heldout = 0.0;
  double recovery_err = 0.0;
};

struct CompareResult {
  TableRow baseline;
  std::vector<TableRow> table;  // one per algorithm, kAllAlgos order
  std::vector<CompareRun> runs;
  std::vector<std::vector<MetricsRow>> curves;  // validation rows per algorithm
};

// Fine-tunes every algorithm in `algos` from `pretrained` for cfg.compare_seeds
// seeds (cfg.seed, cfg.seed + 1, ...), then scores each run's best validation
// checkpoint on the test set (all classes x eval_per_condition, test_seed).
CompareResult run_compare(const RunConfig& cfg, std::span<const double> pretrained,
                          std::span<const Algo> algos, std::ostream* progress);

std::string table_csv(const CompareResult& result);

}  // namespace dlpo
