#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "dlpo/checkpoint.hpp"
#include "dlpo/errors.hpp"
#include "dlpo/trainer.hpp"
#include "test_util.hpp"

namespace dlpo {
namespace {

namespace fs = std::filesystem;

Experiment tiny_experiment(std::size_t k = 3) {
  DenoiserDims d = testing::small_dims(32, k, 4);
  d.h1 = 16;
  d.h2 = 16;
  return Experiment(d, make_schedule(4, 0.02, 0.5, 1e-6), ConditionSpec::with_classes(32, k),
                    RewardWeights{}, LossNorm::kL2);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dlpo_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Adam, ZeroGradientKeepsParams) {
  TrainState s = TrainState::fresh({1.0, -2.0}, 0);
  const std::vector<double> zero(2, 0.0);
  const TrainState next = adam_update(s, zero, AdamConfig{0.1});
  EXPECT_EQ(next.params, s.params);
  EXPECT_EQ(next.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  TrainState s = TrainState::fresh({0.5, 0.5, 0.5}, 0);
  const std::vector<double> g{3.0, -1e-3, 40.0};
  const AdamConfig cfg{0.01};
  adam_step(s, g, cfg);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double expected = 0.5 - cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
    EXPECT_NEAR(s.params[i], expected, 1e-15);
    EXPECT_NEAR(std::abs(s.params[i] - 0.5), cfg.lr, 1e-6);
  }
}

TEST(Adam, MinimizesQuadratic) {
  TrainState s = TrainState::fresh({1.0}, 0);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> g{2.0 * s.params[0]};
    adam_step(s, g, AdamConfig{0.1});
  }
  EXPECT_LT(std::abs(s.params[0]), 0.05);
  EXPECT_EQ(s.step, 100u);
}

TEST(Adam, RejectsBadArguments) {
  TrainState s = TrainState::fresh({1.0, 2.0}, 0);
  const std::vector<double> short_grad{1.0};
  EXPECT_THROW(adam_step(s, short_grad, AdamConfig{}), ArgumentError);
  const std::vector<double> g{1.0, 1.0};
  EXPECT_THROW(adam_step(s, g, AdamConfig{0.0}), ArgumentError);
}

TEST(Metrics, CsvFormat) {
  EXPECT_EQ(metrics_header(), "step,reward_mos,heldout,recovery_err,diff_loss,kl,algo,seed");
  MetricsRow row;
  row.step = 3;
  row.reward_mos = 2.5;
  row.algo = "dlpo";
  row.seed = 7;
  EXPECT_EQ(to_csv(row), "3,2.5,,,,,dlpo,7");
  const std::vector<MetricsRow> rows{row, row};
  const std::string csv = metrics_csv(rows);
  EXPECT_EQ(csv, metrics_header() + "\n3,2.5,,,,,dlpo,7\n3,2.5,,,,,dlpo,7\n");
}

TEST(TopK, KeepsThreeBestDescending) {
  std::vector<CheckpointRecord> topk;
  std::vector<std::size_t> evicted;
  const double scores[] = {1.0, 3.0, 2.0, 0.5, 4.0, 2.5};
  for (std::size_t i = 0; i < std::size(scores); ++i) {
    for (const auto& r : offer_checkpoint(topk, {scores[i], {}, i})) evicted.push_back(r.step);
    ASSERT_LE(topk.size(), kTopK);
    for (std::size_t j = 1; j < topk.size(); ++j) EXPECT_GE(topk[j - 1].score, topk[j].score);
  }
  ASSERT_EQ(topk.size(), 3u);
  EXPECT_EQ(topk[0].step, 4u);
  EXPECT_EQ(topk[1].step, 1u);
  EXPECT_EQ(topk[2].step, 5u);
  EXPECT_EQ(evicted, (std::vector<std::size_t>{3, 0, 2}));
}

TEST(TopK, TiesKeepEarlierEntries) {
  std::vector<CheckpointRecord> topk;
  for (std::size_t i = 0; i < 3; ++i) offer_checkpoint(topk, {1.0, {}, i});
  const auto out = offer_checkpoint(topk, {1.0, {}, 9});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].step, 9u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const fs::path dir = scratch_dir("roundtrip");
  Rng rng(1);
  std::vector<double> p = testing::normal_vector(100, rng);
  p.push_back(-0.0);
  p.push_back(std::numeric_limits<double>::denorm_min());
  CheckpointMeta meta;
  meta.config_hash = "0123456789abcdef";
  save_checkpoint(dir / "a.bin", p, meta);
  const std::vector<double> q = load_checkpoint(dir / "a.bin", p.size());
  ASSERT_EQ(q.size(), p.size());
  EXPECT_EQ(std::memcmp(p.data(), q.data(), p.size() * sizeof(double)), 0);
  EXPECT_TRUE(fs::exists(meta_path(dir / "a.bin")));
  std::ifstream meta_in(meta_path(dir / "a.bin"));
  std::stringstream text;
  text << meta_in.rdbuf();
  EXPECT_NE(text.str().find("0123456789abcdef"), std::string::npos);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const fs::path dir = scratch_dir("corrupt");
  const std::vector<double> p{1.0, 2.0, 3.0};
  save_checkpoint(dir / "c.bin", p, CheckpointMeta{});
  std::string bytes;
  {
    std::ifstream in(dir / "c.bin", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir / name, std::ios::binary) << data;
    return dir / name;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("m.bin", bad_magic)), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(load_checkpoint(write("v.bin", bad_version)), FormatError);
  EXPECT_THROW(load_checkpoint(write("t.bin", bytes.substr(0, bytes.size() - 3))), FormatError);
  EXPECT_THROW(load_checkpoint(write("x.bin", bytes + "z")), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "c.bin", 4), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST(Checkpoint, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(Evaluate, DeterministicAndValidated) {
  const Experiment exp = tiny_experiment();
  const std::vector<double> p = exp.net.init(3);
  const std::vector<int> cls = all_classes(exp);
  const MetricsRow a = evaluate(exp, p, cls, 4, 11);
  const MetricsRow b = evaluate(exp, p, cls, 4, 11);
  EXPECT_EQ(to_csv(a), to_csv(b));
  EXPECT_GE(a.reward_mos, 1.0);
  EXPECT_LE(a.reward_mos, 5.0);
  EXPECT_TRUE(std::isfinite(a.diff_loss));
  EXPECT_THROW(evaluate(exp, p, cls, 0, 11), ArgumentError);
  const std::vector<int> bad{5};
  EXPECT_THROW(evaluate(exp, p, bad, 1, 11), ArgumentError);
}

TEST(Evaluate, RandomNetworksRecoverAtChance) {
  const Experiment exp(DenoiserDims{}, make_schedule(10, 1e-3, 0.6, 1e-6), ConditionSpec{}, RewardWeights{},
                       LossNorm::kL2);
  const std::vector<int> cls = all_classes(exp);
  double err = 0.0;
  const int nets = 8;
  for (int i = 0; i < nets; ++i) {
    err += evaluate(exp, exp.net.init(static_cast<std::uint64_t>(100 + i)), cls, 32,
                    static_cast<std::uint64_t>(i))
               .recovery_err;
  }
  EXPECT_NEAR(err / nets, 0.875, 0.05);
}

TEST(Pretrain, ZeroEpochsReturnsInit) {
  const Experiment exp = tiny_experiment();
  Rng rng(1);
  const std::vector<LabeledWave> data = make_dataset(exp.spec, 20, rng);
  PretrainConfig cfg;
  cfg.epochs = 0;
  const std::vector<double> init = exp.net.init(5);
  const PretrainResult r = pretrain(exp, cfg, data, init);
  EXPECT_EQ(r.state.params, init);
  EXPECT_TRUE(r.log.empty());
}

TEST(Pretrain, DeterministicAndLossFalls) {
  const Experiment exp = tiny_experiment();
  Rng rng(2);
  const std::vector<LabeledWave> data = make_dataset(exp.spec, 64, rng);
  PretrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.seed = 4;
  const PretrainResult a = pretrain(exp, cfg, data, exp.net.init(5));
  const PretrainResult b = pretrain(exp, cfg, data, exp.net.init(5));
  EXPECT_EQ(a.state.params, b.state.params);
  EXPECT_EQ(metrics_csv(a.log), metrics_csv(b.log));
  ASSERT_EQ(a.log.size(), 30u);
  EXPECT_LT(a.log.back().diff_loss, a.log.front().diff_loss);
  EXPECT_EQ(a.log.front().algo, "pretrain");
}

TEST(Pretrain, RejectsEmptyDatasetAndZeroBatch) {
  const Experiment exp = tiny_experiment();
  const std::vector<LabeledWave> empty;
  EXPECT_THROW(pretrain(exp, PretrainConfig{}, empty, exp.net.init(1)), ArgumentError);
  Rng rng(3);
  const std::vector<LabeledWave> data = make_dataset(exp.spec, 4, rng);
  PretrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(pretrain(exp, cfg, data, exp.net.init(1)), ConfigError);
}

FinetuneConfig small_finetune(Algo algo, std::size_t rounds) {
  FinetuneConfig cfg;
  cfg.rl.algo = algo;
  cfg.rl.batch_size = 4;
  cfg.rounds = rounds;
  cfg.eval_every = 2;
  cfg.val_per_class = 2;
  cfg.rwr_pool = 12;
  cfg.seed = 9;
  return cfg;
}

TEST(Finetune, ZeroRoundsReturnsStateUnchanged) {
  const Experiment exp = tiny_experiment();
  const std::vector<double> p = exp.net.init(6);
  const TrainState s = TrainState::fresh(p, 1);
  const FinetuneResult r = finetune(exp, small_finetune(Algo::kDlpo, 0), s, p);
  EXPECT_EQ(r.state.params, p);
  EXPECT_EQ(r.state.step, 0u);
  EXPECT_TRUE(r.train_log.empty());
}

TEST(Finetune, EveryAlgorithmIsDeterministic) {
  const Experiment exp = tiny_experiment();
  const std::vector<double> p = exp.net.init(7);
  for (const Algo algo : kAllAlgos) {
    const FinetuneConfig cfg = small_finetune(algo, 5);
    const FinetuneResult a = finetune(exp, cfg, TrainState::fresh(p, 1), p);
    const FinetuneResult b = finetune(exp, cfg, TrainState::fresh(p, 1), p);
    EXPECT_EQ(a.state.params, b.state.params) << to_string(algo);
    EXPECT_EQ(metrics_csv(a.train_log), metrics_csv(b.train_log));
    EXPECT_EQ(metrics_csv(a.val_log), metrics_csv(b.val_log));
    EXPECT_EQ(a.state.step, 5u);
    EXPECT_EQ(a.train_log.size(), 5u);
    // Validation at round 0, every eval_every rounds, and the last round.
    ASSERT_EQ(a.val_log.size(), 4u);
    EXPECT_EQ(a.val_log.front().step, 0u);
    EXPECT_EQ(a.val_log.back().step, 5u);
    EXPECT_NE(a.state.params, p);
  }
}

TEST(Finetune, TopKMatchesBestValidationRows) {
  const Experiment exp = tiny_experiment();
  const std::vector<double> p = exp.net.init(8);
  FinetuneConfig cfg = small_finetune(Algo::kDdpo, 12);
  cfg.eval_every = 1;
  cfg.out_dir = scratch_dir("topk");
  const FinetuneResult r = finetune(exp, cfg, TrainState::fresh(p, 2), p);
  std::vector<double> scores;
  for (const MetricsRow& row : r.val_log) {
    if (row.step > 0) scores.push_back(row.reward_mos);
  }
  std::sort(scores.rbegin(), scores.rend());
  ASSERT_EQ(r.state.topk.size(), kTopK);
  ASSERT_EQ(r.best.size(), kTopK);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
    files += entry.path().extension() == ".bin";
  }
  EXPECT_EQ(files, kTopK);
  for (std::size_t i = 0; i < kTopK; ++i) {
    EXPECT_EQ(r.state.topk[i].score, scores[i]);
    EXPECT_EQ(r.best[i].step, r.state.topk[i].step);
    EXPECT_EQ(load_checkpoint(r.state.topk[i].path), r.best[i].params);
  }
}

TEST(Finetune, ConfigValidation) {
  const Experiment exp = tiny_experiment();
  const std::vector<double> p = exp.net.init(9);
  FinetuneConfig cfg = small_finetune(Algo::kDlpo, 2);
  cfg.rl.alpha = -1.0;
  EXPECT_THROW(finetune(exp, cfg, TrainState::fresh(p, 1), p), ConfigError);
}

}  // namespace
}  // namespace dlpo
