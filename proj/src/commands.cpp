#include "dlpo/commands.hpp"

#include <ostream>
#include <sstream>

#include "dlpo/errors.hpp"

namespace dlpo {

namespace {

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

// Runs `body`, mapping exceptions to exit codes and one `error:` line.
template <typename Body>
int guarded(const CommandOptions& opts, std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::string where;
    if (e.line() > 0) {
      where = (opts.config ? opts.config->string() : std::string("config")) + ":" +
              std::to_string(e.line()) + ": ";
    }
    err << "error: " << one_line(where + e.what()) << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitCorrupt;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitFailure;
  }
}

RunConfig resolve_config(const CommandOptions& opts) {
  RunConfig cfg = opts.config ? load_config(*opts.config) : RunConfig{};
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.algo) cfg.rl.algo = parse_algo(*opts.algo);
  cfg.validate();
  return cfg;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir.string() + "'");
  }
}

std::vector<double> load_params(const CommandOptions& opts, const Experiment& exp) {
  if (opts.ckpt.empty()) throw ConfigError("--ckpt is required");
  return load_checkpoint(opts.ckpt, exp.net.param_count());
}

MetricsRow test_metrics(const RunConfig& cfg, const Experiment& exp,
                        std::span<const double> params) {
  return evaluate(exp, params, all_classes(exp), cfg.eval_per_condition, cfg.test_seed);
}

std::string format_real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

void print_summary(std::ostream& log, const std::string& label, const MetricsRow& row) {
  log << label << ": reward_mos=" << row.reward_mos << " heldout=" << row.heldout
      << " recovery_err=" << row.recovery_err << " diff_loss=" << row.diff_loss << "\n";
}

}  // namespace

int cmd_pretrain(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(opts, err, [&] {
    const RunConfig cfg = resolve_config(opts);
    ensure_dir(opts.out);
    const Experiment exp = make_experiment(cfg);
    const std::vector<LabeledWave> data = make_training_set(exp, cfg);
    const PretrainResult res =
        pretrain(exp, make_pretrain_config(cfg), data, exp.net.init(cfg.seed));
    save_checkpoint(opts.out / "pretrained.bin", res.state.params, make_meta(cfg));
    write_file_atomic(opts.out / "pretrain_metrics.csv", metrics_csv(res.log));

    MetricsRow val = evaluate(exp, res.state.params, all_classes(exp), cfg.val_per_class,
                              cfg.val_seed);
    val.step = cfg.epochs;
    val.algo = "pretrain";
    val.seed = cfg.seed;
    write_file_atomic(opts.out / "pretrain_eval.csv", metrics_csv({&val, 1}));
    if (!res.log.empty()) {
      log << "epoch 1 loss " << res.log.front().diff_loss << ", epoch " << cfg.epochs
          << " loss " << res.log.back().diff_loss << "\n";
    }
    print_summary(log, "validation", val);
    return kExitOk;
  });
}

int cmd_finetune(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(opts, err, [&] {
    const RunConfig cfg = resolve_config(opts);
    const Experiment exp = make_experiment(cfg);
    const std::vector<double> pretrained = load_params(opts, exp);
    ensure_dir(opts.out);
    FinetuneConfig fcfg = make_finetune_config(cfg);
    fcfg.out_dir = opts.out;
    std::vector<LabeledWave> data;
    if (cfg.rl.dl_source == DlSource::kDataset) data = make_training_set(exp, cfg);

    const FinetuneResult res =
        finetune(exp, fcfg, TrainState::fresh(pretrained, cfg.seed), pretrained, data);
    save_checkpoint(opts.out / "final.bin", res.state.params, fcfg.meta);
    write_file_atomic(opts.out / "metrics.csv", metrics_csv(res.val_log));
    write_file_atomic(opts.out / "train_log.csv", metrics_csv(res.train_log));
    for (const CheckpointRecord& r : res.state.topk) {
      log << "top checkpoint step " << r.step << " validation reward " << r.score << " -> "
          << r.path.string() << "\n";
    }
    if (!res.val_log.empty()) {
      print_summary(log, "validation first", res.val_log.front());
      print_summary(log, "validation last", res.val_log.back());
    }
    return kExitOk;
  });
}

int cmd_eval(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(opts, err, [&] {
    const RunConfig cfg = resolve_config(opts);
    const Experiment exp = make_experiment(cfg);
    const std::vector<double> params = load_params(opts, exp);
    MetricsRow row = test_metrics(cfg, exp, params);
    row.algo = "eval";
    ensure_dir(opts.out);
    write_file_atomic(opts.out / "eval.csv", metrics_csv({&row, 1}));
    log << metrics_header() << "\n" << to_csv(row) << "\n";
    return kExitOk;
  });
}

CompareResult run_compare(const RunConfig& cfg, std::span<const double> pretrained,
                          std::span<const Algo> algos, std::ostream* progress) {
  const Experiment exp = make_experiment(cfg);
  if (pretrained.size() != exp.net.param_count()) {
    throw ArgumentError("compare: pretrained parameters have wrong length");
  }
  CompareResult result;
  const MetricsRow base = test_metrics(cfg, exp, pretrained);
  result.baseline = {"pretrained", base.reward_mos, base.heldout, base.recovery_err};
  std::vector<LabeledWave> data;
  if (cfg.rl.dl_source == DlSource::kDataset) data = make_training_set(exp, cfg);

  for (const Algo algo : algos) {
    TableRow row{std::string(to_string(algo))};
    std::vector<MetricsRow> curve;
    for (std::size_t s = 0; s < cfg.compare_seeds; ++s) {
      RunConfig run_cfg = cfg;
      run_cfg.rl.algo = algo;
      run_cfg.seed = cfg.seed + s;
      const FinetuneConfig fcfg = make_finetune_config(run_cfg);
      const FinetuneResult res = finetune(
          exp, fcfg, TrainState::fresh({pretrained.begin(), pretrained.end()}, run_cfg.seed),
          pretrained, data);
      const bool has_best = !res.best.empty();
      const std::span<const double> chosen =
          has_best ? std::span<const double>(res.best.front().params)
                   : std::span<const double>(res.state.params);
      MetricsRow test = test_metrics(cfg, exp, chosen);
      test.algo = row.algo;
      test.seed = run_cfg.seed;
      test.step = has_best ? res.best.front().step : 0;
      result.runs.push_back({algo, run_cfg.seed, test.step, test});
      row.reward_mos += test.reward_mos;
      row.heldout += test.heldout;
      row.recovery_err += test.recovery_err;
      curve.insert(curve.end(), res.val_log.begin(), res.val_log.end());
      if (progress) {
        *progress << row.algo << " seed " << run_cfg.seed << " best step " << test.step
                  << ": test reward_mos=" << test.reward_mos << " heldout=" << test.heldout
                  << " recovery_err=" << test.recovery_err << "\n";
      }
    }
    const double inv = 1.0 / static_cast<double>(cfg.compare_seeds);
    row.reward_mos *= inv;
    row.heldout *= inv;
    row.recovery_err *= inv;
    result.table.push_back(row);
    result.curves.push_back(std::move(curve));
  }
  return result;
}

std::string table_csv(const CompareResult& result) {
  std::string out = "algo,reward_mos,heldout,recovery_err\n";
  auto emit = [&](const TableRow& r) {
    out += r.algo + "," + format_real(r.reward_mos) + "," + format_real(r.heldout) + "," +
           format_real(r.recovery_err) + "\n";
  };
  emit(result.baseline);
  for (const TableRow& r : result.table) emit(r);
  return out;
}

int cmd_compare(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(opts, err, [&] {
    const RunConfig cfg = resolve_config(opts);
    const Experiment exp = make_experiment(cfg);
    const std::vector<double> pretrained = load_params(opts, exp);
    ensure_dir(opts.out);
    const CompareResult res = run_compare(cfg, pretrained, kAllAlgos, &log);
    write_file_atomic(opts.out / "table1.csv", table_csv(res));
    for (std::size_t i = 0; i < res.table.size(); ++i) {
      write_file_atomic(opts.out / ("curves_" + res.table[i].algo + ".csv"),
                        metrics_csv(res.curves[i]));
    }
    std::vector<MetricsRow> runs;
    for (const CompareRun& r : res.runs) runs.push_back(r.test);
    write_file_atomic(opts.out / "compare_runs.csv", metrics_csv(runs));
    log << table_csv(res);
    return kExitOk;
  });
}

}  // namespace dlpo
