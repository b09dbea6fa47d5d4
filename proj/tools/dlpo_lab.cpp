// dlpo_lab: pretrain, fine-tune, evaluate and compare diffusion policies on
// the synthetic waveform task.
#include <CLI11.hpp>

#include <iostream>

#include "dlpo/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-model RL fine-tuning lab"};
  app.require_subcommand(1);
  const std::string footer =
      "Config file keys (`key = value`, `#` comments):\n" + dlpo::describe_config_keys() +
      "\nEnvironment: DLPO_LAB_THREADS caps worker threads (default: all cores).\n"
      "Exit codes: 0 ok, 1 internal failure, 2 bad config or arguments, 3 IO "
      "failure, 4 corrupt checkpoint.";
  app.footer(footer);

  dlpo::CommandOptions opts;
  std::string config_path;
  std::string ckpt_path;
  std::string out_dir = ".";
  std::string algo;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_ckpt, bool takes_algo) {
    cmd->footer(footer);
    cmd->add_option("--config", config_path, "config file (defaults when omitted)");
    cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
    cmd->add_option("--seed", seed, "override the config seed");
    if (needs_ckpt) cmd->add_option("--ckpt", ckpt_path, "input checkpoint")->required();
    if (takes_algo) cmd->add_option("--algo", algo, "rwr|ddpo|dpok|klinr|dlpo|onlydl");
  };
  CLI::App* pretrain = app.add_subcommand("pretrain", "pretrain on the DDPM loss");
  add_common(pretrain, false, false);
  CLI::App* finetune = app.add_subcommand("finetune", "RL fine-tuning from a checkpoint");
  add_common(finetune, true, true);
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on the test set");
  add_common(eval, true, false);
  CLI::App* compare = app.add_subcommand("compare", "run all six algorithms");
  add_common(compare, true, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return dlpo::kExitConfig;
  }

  if (!config_path.empty()) opts.config = config_path;
  opts.ckpt = ckpt_path;
  opts.out = out_dir;
  if (!algo.empty()) opts.algo = algo;
  for (CLI::App* cmd : {pretrain, finetune, eval, compare}) {
    if (cmd->parsed() && cmd->count("--seed") > 0) opts.seed = seed;
  }

  if (pretrain->parsed()) return dlpo::cmd_pretrain(opts, std::cout, std::cerr);
  if (finetune->parsed()) return dlpo::cmd_finetune(opts, std::cout, std::cerr);
  if (eval->parsed()) return dlpo::cmd_eval(opts, std::cout, std::cerr);
  return dlpo::cmd_compare(opts, std::cout, std::cerr);
}
