#include <CLI11.hpp>
#include <iostream>

#include "propa/harness.hpp"

// CLI verbs: train, eval, ablate, gen-data, inspect-tree. Flags mirror the
// config file fields; flag values override the file.

namespace {

struct CommonArgs {
  std::string config_file;
  std::string output_dir;
  long long master_seed = -1;
  int workers = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_file, "run configuration file");
  cmd->add_option("--out", args.output_dir, "output directory (overrides config)");
  cmd->add_option("--seed", args.master_seed, "master seed (overrides config)");
  cmd->add_option("--workers", args.workers, "tree-building worker count");
}

propa::RunConfig resolve(const CommonArgs& args) {
  propa::RunConfig cfg;
  if (!args.config_file.empty()) cfg = propa::parse_config_file(args.config_file);
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  if (args.master_seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(args.master_seed);
  if (args.workers >= 1) cfg.workers = args.workers;
  propa::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PROPA-style search-guided policy training over the PrefixSum environment"};
  app.require_subcommand(1);

  CommonArgs train_args;
  CLI::App* train = app.add_subcommand("train", "run the interleaved training pipeline");
  add_common(train, train_args);

  CommonArgs eval_args;
  std::string policy_ckpt, prm_ckpt, strategy;
  CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
  add_common(eval, eval_args);
  eval->add_option("--policy", policy_ckpt, "policy checkpoint")->required();
  eval->add_option("--prm", prm_ckpt, "PRM checkpoint (needed for mcts/bestn)");
  eval->add_option("--strategy", strategy, "mcts | greedy | bestn (default from config)");

  CommonArgs ablate_args;
  CLI::App* ablate = app.add_subcommand("ablate", "train the four variants, eval all strategies");
  add_common(ablate, ablate_args);

  CommonArgs gen_args;
  int gen_count = 200;
  std::string gen_out = "instances.txt";
  CLI::App* gen = app.add_subcommand("gen-data", "write a seeded instance set");
  add_common(gen, gen_args);
  gen->add_option("--count", gen_count, "number of instances");
  gen->add_option("--file", gen_out, "output file");

  std::string dump_path;
  CLI::App* inspect = app.add_subcommand("inspect-tree", "pretty-print a tree dump");
  inspect->add_option("dump", dump_path, "tree dump file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return propa::cmd_train(resolve(train_args));
    if (eval->parsed()) {
      propa::RunConfig cfg = resolve(eval_args);
      return propa::cmd_eval(cfg, policy_ckpt, prm_ckpt,
                             strategy.empty() ? cfg.strategy : strategy);
    }
    if (ablate->parsed()) return propa::cmd_ablate(resolve(ablate_args));
    if (gen->parsed()) return propa::cmd_gen_data(resolve(gen_args), gen_count, gen_out);
    if (inspect->parsed()) return propa::cmd_inspect_tree(dump_path);
  } catch (const propa::ConfigError& e) {
    std::cerr << "propa: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "propa: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
