#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "propa/interleave.hpp"

// Experiment orchestration: the run configuration (a sectioned key-value
// file mirrored by CLI flags), seeded dataset generation, and the train /
// eval / ablate commands behind the CLI. Every run is a pure function of
// (config, master seed); artifacts are byte-stable.

namespace propa {

struct DatasetConfig {
  int n_train = 200;
  int n_val = 60;
  int n_test = 200;
  int d_min = 1;
  int d_max = 3;
};

struct RunConfig {
  EnvSpec env;
  MctsConfig mcts;
  ScheduleConfig schedule;
  GrpoConfig grpo;
  DatasetConfig data;
  std::string strategy = "mcts";  // mcts | greedy | bestn
  int best_n = 4;
  bool prm_successful_trees_only = false;
  int workers = 1;
  std::uint64_t master_seed = 1;
  std::string output_dir;
};

// Parses the sectioned key-value config file; unknown or malformed fields
// raise ConfigError carrying the field name. Fields not present keep their
// defaults.
RunConfig parse_config_file(const std::filesystem::path& file);
RunConfig parse_config_text(const std::string& text);

// top_k above the vocabulary is clamped with a warning rather than rejected.
void validate_config(RunConfig& cfg);

// Difficulty cycles d_min..d_max; digits drawn uniformly via the seed
// stream. Pure function of (cfg, seed, purpose).
std::vector<ProblemInstance> make_dataset(const DatasetConfig& cfg, int count,
                                          std::uint64_t master_seed, std::uint64_t purpose_tag);
std::vector<ProblemInstance> train_split(const RunConfig& cfg);
std::vector<ProblemInstance> val_split(const RunConfig& cfg);
std::vector<ProblemInstance> test_split(const RunConfig& cfg);

// Metrics rows: `epoch,flush_idx,n_grpo_groups,n_sft_instances,eval_accuracy`
// with -1 in the slots a row kind does not carry.
void write_metrics_csv(const std::filesystem::path& file, const TrainResult& result);

// Average-rank Spearman correlation of the values against their index.
double spearman_vs_index(std::span<const double> values);

struct EvalRow {
  std::int64_t instance_id = 0;
  std::string strategy;
  int answer = -1;
  int correct = 0;
  double mean_q = -1.0;
  int nodes_expanded = 0;
  bool fallback_used = false;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  double accuracy = 0.0;  // mean over 3 sampling seeds x instances
};

// Runs one strategy over an instance set, repeated over 3 sampling seeds.
EvalSummary run_eval(const RunConfig& cfg, const PolicyParams& policy, const PRMParams& prm,
                     const std::string& strategy, std::span<const ProblemInstance> instances);
void write_eval_csv(const std::filesystem::path& file, const EvalSummary& summary);

int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& policy_ckpt,
             const std::filesystem::path& prm_ckpt, const std::string& strategy);
int cmd_ablate(const RunConfig& cfg);
int cmd_gen_data(const RunConfig& cfg, int count, const std::filesystem::path& out);
int cmd_inspect_tree(const std::filesystem::path& dump);

}  // namespace propa
