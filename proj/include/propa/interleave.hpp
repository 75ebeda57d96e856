#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "propa/grpo_data.hpp"
#include "propa/mcts.hpp"
#include "propa/policy.hpp"
#include "propa/prm.hpp"

// The interleaved training loop: SFT activation, per-instance tree building,
// terminal-success partitioning into GRPO vs SFT recovery, lambda-periodic
// flushes, and final-epoch PRM data collection.
//
// Tree building inside one flush window runs against a frozen policy and may
// be parallelized; partitioning, flushing and updates are serialized in
// instance order.

namespace propa {

struct ScheduleConfig {
  int lambda_period = 40;     // flush every lambda processed instances
  int epochs_total = 10;
  int epochs_activation = 3;
  double lr = 30.0;    // sized for plain full-batch SGD on the linear policy
  int grpo_batch = 4;
};

struct GrpoConfig {
  double tau = 0.1;
  double alpha = 10.0;
  double clip_eps = 0.2;
  double kl_beta = 1e-3;
  double lr = 8.0;  // GRPO batches average over far fewer terms than SFT
  bool use_log_transform = true;
};

enum class TrainVariant { Full, GrpoOnly, SftOnly, NoTransform };

using ActivationSet = std::unordered_map<std::int64_t, Chain>;

struct Partitions {
  std::vector<AdvantageGroup> d_grpo;
  std::vector<int> d_sft;          // instance indices routed to SFT recovery
  std::vector<Chain> d_sft_paths;  // SFT-only variant: best-path chains
  std::vector<PrmSample> d_prm;
  int grpo_routed_since_flush = 0;
  int sft_routed_since_flush = 0;
};

struct FlushRecord {
  int epoch = 0;
  int flush_idx = 0;
  int n_groups = 0;
  int n_sft_instances = 0;
  int n_grpo_instances = 0;
};

struct EpochRecord {
  int epoch = 0;
  double eval_accuracy = 0.0;
};

struct TrainOptions {
  ScheduleConfig schedule;
  MctsConfig mcts;
  GrpoConfig grpo;
  TrainVariant variant = TrainVariant::Full;
  bool prm_successful_trees_only = false;
  bool keep_final_trees = false;
  int workers = 1;
  std::uint64_t master_seed = 1;
};

struct TrainResult {
  PolicyParams policy;
  PolicyParams activation_policy;            // checkpoint after the activation stage
  std::vector<PolicyParams> epoch_checkpoints;
  std::vector<FlushRecord> flushes;
  std::vector<EpochRecord> epochs;
  std::vector<PrmSample> d_prm;
  std::vector<SearchTree> final_epoch_trees;  // populated when keep_final_trees
};

// One teacher trace per instance, keyed by instance_id.
ActivationSet build_activation_set(std::span<const ProblemInstance> instances);

struct PartitionDecision {
  bool grpo_routed = false;                // true iff a correct terminal was recorded
  std::vector<AdvantageGroup> groups;      // tau-filtered, transform applied
};

// Routes a finished tree: a terminal node whose recorded reward was 1 sends
// the tree's surviving groups to GRPO; otherwise the instance index goes to
// SFT recovery. Groups that lose all contrast are dropped, never rerouted.
PartitionDecision partition_tree(const SearchTree& tree, const GrpoConfig& grpo);

// True iff the tree recorded a correct terminal (W > 0 on a visited
// terminal node).
bool tree_succeeded(const SearchTree& tree);

// Deterministic per-tree seed stream.
std::uint64_t tree_seed(std::uint64_t master_seed, int epoch, int instance_index);

// On every lambda-th call: GRPO over the buffered groups in grpo_batch
// chunks (fresh reference snapshot per chunk), then one SFT step over the
// activation traces of the buffered indices, then clear the buffers.
// Records a FlushRecord per flush.
PolicyParams maybe_flush(PolicyParams params, long call_count, int epoch, Partitions& parts,
                         const ActivationSet& d_act, std::span<const ProblemInstance> train,
                         const ScheduleConfig& schedule, const GrpoConfig& grpo,
                         std::vector<FlushRecord>& flush_log);

// The full loop: activation epochs of SFT on d_act, then interleaved
// tree-build/partition/flush epochs, with PRM data collected from every
// visited node during the final epoch.
TrainResult run_training(std::span<const ProblemInstance> train,
                         std::span<const ProblemInstance> val, const TrainOptions& options,
                         PolicyParams initial_policy);

}  // namespace propa
