#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "propa/policy.hpp"

// Search tree construction: UCT selection, k-way expansion with duplicate
// merging, binary-reward rollout simulation, and statistics backpropagation.
// One tree is mutated by exactly one execution context; trees for different
// instances can be built fully in parallel against a read-only policy.
//
// All randomness flows from the per-tree seed with a fixed draw order:
// selection draws nothing; each expansion draws k tokens; each simulation
// draws its continuation, children in expansion order.

namespace propa {

struct TreeNode {
  int node_id = 0;
  StepToken step{};           // meaningless at the root
  bool is_root = false;
  int parent_id = -1;
  int depth = 0;
  std::vector<int> children;
  double reward_sum = 0.0;    // W
  int visits = 0;             // N
  bool terminal = false;
};

struct RolloutRecord {
  int node_id = 0;
  std::vector<StepToken> continuation;
  double reward = 0.0;
};

struct MctsConfig {
  double exploration_c = 1.0;
  int expand_children = 4;  // k
  int iterations = 25;
  int max_depth = 8;
  SamplingConfig sampling;
};

struct SearchTree {
  ProblemInstance instance;
  std::vector<TreeNode> nodes;
  int root_id = 0;
  std::vector<RolloutRecord> rollout_log;
  MctsConfig config;
  std::uint64_t seed = 0;
  long backprop_count = 0;

  Chain chain_of(int node_id) const;
  double q(int node_id) const { return nodes[node_id].reward_sum / nodes[node_id].visits; }
};

// +inf for unvisited nodes, else W/N + C sqrt(ln parent_N / N).
double uct_score(const TreeNode& node, int parent_visits, double exploration_c);

// Descends from the root by max UCT (ties to the lower node_id), stopping at
// a childless, terminal, or depth-capped node.
int select_leaf(const SearchTree& tree, double exploration_c);

// Draws k tokens from the policy at the node's chain, merges duplicates,
// and attaches the distinct children with W=0, N=0. Expanding a terminal,
// depth-capped, or already-expanded node is a contract violation.
std::vector<int> expand(SearchTree& tree, int node_id, const PolicyParams& policy,
                        const MctsConfig& cfg, Rng& rng);

// Rollout from the node's chain until an ANSWER token or the depth cap;
// returns the verifier result, 0 if the cap was hit without an answer.
// Terminal nodes verify directly without sampling. Appends to rollout_log.
double simulate(SearchTree& tree, int node_id, const PolicyParams& policy, const MctsConfig& cfg,
                Rng& rng);

// N += 1, W += reward on every node of the root->node path inclusive.
void backpropagate(SearchTree& tree, int node_id, double reward);

// The full training search: `iterations` rounds of select -> expand ->
// simulate each new child -> backpropagate. Terminal or depth-capped
// selections are re-simulated and backpropagated without expansion.
SearchTree build_tree(const ProblemInstance& instance, const PolicyParams& policy,
                      const MctsConfig& cfg, std::uint64_t seed);

// Same loop with the rollout replaced by an external reward on the node's
// chain (the PRM path at inference). The reward source sees every newly
// expanded child and every re-selected leaf; rewards must lie in [0,1].
using RewardFn = std::function<double(const Chain&)>;
SearchTree build_tree_with_reward_fn(const ProblemInstance& instance, const PolicyParams& policy,
                                     const MctsConfig& cfg, std::uint64_t seed,
                                     const RewardFn& reward);

// Dump format: a `# instance ...` / `# sampling ...` / `# config ...` header,
// `nodes <n>` with `node_id parent_id step_token W N terminal` lines, then
// `rollouts <n>` with `node_id reward n_tokens tokens...` lines. Enough to
// replay every audit.
void save_tree(const std::filesystem::path& file, const SearchTree& tree);
SearchTree load_tree(const std::filesystem::path& file);

}  // namespace propa
