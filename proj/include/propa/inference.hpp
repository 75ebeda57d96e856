#pragma once

#include <span>
#include <utility>
#include <vector>

#include "propa/mcts.hpp"
#include "propa/prm.hpp"

// Test-time answer production: MCTS with PRM-substituted simulation and
// mean-path-value terminal selection, plus the greedy and best-N baselines. All
// strategies are pure per instance and freely parallel over instances.

namespace propa {

struct InferenceResult {
  Chain chosen_chain;
  int answer = -1;   // -1 when no answer was produced
  bool answered = false;
  std::vector<std::pair<int, double>> terminal_scores;  // (node_id, mean q)
  int nodes_expanded = 0;
  bool fallback_used = false;
};

// Highest mean-Q terminal: for each terminal with N >= 1, the average Q over
// the non-root nodes of its root path; ties to the lower node_id. Throws
// NoTerminalError when the tree holds no visited terminal.
std::pair<int, double> select_terminal(const SearchTree& tree);

// build_tree with every reward drawn from prm_predict on the node's chain
// instead of a rollout; never touches the verifier. Falls back to a greedy
// completion from the highest-Q frontier node when no terminal exists.
InferenceResult mcts_with_prm(const ProblemInstance& instance, const PolicyParams& policy,
                              const PRMParams& prm, const MctsConfig& cfg, std::uint64_t seed);

// Same search with an arbitrary reward source (oracle value functions in
// tests and sanity runs).
InferenceResult mcts_with_reward_fn(const ProblemInstance& instance, const PolicyParams& policy,
                                    const RewardFn& reward, const MctsConfig& cfg,
                                    std::uint64_t seed);

// Argmax token per step until ANSWER or the depth cap.
InferenceResult greedy_search(const ProblemInstance& instance, const PolicyParams& policy,
                              int max_depth = 8);

// Per depth: sample n candidate steps, keep the extension prm_predict likes
// best (ties to the lower token id), repeat until ANSWER or the depth cap.
InferenceResult bestn_search(const ProblemInstance& instance, const PolicyParams& policy,
                             const PRMParams& prm, int n, const SamplingConfig& sampling,
                             std::uint64_t seed, int max_depth = 8);

// Greedy-decoding accuracy over an instance set; the training-time eval.
double greedy_accuracy(const PolicyParams& policy, std::span<const ProblemInstance> instances,
                       int max_depth = 8);

}  // namespace propa
