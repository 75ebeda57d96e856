#include "propa/inference.hpp"

#include <algorithm>
#include <cmath>

namespace propa {

std::pair<int, double> select_terminal(const SearchTree& tree) {
  int best = -1;
  double best_mean = 0.0;
  for (const TreeNode& node : tree.nodes) {
    if (!node.terminal || node.visits < 1) continue;
    double sum = 0.0;
    int count = 0;
    int cur = node.node_id;
    while (!tree.nodes[cur].is_root) {  // root excluded from the average
      sum += tree.q(cur);
      ++count;
      cur = tree.nodes[cur].parent_id;
    }
    double mean = sum / count;
    if (best < 0 || mean > best_mean) {  // ties keep the earlier node_id
      best = node.node_id;
      best_mean = mean;
    }
  }
  if (best < 0) throw NoTerminalError("no visited terminal node in tree");
  return {best, best_mean};
}

namespace {
InferenceResult finish_from_chain(Chain chain) {
  InferenceResult res;
  res.answered = chain.is_terminal();
  res.answer = res.answered ? chain.steps.back().value() : -1;
  res.chosen_chain = std::move(chain);
  return res;
}
}  // namespace

InferenceResult mcts_with_prm(const ProblemInstance& instance, const PolicyParams& policy,
                              const PRMParams& prm, const MctsConfig& cfg, std::uint64_t seed) {
  RewardFn reward = [&prm](const Chain& chain) { return prm_predict(prm, chain); };
  return mcts_with_reward_fn(instance, policy, reward, cfg, seed);
}

InferenceResult mcts_with_reward_fn(const ProblemInstance& instance, const PolicyParams& policy,
                                    const RewardFn& reward, const MctsConfig& cfg,
                                    std::uint64_t seed) {
  SearchTree tree = build_tree_with_reward_fn(instance, policy, cfg, seed, reward);

  int expanded = static_cast<int>(tree.nodes.size()) - 1;
  bool has_terminal = std::any_of(tree.nodes.begin(), tree.nodes.end(), [](const TreeNode& n) {
    return n.terminal && n.visits >= 1;
  });

  if (!has_terminal) {
    // greedy completion from the highest-Q visited frontier node
    int frontier = tree.root_id;
    double best_q = -1.0;
    for (const TreeNode& n : tree.nodes) {
      if (n.terminal || n.visits < 1) continue;
      if (tree.q(n.node_id) > best_q) {
        best_q = tree.q(n.node_id);
        frontier = n.node_id;
      }
    }
    Chain chain = tree.chain_of(frontier);
    while (chain.length() < cfg.max_depth && !chain.is_terminal())
      chain.steps.push_back(greedy_step(policy, chain));
    InferenceResult res = finish_from_chain(std::move(chain));
    res.fallback_used = true;
    res.nodes_expanded = expanded;
    return res;
  }

  auto [chosen, mean_q] = select_terminal(tree);
  InferenceResult res = finish_from_chain(tree.chain_of(chosen));
  res.nodes_expanded = expanded;
  for (const TreeNode& node : tree.nodes) {
    if (!node.terminal || node.visits < 1) continue;
    double sum = 0.0;
    int count = 0;
    int cur = node.node_id;
    while (!tree.nodes[cur].is_root) {
      sum += tree.q(cur);
      ++count;
      cur = tree.nodes[cur].parent_id;
    }
    res.terminal_scores.emplace_back(node.node_id, sum / count);
  }
  return res;
}

InferenceResult greedy_search(const ProblemInstance& instance, const PolicyParams& policy,
                              int max_depth) {
  Chain chain{instance, {}};
  int steps = 0;
  while (chain.length() < max_depth && !chain.is_terminal()) {
    chain.steps.push_back(greedy_step(policy, chain));
    ++steps;
  }
  InferenceResult res = finish_from_chain(std::move(chain));
  res.nodes_expanded = steps;
  return res;
}

InferenceResult bestn_search(const ProblemInstance& instance, const PolicyParams& policy,
                             const PRMParams& prm, int n, const SamplingConfig& sampling,
                             std::uint64_t seed, int max_depth) {
  if (n < 1) throw std::invalid_argument("best-N needs n >= 1");
  Rng rng(seed);
  Chain chain{instance, {}};
  int expanded = 0;
  while (chain.length() < max_depth && !chain.is_terminal()) {
    StepToken best{};
    double best_score = -1.0;
    bool have = false;
    for (int i = 0; i < n; ++i) {
      StepToken cand = sample_step(policy, chain, sampling, rng);
      ++expanded;
      Chain extended = chain;
      extended.steps.push_back(cand);
      double score = prm_predict(prm, extended);
      if (!have || score > best_score || (score == best_score && cand.id < best.id)) {
        best = cand;
        best_score = score;
        have = true;
      }
    }
    chain.steps.push_back(best);
  }
  InferenceResult res = finish_from_chain(std::move(chain));
  res.nodes_expanded = expanded;
  return res;
}

double greedy_accuracy(const PolicyParams& policy, std::span<const ProblemInstance> instances,
                       int max_depth) {
  if (instances.empty()) return 0.0;
  int correct = 0;
  for (const ProblemInstance& inst : instances) {
    InferenceResult res = greedy_search(inst, policy, max_depth);
    if (res.answered && verify_answer(res.chosen_chain) == 1) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

}  // namespace propa
