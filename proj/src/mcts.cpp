#include "propa/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace propa {

Chain SearchTree::chain_of(int node_id) const {
  std::vector<StepToken> rev;
  int cur = node_id;
  while (!nodes[cur].is_root) {
    rev.push_back(nodes[cur].step);
    cur = nodes[cur].parent_id;
  }
  Chain chain{instance, {}};
  chain.steps.assign(rev.rbegin(), rev.rend());
  return chain;
}

double uct_score(const TreeNode& node, int parent_visits, double exploration_c) {
  if (node.visits == 0) return std::numeric_limits<double>::infinity();
  double mean = node.reward_sum / node.visits;
  return mean + exploration_c * std::sqrt(std::log(static_cast<double>(parent_visits)) /
                                          static_cast<double>(node.visits));
}

int select_leaf(const SearchTree& tree, double exploration_c) {
  int cur = tree.root_id;
  while (true) {
    const TreeNode& node = tree.nodes[cur];
    if (node.children.empty() || node.terminal || node.depth >= tree.config.max_depth) return cur;
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int child : node.children) {
      double s = uct_score(tree.nodes[child], std::max(node.visits, 1), exploration_c);
      if (s > best_score) {  // ties keep the earlier (lower) node_id
        best_score = s;
        best = child;
      }
    }
    cur = best;
  }
}

std::vector<int> expand(SearchTree& tree, int node_id, const PolicyParams& policy,
                        const MctsConfig& cfg, Rng& rng) {
  TreeNode& node = tree.nodes[node_id];
  if (node.terminal) throw std::logic_error("expand on a terminal node");
  if (node.depth >= cfg.max_depth) throw std::logic_error("expand at max depth");
  if (!node.children.empty()) throw std::logic_error("expand on an expanded node");

  Chain chain = tree.chain_of(node_id);
  std::vector<StepToken> drawn;
  for (int i = 0; i < cfg.expand_children; ++i) {
    StepToken tok = sample_step(policy, chain, cfg.sampling, rng);
    if (std::find(drawn.begin(), drawn.end(), tok) == drawn.end()) drawn.push_back(tok);
  }
  std::vector<int> out;
  for (StepToken tok : drawn) {
    TreeNode child;
    child.node_id = static_cast<int>(tree.nodes.size());
    child.step = tok;
    child.parent_id = node_id;
    child.depth = tree.nodes[node_id].depth + 1;
    child.terminal = tok.is_answer();
    tree.nodes.push_back(child);
    tree.nodes[node_id].children.push_back(child.node_id);
    out.push_back(child.node_id);
  }
  return out;
}

double simulate(SearchTree& tree, int node_id, const PolicyParams& policy, const MctsConfig& cfg,
                Rng& rng) {
  const TreeNode& node = tree.nodes[node_id];
  Chain chain = tree.chain_of(node_id);
  RolloutRecord rec;
  rec.node_id = node_id;
  if (!node.terminal) {
    while (chain.length() < cfg.max_depth && !chain.is_terminal()) {
      StepToken tok = sample_step(policy, chain, cfg.sampling, rng);
      chain.steps.push_back(tok);
      rec.continuation.push_back(tok);
    }
  }
  rec.reward = chain.is_terminal() ? static_cast<double>(verify_answer(chain)) : 0.0;
  tree.rollout_log.push_back(rec);
  return rec.reward;
}

void backpropagate(SearchTree& tree, int node_id, double reward) {
  tree.backprop_count += 1;
  int cur = node_id;
  while (true) {
    TreeNode& node = tree.nodes[cur];
    node.visits += 1;
    node.reward_sum += reward;
    if (node.is_root) break;
    cur = node.parent_id;
  }
}

namespace {
SearchTree build_tree_impl(const ProblemInstance& instance, const PolicyParams& policy,
                           const MctsConfig& cfg, std::uint64_t seed, const RewardFn* reward_fn) {
  SearchTree tree;
  tree.instance = instance;
  tree.config = cfg;
  tree.seed = seed;
  TreeNode root;
  root.is_root = true;
  tree.nodes.push_back(root);
  Rng rng(seed);

  auto leaf_reward = [&](int node_id) -> double {
    if (reward_fn) {
      double r = std::clamp((*reward_fn)(tree.chain_of(node_id)), 0.0, 1.0);
      tree.rollout_log.push_back(RolloutRecord{node_id, {}, r});
      return r;
    }
    return simulate(tree, node_id, policy, cfg, rng);
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    int leaf = select_leaf(tree, cfg.exploration_c);
    const TreeNode& node = tree.nodes[leaf];
    if (node.terminal || node.depth >= cfg.max_depth) {
      backpropagate(tree, leaf, leaf_reward(leaf));
      continue;
    }
    std::vector<int> children = expand(tree, leaf, policy, cfg, rng);
    for (int child : children) backpropagate(tree, child, leaf_reward(child));
  }
  return tree;
}
}  // namespace

SearchTree build_tree(const ProblemInstance& instance, const PolicyParams& policy,
                      const MctsConfig& cfg, std::uint64_t seed) {
  return build_tree_impl(instance, policy, cfg, seed, nullptr);
}

SearchTree build_tree_with_reward_fn(const ProblemInstance& instance, const PolicyParams& policy,
                                     const MctsConfig& cfg, std::uint64_t seed,
                                     const RewardFn& reward) {
  return build_tree_impl(instance, policy, cfg, seed, &reward);
}

void save_tree(const std::filesystem::path& file, const SearchTree& tree) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "# instance " << tree.instance.instance_id << ' ' << tree.instance.inputs.size();
  for (int g : tree.instance.inputs) out << ' ' << g;
  out << ' ' << tree.instance.truth << '\n';
  const SamplingConfig& s = tree.config.sampling;
  out << "# sampling " << format_real(s.temperature) << ' ' << s.top_k << ' '
      << format_real(s.top_p) << ' ' << tree.seed << '\n';
  out << "# config " << format_real(tree.config.exploration_c) << ' ' << tree.config.expand_children
      << ' ' << tree.config.iterations << ' ' << tree.config.max_depth << '\n';
  out << "nodes " << tree.nodes.size() << '\n';
  for (const TreeNode& n : tree.nodes) {
    out << n.node_id << ' ' << (n.is_root ? -1 : n.parent_id) << ' '
        << (n.is_root ? -1 : n.step.id) << ' ' << format_real(n.reward_sum) << ' ' << n.visits
        << ' ' << (n.terminal ? 1 : 0) << '\n';
  }
  out << "rollouts " << tree.rollout_log.size() << '\n';
  for (const RolloutRecord& r : tree.rollout_log) {
    out << r.node_id << ' ' << format_real(r.reward) << ' ' << r.continuation.size();
    for (StepToken t : r.continuation) out << ' ' << t.id;
    out << '\n';
  }
}

SearchTree load_tree(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  SearchTree tree;
  std::string word;
  in >> word >> word;  // "# instance"
  std::int64_t id;
  size_t d;
  in >> id >> d;
  tree.instance.instance_id = id;
  tree.instance.inputs.resize(d);
  for (size_t i = 0; i < d; ++i) in >> tree.instance.inputs[i];
  in >> tree.instance.truth;
  in >> word >> word;  // "# sampling"
  std::string temp, topp;
  in >> temp >> tree.config.sampling.top_k >> topp >> tree.seed;
  tree.config.sampling.temperature = parse_real(temp);
  tree.config.sampling.top_p = parse_real(topp);
  in >> word >> word;  // "# config"
  std::string c;
  in >> c >> tree.config.expand_children >> tree.config.iterations >> tree.config.max_depth;
  tree.config.exploration_c = parse_real(c);
  size_t node_count;
  in >> word >> node_count;
  if (word != "nodes") throw std::runtime_error("malformed tree dump: " + file.string());
  tree.nodes.resize(node_count);
  for (size_t i = 0; i < node_count; ++i) {
    TreeNode& n = tree.nodes[i];
    int step_id, terminal;
    std::string w;
    in >> n.node_id >> n.parent_id >> step_id >> w >> n.visits >> terminal;
    n.reward_sum = parse_real(w);
    n.terminal = terminal != 0;
    n.is_root = n.parent_id < 0;
    if (!n.is_root) {
      n.step = StepToken{step_id};
      n.depth = tree.nodes[n.parent_id].depth + 1;
      tree.nodes[n.parent_id].children.push_back(n.node_id);
    }
  }
  size_t rollout_count;
  in >> word >> rollout_count;
  if (word != "rollouts") throw std::runtime_error("malformed tree dump: " + file.string());
  tree.rollout_log.resize(rollout_count);
  for (size_t i = 0; i < rollout_count; ++i) {
    RolloutRecord& r = tree.rollout_log[i];
    std::string rw;
    size_t n_tok;
    in >> r.node_id >> rw >> n_tok;
    r.reward = parse_real(rw);
    r.continuation.resize(n_tok);
    for (size_t j = 0; j < n_tok; ++j) in >> r.continuation[j].id;
  }
  tree.backprop_count = static_cast<long>(rollout_count);
  return tree;
}

}  // namespace propa
