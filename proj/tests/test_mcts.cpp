#include <doctest.h>

#include <cmath>
#include <set>

#include "propa/mcts.hpp"
#include "test_support.hpp"

using namespace propa;

namespace {

SearchTree empty_tree(const ProblemInstance& inst, MctsConfig cfg = MctsConfig{}) {
  SearchTree tree;
  tree.instance = inst;
  tree.config = cfg;
  TreeNode root;
  root.is_root = true;
  tree.nodes.push_back(root);
  return tree;
}

int add_child(SearchTree& tree, int parent, StepToken step, double w, int n) {
  TreeNode node;
  node.node_id = static_cast<int>(tree.nodes.size());
  node.step = step;
  node.parent_id = parent;
  node.depth = tree.nodes[parent].depth + 1;
  node.terminal = step.is_answer();
  node.reward_sum = w;
  node.visits = n;
  tree.nodes.push_back(node);
  tree.nodes[parent].children.push_back(node.node_id);
  return node.node_id;
}

// independent recomputation of the selection path over an explicit tree
int brute_force_select(const SearchTree& tree) {
  int cur = tree.root_id;
  while (true) {
    const TreeNode& node = tree.nodes[cur];
    if (node.children.empty() || node.terminal || node.depth >= tree.config.max_depth) return cur;
    int best = -1;
    double best_score = -1e300;
    for (int c : node.children) {
      const TreeNode& child = tree.nodes[c];
      double score = child.visits == 0
                         ? 1e300
                         : child.reward_sum / child.visits +
                               tree.config.exploration_c *
                                   std::sqrt(std::log(static_cast<double>(std::max(node.visits, 1))) /
                                             child.visits);
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    cur = best;
  }
}

void audit_tree(const SearchTree& tree) {
  REQUIRE(tree.nodes[tree.root_id].is_root);
  long reachable = 0;
  std::vector<int> stack = {tree.root_id};
  std::set<int> seen;
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    REQUIRE(seen.insert(id).second);  // acyclic
    ++reachable;
    const TreeNode& node = tree.nodes[id];
    REQUIRE(node.reward_sum <= node.visits + 1e-9);
    REQUIRE(node.reward_sum >= -1e-9);
    if (node.terminal) REQUIRE(node.children.empty());
    for (int c : node.children) {
      REQUIRE(tree.nodes[c].parent_id == id);
      REQUIRE(tree.nodes[c].visits <= node.visits);
      stack.push_back(c);
    }
  }
  REQUIRE(reachable == static_cast<long>(tree.nodes.size()));
  REQUIRE(tree.nodes[tree.root_id].visits == tree.backprop_count);

  // replay: every logged rollout reward reproduces through the verifier
  double credited = 0.0;
  for (const RolloutRecord& rec : tree.rollout_log) {
    Chain chain = tree.chain_of(rec.node_id);
    for (StepToken t : rec.continuation) chain.steps.push_back(t);
    double expect = chain.is_terminal() ? static_cast<double>(verify_answer(chain)) : 0.0;
    REQUIRE(rec.reward == expect);
    credited += rec.reward;
  }
  REQUIRE(tree.nodes[tree.root_id].reward_sum == doctest::Approx(credited).epsilon(1e-12));
}

}  // namespace

TEST_SUITE_BEGIN("mcts");

TEST_CASE("uct fixtures") {
  TreeNode fresh;
  CHECK(uct_score(fresh, 10, 1.0) == std::numeric_limits<double>::infinity());

  TreeNode node;
  node.reward_sum = 2.0;
  node.visits = 4;
  double expected = 0.5 + std::sqrt(std::log(10.0) / 4.0);
  CHECK(uct_score(node, 10, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(uct_score(node, 10, 1.0) == doctest::Approx(1.25872).epsilon(1e-5));

  TreeNode sure;
  sure.reward_sum = 6.0;
  sure.visits = 6;
  CHECK(uct_score(sure, 11, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("selection walks the max-UCT path with id tie-break") {
  auto inst = generate_instance(42, 2);
  SearchTree fresh = empty_tree(inst);
  CHECK(select_leaf(fresh, 1.0) == fresh.root_id);

  SearchTree tied = empty_tree(inst);
  tied.nodes[0].visits = 2;
  int a = add_child(tied, 0, StepToken::reason(4), 0, 0);
  add_child(tied, 0, StepToken::reason(5), 0, 0);
  CHECK(select_leaf(tied, 1.0) == a);  // both infinite, lower id wins

  Rng rng(50);
  for (int trial = 0; trial < 100; ++trial) {
    SearchTree tree = empty_tree(inst);
    tree.nodes[0].visits = 12;
    for (int i = 0; i < 3; ++i) {
      int c = add_child(tree, 0, StepToken::reason(i), static_cast<double>(rng.bounded(4)), 4);
      for (int j = 0; j < 2; ++j) {
        int g = add_child(tree, c, StepToken::reason(10 + j), static_cast<double>(rng.bounded(2)), 2);
        if (trial % 3 == 0) add_child(tree, g, StepToken::answer(5), static_cast<double>(rng.bounded(2)), 1);
      }
    }
    CHECK(select_leaf(tree, 1.0) == brute_force_select(tree));
  }
}

TEST_CASE("expansion dedups samples and rejects bad nodes") {
  auto inst = generate_instance(42, 2);
  MctsConfig cfg;

  PolicyParams sharp = testing::make_saturated_policy();
  PolicyParams uniform = make_zero_policy();
  Rng rng(9);
  MctsConfig cfg1 = cfg;
  cfg1.sampling.top_k = 1;
  SearchTree tree = empty_tree(inst, cfg1);
  auto kids = expand(tree, 0, sharp, cfg1, rng);
  CHECK(kids.size() == 1u);  // four identical samples merge

  CHECK_THROWS_AS(expand(tree, 0, sharp, cfg1, rng), std::logic_error);  // already expanded

  SearchTree replay = empty_tree(inst, cfg);
  Rng ra(1234);
  auto drawn = expand(replay, 0, uniform, cfg, ra);
  // replay the sampler stream directly
  Rng rb(1234);
  Chain root_chain{inst, {}};
  std::vector<int> expect;
  for (int i = 0; i < cfg.expand_children; ++i) {
    int tok = sample_step(uniform, root_chain, cfg.sampling, rb).id;
    bool dup = false;
    for (int e : expect) dup = dup || e == tok;
    if (!dup) expect.push_back(tok);
  }
  REQUIRE(drawn.size() == expect.size());
  for (size_t i = 0; i < drawn.size(); ++i) CHECK(replay.nodes[drawn[i]].step.id == expect[i]);

  SearchTree deep = empty_tree(inst, cfg);
  int cur = 0;
  for (int i = 0; i < cfg.max_depth; ++i) cur = add_child(deep, cur, StepToken::reason(1), 0, 1);
  CHECK_THROWS_AS(expand(deep, cur, uniform, cfg, rng), std::logic_error);

  SearchTree term = empty_tree(inst, cfg);
  int t = add_child(term, 0, StepToken::answer(6), 0, 0);
  CHECK_THROWS_AS(expand(term, t, uniform, cfg, rng), std::logic_error);
}

TEST_CASE("simulation verifies terminals directly and zeroes depth-capped rollouts") {
  auto inst = generate_instance(42, 2);  // digits 4,2 truth 6
  MctsConfig cfg;
  PolicyParams uniform = make_zero_policy();
  Rng rng(3);

  SearchTree tree = empty_tree(inst, cfg);
  int t = add_child(tree, 0, StepToken::answer(6), 0, 0);
  CHECK(simulate(tree, t, uniform, cfg, rng) == 1.0);
  CHECK(tree.rollout_log.back().continuation.empty());  // no sampling on terminals

  SearchTree capped = empty_tree(inst, cfg);
  int cur = 0;
  for (int i = 0; i < cfg.max_depth; ++i) cur = add_child(capped, cur, StepToken::reason(1), 0, 1);
  CHECK(simulate(capped, cur, uniform, cfg, rng) == 0.0);

  SearchTree seeded = empty_tree(inst, cfg);
  double r = simulate(seeded, 0, uniform, cfg, rng);
  const RolloutRecord& rec = seeded.rollout_log.back();
  Chain chain{inst, {}};
  for (StepToken tok : rec.continuation) chain.steps.push_back(tok);
  double expect = chain.is_terminal() ? static_cast<double>(verify_answer(chain)) : 0.0;
  CHECK(r == expect);
}

TEST_CASE("backpropagation credits the whole path") {
  auto inst = generate_instance(42, 2);
  SearchTree tree = empty_tree(inst);
  int a = add_child(tree, 0, StepToken::reason(4), 0, 0);
  int b = add_child(tree, a, StepToken::reason(6), 0, 0);
  backpropagate(tree, b, 1.0);
  CHECK(tree.nodes[0].visits == 1);
  CHECK(tree.nodes[a].visits == 1);
  CHECK(tree.nodes[b].visits == 1);
  CHECK(tree.nodes[0].reward_sum == 1.0);
  backpropagate(tree, a, 0.0);
  CHECK(tree.nodes[0].visits == 2);
  CHECK(tree.nodes[0].visits == tree.backprop_count);
  CHECK(tree.nodes[b].visits == 1);
}

TEST_CASE("single-round build exposes one expansion") {
  auto inst = generate_instance(42, 2);
  MctsConfig cfg;
  cfg.iterations = 1;
  SearchTree tree = build_tree(inst, make_zero_policy(), cfg, 99);
  size_t kids = tree.nodes[tree.root_id].children.size();
  CHECK(kids >= 1u);
  CHECK(kids <= 4u);
  CHECK(tree.nodes[tree.root_id].visits == static_cast<int>(kids));
}

TEST_CASE("structural audit holds over seeded trees") {
  MctsConfig cfg;
  PolicyParams uniform = make_zero_policy();
  PolicyParams sharp = testing::make_saturated_policy();
  Rng rng(2025);
  for (int i = 0; i < 60; ++i) {
    int d = 1 + static_cast<int>(rng.bounded(5));
    std::int64_t cap = 1;
    for (int j = 0; j < d; ++j) cap *= 10;
    auto inst = generate_instance(static_cast<std::int64_t>(rng.bounded(cap)), d);
    const PolicyParams& policy = i % 2 ? sharp : uniform;
    SearchTree tree = build_tree(inst, policy, cfg, rng.next());
    audit_tree(tree);
  }
}

TEST_CASE("a teacher-pretrained policy reaches terminals in nearly every d=2 tree") {
  Rng rng(616);
  std::vector<Chain> traces;
  for (int i = 0; i < 50; ++i)
    traces.push_back(teacher_trace(generate_instance(static_cast<std::int64_t>(rng.bounded(100)), 2)));
  PolicyParams policy = make_zero_policy();
  for (int step = 0; step < 50; ++step) policy = sft_update(std::move(policy), traces, 5.0);

  MctsConfig cfg;
  int with_terminal = 0;
  for (int i = 0; i < 200; ++i) {
    auto inst = generate_instance(static_cast<std::int64_t>(rng.bounded(100)), 2);
    SearchTree tree = build_tree(inst, policy, cfg, rng.next());
    for (const TreeNode& n : tree.nodes)
      if (n.terminal && n.visits >= 1) {
        ++with_terminal;
        break;
      }
  }
  CHECK(with_terminal >= 190);  // >= 95% of 200 seeded trees
}

TEST_CASE("tree dumps round-trip") {
  auto inst = generate_instance(314, 3);
  MctsConfig cfg;
  SearchTree tree = build_tree(inst, testing::make_saturated_policy(), cfg, 7);
  auto dir = std::filesystem::temp_directory_path() / "propa_mcts_test";
  std::filesystem::create_directories(dir);
  save_tree(dir / "tree.txt", tree);
  SearchTree loaded = load_tree(dir / "tree.txt");
  REQUIRE(loaded.nodes.size() == tree.nodes.size());
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    CHECK(loaded.nodes[i].parent_id == tree.nodes[i].parent_id);
    CHECK(loaded.nodes[i].step.id == tree.nodes[i].step.id);
    CHECK(loaded.nodes[i].reward_sum == tree.nodes[i].reward_sum);
    CHECK(loaded.nodes[i].visits == tree.nodes[i].visits);
    CHECK(loaded.nodes[i].terminal == tree.nodes[i].terminal);
  }
  REQUIRE(loaded.rollout_log.size() == tree.rollout_log.size());
  for (size_t i = 0; i < tree.rollout_log.size(); ++i) {
    CHECK(loaded.rollout_log[i].node_id == tree.rollout_log[i].node_id);
    CHECK(loaded.rollout_log[i].reward == tree.rollout_log[i].reward);
    CHECK(loaded.rollout_log[i].continuation.size() == tree.rollout_log[i].continuation.size());
  }
  CHECK(loaded.instance.truth == tree.instance.truth);
  CHECK(loaded.seed == tree.seed);
}

TEST_SUITE_END();
