#include <doctest.h>

#include <cmath>
#include <fstream>

#include "propa/grpo_data.hpp"
#include "propa/mcts.hpp"
#include "test_support.hpp"

using namespace propa;

namespace {

SearchTree bare_tree(const ProblemInstance& inst) {
  SearchTree tree;
  tree.instance = inst;
  TreeNode root;
  root.is_root = true;
  root.visits = 4;
  tree.nodes.push_back(root);
  return tree;
}

int put_child(SearchTree& tree, int parent, StepToken step, double w, int n) {
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

Group make_group(std::vector<double> qs) {
  Group g;
  g.parent_chain = Chain{generate_instance(42, 2), {}};
  int tok = 0;
  for (double q : qs) g.children.push_back(GroupChild{StepToken::reason(tok++), q});
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("grpo_data");

TEST_CASE("group extraction walks expansions root-first") {
  auto inst = generate_instance(42, 2);

  SearchTree one = bare_tree(inst);
  put_child(one, 0, StepToken::reason(4), 1, 2);
  put_child(one, 0, StepToken::reason(5), 0, 2);
  auto groups = extract_groups(one);
  REQUIRE(groups.size() == 1u);
  CHECK(groups[0].parent_chain.empty());
  CHECK(groups[0].children.size() == 2u);
  CHECK(groups[0].children[0].q == 0.5);

  SearchTree two = bare_tree(inst);
  int a = put_child(two, 0, StepToken::reason(4), 2, 3);
  put_child(two, 0, StepToken::reason(3), 0, 1);
  put_child(two, a, StepToken::reason(6), 1, 1);
  put_child(two, a, StepToken::reason(7), 0, 1);
  groups = extract_groups(two);
  REQUIRE(groups.size() == 2u);
  CHECK(groups[0].parent_chain.length() == 0);  // depth order: root expansion first
  CHECK(groups[1].parent_chain.length() == 1);
  CHECK(groups[1].parent_chain.steps[0] == StepToken::reason(4));

  SearchTree lone = bare_tree(inst);
  put_child(lone, 0, StepToken::reason(4), 1, 2);  // dedup left one child
  CHECK(extract_groups(lone).empty());

  SearchTree unvisited = bare_tree(inst);
  put_child(unvisited, 0, StepToken::reason(4), 1, 2);
  put_child(unvisited, 0, StepToken::reason(5), 0, 0);  // N = 0 -> dropped
  CHECK(extract_groups(unvisited).empty());
}

TEST_CASE("group delta fixtures") {
  CHECK(group_delta(make_group({1, 0, 0, 0})) == 1.0);
  CHECK(group_delta(make_group({0.5, 0.5, 0.55})) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(group_delta(make_group({0.3, 0.3, 0.3})) == 0.0);
}

TEST_CASE("filtering keeps the boundary and is idempotent") {
  // exactly representable values so delta == tau is a true equality
  std::vector<Group> groups = {make_group({0.5, 0.55}), make_group({0.25, 0.375}),
                               make_group({0, 1}), make_group({0.4, 0.4})};
  auto kept = filter_groups(groups, 0.125);
  REQUIRE(kept.size() == 2u);  // 0.05 discarded, 0.125 kept at equality, 1.0 kept, 0 discarded
  CHECK(group_delta(kept[0]) == 0.125);
  auto again = filter_groups(kept, 0.125);
  CHECK(again.size() == kept.size());

  CHECK(filter_groups(groups, 0.0).size() == 4u);
}

TEST_CASE("log transform fixtures and limits") {
  CHECK(log_transform(0.0, 10.0) == 0.0);
  CHECK(log_transform(1.0, 10.0) == doctest::Approx(1.0).epsilon(1e-15));
  // direct evaluation of the contrast map at q = 0.5
  CHECK(log_transform(0.5, 10.0) == doctest::Approx(std::log(6.0) / std::log(11.0)).epsilon(1e-12));
  CHECK(log_transform(0.5, 10.0) == doctest::Approx(0.74722).epsilon(1e-5));
  for (double q = 0.0; q <= 1.0; q += 0.125)
    CHECK(std::abs(log_transform(q, 1e-8) - q) < 1e-6);  // alpha -> 0 gives identity
}

TEST_CASE("log transform preserves order") {
  Rng rng(6);
  for (int i = 0; i < 300; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    if (a > b) std::swap(a, b);
    CHECK(log_transform(a, 10.0) <= log_transform(b, 10.0));
  }
}

TEST_CASE("the concave transform amplifies low-end contrast") {
  // slope on [a,b] below 0.3 dominates the slope above 0.7
  for (double a = 0.0; a < 0.3; a += 0.05) {
    double b = a + 0.05;
    double low = (log_transform(b, 10) - log_transform(a, 10)) / (b - a);
    for (double c = 0.7; c < 1.0; c += 0.05) {
      double d = c + 0.05 > 1.0 ? 1.0 : c + 0.05;
      double high = (log_transform(d, 10) - log_transform(c, 10)) / (d - c);
      CHECK(low > high);
    }
  }
}

TEST_CASE("advantage fixture and normalization identity") {
  Group g = make_group({1, 0, 0, 0});
  AdvantageGroup ag = compute_advantages(g, 10.0);
  REQUIRE(ag.advantages.size() == 4u);
  CHECK(ag.advantages[0] == doctest::Approx(1.7320508).epsilon(1e-6));
  for (int i = 1; i < 4; ++i) CHECK(ag.advantages[i] == doctest::Approx(-0.5773503).epsilon(1e-6));

  CHECK_THROWS_AS(compute_advantages(make_group({0.4, 0.4, 0.4, 0.4}), 10.0),
                  DegenerateGroupError);

  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> qs;
    int n = 2 + static_cast<int>(rng.bounded(3));
    for (int i = 0; i < n; ++i) qs.push_back(rng.uniform());
    Group group = make_group(qs);
    if (group_delta(group) < 1e-6) continue;
    AdvantageGroup out = compute_advantages(group, 10.0);
    double mean = 0.0, var = 0.0;
    for (double a : out.advantages) mean += a;
    mean /= n;
    for (double a : out.advantages) var += (a - mean) * (a - mean);
    var /= n;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);

    // argmax invariance: the max-q child carries the max advantage
    size_t q_best = 0, a_best = 0;
    for (size_t i = 1; i < qs.size(); ++i) {
      if (qs[i] > qs[q_best]) q_best = i;
      if (out.advantages[i] > out.advantages[a_best]) a_best = i;
    }
    CHECK(qs[a_best] == qs[q_best]);
  }
}

TEST_CASE("group audit rows carry the transform record") {
  auto dir = std::filesystem::temp_directory_path() / "propa_grpo_test";
  std::filesystem::create_directories(dir);
  auto file = dir / "groups.csv";
  std::filesystem::remove(file);
  AdvantageGroup ag = compute_advantages(make_group({1, 0, 0, 0}), 10.0);
  append_group_audit(file, {ag});
  std::ifstream in(file);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}

TEST_SUITE_END();
