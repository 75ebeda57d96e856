#pragma once

#include <filesystem>
#include <vector>

#include "propa/env.hpp"

// Converts finished search trees into GRPO training groups: per-parent child
// groups with Q values, delta filtering, the log contrast transform, and
// group-normalized advantages.

namespace propa {

struct SearchTree;  // mcts.hpp

struct GroupChild {
  StepToken step;
  double q = 0.0;  // W/N of the child node, N >= 1
};

struct Group {
  Chain parent_chain;
  std::vector<GroupChild> children;  // distinct steps, size in [2, k]
};

struct AdvantageGroup {
  Group group;
  std::vector<double> q_transformed;
  std::vector<double> advantages;  // mean 0, unit population std
};

// One group per expanded parent with >= 2 distinct children of N >= 1,
// ordered by (depth, node_id). Children never simulated (N = 0) are dropped;
// parents left with fewer than two children emit nothing.
std::vector<Group> extract_groups(const SearchTree& tree);

// max q - min q over the group's children.
double group_delta(const Group& group);

// Keeps groups with delta >= tau (equality kept).
std::vector<Group> filter_groups(std::vector<Group> groups, double tau);

// clip(log(1 + alpha q) / log(1 + alpha), 0, 1); identity as alpha -> 0.
double log_transform(double q, double alpha);

// Population-std normalization of the (optionally transformed) child Q
// values. Throws DegenerateGroupError when the transformed values carry no
// contrast (std < 1e-9).
AdvantageGroup compute_advantages(const Group& group, double alpha, bool use_log_transform = true);

// Audit record: `instance_id,parent_depth,child_token,q_raw,q_transformed,advantage`.
void append_group_audit(const std::filesystem::path& file, const std::vector<AdvantageGroup>& groups);

}  // namespace propa
