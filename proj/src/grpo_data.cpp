#include "propa/grpo_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "propa/mcts.hpp"

namespace propa {

std::vector<Group> extract_groups(const SearchTree& tree) {
  std::vector<int> parents;
  for (const TreeNode& n : tree.nodes)
    if (!n.children.empty()) parents.push_back(n.node_id);
  std::sort(parents.begin(), parents.end(), [&](int a, int b) {
    const TreeNode& na = tree.nodes[a];
    const TreeNode& nb = tree.nodes[b];
    return na.depth != nb.depth ? na.depth < nb.depth : na.node_id < nb.node_id;
  });

  std::vector<Group> out;
  for (int pid : parents) {
    Group group;
    for (int cid : tree.nodes[pid].children) {
      const TreeNode& child = tree.nodes[cid];
      if (child.visits >= 1)
        group.children.push_back(GroupChild{child.step, child.reward_sum / child.visits});
    }
    if (group.children.size() >= 2) {
      group.parent_chain = tree.chain_of(pid);
      out.push_back(std::move(group));
    }
  }
  return out;
}

double group_delta(const Group& group) {
  if (group.children.size() < 2)
    throw std::invalid_argument("group delta needs at least two children");
  double lo = group.children.front().q, hi = lo;
  for (const GroupChild& c : group.children) {
    lo = std::min(lo, c.q);
    hi = std::max(hi, c.q);
  }
  return hi - lo;
}

std::vector<Group> filter_groups(std::vector<Group> groups, double tau) {
  std::vector<Group> out;
  for (Group& g : groups)
    if (group_delta(g) >= tau) out.push_back(std::move(g));
  return out;
}

double log_transform(double q, double alpha) {
  double v = std::log1p(alpha * q) / std::log1p(alpha);
  return std::clamp(v, 0.0, 1.0);
}

AdvantageGroup compute_advantages(const Group& group, double alpha, bool use_log_transform) {
  AdvantageGroup out;
  out.group = group;
  for (const GroupChild& c : group.children)
    out.q_transformed.push_back(use_log_transform ? log_transform(c.q, alpha) : c.q);

  double mean = 0.0;
  for (double v : out.q_transformed) mean += v;
  mean /= static_cast<double>(out.q_transformed.size());
  double var = 0.0;
  for (double v : out.q_transformed) var += (v - mean) * (v - mean);
  var /= static_cast<double>(out.q_transformed.size());
  double std_dev = std::sqrt(var);
  if (std_dev < 1e-9)
    throw DegenerateGroupError("all transformed child values equal");
  for (double v : out.q_transformed) out.advantages.push_back((v - mean) / std_dev);
  return out;
}

void append_group_audit(const std::filesystem::path& file,
                        const std::vector<AdvantageGroup>& groups) {
  std::ofstream out(file, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const AdvantageGroup& ag : groups) {
    for (size_t i = 0; i < ag.group.children.size(); ++i) {
      out << ag.group.parent_chain.instance.instance_id << ','
          << ag.group.parent_chain.length() << ',' << ag.group.children[i].step.id << ','
          << format_real(ag.group.children[i].q) << ',' << format_real(ag.q_transformed[i]) << ','
          << format_real(ag.advantages[i]) << '\n';
    }
  }
}

}  // namespace propa
