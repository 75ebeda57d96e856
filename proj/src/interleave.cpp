#include "propa/interleave.hpp"

#include <algorithm>
#include <future>

#include "propa/inference.hpp"

namespace propa {

ActivationSet build_activation_set(std::span<const ProblemInstance> instances) {
  if (instances.empty()) throw std::invalid_argument("empty instance set");
  ActivationSet d_act;
  for (const ProblemInstance& inst : instances) d_act[inst.instance_id] = teacher_trace(inst);
  return d_act;
}

bool tree_succeeded(const SearchTree& tree) {
  for (const TreeNode& n : tree.nodes)
    if (n.terminal && n.visits >= 1 && n.reward_sum > 0.0) return true;
  return false;
}

namespace {
std::vector<AdvantageGroup> surviving_groups(const SearchTree& tree, const GrpoConfig& grpo) {
  std::vector<AdvantageGroup> out;
  for (Group& g : filter_groups(extract_groups(tree), grpo.tau)) {
    try {
      out.push_back(compute_advantages(g, grpo.alpha, grpo.use_log_transform));
    } catch (const DegenerateGroupError&) {
      // contrast lost despite the filter (tau = 0 corner); drop the group
    }
  }
  return out;
}
}  // namespace

PartitionDecision partition_tree(const SearchTree& tree, const GrpoConfig& grpo) {
  PartitionDecision decision;
  decision.grpo_routed = tree_succeeded(tree);
  if (decision.grpo_routed) decision.groups = surviving_groups(tree, grpo);
  return decision;
}

std::uint64_t tree_seed(std::uint64_t master_seed, int epoch, int instance_index) {
  return mix_seed(master_seed, 0x7472656533ULL + static_cast<std::uint64_t>(epoch),
                  static_cast<std::uint64_t>(instance_index));
}

PolicyParams maybe_flush(PolicyParams params, long call_count, int epoch, Partitions& parts,
                         const ActivationSet& d_act, std::span<const ProblemInstance> train,
                         const ScheduleConfig& schedule, const GrpoConfig& grpo,
                         std::vector<FlushRecord>& flush_log) {
  if (call_count % schedule.lambda_period != 0) return params;

  FlushRecord rec;
  rec.epoch = epoch;
  rec.flush_idx = static_cast<int>(flush_log.size());
  rec.n_groups = static_cast<int>(parts.d_grpo.size());
  rec.n_sft_instances = static_cast<int>(parts.d_sft.size() + parts.d_sft_paths.size());
  rec.n_grpo_instances = parts.grpo_routed_since_flush;

  // update order is fixed: GRPO batches first, then SFT recovery
  for (size_t b = 0; b < parts.d_grpo.size(); b += schedule.grpo_batch) {
    size_t end = std::min(parts.d_grpo.size(), b + schedule.grpo_batch);
    std::span<const AdvantageGroup> chunk(parts.d_grpo.data() + b, end - b);
    ReferenceSnapshot ref = snapshot(params);
    params = grpo_update(std::move(params), ref, chunk, grpo.lr, grpo.clip_eps, grpo.kl_beta);
  }
  if (!parts.d_sft.empty() || !parts.d_sft_paths.empty()) {
    std::vector<Chain> traces;
    for (int j : parts.d_sft) traces.push_back(d_act.at(train[j].instance_id));
    for (const Chain& c : parts.d_sft_paths) traces.push_back(c);
    params = sft_update(std::move(params), traces, schedule.lr);
  }

  parts.d_grpo.clear();
  parts.d_sft.clear();
  parts.d_sft_paths.clear();
  parts.grpo_routed_since_flush = 0;
  parts.sft_routed_since_flush = 0;
  flush_log.push_back(rec);
  return params;
}

namespace {
// Builds trees for train[first..first+count) against a frozen policy,
// deterministically regardless of the worker count.
std::vector<SearchTree> build_window(std::span<const ProblemInstance> train, int first, int count,
                                     const PolicyParams& policy, const MctsConfig& cfg,
                                     std::uint64_t master_seed, int epoch, int workers) {
  std::vector<SearchTree> trees(count);
  auto build_range = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i)
      trees[i] = build_tree(train[first + i], policy, cfg,
                            tree_seed(master_seed, epoch, first + i));
  };
  if (workers <= 1 || count <= 1) {
    build_range(0, count);
    return trees;
  }
  int n_jobs = std::min(workers, count);
  std::vector<std::future<void>> jobs;
  int chunk = (count + n_jobs - 1) / n_jobs;
  for (int j = 0; j < n_jobs; ++j) {
    int lo = j * chunk;
    int hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    jobs.push_back(std::async(std::launch::async, build_range, lo, hi));
  }
  for (auto& job : jobs) job.get();
  return trees;
}
}  // namespace

TrainResult run_training(std::span<const ProblemInstance> train,
                         std::span<const ProblemInstance> val, const TrainOptions& options,
                         PolicyParams initial_policy) {
  const ScheduleConfig& schedule = options.schedule;
  // equality degenerates to the pure-SFT baseline: zero interleaved epochs
  if (schedule.epochs_activation > schedule.epochs_total)
    throw std::invalid_argument("epochs_activation must not exceed epochs_total");

  TrainResult result;
  PolicyParams policy = std::move(initial_policy);
  ActivationSet d_act = build_activation_set(train);
  std::vector<Chain> act_traces;
  for (const ProblemInstance& inst : train) act_traces.push_back(d_act.at(inst.instance_id));

  auto eval_epoch = [&](int epoch) {
    double acc = val.empty() ? 0.0 : greedy_accuracy(policy, val, options.mcts.max_depth);
    result.epochs.push_back(EpochRecord{epoch, acc});
    result.epoch_checkpoints.push_back(policy);
  };

  for (int epoch = 0; epoch < schedule.epochs_activation; ++epoch) {
    policy = sft_update(std::move(policy), act_traces, schedule.lr);
    eval_epoch(epoch);
  }
  result.activation_policy = policy;

  Partitions parts;
  long call_count = 0;
  GrpoConfig grpo = options.grpo;
  if (options.variant == TrainVariant::NoTransform) grpo.use_log_transform = false;

  for (int epoch = schedule.epochs_activation; epoch < schedule.epochs_total; ++epoch) {
    bool final_epoch = epoch == schedule.epochs_total - 1;
    int n = static_cast<int>(train.size());
    int processed = 0;
    while (processed < n) {
      // window ends at the next flush boundary so trees see a frozen policy
      int until_flush = schedule.lambda_period -
                        static_cast<int>(call_count % schedule.lambda_period);
      int count = std::min(until_flush, n - processed);
      std::vector<SearchTree> trees = build_window(train, processed, count, policy, options.mcts,
                                                   options.master_seed, epoch, options.workers);
      for (int i = 0; i < count; ++i) {
        int j = processed + i;
        SearchTree& tree = trees[i];
        bool succeeded = tree_succeeded(tree);

        switch (options.variant) {
          case TrainVariant::GrpoOnly: {
            // Table 3: GRPO applied to every tree, no SFT recovery
            auto groups = surviving_groups(tree, grpo);
            parts.d_grpo.insert(parts.d_grpo.end(), groups.begin(), groups.end());
            parts.grpo_routed_since_flush += 1;
            break;
          }
          case TrainVariant::SftOnly: {
            if (succeeded) {
              auto [node_id, mean_q] = select_terminal(tree);
              parts.d_sft_paths.push_back(tree.chain_of(node_id));
              parts.grpo_routed_since_flush += 1;
            } else {
              parts.d_sft.push_back(j);
              parts.sft_routed_since_flush += 1;
            }
            break;
          }
          default: {
            PartitionDecision decision = partition_tree(tree, grpo);
            if (decision.grpo_routed) {
              parts.d_grpo.insert(parts.d_grpo.end(), decision.groups.begin(),
                                  decision.groups.end());
              parts.grpo_routed_since_flush += 1;
            } else {
              parts.d_sft.push_back(j);
              parts.sft_routed_since_flush += 1;
            }
            break;
          }
        }

        if (final_epoch) {
          if (!options.prm_successful_trees_only || succeeded) {
            for (const TreeNode& node : tree.nodes)
              if (node.visits >= 1)
                result.d_prm.emplace_back(tree.chain_of(node.node_id), tree.q(node.node_id));
          }
          if (options.keep_final_trees) result.final_epoch_trees.push_back(tree);
        }

        ++call_count;
        policy = maybe_flush(std::move(policy), call_count, epoch, parts, d_act, train, schedule,
                             grpo, result.flushes);
      }
      processed += count;
    }
    eval_epoch(epoch);
  }

  result.policy = std::move(policy);
  return result;
}

}  // namespace propa
