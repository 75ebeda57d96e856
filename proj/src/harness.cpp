#include "propa/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "propa/inference.hpp"

namespace propa {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long to_int(const std::string& field, const std::string& value) {
  try {
    size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected an integer, got '" + value + "'");
  }
}

double to_real(const std::string& field, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& field, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(field, "expected true/false, got '" + value + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(section + ".<line " + std::to_string(line_no) + ">",
                        "expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    std::string field = section.empty() ? key : section + "." + key;

    if (field == "run.master_seed") cfg.master_seed = static_cast<std::uint64_t>(to_int(field, value));
    else if (field == "run.output_dir") cfg.output_dir = value;
    else if (field == "run.workers") cfg.workers = static_cast<int>(to_int(field, value));
    else if (field == "data.n_train") cfg.data.n_train = static_cast<int>(to_int(field, value));
    else if (field == "data.n_val") cfg.data.n_val = static_cast<int>(to_int(field, value));
    else if (field == "data.n_test") cfg.data.n_test = static_cast<int>(to_int(field, value));
    else if (field == "data.d_min") cfg.data.d_min = static_cast<int>(to_int(field, value));
    else if (field == "data.d_max") cfg.data.d_max = static_cast<int>(to_int(field, value));
    else if (field == "mcts.exploration_c") cfg.mcts.exploration_c = to_real(field, value);
    else if (field == "mcts.k") cfg.mcts.expand_children = static_cast<int>(to_int(field, value));
    else if (field == "mcts.iterations") cfg.mcts.iterations = static_cast<int>(to_int(field, value));
    else if (field == "mcts.max_depth") cfg.mcts.max_depth = static_cast<int>(to_int(field, value));
    else if (field == "sampling.temperature") cfg.mcts.sampling.temperature = to_real(field, value);
    else if (field == "sampling.top_k") cfg.mcts.sampling.top_k = static_cast<int>(to_int(field, value));
    else if (field == "sampling.top_p") cfg.mcts.sampling.top_p = to_real(field, value);
    else if (field == "schedule.lambda") cfg.schedule.lambda_period = static_cast<int>(to_int(field, value));
    else if (field == "schedule.epochs_total") cfg.schedule.epochs_total = static_cast<int>(to_int(field, value));
    else if (field == "schedule.epochs_activation") cfg.schedule.epochs_activation = static_cast<int>(to_int(field, value));
    else if (field == "schedule.lr") cfg.schedule.lr = to_real(field, value);
    else if (field == "schedule.grpo_batch") cfg.schedule.grpo_batch = static_cast<int>(to_int(field, value));
    else if (field == "grpo.tau") cfg.grpo.tau = to_real(field, value);
    else if (field == "grpo.alpha") cfg.grpo.alpha = to_real(field, value);
    else if (field == "grpo.clip_eps") cfg.grpo.clip_eps = to_real(field, value);
    else if (field == "grpo.kl_beta") cfg.grpo.kl_beta = to_real(field, value);
    else if (field == "grpo.lr") cfg.grpo.lr = to_real(field, value);
    else if (field == "inference.strategy") cfg.strategy = value;
    else if (field == "inference.best_n") cfg.best_n = static_cast<int>(to_int(field, value));
    else if (field == "prm.successful_trees_only") cfg.prm_successful_trees_only = to_bool(field, value);
    else throw ConfigError(field, "unknown field");
  }
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config", "cannot read " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void validate_config(RunConfig& cfg) {
  if (cfg.mcts.sampling.top_k > cfg.env.vocab_size) {
    std::fprintf(stderr, "propa: warning: top_k %d clamped to vocab size %d\n",
                 cfg.mcts.sampling.top_k, cfg.env.vocab_size);
    cfg.mcts.sampling.top_k = cfg.env.vocab_size;
  }
  if (cfg.mcts.sampling.top_k < 1) throw ConfigError("sampling.top_k", "must be >= 1");
  if (cfg.mcts.sampling.temperature <= 0) throw ConfigError("sampling.temperature", "must be > 0");
  if (cfg.mcts.sampling.top_p <= 0 || cfg.mcts.sampling.top_p > 1)
    throw ConfigError("sampling.top_p", "must be in (0,1]");
  if (cfg.mcts.expand_children < 2) throw ConfigError("mcts.k", "must be >= 2");
  if (cfg.mcts.iterations < 1) throw ConfigError("mcts.iterations", "must be >= 1");
  if (cfg.schedule.epochs_activation > cfg.schedule.epochs_total)
    throw ConfigError("schedule.epochs_activation", "must not exceed epochs_total");
  if (cfg.data.d_min < 1 || cfg.data.d_max > 5 || cfg.data.d_min > cfg.data.d_max)
    throw ConfigError("data.d_min", "difficulty range must satisfy 1 <= d_min <= d_max <= 5");
  if (cfg.grpo.tau < 0) throw ConfigError("grpo.tau", "must be >= 0");
  if (cfg.workers < 1) throw ConfigError("run.workers", "must be >= 1");
  if (cfg.strategy != "mcts" && cfg.strategy != "greedy" && cfg.strategy != "bestn")
    throw ConfigError("inference.strategy", "must be one of mcts|greedy|bestn");
}

std::vector<ProblemInstance> make_dataset(const DatasetConfig& cfg, int count,
                                          std::uint64_t master_seed, std::uint64_t purpose_tag) {
  Rng rng(mix_seed(master_seed, purpose_tag));
  std::vector<ProblemInstance> out;
  out.reserve(count);
  int span = cfg.d_max - cfg.d_min + 1;
  for (int i = 0; i < count; ++i) {
    int d = cfg.d_min + i % span;
    std::uint64_t cap = 1;
    for (int j = 0; j < d; ++j) cap *= 10;
    out.push_back(generate_instance(static_cast<std::int64_t>(rng.bounded(cap)), d));
  }
  return out;
}

std::vector<ProblemInstance> train_split(const RunConfig& cfg) {
  return make_dataset(cfg.data, cfg.data.n_train, cfg.master_seed, 0x7261696eULL);
}
std::vector<ProblemInstance> val_split(const RunConfig& cfg) {
  return make_dataset(cfg.data, cfg.data.n_val, cfg.master_seed, 0x76616cULL);
}
std::vector<ProblemInstance> test_split(const RunConfig& cfg) {
  return make_dataset(cfg.data, cfg.data.n_test, cfg.master_seed, 0x74657374ULL);
}

void write_metrics_csv(const std::filesystem::path& file, const TrainResult& result) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "epoch,flush_idx,n_grpo_groups,n_sft_instances,eval_accuracy\n";
  size_t fi = 0;
  for (const EpochRecord& er : result.epochs) {
    while (fi < result.flushes.size() && result.flushes[fi].epoch <= er.epoch) {
      const FlushRecord& fr = result.flushes[fi];
      out << fr.epoch << ',' << fr.flush_idx << ',' << fr.n_groups << ',' << fr.n_sft_instances
          << ",-1\n";
      ++fi;
    }
    out << er.epoch << ",-1,-1,-1," << format_real(er.eval_accuracy) << '\n';
  }
  for (; fi < result.flushes.size(); ++fi) {
    const FlushRecord& fr = result.flushes[fi];
    out << fr.epoch << ',' << fr.flush_idx << ',' << fr.n_groups << ',' << fr.n_sft_instances
        << ",-1\n";
  }
}

double spearman_vs_index(std::span<const double> values) {
  const int n = static_cast<int>(values.size());
  if (n < 2) return 0.0;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] < values[b]; });
  std::vector<double> rank(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double avg = (i + j) / 2.0;  // average rank for ties
    for (int k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double mean_rank = (n - 1) / 2.0;
  double cov = 0.0, var_r = 0.0, var_i = 0.0;
  for (int k = 0; k < n; ++k) {
    double di = k - mean_rank;
    double dr = rank[k] - mean_rank;
    cov += di * dr;
    var_r += dr * dr;
    var_i += di * di;
  }
  if (var_r == 0.0) return 0.0;
  return cov / std::sqrt(var_r * var_i);
}

EvalSummary run_eval(const RunConfig& cfg, const PolicyParams& policy, const PRMParams& prm,
                     const std::string& strategy, std::span<const ProblemInstance> instances) {
  EvalSummary summary;
  long correct = 0;
  for (int rep = 0; rep < 3; ++rep) {
    for (size_t i = 0; i < instances.size(); ++i) {
      const ProblemInstance& inst = instances[i];
      std::uint64_t seed = mix_seed(cfg.master_seed, 0x6576616cULL + rep, i);
      InferenceResult res;
      double mean_q = -1.0;
      if (strategy == "greedy") {
        res = greedy_search(inst, policy, cfg.mcts.max_depth);
      } else if (strategy == "bestn") {
        res = bestn_search(inst, policy, prm, cfg.best_n, cfg.mcts.sampling, seed,
                           cfg.mcts.max_depth);
        if (res.answered) mean_q = prm_predict(prm, res.chosen_chain);
      } else {
        res = mcts_with_prm(inst, policy, prm, cfg.mcts, seed);
        for (const auto& [node_id, q] : res.terminal_scores) mean_q = std::max(mean_q, q);
      }
      EvalRow row;
      row.instance_id = inst.instance_id;
      row.strategy = strategy;
      row.answer = res.answer;
      row.correct = res.answered && res.answer == inst.truth ? 1 : 0;
      row.mean_q = mean_q;
      row.nodes_expanded = res.nodes_expanded;
      row.fallback_used = res.fallback_used;
      correct += row.correct;
      summary.rows.push_back(std::move(row));
    }
  }
  summary.accuracy =
      summary.rows.empty() ? 0.0 : static_cast<double>(correct) / summary.rows.size();
  return summary;
}

void write_eval_csv(const std::filesystem::path& file, const EvalSummary& summary) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "instance_id,strategy,answer,correct,mean_q,nodes_expanded,fallback_used\n";
  for (const EvalRow& r : summary.rows) {
    out << r.instance_id << ',' << r.strategy << ',' << r.answer << ',' << r.correct << ','
        << format_real(r.mean_q) << ',' << r.nodes_expanded << ',' << (r.fallback_used ? 1 : 0)
        << '\n';
  }
}

namespace {
TrainOptions options_from_config(const RunConfig& cfg, TrainVariant variant,
                                 std::uint64_t master_seed, bool keep_trees) {
  TrainOptions opt;
  opt.schedule = cfg.schedule;
  opt.mcts = cfg.mcts;
  opt.grpo = cfg.grpo;
  opt.variant = variant;
  opt.prm_successful_trees_only = cfg.prm_successful_trees_only;
  opt.keep_final_trees = keep_trees;
  opt.workers = cfg.workers;
  opt.master_seed = master_seed;
  return opt;
}

std::filesystem::path require_output_dir(const RunConfig& cfg) {
  std::string dir = cfg.output_dir;
  if (dir.empty()) {
    const char* env = std::getenv("PROPA_OUTPUT_DIR");
    if (env) dir = env;
  }
  if (dir.empty()) throw ConfigError("run.output_dir", "missing required field");
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p))
    throw ConfigError("run.output_dir", "cannot create directory " + p.string());
  return p;
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "policy_epoch_%02d.txt", epoch);
  return buf;
}
}  // namespace

int cmd_train(const RunConfig& cfg) {
  std::filesystem::path out = require_output_dir(cfg);
  auto train = train_split(cfg);
  auto val = val_split(cfg);
  save_instances(out / "train_instances.txt", train);
  save_instances(out / "val_instances.txt", val);

  TrainOptions opt = options_from_config(cfg, TrainVariant::Full, cfg.master_seed, true);
  TrainResult result = run_training(train, val, opt, make_zero_policy(cfg.env));

  for (size_t e = 0; e < result.epoch_checkpoints.size(); ++e)
    save_policy(out / epoch_name(static_cast<int>(e)), result.epoch_checkpoints[e]);
  save_policy(out / "policy_activation.txt", result.activation_policy);
  save_policy(out / "policy_final.txt", result.policy);

  PrmTrainResult prm = train_prm(result.d_prm);
  save_prm(out / "prm.txt", prm.params);

  write_metrics_csv(out / "metrics.csv", result);

  std::filesystem::path tree_dir = out / "trees";
  std::filesystem::create_directories(tree_dir);
  for (size_t i = 0; i < result.final_epoch_trees.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "tree_%04zu.txt", i);
    save_tree(tree_dir / name, result.final_epoch_trees[i]);
  }

  std::vector<AdvantageGroup> audits;
  for (const SearchTree& tree : result.final_epoch_trees)
    if (tree_succeeded(tree)) {
      auto decision = partition_tree(tree, cfg.grpo);
      audits.insert(audits.end(), decision.groups.begin(), decision.groups.end());
    }
  std::filesystem::remove(out / "groups.csv");
  append_group_audit(out / "groups.csv", audits);

  double final_acc = result.epochs.empty() ? 0.0 : result.epochs.back().eval_accuracy;
  std::cout << "train: epochs=" << cfg.schedule.epochs_total
            << " flushes=" << result.flushes.size() << " d_prm=" << result.d_prm.size()
            << " final_val_accuracy=" << format_real(final_acc) << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& policy_ckpt,
             const std::filesystem::path& prm_ckpt, const std::string& strategy) {
  PolicyParams policy = load_policy(policy_ckpt);
  if (policy.weights.rows != cfg.env.vocab_size || policy.weights.cols != cfg.env.feature_dim)
    throw std::runtime_error("policy checkpoint shape does not match the environment");
  PRMParams prm;
  if (!prm_ckpt.empty()) {
    prm = load_prm(prm_ckpt);
    if (static_cast<int>(prm.weights.size()) != cfg.env.feature_dim)
      throw std::runtime_error("PRM checkpoint dimension does not match the environment");
  } else if (strategy != "greedy") {
    throw std::runtime_error("strategy '" + strategy + "' needs a PRM checkpoint");
  }
  auto test = test_split(cfg);
  EvalSummary summary = run_eval(cfg, policy, prm, strategy, test);
  std::filesystem::path out = require_output_dir(cfg);
  write_eval_csv(out / ("eval_" + strategy + ".csv"), summary);
  std::cout << "eval: strategy=" << strategy << " instances=" << test.size()
            << " accuracy=" << format_real(summary.accuracy) << '\n';
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  std::filesystem::path out = require_output_dir(cfg);
  auto train = train_split(cfg);
  auto val = val_split(cfg);
  auto test = test_split(cfg);

  const std::pair<TrainVariant, std::string> variants[] = {
      {TrainVariant::Full, "full"},
      {TrainVariant::GrpoOnly, "grpo_only"},
      {TrainVariant::SftOnly, "sft_only"},
      {TrainVariant::NoTransform, "no_transform"},
  };
  const std::string strategies[] = {"greedy", "bestn", "mcts"};

  std::ofstream csv(out / "ablate.csv");
  if (!csv) throw std::runtime_error("cannot write ablate.csv");
  csv << "variant,strategy,seed,accuracy\n";

  for (const auto& [variant, vname] : variants) {
    for (int s = 0; s < 3; ++s) {
      std::uint64_t seed = mix_seed(cfg.master_seed, 0xab1a7eULL, s);
      TrainOptions opt = options_from_config(cfg, variant, seed, variant == TrainVariant::NoTransform);
      TrainResult result = run_training(train, val, opt, make_zero_policy(cfg.env));
      PrmTrainResult prm = train_prm(result.d_prm);

      if (variant == TrainVariant::NoTransform && s == 0) {
        // bypass audit: the logged q_transformed must equal q_raw
        std::vector<AdvantageGroup> audits;
        GrpoConfig bypass = cfg.grpo;
        bypass.use_log_transform = false;
        for (const SearchTree& tree : result.final_epoch_trees)
          if (tree_succeeded(tree)) {
            auto decision = partition_tree(tree, bypass);
            audits.insert(audits.end(), decision.groups.begin(), decision.groups.end());
          }
        std::filesystem::remove(out / "groups_no_transform.csv");
        append_group_audit(out / "groups_no_transform.csv", audits);
      }

      RunConfig eval_cfg = cfg;
      eval_cfg.master_seed = seed;
      for (const std::string& strategy : strategies) {
        EvalSummary summary = run_eval(eval_cfg, result.policy, prm.params, strategy, test);
        csv << vname << ',' << strategy << ',' << s << ',' << format_real(summary.accuracy)
            << '\n';
      }
    }
  }
  std::cout << "ablate: wrote " << (out / "ablate.csv").string() << '\n';
  return 0;
}

int cmd_gen_data(const RunConfig& cfg, int count, const std::filesystem::path& out) {
  auto set = make_dataset(cfg.data, count, cfg.master_seed, 0x67656eULL);
  save_instances(out, set);
  std::cout << "gen-data: wrote " << count << " instances to " << out.string() << '\n';
  return 0;
}

int cmd_inspect_tree(const std::filesystem::path& dump) {
  SearchTree tree = load_tree(dump);
  std::cout << "instance " << tree.instance.instance_id << " digits=[";
  for (size_t i = 0; i < tree.instance.inputs.size(); ++i)
    std::cout << (i ? "," : "") << tree.instance.inputs[i];
  std::cout << "] truth=" << tree.instance.truth << " nodes=" << tree.nodes.size()
            << " rollouts=" << tree.rollout_log.size() << '\n';
  std::cout << "node parent step W N terminal Q UCT\n";
  for (const TreeNode& n : tree.nodes) {
    double q = n.visits ? n.reward_sum / n.visits : 0.0;
    double uct = n.is_root ? 0.0
                           : uct_score(n, std::max(tree.nodes[n.parent_id].visits, 1),
                                       tree.config.exploration_c);
    std::cout << n.node_id << ' ' << (n.is_root ? -1 : n.parent_id) << ' '
              << (n.is_root ? std::string("ROOT")
                            : (n.step.is_answer() ? "A" : "R") + std::to_string(n.step.value()))
              << ' ' << format_real(n.reward_sum) << ' ' << n.visits << ' ' << (n.terminal ? 1 : 0)
              << ' ' << format_real(q) << ' ' << format_real(uct) << '\n';
  }
  long replay_ok = 0;
  for (const RolloutRecord& r : tree.rollout_log) {
    Chain chain = tree.chain_of(r.node_id);
    for (StepToken t : r.continuation) chain.steps.push_back(t);
    double expect = chain.is_terminal() ? static_cast<double>(verify_answer(chain)) : 0.0;
    if (expect == r.reward) ++replay_ok;
  }
  std::cout << "rollout replay: " << replay_ok << "/" << tree.rollout_log.size()
            << " rewards reproduced (mismatches expected for PRM-scored trees)\n";
  return 0;
}

}  // namespace propa
