#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "propa/common.hpp"

// The PrefixSum reference environment.
//
// An instance is a sequence of d digits (d in [1,5], digits in [0,9]).
// Vocabulary: REASON(v) for v in [0,45] at ids 0..45, ANSWER(v) for v in
// [0,45] at ids 46..91. A chain is correct iff step i is REASON(prefix sum of
// the first i+1 digits) for i < d and step d is ANSWER(total). The verifier
// checks only the final ANSWER value; process credit comes from search.
//
// Any additional environment must provide the same contract: a binary
// verifier over terminal chains, an exact teacher oracle, and a featurizer
// with a fixed feature_dim.

namespace propa {

enum class StepKind { Reason, Answer };

constexpr int kValueCount = 46;  // values 0..45
constexpr int kVocabSize = 2 * kValueCount;

struct StepToken {
  int id = 0;

  StepKind kind() const { return id < kValueCount ? StepKind::Reason : StepKind::Answer; }
  bool is_answer() const { return id >= kValueCount; }
  int value() const { return is_answer() ? id - kValueCount : id; }

  static StepToken reason(int v) { return StepToken{v}; }
  static StepToken answer(int v) { return StepToken{kValueCount + v}; }

  bool operator==(const StepToken& o) const { return id == o.id; }
};

struct EnvSpec {
  int vocab_size = kVocabSize;
  int max_inputs = 5;
  int max_depth = 8;
  int feature_dim = 111;  // 92 token slots + 8 position slots + 11 digit slots
};

struct ProblemInstance {
  std::int64_t instance_id = 0;
  std::vector<int> inputs;
  int truth = 0;
};

struct Chain {
  ProblemInstance instance;
  std::vector<StepToken> steps;

  int length() const { return static_cast<int>(steps.size()); }
  bool empty() const { return steps.empty(); }
  bool is_terminal() const { return !steps.empty() && steps.back().is_answer(); }
  int reason_count() const {
    int n = 0;
    for (const auto& s : steps) n += s.is_answer() ? 0 : 1;
    return n;
  }

  // Enforces the chain invariants: nothing follows an ANSWER token and the
  // chain never exceeds max_depth.
  void append(StepToken step, int max_depth);
};

// Instance digits are the d low-order decimal digits of |seed|, most
// significant first, so (seed, difficulty) is a pure deterministic encoding
// and seeds 0..10^d-1 enumerate the full instance space.
ProblemInstance generate_instance(std::int64_t seed, int difficulty);

// 1 iff the final ANSWER matches the instance truth. Throws NotTerminalError
// on a chain without a terminal ANSWER. Increments the global call audit.
int verify_answer(const Chain& chain);

// The unique correct chain: REASON over prefix sums, then ANSWER(total).
Chain teacher_trace(const ProblemInstance& instance);

// phi(chain): one-hot(last token, 92) ++ one-hot(min(len, 7), 8) ++
// one-hot(next unconsumed digit or sentinel, 11). The empty chain uses token
// slot 0, which for PrefixSum coincides with "running sum 0". Exactly three
// entries are 1. Chains longer than max_depth are rejected.
std::vector<double> featurize(const Chain& chain);

// The three active feature indices, for sparse inner loops.
std::array<int, 3> feature_indices(const Chain& chain);

// verify_answer call audit, used to prove PRM-guided search never touches
// the verifier.
std::uint64_t verify_call_count();
void reset_verify_call_count();

// Line-delimited instance records: `instance_id,d,digits...,truth`.
void save_instances(const std::filesystem::path& file, const std::vector<ProblemInstance>& set);
std::vector<ProblemInstance> load_instances(const std::filesystem::path& file);

}  // namespace propa
