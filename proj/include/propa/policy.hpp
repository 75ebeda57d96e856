#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "propa/common.hpp"
#include "propa/env.hpp"
#include "propa/grpo_data.hpp"

// The step policy pi_theta: a linear-softmax model over chain features with
// temperature/top-k/top-p sampling, exact log-probability gradients, SFT
// cross-entropy updates, and the GRPO clipped-surrogate update.
//
// Distribution, sampling and log-prob are read-only on the params and safe
// to call concurrently; updates need exclusive access.

namespace propa {

struct PolicyParams {
  Matrix weights;  // vocab_size x feature_dim
  std::int64_t version = 0;
};

struct SamplingConfig {
  double temperature = 1.2;
  int top_k = 50;
  double top_p = 0.95;
  std::uint64_t rng_seed = 0;
};

// Frozen copy of the policy taken at GRPO batch start; the KL reference.
struct ReferenceSnapshot {
  Matrix weights;
};

PolicyParams make_zero_policy(const EnvSpec& spec = EnvSpec{});
ReferenceSnapshot snapshot(const PolicyParams& params);

// softmax(W phi(chain)); entries sum to 1 within 1e-12.
std::vector<double> step_distribution(const PolicyParams& params, const Chain& chain);

// Temperature-scaled, top-k then top-p truncated, renormalized draw.
// Temperatures below 1e-6 short-circuit to argmax. Ties in truncation and
// argmax resolve to the lower token id. Consumes exactly one uniform draw
// (none on the argmax path).
StepToken sample_step(const PolicyParams& params, const Chain& chain, const SamplingConfig& cfg,
                      Rng& rng);

StepToken greedy_step(const PolicyParams& params, const Chain& chain);

struct LogProbGrad {
  double log_prob = 0.0;
  Matrix grad;  // d log pi(step|chain) / d W = (onehot(step) - pi) outer phi
};

LogProbGrad log_prob_and_grad(const PolicyParams& params, const Chain& chain, StepToken step);

// Mean token-level NLL of the traces under the policy.
double sft_loss(const PolicyParams& params, std::span<const Chain> traces);

// One full-batch gradient step on the mean token-level NLL.
PolicyParams sft_update(PolicyParams params, std::span<const Chain> traces, double lr);

// Exact token-level KL(pi_theta(.|chain) || pi_ref(.|chain)) over the vocabulary.
double kl_divergence(const PolicyParams& params, const ReferenceSnapshot& ref, const Chain& chain);

// Mean over children of min(r A, clip(r, 1-eps, 1+eps) A) - beta KL, with
// r = pi_theta(step|parent) / pi_ref(step|parent). Each child contributes
// only its single next-step token (localized update).
double grpo_objective(const PolicyParams& params, const ReferenceSnapshot& ref,
                      std::span<const AdvantageGroup> batch, double clip_eps, double kl_beta);

// One gradient ascent step on the objective above. Rejects malformed groups
// (fewer than two children or advantages out of step with children).
PolicyParams grpo_update(PolicyParams params, const ReferenceSnapshot& ref,
                         std::span<const AdvantageGroup> batch, double lr, double clip_eps,
                         double kl_beta);

// Checkpoint: header `vocab_size feature_dim version`, then one row of
// weights per line; round-trips bit-exactly at 17 significant digits.
void save_policy(const std::filesystem::path& file, const PolicyParams& params);
PolicyParams load_policy(const std::filesystem::path& file);

}  // namespace propa
