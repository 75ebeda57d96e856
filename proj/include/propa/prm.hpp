#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "propa/env.hpp"

// The process reward model P_phi: a linear value head over the shared chain
// features, trained by MSE on (chain, Q) pairs collected from final-epoch
// search trees, and served clipped to [0,1] as the rollout substitute.

namespace propa {

struct PRMParams {
  std::vector<double> weights;  // feature_dim
  double bias = 0.0;
};

using PrmSample = std::pair<Chain, double>;

// clip(w . phi(chain) + b, 0, 1).
double prm_predict(const PRMParams& prm, const Chain& chain);

// MSE of the unclipped prediction against the targets.
double prm_mse(const PRMParams& prm, std::span<const PrmSample> data);

// d MSE / d (weights, bias); last entry of the returned vector is the bias
// derivative.
std::vector<double> prm_mse_gradient(const PRMParams& prm, std::span<const PrmSample> data);

struct PrmTrainResult {
  PRMParams params;
  std::vector<double> mse_history;  // monotone nonincreasing
  int iterations = 0;
};

// Minimizes the MSE by conjugate-direction descent with exact line search on
// the normal-equation quadratic, stopping when the loss improves by less
// than 1e-8 or after 10000 iterations; lands within 1e-4 of the closed-form
// least-squares residual. Warns on stderr below feature_dim/4 samples.
PrmTrainResult train_prm(std::span<const PrmSample> data);

// Checkpoint: `feature_dim` header, weight line, bias line; 17-digit
// round-trip.
void save_prm(const std::filesystem::path& file, const PRMParams& prm);
PRMParams load_prm(const std::filesystem::path& file);

}  // namespace propa
