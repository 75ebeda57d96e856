#include "propa/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace propa {

namespace {
constexpr int kMaxDepth = 8;

void check_extendable(const Chain& chain) {
  if (chain.is_terminal()) throw std::invalid_argument("chain already terminal");
  if (chain.length() >= kMaxDepth) throw std::invalid_argument("chain at max depth");
}

std::vector<double> softmax_logits(const PolicyParams& params, const Chain& chain,
                                   double temperature) {
  auto idx = feature_indices(chain);
  const int vocab = params.weights.rows;
  std::vector<double> z(vocab);
  double zmax = -HUGE_VAL;
  for (int t = 0; t < vocab; ++t) {
    const double* row = params.weights.row(t);
    double logit = (row[idx[0]] + row[idx[1]] + row[idx[2]]) / temperature;
    if (!std::isfinite(logit)) throw std::runtime_error("non-finite logit");
    z[t] = logit;
    zmax = std::max(zmax, logit);
  }
  double total = 0.0;
  for (int t = 0; t < vocab; ++t) {
    z[t] = std::exp(z[t] - zmax);
    total += z[t];
  }
  for (int t = 0; t < vocab; ++t) z[t] /= total;
  return z;
}

int argmax_token(const std::vector<double>& p) {
  int best = 0;
  for (int t = 1; t < static_cast<int>(p.size()); ++t)
    if (p[t] > p[best]) best = t;
  return best;
}

// Accumulates outer(gz, phi) into G for the three active feature columns.
void accumulate_sparse(Matrix& G, const std::vector<double>& gz, const std::array<int, 3>& idx) {
  for (int t = 0; t < G.rows; ++t) {
    double* row = G.row(t);
    for (int f : idx) row[f] += gz[t];
  }
}
}  // namespace

PolicyParams make_zero_policy(const EnvSpec& spec) {
  PolicyParams p;
  p.weights = Matrix(spec.vocab_size, spec.feature_dim);
  return p;
}

ReferenceSnapshot snapshot(const PolicyParams& params) { return ReferenceSnapshot{params.weights}; }

std::vector<double> step_distribution(const PolicyParams& params, const Chain& chain) {
  check_extendable(chain);
  return softmax_logits(params, chain, 1.0);
}

StepToken greedy_step(const PolicyParams& params, const Chain& chain) {
  check_extendable(chain);
  auto p = softmax_logits(params, chain, 1.0);
  return StepToken{argmax_token(p)};
}

StepToken sample_step(const PolicyParams& params, const Chain& chain, const SamplingConfig& cfg,
                      Rng& rng) {
  check_extendable(chain);
  if (cfg.temperature < 1e-6) return greedy_step(params, chain);

  auto p = softmax_logits(params, chain, cfg.temperature);
  const int vocab = static_cast<int>(p.size());

  // probability descending, token id ascending on ties
  std::vector<int> order(vocab);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return p[a] > p[b]; });

  int keep = std::min(std::max(cfg.top_k, 1), vocab);

  // top-p: smallest prefix of the kept tokens whose cumulative mass reaches
  // top_p (the crossing token is included)
  double cum = 0.0;
  int nucleus = keep;
  for (int i = 0; i < keep; ++i) {
    cum += p[order[i]];
    if (cum >= cfg.top_p - 1e-15) {
      nucleus = i + 1;
      break;
    }
  }

  double mass = 0.0;
  for (int i = 0; i < nucleus; ++i) mass += p[order[i]];
  double u = rng.uniform() * mass;
  double acc = 0.0;
  for (int i = 0; i < nucleus; ++i) {
    acc += p[order[i]];
    if (u < acc) return StepToken{order[i]};
  }
  return StepToken{order[nucleus - 1]};
}

LogProbGrad log_prob_and_grad(const PolicyParams& params, const Chain& chain, StepToken step) {
  if (step.id < 0 || step.id >= params.weights.rows)
    throw std::invalid_argument("step token outside vocabulary");
  auto p = step_distribution(params, chain);
  auto idx = feature_indices(chain);
  LogProbGrad out;
  out.log_prob = std::log(std::max(p[step.id], 1e-300));
  out.grad = Matrix(params.weights.rows, params.weights.cols);
  std::vector<double> gz(p.size());
  for (int t = 0; t < static_cast<int>(p.size()); ++t) gz[t] = -p[t];
  gz[step.id] += 1.0;
  accumulate_sparse(out.grad, gz, idx);
  return out;
}

double sft_loss(const PolicyParams& params, std::span<const Chain> traces) {
  double total = 0.0;
  long count = 0;
  for (const Chain& trace : traces) {
    Chain prefix{trace.instance, {}};
    for (const StepToken& step : trace.steps) {
      auto p = step_distribution(params, prefix);
      total += -std::log(std::max(p[step.id], 1e-300));
      ++count;
      prefix.steps.push_back(step);
    }
  }
  if (count == 0) throw std::invalid_argument("empty trace batch");
  return total / static_cast<double>(count);
}

PolicyParams sft_update(PolicyParams params, std::span<const Chain> traces, double lr) {
  if (traces.empty()) throw std::invalid_argument("empty trace batch");
  Matrix grad(params.weights.rows, params.weights.cols);
  long count = 0;
  std::vector<double> gz(params.weights.rows);
  for (const Chain& trace : traces) {
    Chain prefix{trace.instance, {}};
    for (const StepToken& step : trace.steps) {
      auto p = step_distribution(params, prefix);
      auto idx = feature_indices(prefix);
      for (int t = 0; t < static_cast<int>(p.size()); ++t) gz[t] = -p[t];
      gz[step.id] += 1.0;
      accumulate_sparse(grad, gz, idx);
      ++count;
      prefix.steps.push_back(step);
    }
  }
  double scale = lr / static_cast<double>(count);
  for (size_t i = 0; i < params.weights.data.size(); ++i)
    params.weights.data[i] += scale * grad.data[i];
  params.version += 1;
  return params;
}

double kl_divergence(const PolicyParams& params, const ReferenceSnapshot& ref,
                     const Chain& chain) {
  auto p = step_distribution(params, chain);
  PolicyParams ref_params{ref.weights, 0};
  auto q = step_distribution(ref_params, chain);
  double kl = 0.0;
  for (size_t t = 0; t < p.size(); ++t)
    kl += p[t] * (std::log(std::max(p[t], 1e-300)) - std::log(std::max(q[t], 1e-300)));
  return std::max(kl, 0.0);
}

namespace {
void check_batch(std::span<const AdvantageGroup> batch) {
  for (const AdvantageGroup& ag : batch) {
    size_t n = ag.group.children.size();
    if (n < 2) throw std::invalid_argument("GRPO group with fewer than two children");
    if (ag.advantages.size() != n || ag.q_transformed.size() != n)
      throw std::invalid_argument("GRPO group advantages out of step with children");
  }
}
}  // namespace

double grpo_objective(const PolicyParams& params, const ReferenceSnapshot& ref,
                      std::span<const AdvantageGroup> batch, double clip_eps, double kl_beta) {
  check_batch(batch);
  PolicyParams ref_params{ref.weights, 0};
  double total = 0.0;
  long count = 0;
  for (const AdvantageGroup& ag : batch) {
    const Chain& parent = ag.group.parent_chain;
    auto p = step_distribution(params, parent);
    auto q = step_distribution(ref_params, parent);
    double kl = 0.0;
    for (size_t t = 0; t < p.size(); ++t)
      kl += p[t] * (std::log(std::max(p[t], 1e-300)) - std::log(std::max(q[t], 1e-300)));
    for (size_t i = 0; i < ag.group.children.size(); ++i) {
      int tok = ag.group.children[i].step.id;
      double a = ag.advantages[i];
      double r = p[tok] / std::max(q[tok], 1e-300);
      double clipped = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps);
      total += std::min(r * a, clipped * a) - kl_beta * kl;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

PolicyParams grpo_update(PolicyParams params, const ReferenceSnapshot& ref,
                         std::span<const AdvantageGroup> batch, double lr, double clip_eps,
                         double kl_beta) {
  if (batch.empty()) throw std::invalid_argument("empty GRPO batch");
  check_batch(batch);
  PolicyParams ref_params{ref.weights, 0};
  Matrix grad(params.weights.rows, params.weights.cols);
  long count = 0;
  const int vocab = params.weights.rows;
  std::vector<double> gz(vocab);
  for (const AdvantageGroup& ag : batch) {
    const Chain& parent = ag.group.parent_chain;
    auto p = step_distribution(params, parent);
    auto q = step_distribution(ref_params, parent);
    auto idx = feature_indices(parent);
    double kl = 0.0;
    for (int t = 0; t < vocab; ++t)
      kl += p[t] * (std::log(std::max(p[t], 1e-300)) - std::log(std::max(q[t], 1e-300)));
    for (size_t i = 0; i < ag.group.children.size(); ++i) {
      int tok = ag.group.children[i].step.id;
      double a = ag.advantages[i];
      double r = p[tok] / std::max(q[tok], 1e-300);
      // surrogate passes gradient only while the unclipped branch is active
      bool active = (a >= 0.0 && r <= 1.0 + clip_eps) || (a < 0.0 && r >= 1.0 - clip_eps);
      for (int t = 0; t < vocab; ++t) {
        double g = 0.0;
        if (active) g += a * r * ((t == tok ? 1.0 : 0.0) - p[t]);
        double logdiff = std::log(std::max(p[t], 1e-300)) - std::log(std::max(q[t], 1e-300));
        g -= kl_beta * p[t] * (logdiff - kl);
        gz[t] = g;
      }
      accumulate_sparse(grad, gz, idx);
      ++count;
    }
  }
  double scale = lr / static_cast<double>(count);
  for (size_t i = 0; i < params.weights.data.size(); ++i)
    params.weights.data[i] += scale * grad.data[i];
  params.version += 1;
  return params;
}

void save_policy(const std::filesystem::path& file, const PolicyParams& params) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << params.weights.rows << ' ' << params.weights.cols << ' ' << params.version << '\n';
  for (int r = 0; r < params.weights.rows; ++r) {
    const double* row = params.weights.row(r);
    for (int c = 0; c < params.weights.cols; ++c) {
      if (c) out << ' ';
      out << format_real(row[c]);
    }
    out << '\n';
  }
}

PolicyParams load_policy(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  int rows = 0, cols = 0;
  std::int64_t version = 0;
  if (!(in >> rows >> cols >> version))
    throw std::runtime_error("malformed policy checkpoint header: " + file.string());
  PolicyParams params;
  params.version = version;
  params.weights = Matrix(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      std::string tok;
      if (!(in >> tok)) throw std::runtime_error("truncated policy checkpoint: " + file.string());
      params.weights.at(r, c) = parse_real(tok);
    }
  return params;
}

}  // namespace propa
