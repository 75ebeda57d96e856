#include "propa/env.hpp"

#include <atomic>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace propa {

namespace {
std::atomic<std::uint64_t> g_verify_calls{0};
constexpr int kMaxDepth = 8;
constexpr int kPositionSlots = 8;
constexpr int kDigitSlots = 11;  // digits 0..9 + sentinel
constexpr int kDigitBase = kVocabSize + kPositionSlots;
}  // namespace

void Chain::append(StepToken step, int max_depth) {
  if (is_terminal()) throw std::invalid_argument("append after terminal ANSWER step");
  if (length() >= max_depth) throw std::invalid_argument("chain at max depth");
  steps.push_back(step);
}

ProblemInstance generate_instance(std::int64_t seed, int difficulty) {
  if (difficulty < 1 || difficulty > 5)
    throw std::invalid_argument("difficulty must be in [1,5]");
  std::uint64_t u = static_cast<std::uint64_t>(seed < 0 ? -seed : seed);
  std::uint64_t divisor = 1;
  for (int i = 1; i < difficulty; ++i) divisor *= 10;
  ProblemInstance inst;
  inst.instance_id = seed;
  inst.inputs.resize(difficulty);
  for (int i = 0; i < difficulty; ++i) {
    inst.inputs[i] = static_cast<int>((u / divisor) % 10);
    divisor /= 10;
  }
  for (int g : inst.inputs) inst.truth += g;
  return inst;
}

int verify_answer(const Chain& chain) {
  g_verify_calls.fetch_add(1, std::memory_order_relaxed);
  if (!chain.is_terminal())
    throw NotTerminalError("verify_answer on a chain without a terminal ANSWER");
  return chain.steps.back().value() == chain.instance.truth ? 1 : 0;
}

Chain teacher_trace(const ProblemInstance& instance) {
  Chain chain{instance, {}};
  int sum = 0;
  for (int g : instance.inputs) {
    sum += g;
    chain.steps.push_back(StepToken::reason(sum));
  }
  chain.steps.push_back(StepToken::answer(sum));
  return chain;
}

std::array<int, 3> feature_indices(const Chain& chain) {
  if (chain.length() > kMaxDepth) throw std::invalid_argument("chain longer than max depth");
  int last = chain.empty() ? 0 : chain.steps.back().id;
  int pos = std::min(chain.length(), kPositionSlots - 1);
  int consumed = chain.reason_count();
  int d = static_cast<int>(chain.instance.inputs.size());
  int digit = consumed < d ? chain.instance.inputs[consumed] : 10;
  return {last, kVocabSize + pos, kDigitBase + digit};
}

std::vector<double> featurize(const Chain& chain) {
  std::vector<double> phi(EnvSpec{}.feature_dim, 0.0);
  for (int idx : feature_indices(chain)) phi[idx] = 1.0;
  return phi;
}

std::uint64_t verify_call_count() { return g_verify_calls.load(std::memory_order_relaxed); }
void reset_verify_call_count() { g_verify_calls.store(0, std::memory_order_relaxed); }

void save_instances(const std::filesystem::path& file, const std::vector<ProblemInstance>& set) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const auto& inst : set) {
    out << inst.instance_id << ',' << inst.inputs.size();
    for (int g : inst.inputs) out << ',' << g;
    out << ',' << inst.truth << '\n';
  }
}

std::vector<ProblemInstance> load_instances(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::vector<ProblemInstance> set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<long long> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::stoll(cell));
    if (vals.size() < 3) throw std::runtime_error("malformed instance record: " + line);
    ProblemInstance inst;
    inst.instance_id = vals[0];
    size_t d = static_cast<size_t>(vals[1]);
    if (vals.size() != d + 3) throw std::runtime_error("malformed instance record: " + line);
    for (size_t i = 0; i < d; ++i) inst.inputs.push_back(static_cast<int>(vals[2 + i]));
    inst.truth = static_cast<int>(vals.back());
    set.push_back(std::move(inst));
  }
  return set;
}

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_real(const std::string& s) {
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace propa
