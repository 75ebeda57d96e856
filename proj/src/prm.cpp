#include "propa/prm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace propa {

namespace {
constexpr int kDim = 111;
constexpr int kAug = kDim + 1;  // weights + bias

std::array<int, 4> augmented_indices(const Chain& chain) {
  auto idx = feature_indices(chain);
  return {idx[0], idx[1], idx[2], kDim};
}

double raw_predict(const PRMParams& prm, const Chain& chain) {
  auto idx = feature_indices(chain);
  return prm.weights[idx[0]] + prm.weights[idx[1]] + prm.weights[idx[2]] + prm.bias;
}
}  // namespace

double prm_predict(const PRMParams& prm, const Chain& chain) {
  return std::clamp(raw_predict(prm, chain), 0.0, 1.0);
}

double prm_mse(const PRMParams& prm, std::span<const PrmSample> data) {
  if (data.empty()) throw std::invalid_argument("empty PRM dataset");
  double total = 0.0;
  for (const auto& [chain, target] : data) {
    double e = raw_predict(prm, chain) - target;
    total += e * e;
  }
  return total / static_cast<double>(data.size());
}

std::vector<double> prm_mse_gradient(const PRMParams& prm, std::span<const PrmSample> data) {
  if (data.empty()) throw std::invalid_argument("empty PRM dataset");
  std::vector<double> grad(kAug, 0.0);
  for (const auto& [chain, target] : data) {
    double e = raw_predict(prm, chain) - target;
    for (int j : augmented_indices(chain)) grad[j] += 2.0 * e;
  }
  for (double& g : grad) g /= static_cast<double>(data.size());
  return grad;
}

PrmTrainResult train_prm(std::span<const PrmSample> data) {
  if (data.empty()) throw std::invalid_argument("empty PRM dataset");
  if (static_cast<int>(data.size()) < kDim / 4)
    std::fprintf(stderr, "propa: warning: PRM dataset has %zu samples (< feature_dim/4)\n",
                 data.size());

  // Normal-equation quadratic: MSE(x) = x'Ax - 2c'x + y2 with x = [w; b].
  // The 4-sparse rows make A cheap to accumulate exactly once.
  std::vector<double> A(static_cast<size_t>(kAug) * kAug, 0.0);
  std::vector<double> c(kAug, 0.0);
  double y2 = 0.0;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const auto& [chain, target] : data) {
    auto idx = augmented_indices(chain);
    for (int a : idx)
      for (int b : idx) A[static_cast<size_t>(a) * kAug + b] += inv_n;
    for (int a : idx) c[a] += inv_n * target;
    y2 += inv_n * target * target;
  }

  auto matvec = [&](const std::vector<double>& v, std::vector<double>& out) {
    for (int i = 0; i < kAug; ++i) {
      const double* row = A.data() + static_cast<size_t>(i) * kAug;
      double s = 0.0;
      for (int j = 0; j < kAug; ++j) s += row[j] * v[j];
      out[i] = s;
    }
  };

  std::vector<double> x(kAug, 0.0), r(c), p(c), Ap(kAug, 0.0);
  auto quad_mse = [&]() {
    std::vector<double> Ax(kAug, 0.0);
    matvec(x, Ax);
    double v = y2;
    for (int i = 0; i < kAug; ++i) v += x[i] * (Ax[i] - 2.0 * c[i]);
    return std::max(v, 0.0);
  };

  PrmTrainResult result;
  result.mse_history.push_back(quad_mse());
  double rr = 0.0;
  for (int i = 0; i < kAug; ++i) rr += r[i] * r[i];

  const int max_iters = 10000;
  int it = 0;
  for (; it < max_iters; ++it) {
    if (rr == 0.0) break;
    matvec(p, Ap);
    double pAp = 0.0;
    for (int i = 0; i < kAug; ++i) pAp += p[i] * Ap[i];
    if (pAp <= 0.0) break;  // direction left the positive-curvature span
    double alpha = rr / pAp;
    for (int i = 0; i < kAug; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    double rr_next = 0.0;
    for (int i = 0; i < kAug; ++i) rr_next += r[i] * r[i];
    if ((it + 1) % kAug == 0) {
      // periodic restart against roundoff drift
      std::vector<double> Ax(kAug, 0.0);
      matvec(x, Ax);
      for (int i = 0; i < kAug; ++i) r[i] = c[i] - Ax[i];
      rr_next = 0.0;
      for (int i = 0; i < kAug; ++i) rr_next += r[i] * r[i];
      p = r;
    } else {
      double beta = rr_next / rr;
      for (int i = 0; i < kAug; ++i) p[i] = r[i] + beta * p[i];
    }
    rr = rr_next;

    double mse = quad_mse();
    double prev = result.mse_history.back();
    result.mse_history.push_back(mse);
    if (prev - mse < 1e-8) {
      ++it;
      break;
    }
  }
  result.iterations = it;
  result.params.weights.assign(x.begin(), x.begin() + kDim);
  result.params.bias = x[kDim];
  return result;
}

void save_prm(const std::filesystem::path& file, const PRMParams& prm) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << prm.weights.size() << '\n';
  for (size_t i = 0; i < prm.weights.size(); ++i) {
    if (i) out << ' ';
    out << format_real(prm.weights[i]);
  }
  out << '\n' << format_real(prm.bias) << '\n';
}

PRMParams load_prm(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  size_t dim = 0;
  if (!(in >> dim)) throw std::runtime_error("malformed PRM checkpoint: " + file.string());
  PRMParams prm;
  prm.weights.resize(dim);
  std::string tok;
  for (size_t i = 0; i < dim; ++i) {
    if (!(in >> tok)) throw std::runtime_error("truncated PRM checkpoint: " + file.string());
    prm.weights[i] = parse_real(tok);
  }
  if (!(in >> tok)) throw std::runtime_error("truncated PRM checkpoint: " + file.string());
  prm.bias = parse_real(tok);
  return prm;
}

}  // namespace propa
