#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace propa {

// ============================================================================
// Errors
// ============================================================================

struct NotTerminalError : std::runtime_error {
  explicit NotTerminalError(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateGroupError : std::runtime_error {
  explicit DegenerateGroupError(const std::string& what) : std::runtime_error(what) {}
};

struct NoTerminalError : std::runtime_error {
  explicit NoTerminalError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string field_name, const std::string& what)
      : std::runtime_error("config field '" + field_name + "': " + what),
        field(std::move(field_name)) {}
};

// ============================================================================
// Deterministic RNG
// ============================================================================

// splitmix64 step; used to derive independent sub-seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t s = a;
  std::uint64_t h = splitmix64(s);
  s ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h = splitmix64(s);
  s ^= c + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return splitmix64(s);
}

// mt19937_64 is bit-specified by the standard; uniform() avoids the
// implementation-defined std::uniform_* distributions so streams replay
// identically across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // [0,1) with 53 random bits
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  std::uint64_t bounded(std::uint64_t n) { return n ? gen_() % n : 0; }

 private:
  std::mt19937_64 gen_;
};

// ============================================================================
// Dense row-major matrix (vocab x feature scale; no BLAS needed)
// ============================================================================

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
};

// Shortest decimal form that round-trips a double (17 significant digits).
std::string format_real(double x);
double parse_real(const std::string& s);

}  // namespace propa
