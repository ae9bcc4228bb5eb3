#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace flimcl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Label = int;

// Error hierarchy. Each category maps onto a CLI exit code in the pipeline.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DependencyError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ThresholdUndefinedError : public Error {
 public:
  ThresholdUndefinedError(int cls, const std::string& name)
      : Error("class threshold undefined: no points labeled class " +
              std::to_string(cls) + (name.empty() ? "" : " ('" + name + "')")),
        class_index(cls) {}
  int class_index;
};

inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

// SplitMix64 finalizer; derives independent sub-seeds from a master seed so
// that per-point / per-fold streams do not depend on evaluation order.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t master, Keys... keys) {
  std::uint64_t s = mix_seed(master);
  ((s = mix_seed(s ^ static_cast<std::uint64_t>(keys))), ...);
  return s;
}

using Rng = std::mt19937_64;

// 64-bit FNV-1a, used for config digests recorded in every artifact.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Runs fn(i) for i in [0, n) across worker threads. Results must be written
// into per-index slots by the caller so output order never depends on timing.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned max_threads = 0) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  unsigned workers = max_threads == 0 ? hw : std::min(hw, max_threads);
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace flimcl
