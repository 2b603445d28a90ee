#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <random>
#include <thread>
#include <vector>

namespace fwspde {

/// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` under `master`: splitmix64(master ^ splitmix64(index)).
/// Streams depend only on (master, index), never on the worker that runs them.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index));
}

/// Standard normal source that counts its draws.
class NormalRng {
public:
  explicit NormalRng(std::uint64_t seed) : engine_(seed) {}
  double operator()() {
    ++draws_;
    return dist_(engine_);
  }
  std::int64_t draws() const { return draws_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_;
  std::int64_t draws_ = 0;
};

/// FWSPDE_THREADS if set and positive, else 1.
inline int default_threads() {
  if (const char* env = std::getenv("FWSPDE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

/// Runs fn(i) for i in [0, n) on `threads` workers with static contiguous chunks.
/// The exception of the smallest failing index is rethrown.
template <class Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
  if (n <= 0) return;
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::min<std::int64_t>(n, 256))));
  if (threads == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::int64_t> error_index(threads, n);
  std::vector<std::thread> pool;
  const std::int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      const std::int64_t lo = t * chunk;
      const std::int64_t hi = std::min(n, lo + chunk);
      for (std::int64_t i = lo; i < hi; ++i) {
        try {
          fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
          error_index[t] = i;
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  int first = -1;
  for (int t = 0; t < threads; ++t)
    if (errors[t] && (first < 0 || error_index[t] < error_index[first])) first = t;
  if (first >= 0) std::rethrow_exception(errors[first]);
}

}  // namespace fwspde
