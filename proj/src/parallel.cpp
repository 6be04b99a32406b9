#include "semigrad/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

namespace semigrad {

int worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("SEMIGRAD_THREADS")) {
    try {
      const int requested = std::stoi(env);
      if (requested >= 1) return requested;
    } catch (const std::exception&) {
      // Malformed values fall back to the hardware default.
    }
  }
  return hw;
}

void parallel_for(std::uint64_t n, const std::function<void(std::uint64_t)>& body) {
  if (n == 0) return;
  constexpr std::uint64_t kChunk = 64;
  const std::uint64_t chunks = (n + kChunk - 1) / kChunk;
  const auto workers =
      static_cast<std::uint64_t>(std::min<std::uint64_t>(worker_count(), chunks));

  std::atomic<std::uint64_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::uint64_t error_index = std::numeric_limits<std::uint64_t>::max();

  auto run = [&] {
    for (;;) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= chunks) return;
      const std::uint64_t end = std::min(n, (c + 1) * kChunk);
      for (std::uint64_t i = c * kChunk; i < end; ++i) {
        try {
          body(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (i < error_index) {
            error_index = i;
            error = std::current_exception();
          }
          next.store(chunks);
          return;
        }
      }
    }
  };

  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::uint64_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 16;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

SampleSummary summarize(std::span<const double> values, std::span<const std::uint8_t> rejected) {
  SampleSummary out;
  std::vector<double> kept;
  kept.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i < rejected.size() && rejected[i]) continue;
    kept.push_back(values[i]);
  }
  out.n_accepted = kept.size();
  if (kept.empty()) return out;
  const auto count = static_cast<double>(kept.size());
  out.mean = pairwise_sum(kept) / count;
  if (kept.size() > 1) {
    for (double& v : kept) v = (v - out.mean) * (v - out.mean);
    out.variance = pairwise_sum(kept) / (count - 1.0);
    out.std_error = std::sqrt(out.variance / count);
  }
  return out;
}

}  // namespace semigrad
