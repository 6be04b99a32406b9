#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace semigrad {

/// Worker count: SEMIGRAD_THREADS if set (>= 1), else hardware concurrency.
int worker_count();

/// Runs body(path_index) for every index in [0, n) across worker threads.
/// Bodies must only write to per-index output slots. Exceptions are rethrown
/// on the calling thread (the one with the lowest path index wins).
void parallel_for(std::uint64_t n, const std::function<void(std::uint64_t)>& body);

/// Fixed-shape pairwise sum. The tree depends only on the input length, so
/// the result is independent of how the inputs were produced.
double pairwise_sum(std::span<const double> values);

/// Mean and standard error of the accepted samples; rejected slots are skipped.
struct SampleSummary {
  double mean = 0.0;
  double std_error = 0.0;
  double variance = 0.0;  // unbiased sample variance
  std::uint64_t n_accepted = 0;
};

SampleSummary summarize(std::span<const double> values, std::span<const std::uint8_t> rejected);

}  // namespace semigrad
