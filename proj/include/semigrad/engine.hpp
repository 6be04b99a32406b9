#pragma once

// Shared per-path driver for the Monte Carlo estimators.

#include "semigrad/estimators.hpp"
#include "semigrad/parallel.hpp"
#include "semigrad/paths.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace semigrad::detail {

struct Outcome {
  double value = 0.0;
  bool rejected = false;
};

inline void validate(const McConfig& cfg) {
  if (!(cfg.t > 0.0) || !std::isfinite(cfg.t)) fail(ErrorCode::InvalidArgument, "t must be > 0");
  if (cfg.n_steps < 1) fail(ErrorCode::InvalidArgument, "n_steps must be >= 1");
  if (cfg.n_paths < 1) fail(ErrorCode::InvalidArgument, "n_paths must be >= 1");
}

/// Evaluates per_path(index, grid) for every path and reduces in index order.
template <typename PathFn>
EstimatorResult run(const std::string& name, const McConfig& cfg, PathFn&& per_path) {
  validate(cfg);
  const TimeGrid grid(cfg.t, cfg.n_steps);
  std::vector<double> values(cfg.n_paths, 0.0);
  std::vector<std::uint8_t> rejected(cfg.n_paths, 0);
  parallel_for(cfg.n_paths, [&](std::uint64_t i) {
    const Outcome o = per_path(i, grid);
    values[i] = o.value;
    rejected[i] = o.rejected ? 1 : 0;
  });
  const SampleSummary s = summarize(values, rejected);

  EstimatorResult r;
  r.estimator = name;
  r.n_paths = cfg.n_paths;
  r.n_rejected = cfg.n_paths - s.n_accepted;
  r.seed = cfg.seed;
  r.grid = grid;
  if (s.n_accepted == 0) fail(ErrorCode::AllPathsBlewUp, name + ": every path blew up");
  r.mean = s.mean;
  r.std_error = s.std_error;
  r.variance = s.variance;
  r.valid = r.rejected_fraction() <= kMaxRejectedFraction;
  return r;
}

struct Simulation {
  NoisePath noise;
  Trajectory traj;
};

inline Simulation simulate(const DiffusionModel& model, const Vec& x0, const TimeGrid& grid,
                           std::uint64_t seed, std::uint64_t index,
                           const IntegrateOptions& opts = {}, std::uint32_t substream = 0) {
  Simulation sim;
  sim.noise = generate_noise(grid, seed, index, model.m, substream);
  sim.traj = integrate_ito(model, x0, grid, sim.noise, opts);
  return sim;
}

inline void check_direction(const DiffusionModel& model, const Vec& v0) {
  if (v0.size() != model.n) fail(ErrorCode::DimensionMismatch, "direction must lie in R^n");
}

inline void check_point(const DiffusionModel& model, const Vec& x0) {
  if (x0.size() != model.n) fail(ErrorCode::DimensionMismatch, "initial point must lie in R^n");
}

/// Fails early (Degenerate) if Y cannot be formed at x0.
inline void check_nondegenerate(const DiffusionModel& model, const Vec& x0) {
  (void)right_inverse(model, 0.0, x0);
}

}  // namespace semigrad::detail
