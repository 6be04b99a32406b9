#include "semigrad/paths.hpp"

#include <cmath>

namespace semigrad {

TimeGrid::TimeGrid(double t_end, int n_steps) : t_end_(t_end), n_steps_(n_steps) {
  if (!(t_end > 0.0) || n_steps < 1) {
    fail(ErrorCode::InvalidArgument, "time grid needs t_end > 0 and n_steps >= 1");
  }
  dt_ = t_end / n_steps;
}

NoisePath generate_noise(const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_index,
                         int m, std::uint32_t substream) {
  if (m < 1) fail(ErrorCode::InvalidArgument, "noise dimension must be >= 1");
  NoisePath noise;
  noise.m = m;
  noise.n_steps = grid.n_steps();
  noise.seed = seed;
  noise.path_index = path_index;
  noise.substream = substream;
  const std::size_t total = static_cast<std::size_t>(grid.n_steps()) * m;
  noise.increments.resize(total);
  const double scale = std::sqrt(grid.dt());
  const rng::StreamId id{seed, path_index, substream};
  std::size_t j = 0;
  for (std::uint32_t block = 0; j < total; ++block) {
    const auto z = rng::normal_pair(id, block);
    noise.increments[j++] = scale * z[0];
    if (j < total) noise.increments[j++] = scale * z[1];
  }
  return noise;
}

namespace {

void check_inputs(const DiffusionModel& model, const Vec& x0, const TimeGrid& grid,
                  const NoisePath& noise) {
  if (x0.size() != model.n) {
    fail(ErrorCode::DimensionMismatch, "initial point has dimension " +
                                           std::to_string(x0.size()) + ", model expects " +
                                           std::to_string(model.n));
  }
  if (noise.m != model.m) {
    fail(ErrorCode::DimensionMismatch, "noise dimension " + std::to_string(noise.m) +
                                           " does not match model noise dimension " +
                                           std::to_string(model.m));
  }
  if (noise.n_steps != grid.n_steps()) {
    fail(ErrorCode::DimensionMismatch, "noise path length differs from the time grid");
  }
  if (model.geometry && model.geometry->constraint_residual(x0) > 1e-8) {
    fail(ErrorCode::InvalidArgument, "initial point is off the manifold");
  }
}

template <typename DriftFn>
Trajectory integrate(const DiffusionModel& model, const Vec& x0, const TimeGrid& grid,
                     const NoisePath& noise, const IntegrateOptions& options, DriftFn&& drift) {
  check_inputs(model, x0, grid, noise);
  const double radius = options.blow_up_radius.value_or(model.blow_up_radius);
  const double dt = grid.dt();

  Trajectory traj;
  traj.grid = grid;
  traj.clock = options.clock;
  traj.states.reserve(static_cast<std::size_t>(grid.n_steps()) + 1);
  traj.states.push_back(x0);

  Vec x = x0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    const double tc = options.clock.at(grid.time(k));
    Vec next = x + model.X(tc, x) * noise.step(k) + drift(tc, x) * dt;
    if (model.geometry) next = model.geometry->retract(next);
    if (!next.allFinite() || next.norm() > radius) {
      traj.blew_up = true;
      traj.blow_up_step = k + 1;
      break;
    }
    traj.states.push_back(next);
    x = next;
  }
  return traj;
}

}  // namespace

Trajectory integrate_ito(const DiffusionModel& model, const Vec& x0, const TimeGrid& grid,
                         const NoisePath& noise, const IntegrateOptions& options) {
  if (model.Z) {
    return integrate(model, x0, grid, noise, options,
                     [&](double t, const Vec& x) { return model.Z(t, x); });
  }
  return integrate_stratonovich(model, x0, grid, noise, options);
}

Trajectory integrate_stratonovich(const DiffusionModel& model, const Vec& x0,
                                  const TimeGrid& grid, const NoisePath& noise,
                                  const IntegrateOptions& options) {
  if (!model.DX) fail(ErrorCode::MissingDerivative, "Stratonovich integration needs DX");
  return integrate(model, x0, grid, noise, options, [&](double t, const Vec& x) {
    return stratonovich_to_ito_drift(model, t, x);
  });
}

}  // namespace semigrad
