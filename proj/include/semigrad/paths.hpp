#pragma once

#include "semigrad/models.hpp"
#include "semigrad/rng.hpp"
#include "semigrad/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace semigrad {

/// Uniform grid on [0, t_end]; t_k = k * dt.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double t_end, int n_steps);

  [[nodiscard]] double t_end() const noexcept { return t_end_; }
  [[nodiscard]] int n_steps() const noexcept { return n_steps_; }
  [[nodiscard]] double dt() const noexcept { return dt_; }
  [[nodiscard]] double time(int k) const noexcept { return k * dt_; }

 private:
  double t_end_ = 1.0;
  int n_steps_ = 1;
  double dt_ = 1.0;
};

/// Maps grid time s to coefficient time: offset + s, or T - s for the
/// time-reversed systems used with potentials.
struct CoefficientClock {
  double horizon = 0.0;
  bool reversed = false;
  double offset = 0.0;
  [[nodiscard]] double at(double s) const noexcept {
    return reversed ? horizon - s : offset + s;
  }
};

struct NoisePath {
  int m = 0;
  int n_steps = 0;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  std::uint32_t substream = 0;
  std::vector<double> increments;  // n_steps rows of m

  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> step(int k) const {
    return {increments.data() + static_cast<std::ptrdiff_t>(k) * m, m};
  }
};

struct Trajectory {
  TimeGrid grid;
  CoefficientClock clock;
  std::vector<Vec> states;
  bool blew_up = false;
  std::optional<int> blow_up_step;
  std::optional<double> fk_weight;

  [[nodiscard]] double coeff_time(int k) const noexcept { return clock.at(grid.time(k)); }
};

struct IntegrateOptions {
  CoefficientClock clock;
  std::optional<double> blow_up_radius;  // overrides the model's radius
};

/// n_steps i.i.d. N(0, dt I_m) increments, deterministic in (seed, path_index, substream).
NoisePath generate_noise(const TimeGrid& grid, std::uint64_t seed, std::uint64_t path_index,
                         int m, std::uint32_t substream = 0);

/// Euler-Maruyama for the Ito form, with retraction for constrained models.
Trajectory integrate_ito(const DiffusionModel& model, const Vec& x0, const TimeGrid& grid,
                         const NoisePath& noise, const IntegrateOptions& options = {});

/// Same scheme with the Ito drift recomputed from A and DX at every step.
Trajectory integrate_stratonovich(const DiffusionModel& model, const Vec& x0,
                                  const TimeGrid& grid, const NoisePath& noise,
                                  const IntegrateOptions& options = {});

}  // namespace semigrad
