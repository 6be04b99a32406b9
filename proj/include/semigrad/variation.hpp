#pragma once

#include "semigrad/models.hpp"
#include "semigrad/paths.hpp"

#include <vector>

namespace semigrad {

/// v_k = TF_{t_k}(v0) along one trajectory.
struct VariationPath {
  Vec v0;
  std::vector<Vec> vectors;
};

/// w_k = D^2F_{t_k}(u0, v0); w_0 = 0.
struct SecondVariationPath {
  Vec u0;
  Vec v0;
  std::vector<Vec> vectors;
};

/// Damped parallel transport W_k solving dW/dt = -1/2 Ric^#(W) + nabla Z(W).
struct HessianFlowPath {
  Vec v0;
  std::vector<Vec> vectors;
};

/// Euler scheme for dv = DX(x)(v) dB + DZ(x)(v) dt on the trajectory's own noise.
/// Constrained models reproject onto T_{x_{k+1}} after every step.
VariationPath evolve_first_variation(const DiffusionModel& model, const Trajectory& traj,
                                     const NoisePath& noise, const Vec& v0);

/// dw = DX(w) dB + DZ(w) dt + D^2X(u, v) dB + D^2Z(u, v) dt, w_0 = 0.
SecondVariationPath evolve_second_variation(const DiffusionModel& model, const Trajectory& traj,
                                            const NoisePath& noise, const VariationPath& u_path,
                                            const VariationPath& v_path);

HessianFlowPath evolve_hessian_flow(const DiffusionModel& model, const Trajectory& traj,
                                    const Vec& v0);

/// Project-and-rescale transport along the discrete path; constant on flat models.
std::vector<Vec> parallel_transport(const DiffusionModel& model, const Trajectory& traj,
                                    const Vec& v0);

namespace detail {
void require_usable(const DiffusionModel& model, const Trajectory& traj, const Vec& v0);
/// One transport step from x_k to x_{k+1}: projection rescaled to the old length.
Vec transport_step(const DiffusionModel& model, const Vec& x_next, const Vec& w);
}  // namespace detail

}  // namespace semigrad
