#include "semigrad/variation.hpp"

#include <cmath>

namespace semigrad {

namespace detail {

void require_usable(const DiffusionModel& model, const Trajectory& traj, const Vec& v0) {
  if (traj.blew_up) fail(ErrorCode::BlownUpPath, "trajectory left the blow-up radius");
  if (v0.size() != model.n) fail(ErrorCode::DimensionMismatch, "direction must lie in R^n");
  if (traj.states.size() != static_cast<std::size_t>(traj.grid.n_steps()) + 1) {
    fail(ErrorCode::DimensionMismatch, "trajectory length does not match its grid");
  }
  if (model.constrained()) {
    const Vec& x0 = traj.states.front();
    const double off = (model.project(x0, v0) - v0).norm();
    if (off > 1e-8 * std::max(1.0, v0.norm())) {
      fail(ErrorCode::InvalidArgument, "direction is not tangent at the initial point");
    }
  }
}

Vec transport_step(const DiffusionModel& model, const Vec& x_next, const Vec& w) {
  if (!model.geometry) return w;
  const auto& geo = *model.geometry;
  const double before = std::sqrt(geo.inner(x_next, w, w));
  Vec out = geo.project_tangent(x_next, w);
  const double after = std::sqrt(geo.inner(x_next, out, out));
  if (after > 0.0) out *= before / after;
  return out;
}

}  // namespace detail

VariationPath evolve_first_variation(const DiffusionModel& model, const Trajectory& traj,
                                     const NoisePath& noise, const Vec& v0) {
  detail::require_usable(model, traj, v0);
  if (!model.DX || !model.DZ) fail(ErrorCode::MissingDerivative, "first variation needs DX and DZ");
  const int steps = traj.grid.n_steps();
  const double dt = traj.grid.dt();
  VariationPath out;
  out.v0 = v0;
  out.vectors.reserve(static_cast<std::size_t>(steps) + 1);
  out.vectors.push_back(v0);
  Vec v = v0;
  for (int k = 0; k < steps; ++k) {
    const double tc = traj.coeff_time(k);
    const Vec& x = traj.states[static_cast<std::size_t>(k)];
    Vec next = v + model.DX(tc, x, v) * noise.step(k) + model.DZ(tc, x, v) * dt;
    if (model.geometry) {
      next = model.geometry->project_tangent(traj.states[static_cast<std::size_t>(k) + 1], next);
    }
    out.vectors.push_back(next);
    v = next;
  }
  return out;
}

SecondVariationPath evolve_second_variation(const DiffusionModel& model, const Trajectory& traj,
                                            const NoisePath& noise, const VariationPath& u_path,
                                            const VariationPath& v_path) {
  detail::require_usable(model, traj, u_path.v0);
  if (!model.DX || !model.DZ || !model.D2X || !model.D2Z) {
    fail(ErrorCode::MissingDerivative, "second variation needs DX, DZ, D2X and D2Z");
  }
  if (model.constrained()) {
    fail(ErrorCode::UnsupportedModel, "second variation is implemented on flat space only");
  }
  const int steps = traj.grid.n_steps();
  const double dt = traj.grid.dt();
  const auto len = static_cast<std::size_t>(steps) + 1;
  if (u_path.vectors.size() < len || v_path.vectors.size() < len) {
    fail(ErrorCode::DimensionMismatch, "variation paths shorter than the trajectory");
  }
  SecondVariationPath out;
  out.u0 = u_path.v0;
  out.v0 = v_path.v0;
  out.vectors.reserve(len);
  out.vectors.push_back(Vec::Zero(model.n));
  Vec w = Vec::Zero(model.n);
  for (int k = 0; k < steps; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const double tc = traj.coeff_time(k);
    const Vec& x = traj.states[ks];
    const Vec& u = u_path.vectors[ks];
    const Vec& v = v_path.vectors[ks];
    const auto db = noise.step(k);
    // Symmetrised source term so that swapping (u0, v0) reproduces w bit-exactly.
    const Mat d2x = 0.5 * (model.D2X(tc, x, u, v) + model.D2X(tc, x, v, u));
    const Vec d2z = 0.5 * (model.D2Z(tc, x, u, v) + model.D2Z(tc, x, v, u));
    w = w + model.DX(tc, x, w) * db + model.DZ(tc, x, w) * dt + d2x * db + d2z * dt;
    out.vectors.push_back(w);
  }
  return out;
}

namespace {

void require_hessian_geometry(const DiffusionModel& model, const Vec& x0) {
  if (model.geometry) {
    if (!model.geometry->ricci_sharp || !model.nabla_Z) {
      fail(ErrorCode::MissingGeometry, "Hessian flow needs Ricci curvature and nabla Z");
    }
    return;
  }
  if (!model.DZ) fail(ErrorCode::MissingGeometry, "Hessian flow needs DZ");
  // On flat space the flow is only meaningful when X induces the Euclidean metric.
  const Mat X = model.X(0.0, x0);
  const Mat G = X * X.transpose();
  if ((G - Mat::Identity(model.n, model.n)).norm() > 1e-10) {
    fail(ErrorCode::MissingGeometry,
         "flat Hessian flow needs X X^T = I (Euclidean generator metric)");
  }
}

}  // namespace

HessianFlowPath evolve_hessian_flow(const DiffusionModel& model, const Trajectory& traj,
                                    const Vec& v0) {
  detail::require_usable(model, traj, v0);
  require_hessian_geometry(model, traj.states.front());
  const int steps = traj.grid.n_steps();
  const double dt = traj.grid.dt();
  HessianFlowPath out;
  out.v0 = v0;
  out.vectors.reserve(static_cast<std::size_t>(steps) + 1);
  out.vectors.push_back(v0);
  Vec w = v0;
  for (int k = 0; k < steps; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (model.geometry) {
      const Vec& x_next = traj.states[ks + 1];
      const double tc = traj.coeff_time(k + 1);
      const Vec moved = detail::transport_step(model, x_next, w);
      const Vec rate = -0.5 * model.geometry->ricci_sharp(x_next, moved) +
                       model.nabla_Z(tc, x_next, moved);
      w = model.geometry->project_tangent(x_next, moved + rate * dt);
    } else {
      w = w + model.DZ(traj.coeff_time(k), traj.states[ks], w) * dt;
    }
    out.vectors.push_back(w);
  }
  return out;
}

std::vector<Vec> parallel_transport(const DiffusionModel& model, const Trajectory& traj,
                                    const Vec& v0) {
  detail::require_usable(model, traj, v0);
  std::vector<Vec> out;
  out.reserve(traj.states.size());
  out.push_back(v0);
  Vec w = v0;
  for (std::size_t k = 1; k < traj.states.size(); ++k) {
    w = detail::transport_step(model, traj.states[k], w);
    out.push_back(w);
  }
  return out;
}

}  // namespace semigrad
