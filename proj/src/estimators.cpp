#include "semigrad/estimators.hpp"

#include "semigrad/engine.hpp"
#include "semigrad/parallel.hpp"
#include "semigrad/variation.hpp"

#include <cmath>
#include <vector>

namespace semigrad {

double joint_std_error(const EstimatorResult& a, const EstimatorResult& b) {
  return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
}

double bismut_weight(const DiffusionModel& model, const Trajectory& traj, const NoisePath& noise,
                     const std::vector<Vec>& directions, int begin, int end) {
  double w = 0.0;
  for (int k = begin; k < end; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Mat Y = right_inverse(model, traj.coeff_time(k), traj.states[ks]);
    w += (Y * directions[ks]).dot(noise.step(k));
  }
  return w;
}

using detail::check_direction;
using detail::check_nondegenerate;
using detail::check_point;
using detail::Outcome;
using detail::run;
using detail::Simulation;
using detail::simulate;
using detail::validate;

EstimatorResult semigroup_value(const DiffusionModel& model, const Vec& x0,
                                const ScalarObservable& f, const McConfig& cfg) {
  check_point(model, x0);
  return run("semigroup_value", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    const Simulation sim = simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) return Outcome{0.0, true};
    return Outcome{f.f(sim.traj.states.back()), false};
  });
}

EstimatorResult pathwise_gradient(const DiffusionModel& model, const Vec& x0,
                                  const ScalarObservable& f, const Vec& v0, const McConfig& cfg) {
  check_point(model, x0);
  check_direction(model, v0);
  if (!f.grad) fail(ErrorCode::MissingDerivative, "pathwise gradient needs df");
  return run("pathwise_gradient", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    const Simulation sim = simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) return Outcome{0.0, true};
    const VariationPath v = evolve_first_variation(model, sim.traj, sim.noise, v0);
    return Outcome{f.grad(sim.traj.states.back()).dot(v.vectors.back()), false};
  });
}

EstimatorResult bel_gradient(const DiffusionModel& model, const Vec& x0,
                             const ScalarObservable& f, const Vec& v0, const McConfig& cfg) {
  check_point(model, x0);
  check_direction(model, v0);
  check_nondegenerate(model, x0);
  const double t = cfg.t;
  return run("bel_gradient", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    const Simulation sim = simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) return Outcome{0.0, true};
    const VariationPath v = evolve_first_variation(model, sim.traj, sim.noise, v0);
    const double w = bismut_weight(model, sim.traj, sim.noise, v.vectors, 0, grid.n_steps());
    const double fx = f.f(sim.traj.states.back());
    return Outcome{(fx * w) / t, false};
  });
}

namespace {

/// Inner estimate of D(P_{t - s_j} f)(x_{s_j})(xi) with n_inner fresh sub-streams.
/// Returns false if any inner path blew up.
bool inner_gradient(const DiffusionModel& model, const ScalarObservable& f, const Vec& start,
                    const Vec& xi, int j, const TimeGrid& outer, const McConfig& cfg,
                    std::uint64_t path_index, int sample, int n_inner, double& out) {
  const int steps = outer.n_steps() - j;
  const double horizon = outer.t_end() - outer.time(j);
  const TimeGrid grid(horizon, steps);
  IntegrateOptions opts;
  opts.clock.offset = outer.time(j);
  double acc = 0.0;
  for (int q = 0; q < n_inner; ++q) {
    const auto sub = static_cast<std::uint32_t>(1 + sample * n_inner + q);
    const Simulation sim = simulate(model, start, grid, cfg.seed, path_index, opts, sub);
    if (sim.traj.blew_up) return false;
    const VariationPath v = evolve_first_variation(model, sim.traj, sim.noise, xi);
    const double w = bismut_weight(model, sim.traj, sim.noise, v.vectors, 0, steps);
    acc += f.f(sim.traj.states.back()) * w / horizon;
  }
  out = acc / n_inner;
  return true;
}

}  // namespace

EstimatorResult bel_hessian(const DiffusionModel& model, const Vec& x0, const ScalarObservable& f,
                            const Vec& u0, const Vec& v0, const McConfig& cfg,
                            const HessianOptions& options) {
  check_point(model, x0);
  check_direction(model, u0);
  check_direction(model, v0);
  if (model.constrained()) {
    fail(ErrorCode::UnsupportedModel, "second-derivative estimator supports flat models only");
  }
  if (!model.DX || !model.DZ || !model.D2X || !model.D2Z) {
    fail(ErrorCode::MissingDerivative, "second-derivative estimator needs DX, DZ, D2X, D2Z");
  }
  if (cfg.n_steps % 2 != 0) fail(ErrorCode::InvalidArgument, "n_steps must be even");
  const bool nested = options.variant == HessianVariant::Nested;
  if (nested && (options.n_inner < 1 || options.n_time_samples < 1)) {
    fail(ErrorCode::InvalidArgument, "nested variant needs n_inner >= 1 and n_time_samples >= 1");
  }
  check_nondegenerate(model, x0);
  if (!nested) (void)right_inverse_derivative(model, 0.0, x0, v0);

  const double t = cfg.t;
  const int half = cfg.n_steps / 2;
  auto result = run(nested ? "bel_hessian_nested" : "bel_hessian_weights", cfg,
                    [&](std::uint64_t i, const TimeGrid& grid) {
    const Simulation sim = simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) return Outcome{0.0, true};
    const Trajectory& traj = sim.traj;
    const int n = grid.n_steps();
    const double dt = grid.dt();
    const VariationPath u = evolve_first_variation(model, traj, sim.noise, u0);
    const VariationPath v = evolve_first_variation(model, traj, sim.noise, v0);
    const SecondVariationPath w = evolve_second_variation(model, traj, sim.noise, u, v);

    const double late_v = bismut_weight(model, traj, sim.noise, v.vectors, half, n);
    const double early_u = bismut_weight(model, traj, sim.noise, u.vectors, 0, half);
    const double fx = f.f(traj.states.back());
    double value = fx * (4.0 / (t * t)) * late_v * early_u;

    if (!nested) {
      double dy_term = 0.0;
      for (int k = 0; k < half; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const double tc = traj.coeff_time(k);
        const Mat dY = right_inverse_derivative(model, tc, traj.states[ks], v.vectors[ks]);
        dy_term += (dY * u.vectors[ks]).dot(sim.noise.step(k));
      }
      const double w_term = bismut_weight(model, traj, sim.noise, w.vectors, 0, half);
      value += fx * (2.0 / t) * (dy_term + w_term);
      return Outcome{value, false};
    }

    const int samples = std::min(options.n_time_samples, half);
    const rng::StreamId stream{cfg.seed, i, 0};
    double integral = 0.0;
    for (int q = 0; q < samples; ++q) {
      const int lo = static_cast<int>(static_cast<long long>(q) * half / samples);
      const int hi = static_cast<int>(static_cast<long long>(q + 1) * half / samples);
      const int width = hi - lo;
      const int j = lo + std::min(width - 1, static_cast<int>(rng::uniform(stream, q) * width));
      const auto js = static_cast<std::size_t>(j);
      const double tc = traj.coeff_time(j);
      const Vec& x = traj.states[js];
      const Vec xi = w.vectors[js] - model.DX(tc, x, v.vectors[js]) *
                                         (right_inverse(model, tc, x) * u.vectors[js]);
      if ((xi.array() == 0.0).all()) continue;
      double inner = 0.0;
      if (!inner_gradient(model, f, x, xi, j, grid, cfg, i, q, options.n_inner, inner)) {
        return Outcome{0.0, true};
      }
      integral += width * dt * inner;
    }
    value += (2.0 / t) * integral;
    return Outcome{value, false};
  });
  if (nested) {
    result.metadata["n_inner"] = options.n_inner;
    result.metadata["n_time_samples"] = options.n_time_samples;
  }
  return result;
}

EstimatorResult potential_gradient(const DiffusionModel& model, const Vec& x0,
                                   const ScalarObservable& u0, const PotentialField& V,
                                   const Vec& v0, const McConfig& cfg) {
  check_point(model, x0);
  check_direction(model, v0);
  if (!V.V || !V.grad) fail(ErrorCode::MissingDerivative, "potential needs V and dV");
  check_nondegenerate(model, x0);
  const double t = cfg.t;
  const double bound_slack = 1e-9 * std::max(1.0, std::abs(V.upper_bound));
  return run("potential_gradient", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    IntegrateOptions opts;
    opts.clock.horizon = t;
    opts.clock.reversed = true;
    Simulation sim = simulate(model, x0, grid, cfg.seed, i, opts);
    if (sim.traj.blew_up) return Outcome{0.0, true};
    Trajectory& traj = sim.traj;
    const int n = grid.n_steps();
    const double dt = grid.dt();
    const std::vector<Vec> dirs =
        model.constrained() ? evolve_hessian_flow(model, traj, v0).vectors
                            : evolve_first_variation(model, traj, sim.noise, v0).vectors;

    double exponent = 0.0;
    double correction = 0.0;
    for (int k = 0; k < n; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const double tc = traj.coeff_time(k);
      const double pot = V.V(tc, traj.states[ks]);
      if (pot > V.upper_bound + bound_slack) {
        fail(ErrorCode::UnboundedPotential, "V exceeds its declared upper bound");
      }
      exponent += pot * dt;
      correction += (t - grid.time(k)) * V.grad(tc, traj.states[ks]).dot(dirs[ks]) * dt;
    }
    const double fk = std::exp(exponent);
    traj.fk_weight = fk;
    const double w = bismut_weight(model, traj, sim.noise, dirs, 0, n);
    const double fx = u0.f(traj.states.back());
    return Outcome{((fx * fk) * (w + correction)) / t, false};
  });
}

EstimatorResult hessian_flow_gradient(const DiffusionModel& model, const Vec& x0,
                                      const ScalarObservable& f, const Vec& v0,
                                      const McConfig& cfg) {
  check_point(model, x0);
  check_direction(model, v0);
  check_nondegenerate(model, x0);
  const double t = cfg.t;
  return run("hessian_flow_gradient", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    const Simulation sim = simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) return Outcome{0.0, true};
    const HessianFlowPath W = evolve_hessian_flow(model, sim.traj, v0);
    const double w = bismut_weight(model, sim.traj, sim.noise, W.vectors, 0, grid.n_steps());
    const double fx = f.f(sim.traj.states.back());
    return Outcome{(fx * w) / t, false};
  });
}

EstimatorResult score_gradient(const DiffusionModel& model, const Vec& x0,
                               const ConditionalBinSpec& bins, const Vec& v0,
                               const McConfig& cfg) {
  check_point(model, x0);
  check_direction(model, v0);
  if (bins.y.size() != model.n) fail(ErrorCode::DimensionMismatch, "target must lie in R^n");
  if (!(bins.bandwidth > 0.0)) fail(ErrorCode::InvalidArgument, "bandwidth must be positive");
  check_nondegenerate(model, x0);
  validate(cfg);
  const double t = cfg.t;
  const double bw = bins.bandwidth;
  const TimeGrid grid(cfg.t, cfg.n_steps);
  const std::uint64_t n = cfg.n_paths;
  std::vector<double> weighted(n, 0.0);
  std::vector<double> kernel(n, 0.0);
  std::vector<std::uint8_t> rejected(n, 0);

  parallel_for(n, [&](std::uint64_t i) {
    const Simulation sim = simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) {
      rejected[i] = 1;
      return;
    }
    const double dist = (sim.traj.states.back() - bins.y).norm();
    double kval = 0.0;
    if (bins.kernel == BinKernel::Box) {
      kval = dist <= bw ? 1.0 : 0.0;
    } else {
      kval = std::exp(-0.5 * (dist * dist) / (bw * bw));
    }
    if (kval == 0.0) return;
    const VariationPath v = evolve_first_variation(model, sim.traj, sim.noise, v0);
    const double w = bismut_weight(model, sim.traj, sim.noise, v.vectors, 0, grid.n_steps());
    kernel[i] = kval;
    weighted[i] = kval * (w / t);
  });

  std::uint64_t n_rejected = 0;
  for (auto r : rejected) n_rejected += r;
  if (n_rejected == n) fail(ErrorCode::AllPathsBlewUp, "score_gradient: every path blew up");
  const double sum_k = pairwise_sum(kernel);
  if (!(sum_k > 0.0)) fail(ErrorCode::EmptyBin, "no path landed within the bandwidth of y");
  const double ratio = pairwise_sum(weighted) / sum_k;

  std::vector<double> resid(n, 0.0);
  std::vector<double> k2(n, 0.0);
  for (std::uint64_t i = 0; i < n; ++i) {
    const double r = weighted[i] - ratio * kernel[i];
    resid[i] = r * r;
    k2[i] = kernel[i] * kernel[i];
  }
  const auto accepted = static_cast<double>(n - n_rejected);
  const double mean_k = sum_k / accepted;
  const double resid_var = accepted > 1.0 ? pairwise_sum(resid) / (accepted - 1.0) : 0.0;

  EstimatorResult r;
  r.estimator = "score_gradient";
  r.mean = ratio;
  r.std_error = std::sqrt(resid_var / accepted) / mean_k;
  r.variance = resid_var / (mean_k * mean_k);
  r.n_paths = n;
  r.n_rejected = n_rejected;
  r.seed = cfg.seed;
  r.grid = grid;
  r.valid = r.rejected_fraction() <= kMaxRejectedFraction;
  r.metadata["effective_count"] = sum_k * sum_k / pairwise_sum(k2);
  r.metadata["bandwidth"] = bw;
  r.metadata["bandwidth_bias_scale"] = bw * bw;
  return r;
}

EstimatorResult lie_group_gradient(const LieGroupModel& model, const Mat3& g0,
                                   const ScalarObservable& f, const Vec& v0,
                                   const McConfig& cfg) {
  if (model.embedded.kind != ModelKind::LieGroup) {
    fail(ErrorCode::NotLieGroup, "model is not a Lie group model");
  }
  if (v0.size() != 9) fail(ErrorCode::DimensionMismatch, "direction must be a 3x3 matrix");
  const Mat3 xi_hat = g0.transpose() * so3_unembed(v0);
  if ((xi_hat + xi_hat.transpose()).norm() > 1e-8 * std::max(1.0, xi_hat.norm())) {
    fail(ErrorCode::InvalidArgument, "direction is not tangent at g0");
  }
  const double t = cfg.t;
  const double inv_s = 1.0 / model.noise_scale;
  return run("lie_group_gradient", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    const NoisePath noise = generate_noise(grid, cfg.seed, i, 3);
    const Trajectory traj = integrate_lie(model, g0, grid, noise);
    double w = 0.0;
    for (int k = 0; k < grid.n_steps(); ++k) {
      const Mat3 h = g0.transpose() * so3_unembed(traj.states[static_cast<std::size_t>(k)]);
      const Vec3 rotated = so3_vee(h.transpose() * xi_hat * h);
      const auto db = noise.step(k);
      w += rotated(0) * db(0) + rotated(1) * db(1) + rotated(2) * db(2);
    }
    w *= inv_s;
    return Outcome{(f.f(traj.states.back()) * w) / t, false};
  });
}

}  // namespace semigrad
