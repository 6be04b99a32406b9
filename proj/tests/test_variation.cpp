#include <doctest.h>

#include "semigrad/models.hpp"
#include "semigrad/paths.hpp"
#include "semigrad/variation.hpp"

#include <cmath>
#include <numbers>

using namespace semigrad;

namespace {

// dx = dB + x^2 dt.
DiffusionModel quadratic_drift_model() {
  auto model = make_flat_model(
      1, 1, [](double, const Vec&) -> Mat { return Mat::Identity(1, 1); },
      [](double, const Vec& x) -> Vec { return make_vec({x(0) * x(0)}); },
      [](double, const Vec&, const Vec&) -> Mat { return Mat::Zero(1, 1); },
      [](double, const Vec& x, const Vec& u) -> Vec { return make_vec({2.0 * x(0) * u(0)}); },
      [](double, const Vec&, const Vec&, const Vec&) -> Mat { return Mat::Zero(1, 1); },
      [](double, const Vec&, const Vec& u, const Vec& v) -> Vec {
        return make_vec({2.0 * u(0) * v(0)});
      });
  model.id = "quadratic1d";
  return model;
}

Trajectory run(const DiffusionModel& model, const Vec& x0, const TimeGrid& grid,
               const NoisePath& noise) {
  return integrate_ito(model, x0, grid, noise);
}

}  // namespace

TEST_CASE("first variation of Brownian motion is constant") {
  const auto model = make_brownian_model(2);
  const TimeGrid grid(1.0, 100);
  const auto noise = generate_noise(grid, 1, 0, 2);
  const auto traj = run(model, make_vec({0.0, 0.0}), grid, noise);
  const auto v = evolve_first_variation(model, traj, noise, make_vec({1.0, -2.0}));
  CHECK(v.vectors.size() == 101);
  for (const auto& vk : v.vectors) CHECK((vk - make_vec({1.0, -2.0})).norm() == 0.0);
}

TEST_CASE("first variation of OU decays like e^{-t}") {
  const auto model = make_linear_drift_model(-1.0);
  const TimeGrid grid(1.0, 1000);
  const auto noise = generate_noise(grid, 1, 3, 1);
  const auto traj = run(model, make_vec({0.5}), grid, noise);
  const auto v = evolve_first_variation(model, traj, noise, make_vec({1.0}));
  for (int k = 0; k <= 1000; k += 50)
    CHECK(std::abs(v.vectors[static_cast<std::size_t>(k)](0) - std::exp(-grid.time(k))) <= grid.dt());
}

TEST_CASE("first variation stays tangent on the circle") {
  const auto model = make_gradient_sphere_model(2);
  const TimeGrid grid(1.0, 500);
  const auto noise = generate_noise(grid, 8, 1, 2);
  const auto traj = run(model, make_vec({1.0, 0.0}), grid, noise);
  const auto v = evolve_first_variation(model, traj, noise, make_vec({0.0, 1.0}));
  for (std::size_t k = 0; k < v.vectors.size(); ++k)
    CHECK(std::abs(v.vectors[k].dot(traj.states[k])) <= 1e-12);
}

TEST_CASE("first variation is linear in v0") {
  const auto model = make_gradient_sphere_model(3);
  const TimeGrid grid(1.0, 200);
  const auto noise = generate_noise(grid, 2, 2, 3);
  const Vec x0 = make_vec({0.6, 0.0, 0.8});
  const Vec v0 = make_vec({0.8, 0.0, -0.6});
  const auto traj = run(model, x0, grid, noise);
  const auto base = evolve_first_variation(model, traj, noise, v0);
  for (double a : {-1.0, 2.0, 0.0}) {
    const auto scaled = evolve_first_variation(model, traj, noise, a * v0);
    for (std::size_t k = 0; k < base.vectors.size(); ++k)
      CHECK((scaled.vectors[k] - a * base.vectors[k]).norm() == 0.0);
  }
}

TEST_CASE("first variation matches the pathwise difference quotient") {
  const auto model = quadratic_drift_model();
  const TimeGrid grid(0.5, 500);
  const double delta = 1e-4;
  double err = 0.0;
  for (std::uint64_t path = 0; path < 100; ++path) {
    const auto noise = generate_noise(grid, 13, path, 1);
    const auto traj = run(model, make_vec({0.1}), grid, noise);
    const auto shifted = run(model, make_vec({0.1 + delta}), grid, noise);
    const auto v = evolve_first_variation(model, traj, noise, make_vec({1.0}));
    err += std::abs(v.vectors.back()(0) - (shifted.states.back()(0) - traj.states.back()(0)) / delta);
  }
  CHECK(err / 100.0 <= 10.0 * (delta + grid.dt()));
}

TEST_CASE("second variation of a linear flow vanishes") {
  const auto model = make_linear_drift_model(-1.0);
  const TimeGrid grid(1.0, 100);
  const auto noise = generate_noise(grid, 1, 0, 1);
  const auto traj = run(model, make_vec({0.0}), grid, noise);
  const auto u = evolve_first_variation(model, traj, noise, make_vec({1.0}));
  const auto w = evolve_second_variation(model, traj, noise, u, u);
  for (const auto& wk : w.vectors) CHECK(wk.norm() == 0.0);
}

TEST_CASE("second variation matches finite differences of the first") {
  const auto model = quadratic_drift_model();
  const TimeGrid grid(0.5, 500);
  const double delta = 1e-4;
  for (std::uint64_t path = 0; path < 10; ++path) {
    const auto noise = generate_noise(grid, 17, path, 1);
    const Vec x0 = make_vec({0.2});
    const auto traj = run(model, x0, grid, noise);
    if (traj.blew_up) continue;
    const auto v = evolve_first_variation(model, traj, noise, make_vec({1.0}));
    const auto w = evolve_second_variation(model, traj, noise, v, v);
    CHECK(w.vectors.front().norm() == 0.0);
    const auto tp = run(model, make_vec({0.2 + delta}), grid, noise);
    const auto tm = run(model, make_vec({0.2 - delta}), grid, noise);
    const double fd = (evolve_first_variation(model, tp, noise, make_vec({1.0})).vectors.back()(0) -
                       evolve_first_variation(model, tm, noise, make_vec({1.0})).vectors.back()(0)) /
                      (2.0 * delta);
    CHECK(w.vectors.back()(0) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("second variation is symmetric") {
  const auto model = make_gradient_sphere_model(3);
  const TimeGrid grid(0.5, 100);
  const auto noise = generate_noise(grid, 5, 0, 3);
  const Vec x0 = make_vec({0.0, 0.0, 1.0});
  const auto traj = run(model, x0, grid, noise);
  const auto u = evolve_first_variation(model, traj, noise, make_vec({1.0, 0.0, 0.0}));
  const auto v = evolve_first_variation(model, traj, noise, make_vec({0.3, 0.7, 0.0}));
  if (!model.D2X) {
    CHECK_THROWS_AS(evolve_second_variation(model, traj, noise, u, v), Error);
    return;
  }
  const auto uv = evolve_second_variation(model, traj, noise, u, v);
  const auto vu = evolve_second_variation(model, traj, noise, v, u);
  for (std::size_t k = 0; k < uv.vectors.size(); ++k)
    CHECK((uv.vectors[k] - vu.vectors[k]).norm() <= 1e-14);
}

TEST_CASE("Hessian flow closed forms") {
  const TimeGrid grid(1.0, 1000);
  {
    const auto model = make_brownian_model(2);
    const auto noise = generate_noise(grid, 1, 0, 2);
    const auto traj = run(model, make_vec({0.0, 0.0}), grid, noise);
    const auto W = evolve_hessian_flow(model, traj, make_vec({1.0, 2.0}));
    for (const auto& w : W.vectors) CHECK((w - make_vec({1.0, 2.0})).norm() == 0.0);
  }
  {
    const auto model = make_linear_drift_model(-1.0);
    const auto noise = generate_noise(grid, 1, 0, 1);
    const auto traj = run(model, make_vec({0.3}), grid, noise);
    const auto W = evolve_hessian_flow(model, traj, make_vec({1.0}));
    for (int k = 0; k <= 1000; k += 100)
      CHECK(std::abs(W.vectors[static_cast<std::size_t>(k)](0) - std::exp(-grid.time(k))) <= grid.dt());
  }
  {
    const auto model = make_gradient_sphere_model(3);
    const auto noise = generate_noise(grid, 1, 0, 3);
    const Vec x0 = make_vec({1.0, 0.0, 0.0});
    const auto traj = run(model, x0, grid, noise);
    const auto W = evolve_hessian_flow(model, traj, make_vec({0.0, 0.0, 1.0}));
    for (int k = 0; k <= 1000; k += 100) {
      const auto& w = W.vectors[static_cast<std::size_t>(k)];
      CHECK(std::abs(w.norm() - std::exp(-0.5 * grid.time(k))) <= grid.dt());
      CHECK(std::abs(w.dot(traj.states[static_cast<std::size_t>(k)])) <= 1e-12);
    }
  }
}

TEST_CASE("Hessian flow needs geometry or a flat model") {
  auto model = make_gradient_sphere_model(3);
  model.geometry->ricci_sharp = nullptr;
  const TimeGrid grid(0.1, 10);
  const auto noise = generate_noise(grid, 1, 0, 3);
  const auto traj = run(model, make_vec({1.0, 0.0, 0.0}), grid, noise);
  try {
    (void)evolve_hessian_flow(model, traj, make_vec({0.0, 1.0, 0.0}));
    FAIL("expected MissingGeometry");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingGeometry);
  }
}

TEST_CASE("parallel transport") {
  const TimeGrid grid(1.0, 200);
  {
    const auto model = make_brownian_model(2);
    const auto noise = generate_noise(grid, 1, 0, 2);
    const auto traj = run(model, make_vec({0.0, 0.0}), grid, noise);
    for (const auto& w : parallel_transport(model, traj, make_vec({0.5, 0.5})))
      CHECK((w - make_vec({0.5, 0.5})).norm() == 0.0);
  }
  const auto s2 = make_gradient_sphere_model(3);
  {
    const auto noise = generate_noise(grid, 4, 0, 3);
    const auto traj = run(s2, make_vec({0.0, 0.0, 1.0}), grid, noise);
    for (const auto& w : parallel_transport(s2, traj, make_vec({0.6, 0.8, 0.0})))
      CHECK(std::abs(w.norm() - 1.0) <= 1e-9);
  }
  {
    // Closed great circle in the x1-x2 plane, traversed once.
    const int steps = 2000;
    Trajectory loop;
    loop.grid = TimeGrid(1.0, steps);
    for (int k = 0; k <= steps; ++k) {
      const double a = 2.0 * std::numbers::pi * k / steps;
      loop.states.push_back(make_vec({std::cos(a), std::sin(a), 0.0}));
    }
    for (const Vec& v0 : {make_vec({0.0, 1.0, 0.0}), make_vec({0.0, 0.0, 1.0}),
                          make_vec({0.0, 0.6, 0.8})}) {
      const auto path = parallel_transport(s2, loop, v0);
      CHECK((path.back() - v0).norm() <= 10.0 / steps);
    }
  }
}

TEST_CASE("conditional mean of the first variation is the Hessian flow") {
  const auto model = make_gradient_sphere_model(3);
  const TimeGrid grid(0.5, 200);
  const Vec x0 = make_vec({0.6, 0.0, 0.8});
  const Vec v0 = make_vec({0.8, 0.0, -0.6});
  const Vec u = make_vec({0.3, 0.5, -0.2});
  const int n = 4000;
  double s = 0.0, s2 = 0.0;
  for (int path = 0; path < n; ++path) {
    const auto noise = generate_noise(grid, 99, static_cast<std::uint64_t>(path), 3);
    const auto traj = run(model, x0, grid, noise);
    const double d = evolve_first_variation(model, traj, noise, v0).vectors.back().dot(u) -
                     evolve_hessian_flow(model, traj, v0).vectors.back().dot(u);
    s += d;
    s2 += d * d;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean) <= 3.0 * se);
}
