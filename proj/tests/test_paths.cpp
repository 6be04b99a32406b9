#include <doctest.h>

#include "semigrad/lie_group.hpp"
#include "semigrad/models.hpp"
#include "semigrad/paths.hpp"
#include "semigrad/rng.hpp"

#include <cmath>
#include <random>

using namespace semigrad;

namespace {

Vec random_unit(std::mt19937_64& gen, int n) {
  std::normal_distribution<double> nd;
  Vec x(n);
  for (int i = 0; i < n; ++i) x(i) = nd(gen);
  return x / x.norm();
}

}  // namespace

TEST_CASE("philox4x32-10 known-answer vectors") {
  using rng::philox4x32;
  const auto zero = philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
  CHECK(zero == rng::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  const auto ones = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                               {0xffffffffu, 0xffffffffu});
  CHECK(ones == rng::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  const auto pi = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                             {0xa4093822u, 0x299f31d0u});
  CHECK(pi == rng::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("noise is a pure function of its stream id") {
  const TimeGrid grid(1.0, 1000);
  const auto a = generate_noise(grid, 7, 0, 2);
  const auto b = generate_noise(grid, 7, 0, 2);
  CHECK(a.increments == b.increments);
  const auto c = generate_noise(grid, 7, 1, 2);
  CHECK(a.increments != c.increments);
  const auto d = generate_noise(grid, 7, 0, 2, 1);
  CHECK(a.increments != d.increments);
}

TEST_CASE("noise increments have mean 0 and variance dt") {
  const TimeGrid grid(1.0, 1000);
  const double dt = grid.dt();
  const int m = 2;
  double sum[m] = {0.0, 0.0};
  double sq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t path = 0; path < 1000; ++path) {
    const auto noise = generate_noise(grid, 11, path, m);
    for (int k = 0; k < grid.n_steps(); ++k) {
      for (int j = 0; j < m; ++j) sum[j] += noise.step(k)(j);
      sq += noise.step(k)(0) * noise.step(k)(0);
    }
    count += static_cast<std::size_t>(grid.n_steps());
  }
  const double n = static_cast<double>(count);
  for (int j = 0; j < m; ++j) CHECK(std::abs(sum[j] / n) <= 4.0 * std::sqrt(dt / n));
  const double mean0 = sum[0] / n;
  const double var0 = sq / n - mean0 * mean0;
  CHECK(var0 == doctest::Approx(dt).epsilon(0.01));
}

TEST_CASE("Brownian states are partial sums of the increments") {
  const auto model = make_brownian_model(1);
  const TimeGrid grid(1.0, 200);
  const auto noise = generate_noise(grid, 3, 5, 1);
  const auto traj = integrate_ito(model, make_vec({0.0}), grid, noise);
  REQUIRE(traj.states.size() == 201);
  double partial = 0.0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    partial += noise.step(k)(0);
    CHECK(traj.states[static_cast<std::size_t>(k + 1)](0) == doctest::Approx(partial).epsilon(1e-14));
  }
}

TEST_CASE("OU with zero noise follows e^{-t}") {
  const auto model = make_linear_drift_model(-1.0);
  const TimeGrid grid(1.0, 1000);
  NoisePath noise = generate_noise(grid, 1, 0, 1);
  std::fill(noise.increments.begin(), noise.increments.end(), 0.0);
  const auto traj = integrate_ito(model, make_vec({1.0}), grid, noise);
  for (int k = 0; k <= grid.n_steps(); k += 100) {
    CHECK(std::abs(traj.states[static_cast<std::size_t>(k)](0) - std::exp(-grid.time(k))) <=
          grid.dt());
  }
}

TEST_CASE("OU strong error shrinks with the step size") {
  // Reference on a fine grid; coarse paths reuse its increments summed in blocks.
  const auto model = make_linear_drift_model(-1.0);
  const int fine_steps = 4096;
  const TimeGrid fine(1.0, fine_steps);
  double err_coarse = 0.0, err_mid = 0.0;
  for (std::uint64_t path = 0; path < 200; ++path) {
    const auto noise = generate_noise(fine, 21, path, 1);
    const double ref = integrate_ito(model, make_vec({1.0}), fine, noise).states.back()(0);
    auto coarse_end = [&](int steps) {
      const TimeGrid g(1.0, steps);
      NoisePath n = noise;
      n.n_steps = steps;
      n.increments.assign(static_cast<std::size_t>(steps), 0.0);
      const int block = fine_steps / steps;
      for (int k = 0; k < fine_steps; ++k) n.increments[static_cast<std::size_t>(k / block)] += noise.step(k)(0);
      return integrate_ito(model, make_vec({1.0}), g, n).states.back()(0);
    };
    err_coarse += std::abs(coarse_end(16) - ref);
    err_mid += std::abs(coarse_end(256) - ref);
  }
  CHECK(err_mid < 0.25 * err_coarse);
}

TEST_CASE("E x_t^2 = t for 1D Brownian motion") {
  const auto model = make_brownian_model(1);
  const TimeGrid grid(1.0, 50);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int path = 0; path < n; ++path) {
    const auto noise = generate_noise(grid, 5, static_cast<std::uint64_t>(path), 1);
    const double x = integrate_ito(model, make_vec({0.0}), grid, noise).states.back()(0);
    s += x * x;
    s2 += x * x * x * x;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) <= 4.0 * se);
}

TEST_CASE("circle states stay on the circle") {
  const auto model = make_gradient_sphere_model(2);
  const TimeGrid grid(1.0, 500);
  for (std::uint64_t path = 0; path < 5; ++path) {
    const auto noise = generate_noise(grid, 9, path, model.m);
    const auto traj = integrate_ito(model, make_vec({1.0, 0.0}), grid, noise);
    for (const auto& x : traj.states) CHECK(std::abs(x.norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("Stratonovich integration matches Ito for constant X") {
  const auto model = make_brownian_model(2);
  const TimeGrid grid(1.0, 100);
  const auto noise = generate_noise(grid, 2, 0, 2);
  const auto a = integrate_ito(model, make_vec({0.1, 0.2}), grid, noise);
  const auto b = integrate_stratonovich(model, make_vec({0.1, 0.2}), grid, noise);
  for (std::size_t k = 0; k < a.states.size(); ++k) CHECK((a.states[k] - b.states[k]).norm() == 0.0);
}

TEST_CASE("Stratonovich correction on spheres is -(n-1)x/2") {
  const auto circle = make_gradient_sphere_model(2);
  const Vec c = stratonovich_to_ito_drift(circle, 0.0, make_vec({1.0, 0.0}));
  CHECK(c(0) == doctest::Approx(-0.5));
  CHECK(c(1) == doctest::Approx(0.0));

  const auto s2 = make_gradient_sphere_model(3);
  const Vec north = stratonovich_to_ito_drift(s2, 0.0, make_vec({0.0, 0.0, 1.0}));
  CHECK((north - make_vec({0.0, 0.0, -1.0})).norm() <= 1e-12);

  std::mt19937_64 gen(1);
  for (int n : {2, 3, 4}) {
    const auto model = make_gradient_sphere_model(n);
    for (int i = 0; i < 10; ++i) {
      const Vec x = random_unit(gen, n);
      const Vec got = stratonovich_to_ito_drift(model, 0.0, x);
      CHECK((got + 0.5 * (n - 1) * x).norm() <= 1e-10);
    }
  }
}

TEST_CASE("Stratonovich correction agrees with finite differences of X") {
  const auto model = make_gradient_sphere_model(2);
  const Vec x = make_vec({1.0, 0.0});
  const auto fd = finite_difference_DX(model.X);
  const Mat Xx = model.X(0.0, x);
  Vec corr = Vec::Zero(2);
  for (int i = 0; i < model.m; ++i) corr += 0.5 * fd(0.0, x, Xx.col(i)).col(i);
  CHECK((corr - make_vec({-0.5, 0.0})).norm() <= 1e-8);
}

TEST_CASE("SO(3) with zero noise stays at the identity") {
  const auto lie = make_so3_model(1.0);
  const TimeGrid grid(1.0, 100);
  NoisePath noise = generate_noise(grid, 1, 0, 3);
  std::fill(noise.increments.begin(), noise.increments.end(), 0.0);
  const auto traj = integrate_lie(lie, Mat3::Identity(), grid, noise);
  for (const auto& x : traj.states) CHECK((so3_unembed(x) - Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("SO(3) paths remain rotations") {
  const auto lie = make_so3_model(1.0);
  const TimeGrid grid(1.0, 400);
  const auto noise = generate_noise(grid, 4, 2, 3);
  const auto traj = integrate_lie(lie, Mat3::Identity(), grid, noise);
  for (const auto& x : traj.states) {
    const Mat3 g = so3_unembed(x);
    CHECK((g.transpose() * g - Mat3::Identity()).norm() <= 1e-9);
  }
  const auto ito = integrate_ito(lie.embedded, so3_embed(Mat3::Identity()), grid, noise);
  for (const auto& x : ito.states) CHECK(lie.embedded.geometry->constraint_residual(x) <= 1e-9);
}
