#include <doctest.h>

#include "semigrad/estimators.hpp"
#include "semigrad/experiment.hpp"
#include "semigrad/parallel.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>

using namespace semigrad;

namespace {

McConfig budget(double t = 1.0, std::uint64_t paths = 20000, int steps = 200, std::uint64_t seed = 42) {
  McConfig cfg;
  cfg.t = t;
  cfg.n_paths = paths;
  cfg.n_steps = steps;
  cfg.seed = seed;
  return cfg;
}

bool close(const EstimatorResult& r, double oracle, double rel = 0.0) {
  return r.valid &&
         std::abs(r.mean - oracle) <= std::max({3.0 * r.std_error, rel * std::abs(oracle), 1e-12});
}

bool agree(const EstimatorResult& a, const EstimatorResult& b) {
  return std::abs(a.mean - b.mean) <= 3.0 * joint_std_error(a, b);
}

ErrorCode code_of(const auto& call) {
  try {
    call();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

const double kE12 = std::exp(-0.5);

}  // namespace

TEST_CASE("semigroup_value") {
  const auto bm = make_scenario("bm1d");
  const auto sin_f = make_observable("sin", bm);
  CHECK(close(semigroup_value(bm.model, make_vec({0.0}), sin_f, budget()), 0.0));
  CHECK(close(semigroup_value(bm.model, make_vec({std::numbers::pi / 2}), sin_f, budget()), kE12, 0.01));
  const auto ou = make_scenario("ou1d");
  const auto r = semigroup_value(ou.model, make_vec({0.0}), make_observable("x_squared", ou), budget());
  CHECK(close(r, (1.0 - std::exp(-2.0)) / 2.0, 0.01));
}

TEST_CASE("pathwise_gradient") {
  const auto bm = make_scenario("bm1d");
  CHECK(close(pathwise_gradient(bm.model, make_vec({0.0}), make_observable("sin", bm), make_vec({1.0}), budget()),
              kE12, 0.01));
  const auto ou = make_scenario("ou1d");
  const auto r = pathwise_gradient(ou.model, make_vec({0.0}), make_observable("x", ou), make_vec({1.0}), budget());
  CHECK(r.mean == doctest::Approx(std::exp(-1.0)).epsilon(1e-3));
  CHECK(r.std_error <= 1e-12);
  const auto zero =
      pathwise_gradient(bm.model, make_vec({0.0}), make_observable("sin", bm), make_vec({0.0}), budget());
  CHECK(zero.mean == 0.0);
  auto no_grad = make_observable("sin", bm);
  no_grad.grad = nullptr;
  CHECK(code_of([&] { (void)pathwise_gradient(bm.model, make_vec({0.0}), no_grad, make_vec({1.0}), budget()); }) ==
        ErrorCode::MissingDerivative);
}

TEST_CASE("bel_gradient") {
  const auto bm = make_scenario("bm1d");
  const auto sin_f = make_observable("sin", bm);
  const auto bel = bel_gradient(bm.model, make_vec({0.0}), sin_f, make_vec({1.0}), budget());
  const auto pw = pathwise_gradient(bm.model, make_vec({0.0}), sin_f, make_vec({1.0}), budget());
  CHECK(close(bel, kE12));
  CHECK(agree(bel, pw));
  CHECK(close(bel_gradient(bm.model, make_vec({0.0}), make_observable("one", bm), make_vec({1.0}), budget()), 0.0));
  const auto ou = make_scenario("ou1d");
  CHECK(close(bel_gradient(ou.model, make_vec({0.0}), make_observable("x", ou), make_vec({1.0}), budget()),
              std::exp(-1.0)));
}

TEST_CASE("bel_gradient is linear in v0 bit for bit") {
  const auto s = make_scenario("sphere3");
  const auto f = make_observable("height", s);
  const auto one = bel_gradient(s.model, s.default_x0, f, s.default_v0, budget(0.5, 2000, 100));
  const auto two = bel_gradient(s.model, s.default_x0, f, 2.0 * s.default_v0, budget(0.5, 2000, 100));
  CHECK(two.mean == 2.0 * one.mean);
}

TEST_CASE("bel_gradient flags degenerate noise") {
  auto model = make_flat_model(
      2, 1, [](double, const Vec&) -> Mat { return Mat::Constant(2, 1, 1.0); },
      [](double, const Vec&) -> Vec { return Vec::Zero(2); },
      [](double, const Vec&, const Vec&) -> Mat { return Mat::Zero(2, 1); },
      [](double, const Vec&, const Vec&) -> Vec { return Vec::Zero(2); });
  ScalarObservable f{"first", [](const Vec& x) { return x(0); }, {}, {}, std::nullopt};
  CHECK(code_of([&] { (void)bel_gradient(model, make_vec({0.0, 0.0}), f, make_vec({1.0, 0.0}), budget()); }) ==
        ErrorCode::Degenerate);
}

TEST_CASE("bel_hessian weights variant") {
  const auto bm = make_scenario("bm1d");
  const auto r = bel_hessian(bm.model, make_vec({std::numbers::pi / 2}), make_observable("sin", bm),
                             make_vec({1.0}), make_vec({1.0}), budget(1.0, 40000));
  CHECK(close(r, -kE12, 0.02));
  const auto lin = bel_hessian(bm.model, make_vec({0.3}), make_observable("x", bm), make_vec({1.0}),
                               make_vec({1.0}), budget());
  CHECK(close(lin, 0.0));
  const auto ou = make_scenario("ou1d");
  const auto q = bel_hessian(ou.model, make_vec({0.0}), make_observable("x_squared", ou), make_vec({1.0}),
                             make_vec({1.0}), budget(1.0, 40000));
  CHECK(close(q, 2.0 * std::exp(-2.0), 0.02));
}

TEST_CASE("bel_hessian nested variant agrees with the weights variant") {
  const auto bm = make_scenario("bm1d");
  HessianOptions nested;
  nested.variant = HessianVariant::Nested;
  nested.n_inner = 4;
  const auto cfg = budget(1.0, 4000, 100);
  const Vec x0 = make_vec({std::numbers::pi / 2});
  const auto f = make_observable("sin", bm);
  const auto a = bel_hessian(bm.model, x0, f, make_vec({1.0}), make_vec({1.0}), cfg);
  const auto b = bel_hessian(bm.model, x0, f, make_vec({1.0}), make_vec({1.0}), cfg, nested);
  CHECK(close(b, -kE12));
  CHECK(agree(a, b));
}

TEST_CASE("bel_hessian respects the slot order of DY on a warped model") {
  // f = x2 is a martingale coordinate, so every second derivative vanishes.
  const auto w = make_scenario("warp2d");
  const auto f = make_observable("coord:1", w);
  const auto cfg = budget(1.0, 20000, 200);
  const Vec e1 = make_vec({1.0, 0.0}), e2 = make_vec({0.0, 1.0});
  CHECK(close(bel_hessian(w.model, w.default_x0, f, e1, e2, cfg), 0.0));
  CHECK(close(bel_hessian(w.model, w.default_x0, f, e2, e1, cfg), 0.0));
  CHECK(close(bel_hessian(w.model, w.default_x0, f, e1, e1, cfg), 0.0));
}

TEST_CASE("bel_hessian refuses manifolds and odd grids") {
  const auto s = make_scenario("sphere3");
  const auto f = make_observable("height", s);
  CHECK(code_of([&] { (void)bel_hessian(s.model, s.default_x0, f, s.default_v0, s.default_v0, budget()); }) ==
        ErrorCode::UnsupportedModel);
  const auto bm = make_scenario("bm1d");
  CHECK(code_of([&] {
          (void)bel_hessian(bm.model, make_vec({0.0}), make_observable("sin", bm), make_vec({1.0}),
                            make_vec({1.0}), budget(1.0, 10, 201));
        }) == ErrorCode::InvalidArgument);
}

TEST_CASE("potential_gradient") {
  const auto bm = make_scenario("bm1d");
  const auto sin_f = make_observable("sin", bm);
  auto constant = [](double c) {
    return PotentialField{[c](double, const Vec&) { return c; },
                          [](double, const Vec& x) -> Vec { return Vec::Zero(x.size()); }, c};
  };
  const auto cfg = budget();
  const auto zero = potential_gradient(bm.model, make_vec({0.0}), sin_f, constant(0.0), make_vec({1.0}), cfg);
  const auto bel = bel_gradient(bm.model, make_vec({0.0}), sin_f, make_vec({1.0}), cfg);
  CHECK(zero.mean == bel.mean);
  const auto half = potential_gradient(bm.model, make_vec({0.0}), sin_f, constant(0.5), make_vec({1.0}), cfg);
  CHECK(close(half, 1.0, 0.01));
  CHECK(close(potential_gradient(bm.model, make_vec({0.0}), make_observable("one", bm), constant(0.0),
                                 make_vec({1.0}), cfg),
              0.0));
  PotentialField lying = constant(1.0);
  lying.upper_bound = 0.0;
  CHECK(code_of([&] { (void)potential_gradient(bm.model, make_vec({0.0}), sin_f, lying, make_vec({1.0}), cfg); }) ==
        ErrorCode::UnboundedPotential);
}

TEST_CASE("potential_gradient with a varying potential matches finite differences") {
  // V(x) = -x^2/2 <= 0; u_t(x) = E exp(int V(x + B_s) ds) sin(x + B_t).
  const auto bm = make_scenario("bm1d");
  const auto sin_f = make_observable("sin", bm);
  PotentialField V{[](double, const Vec& x) { return -0.5 * x(0) * x(0); },
                   [](double, const Vec& x) -> Vec { return make_vec({-x(0)}); }, 0.0};
  const auto cfg = budget(0.5, 20000, 200);
  const double x0 = 0.4, h = 1e-3;
  auto value = [&](double x) {
    McConfig c = cfg;
    double s = 0.0;
    const TimeGrid grid(c.t, c.n_steps);
    for (std::uint64_t i = 0; i < c.n_paths; ++i) {
      const auto noise = generate_noise(grid, c.seed, i, 1);
      double b = 0.0, integral = 0.0;
      for (int k = 0; k < grid.n_steps(); ++k) {
        integral += V.V(0.0, make_vec({x + b})) * grid.dt();
        b += noise.step(k)(0);
      }
      s += std::exp(integral) * std::sin(x + b);
    }
    return s / static_cast<double>(c.n_paths);
  };
  const double fd = (value(x0 + h) - value(x0 - h)) / (2.0 * h);
  const auto r = potential_gradient(bm.model, make_vec({x0}), sin_f, V, make_vec({1.0}), cfg);
  CHECK(std::abs(r.mean - fd) <= 3.0 * r.std_error + 0.01);
}

TEST_CASE("hessian_flow_gradient") {
  const auto bm = make_scenario("bm1d");
  const auto sin_f = make_observable("sin", bm);
  const auto hf = hessian_flow_gradient(bm.model, make_vec({0.0}), sin_f, make_vec({1.0}), budget());
  const auto bel = bel_gradient(bm.model, make_vec({0.0}), sin_f, make_vec({1.0}), budget());
  CHECK(agree(hf, bel));
  const auto s = make_scenario("sphere3");
  const auto h = make_observable("height", s);
  const Vec eq = make_vec({1.0, 0.0, 0.0});
  const Vec north = make_vec({0.0, 0.0, 1.0});
  CHECK(close(hessian_flow_gradient(s.model, eq, h, north, budget(0.5)), kE12, 0.02));
  CHECK(close(hessian_flow_gradient(s.model, eq, make_observable("one", s), north, budget(0.5)), 0.0));
}

TEST_CASE("score_gradient") {
  const auto bm = make_scenario("bm1d");
  ConditionalBinSpec bins{make_vec({1.0}), 0.05, BinKernel::Box};
  const auto cfg = budget(1.0, 40000, 100);
  const auto r = score_gradient(bm.model, make_vec({0.0}), bins, make_vec({1.0}), cfg);
  CHECK(close(r, 1.0, 0.05));
  CHECK(r.metadata.count("effective_count") == 1);
  bins.kernel = BinKernel::Gaussian;
  CHECK(close(score_gradient(bm.model, make_vec({0.0}), bins, make_vec({1.0}), cfg), 1.0, 0.05));
  bins = {make_vec({0.0}), 0.05, BinKernel::Box};
  CHECK(close(score_gradient(bm.model, make_vec({0.0}), bins, make_vec({1.0}), cfg), 0.0));
  const auto bm2 = make_scenario("bm2d");
  ConditionalBinSpec plane{make_vec({1.0, 0.0}), 0.2, BinKernel::Box};
  CHECK(close(score_gradient(bm2.model, make_vec({0.0, 0.0}), plane, make_vec({0.0, 1.0}), cfg), 0.0));
  ConditionalBinSpec far{make_vec({40.0}), 0.01, BinKernel::Box};
  CHECK(code_of([&] { (void)score_gradient(bm.model, make_vec({0.0}), far, make_vec({1.0}), budget(1.0, 100, 10)); }) ==
        ErrorCode::EmptyBin);
}

TEST_CASE("lie_group_gradient") {
  const auto s = make_scenario("so3");
  REQUIRE(s.lie.has_value());
  const Mat3 g0 = Mat3::Identity();
  const auto cfg = budget(0.5, 4000, 100);
  CHECK(close(lie_group_gradient(*s.lie, g0, make_observable("one", s), s.default_v0, cfg), 0.0));
  const auto zero = lie_group_gradient(*s.lie, g0, make_observable("trace", s), Vec::Zero(9), cfg);
  CHECK(zero.mean == 0.0);
  const auto a = lie_group_gradient(*s.lie, g0, make_observable("entry21", s), s.default_v0, cfg);
  const auto b = bel_gradient(s.lie->embedded, so3_embed(g0), make_observable("entry21", s), s.default_v0, cfg);
  CHECK(agree(a, b));
  LieGroupModel fake = *s.lie;
  fake.embedded = make_gradient_sphere_model(3);
  CHECK(code_of([&] { (void)lie_group_gradient(fake, g0, make_observable("trace", s), s.default_v0, cfg); }) ==
        ErrorCode::NotLieGroup);
}

TEST_CASE("results do not depend on the worker count") {
  const auto s = make_scenario("sphere3");
  const auto f = make_observable("height", s);
  const auto cfg = budget(0.5, 3000, 100, 5);
  std::vector<double> means;
  for (const char* workers : {"1", "4"}) {
    ::setenv("SEMIGRAD_THREADS", workers, 1);
    means.push_back(bel_gradient(s.model, s.default_x0, f, s.default_v0, cfg).mean);
  }
  ::unsetenv("SEMIGRAD_THREADS");
  CHECK(means[0] == means[1]);
}

TEST_CASE("blown-up paths are counted and invalidate the estimate") {
  const auto c = make_scenario("cubic1d");
  const auto r = semigroup_value(c.model, c.default_x0, make_observable("x", c), budget(1.0, 500, 200));
  CHECK(r.n_rejected > 5);
  CHECK_FALSE(r.valid);
}
