#include <doctest.h>

#include "semigrad/experiment.hpp"
#include "semigrad/lie_group.hpp"
#include "semigrad/models.hpp"

#include <cmath>
#include <random>

using namespace semigrad;

namespace {

std::mt19937_64& gen() {
  static std::mt19937_64 g(20240611);
  return g;
}

Vec gaussian(int n) {
  std::normal_distribution<double> nd;
  Vec x(n);
  for (int i = 0; i < n; ++i) x(i) = nd(gen());
  return x;
}

Vec random_unit(int n) {
  const Vec x = gaussian(n);
  return x / x.norm();
}

DiffusionModel scaled_line(double c) {
  return make_flat_model(
      1, 1, [c](double, const Vec&) -> Mat { return Mat::Constant(1, 1, c); },
      [](double, const Vec&) -> Vec { return Vec::Zero(1); },
      [](double, const Vec&, const Vec&) -> Mat { return Mat::Zero(1, 1); },
      [](double, const Vec&, const Vec&) -> Vec { return Vec::Zero(1); });
}

}  // namespace

TEST_CASE("flat constructors") {
  const auto bm = make_brownian_model(1);
  CHECK(bm.n == 1);
  CHECK(bm.m == 1);
  CHECK(bm.X(0.0, make_vec({3.0}))(0, 0) == 1.0);
  CHECK(bm.Z(0.0, make_vec({3.0}))(0) == 0.0);

  const auto ou = make_linear_drift_model(-1.0);
  for (double x : {-2.0, 0.0, 5.0}) CHECK(ou.DZ(0.0, make_vec({x}), make_vec({1.0}))(0) == -1.0);

  const auto planar = make_brownian_model(2);
  CHECK((right_inverse(planar, 0.0, make_vec({0.4, -1.0})) - Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("right inverse of a scaled flat model") {
  const auto model = scaled_line(2.0);
  CHECK(right_inverse(model, 0.0, make_vec({0.7}))(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("sphere coefficients") {
  const auto circle = make_gradient_sphere_model(2);
  const Mat X = circle.X(0.0, make_vec({1.0, 0.0}));
  CHECK((X.col(0)).norm() == 0.0);
  CHECK((X.col(1) - make_vec({0.0, 1.0})).norm() == 0.0);

  const auto s2 = make_gradient_sphere_model(3);
  for (int i = 0; i < 20; ++i) {
    const Vec x = random_unit(3);
    const Vec v = s2.project(x, random_unit(3));
    const Vec unit = v / v.norm();
    CHECK(s2.geometry->ricci(x, unit, unit) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("X Y is the tangent projection on spheres") {
  for (int n : {2, 3, 5}) {
    const auto model = make_gradient_sphere_model(n);
    for (int i = 0; i < 100; ++i) {
      const Vec x = random_unit(n);
      const Mat P = Mat::Identity(n, n) - x * x.transpose();
      const Mat XY = model.X(0.0, x) * right_inverse(model, 0.0, x);
      CHECK((XY - P).norm() <= 1e-10);
      const Vec w = gaussian(n);
      const Vec pw = model.project(x, w);
      CHECK((model.project(x, pw) - pw).norm() <= 1e-12);
      const Vec u = gaussian(n);
      CHECK(std::abs(model.project(x, u).dot(w) - u.dot(model.project(x, w))) <= 1e-12);
    }
  }
}

TEST_CASE("X Y is the identity on flat nondegenerate models") {
  const auto warp = make_scenario("warp2d").model;
  for (int i = 0; i < 50; ++i) {
    const Vec x = 2.0 * gaussian(2);
    CHECK((warp.X(0.0, x) * right_inverse(warp, 0.0, x) - Mat::Identity(2, 2)).norm() <= 1e-8);
  }
}

TEST_CASE("DX(u) Y v + X DY(u) v vanishes") {
  const auto warp = make_scenario("warp2d").model;
  for (int i = 0; i < 50; ++i) {
    const Vec x = gaussian(2), u = gaussian(2), v = gaussian(2);
    const Vec lhs = warp.DX(0.0, x, u) * (right_inverse(warp, 0.0, x) * v) +
                    warp.X(0.0, x) * (right_inverse_derivative(warp, 0.0, x, u) * v);
    CHECK(lhs.norm() <= 1e-6);
  }
  // On the sphere the identity holds for the tangential part with tangent u, v.
  const auto s2 = make_gradient_sphere_model(3);
  for (int i = 0; i < 50; ++i) {
    const Vec x = random_unit(3);
    const Vec u = s2.project(x, gaussian(3)), v = s2.project(x, gaussian(3));
    const Vec lhs = s2.DX(0.0, x, u) * (s2.Y(0.0, x) * v) + s2.X(0.0, x) * (s2.DY(0.0, x, u) * v);
    CHECK(s2.project(x, lhs).norm() <= 1e-6);
  }
}

TEST_CASE("gradient systems satisfy sum_i nabla_{X^i} X^i = 0") {
  for (int n : {2, 3, 4}) {
    const auto model = make_gradient_sphere_model(n);
    for (int i = 0; i < 10; ++i) {
      const Vec x = random_unit(n);
      const Mat X = model.X(0.0, x);
      Vec sum = Vec::Zero(n);
      for (int j = 0; j < model.m; ++j) sum += model.DX(0.0, x, X.col(j)).col(j);
      CHECK(model.project(x, sum).norm() <= 1e-12);
    }
  }
}

TEST_CASE("analytic derivatives agree with finite differences") {
  const double h = 1e-6;
  const auto warp = make_scenario("warp2d").model;
  const auto s2 = make_gradient_sphere_model(3, make_vec({0.2, -0.1, 0.3}));
  for (const DiffusionModel* model : {&warp, &s2}) {
    const auto fd_dx = finite_difference_DX(model->X, h);
    const auto fd_dz = finite_difference_DZ(model->Z, h);
    for (int i = 0; i < 10; ++i) {
      const Vec x = model->constrained() ? random_unit(model->n) : gaussian(model->n);
      const Vec u = gaussian(model->n);
      CHECK((model->DX(0.0, x, u) - fd_dx(0.0, x, u)).norm() <= 1e-6);
      CHECK((model->DZ(0.0, x, u) - fd_dz(0.0, x, u)).norm() <= 1e-6);
      const Mat fd_dy = (right_inverse(*model, 0.0, x + h * u) - right_inverse(*model, 0.0, x - h * u)) /
                        (2.0 * h);
      CHECK((right_inverse_derivative(*model, 0.0, x, u) - fd_dy).norm() <= 1e-6);
    }
  }
  // Second derivative of the warp coefficient.
  for (int i = 0; i < 10; ++i) {
    const Vec x = gaussian(2), u = gaussian(2), v = gaussian(2);
    const Mat fd = (warp.DX(0.0, x + h * v, u) - warp.DX(0.0, x - h * v, u)) / (2.0 * h);
    CHECK((warp.D2X(0.0, x, u, v) - fd).norm() <= 1e-6);
  }
}

TEST_CASE("SO(3) basics") {
  const Vec3 xi(0.3, -0.2, 0.9);
  CHECK((so3_vee(so3_hat(xi)) - xi).norm() == 0.0);
  const Mat3 g = so3_exp(xi);
  CHECK((g.transpose() * g - Mat3::Identity()).norm() <= 1e-12);
  CHECK(g.determinant() == doctest::Approx(1.0));
  CHECK((so3_unembed(so3_embed(g)) - g).norm() == 0.0);
  CHECK((so3_polar(g + 1e-4 * Mat3::Ones()) * so3_polar(g + 1e-4 * Mat3::Ones()).transpose() -
         Mat3::Identity()).norm() <= 1e-10);
}

TEST_CASE("Ad preserves the Lie-algebra norm") {
  for (int i = 0; i < 50; ++i) {
    const Vec g_coords = gaussian(3);
    const Mat3 g = so3_exp(Vec3(g_coords(0), g_coords(1), g_coords(2)));
    const Vec v = gaussian(3);
    const Vec3 xi(v(0), v(1), v(2));
    CHECK(std::abs((so3_adjoint(g) * xi).norm() - xi.norm()) <= 1e-10);
    CHECK((so3_vee(g * so3_hat(xi) * g.transpose()) - so3_adjoint(g) * xi).norm() <= 1e-10);
  }
}

TEST_CASE("SO(3) frame is left invariant") {
  const auto lie = make_so3_model(0.7);
  const auto& model = lie.embedded;
  for (int i = 0; i < 20; ++i) {
    const Vec a = gaussian(3), b = gaussian(3);
    const Mat3 g = so3_exp(Vec3(a(0), a(1), a(2)));
    const Mat3 h = so3_exp(Vec3(b(0), b(1), b(2)));
    const Mat Xgh = model.X(0.0, so3_embed(g * h));
    const Mat Xh = model.X(0.0, so3_embed(h));
    for (int j = 0; j < 3; ++j) {
      const Mat3 translated = g * so3_unembed(Xh.col(j));
      CHECK((Xgh.col(j) - so3_embed(translated)).norm() <= 1e-12);
    }
  }
  for (int j = 0; j < 3; ++j) {
    const Mat3 frame = so3_unembed(model.X(0.0, so3_embed(Mat3::Identity())).col(j));
    CHECK((frame - lie.algebra_frame(j)).norm() <= 1e-14);
  }
}

TEST_CASE("tangent frames are orthonormal") {
  const auto s2 = make_gradient_sphere_model(3);
  const Vec x = random_unit(3);
  const auto frame = tangent_frame(s2, x);
  REQUIRE(frame.size() == 2);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    CHECK(std::abs(frame[i].dot(x)) <= 1e-12);
    for (std::size_t j = 0; j < frame.size(); ++j)
      CHECK(frame[i].dot(frame[j]) == doctest::Approx(i == j ? 1.0 : 0.0));
  }
  const auto flat = tangent_frame(make_brownian_model(2), make_vec({1.0, 2.0}));
  CHECK(flat.size() == 2);
}
