#include "semigrad/lie_group.hpp"

#include <cmath>

namespace semigrad {

Mat3 so3_hat(const Vec3& xi) {
  Mat3 a;
  a << 0.0, -xi(2), xi(1),
       xi(2), 0.0, -xi(0),
       -xi(1), xi(0), 0.0;
  return a;
}

Vec3 so3_vee(const Mat3& a) {
  // Skew part only, so that vee(hat(xi)) == xi and symmetric noise is discarded.
  return Vec3(0.5 * (a(2, 1) - a(1, 2)), 0.5 * (a(0, 2) - a(2, 0)), 0.5 * (a(1, 0) - a(0, 1)));
}

Mat3 so3_exp(const Vec3& xi) {
  const double theta2 = xi.squaredNorm();
  const Mat3 k = so3_hat(xi);
  double a;
  double b;
  if (theta2 < 1e-8) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * k + b * (k * k);
}

Mat3 so3_adjoint(const Mat3& g) { return g; }

Mat3 so3_polar(const Mat3& a) {
  Mat3 r = a;
  for (int it = 0; it < 20; ++it) {
    const Mat3 next = 0.5 * (r + r.inverse().transpose());
    const double change = (next - r).norm();
    r = next;
    if (change < 1e-15) break;
  }
  return r;
}

Vec so3_embed(const Mat3& g) {
  Vec x(9);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) x(3 * c + r) = g(r, c);
  return x;
}

Mat3 so3_unembed(const Vec& x) {
  Mat3 g;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) g(r, c) = x(3 * c + r);
  return g;
}

namespace {

const std::array<Mat3, 3>& basis() {
  static const std::array<Mat3, 3> e{so3_hat(Vec3::UnitX()), so3_hat(Vec3::UnitY()),
                                     so3_hat(Vec3::UnitZ())};
  return e;
}

Mat3 skew(const Mat3& a) { return 0.5 * (a - a.transpose()); }

}  // namespace

Mat3 LieGroupModel::algebra_frame(int i) const { return noise_scale * basis().at(i); }

LieGroupModel make_so3_model(double noise_scale) {
  if (!(noise_scale > 0.0)) fail(ErrorCode::InvalidArgument, "noise_scale must be positive");
  const double s = noise_scale;
  const double s2 = s * s;

  DiffusionModel model;
  model.id = "so3";
  model.kind = ModelKind::LieGroup;
  model.n = 9;
  model.m = 3;
  model.X = [s](double, const Vec& x) -> Mat {
    const Mat3 g = so3_unembed(x);
    Mat out(9, 3);
    for (int i = 0; i < 3; ++i) out.col(i) = so3_embed(s * g * basis()[i]);
    return out;
  };
  model.A = [](double, const Vec&) -> Vec { return Vec::Zero(9); };
  // 1/2 s^2 g sum_i E_i^2 = -s^2 g.
  model.Z = [s2](double, const Vec& x) -> Vec { return -s2 * x; };
  model.DX = [s](double, const Vec&, const Vec& u) -> Mat {
    const Mat3 du = so3_unembed(u);
    Mat out(9, 3);
    for (int i = 0; i < 3; ++i) out.col(i) = so3_embed(s * du * basis()[i]);
    return out;
  };
  model.D2X = [](double, const Vec&, const Vec&, const Vec&) -> Mat { return Mat::Zero(9, 3); };
  model.DZ = [s2](double, const Vec&, const Vec& u) -> Vec { return -s2 * u; };
  model.D2Z = [](double, const Vec&, const Vec&, const Vec&) -> Vec { return Vec::Zero(9); };
  // The frame is orthonormal for <a, b> = tr(a^T b) / (2 s^2), so X^T X = 2 s^2 I.
  model.Y = [s, s2](double, const Vec& x) -> Mat {
    const Mat3 g = so3_unembed(x);
    Mat out(3, 9);
    for (int i = 0; i < 3; ++i) out.row(i) = so3_embed(g * basis()[i]).transpose() * (s / (2.0 * s2));
    return out;
  };
  model.DY = [s, s2](double, const Vec&, const Vec& u) -> Mat {
    const Mat3 du = so3_unembed(u);
    Mat out(3, 9);
    for (int i = 0; i < 3; ++i) out.row(i) = so3_embed(du * basis()[i]).transpose() * (s / (2.0 * s2));
    return out;
  };
  // Left-invariant fields are geodesic for a bi-invariant metric: Z = 0 on the group.
  model.nabla_Z = [](double, const Vec&, const Vec&) -> Vec { return Vec::Zero(9); };

  ManifoldGeometry geo;
  geo.dim = 3;
  geo.constraint_residual = [](const Vec& x) {
    const Mat3 g = so3_unembed(x);
    return (g.transpose() * g - Mat3::Identity()).norm();
  };
  geo.project_tangent = [](const Vec& x, const Vec& w) -> Vec {
    const Mat3 g = so3_unembed(x);
    return so3_embed(g * skew(g.transpose() * so3_unembed(w)));
  };
  geo.retract = [](const Vec& x) -> Vec { return so3_embed(so3_polar(so3_unembed(x))); };
  geo.ricci_sharp = [s2](const Vec& x, const Vec& v) -> Vec {
    const Mat3 g = so3_unembed(x);
    return so3_embed((0.5 * s2) * (g * skew(g.transpose() * so3_unembed(v))));
  };
  geo.metric = [s2](const Vec&, const Vec& u, const Vec& v) { return u.dot(v) / (2.0 * s2); };
  geo.exp_map = [](const Vec& x, const Vec& v) -> Vec {
    const Mat3 g = so3_unembed(x);
    return so3_embed(g * so3_exp(so3_vee(g.transpose() * so3_unembed(v))));
  };
  model.geometry = std::move(geo);

  LieGroupModel lie;
  lie.embedded = std::move(model);
  lie.noise_scale = s;
  return lie;
}

Trajectory integrate_lie(const LieGroupModel& model, const Mat3& g0, const TimeGrid& grid,
                         const NoisePath& noise) {
  if (noise.m != 3 || noise.n_steps != grid.n_steps()) {
    fail(ErrorCode::DimensionMismatch, "SO(3) needs three-dimensional noise on the same grid");
  }
  if ((g0.transpose() * g0 - Mat3::Identity()).norm() > 1e-8) {
    fail(ErrorCode::InvalidArgument, "initial point is not a rotation");
  }
  Trajectory traj;
  traj.grid = grid;
  traj.states.reserve(static_cast<std::size_t>(grid.n_steps()) + 1);
  Mat3 g = g0;
  traj.states.push_back(so3_embed(g));
  for (int k = 0; k < grid.n_steps(); ++k) {
    const auto db = noise.step(k);
    g = g * so3_exp(model.noise_scale * Vec3(db(0), db(1), db(2)));
    traj.states.push_back(so3_embed(g));
  }
  return traj;
}

}  // namespace semigrad
