#pragma once

#include "semigrad/models.hpp"
#include "semigrad/paths.hpp"

#include <Eigen/Dense>

namespace semigrad {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

Mat3 so3_hat(const Vec3& xi);
Vec3 so3_vee(const Mat3& a);
/// Rodrigues formula.
Mat3 so3_exp(const Vec3& xi);
/// Ad(g) on vee coordinates; for SO(3) this is the matrix g itself.
Mat3 so3_adjoint(const Mat3& g);
/// Nearest rotation (orthogonal polar factor) by Newton iteration.
Mat3 so3_polar(const Mat3& a);

/// Column-major flattening of 3x3 matrices into the R^9 ambient space.
Vec so3_embed(const Mat3& g);
Mat3 so3_unembed(const Vec& x);

/// Left-invariant Brownian motion on SO(3): dg = s * sum_i g E_i o dB^i, with
/// E_i = hat(e_i) and the bi-invariant metric in which the frame is orthonormal.
struct LieGroupModel {
  DiffusionModel embedded;  // the same SDE seen as a constrained model in R^9
  double noise_scale = 1.0;
  int group_dim = 3;

  /// Frame at the identity: X(1) e_i = s E_i.
  [[nodiscard]] Mat3 algebra_frame(int i) const;
};

LieGroupModel make_so3_model(double noise_scale = 1.0);

/// Geometric Euler scheme g_{k+1} = g_k exp(s * dB_k); every state is exactly
/// a rotation up to rounding.
Trajectory integrate_lie(const LieGroupModel& model, const Mat3& g0, const TimeGrid& grid,
                         const NoisePath& noise);

}  // namespace semigrad
