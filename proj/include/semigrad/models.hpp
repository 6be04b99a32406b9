#pragma once

#include "semigrad/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace semigrad {

// Coefficient callbacks. Every field takes the coefficient time first so that
// time-dependent (and time-reversed) systems share one signature; autonomous
// models ignore it.
using MatField = std::function<Mat(double t, const Vec& x)>;
using VecField = std::function<Vec(double t, const Vec& x)>;
using MatDeriv = std::function<Mat(double t, const Vec& x, const Vec& u)>;
using MatDeriv2 = std::function<Mat(double t, const Vec& x, const Vec& u, const Vec& v)>;
using VecDeriv = std::function<Vec(double t, const Vec& x, const Vec& u)>;
using VecDeriv2 = std::function<Vec(double t, const Vec& x, const Vec& u, const Vec& v)>;

enum class ModelKind { Flat, GradientSphere, Circle, LieGroup, Custom };

std::string_view to_string(ModelKind kind) noexcept;

/// Extrinsic description of an embedded submanifold M of the ambient space.
struct ManifoldGeometry {
  int dim = 0;  // intrinsic dimension
  std::function<double(const Vec& x)> constraint_residual;
  std::function<Vec(const Vec& x, const Vec& w)> project_tangent;
  std::function<Vec(const Vec& x)> retract;
  /// Ric^#(v) as an endomorphism of T_xM.
  std::function<Vec(const Vec& x, const Vec& v)> ricci_sharp;
  /// Riemannian metric on T_xM; defaults to the ambient dot product when empty.
  std::function<double(const Vec& x, const Vec& u, const Vec& v)> metric;
  /// Geodesic through x with initial velocity v, evaluated at unit time.
  std::function<Vec(const Vec& x, const Vec& v)> exp_map;

  [[nodiscard]] double inner(const Vec& x, const Vec& u, const Vec& v) const {
    return metric ? metric(x, u, v) : u.dot(v);
  }
  [[nodiscard]] double ricci(const Vec& x, const Vec& u, const Vec& v) const {
    return inner(x, ricci_sharp(x, u), v);
  }
};

/// One SDE scenario dx = X(x) dB + Z(x) dt (Ito) or dx = X(x) o dB + A(x) dt.
///
/// For constrained models the coefficients are extended to a neighbourhood in
/// the ambient space; DX, DZ are ambient directional derivatives of those
/// extensions and `nabla_Z` is the Levi-Civita derivative of the generator drift
/// Z = A + 1/2 sum nabla_{X^i} X^i on M.
struct DiffusionModel {
  std::string id;
  ModelKind kind = ModelKind::Custom;
  int n = 0;  // ambient dimension
  int m = 0;  // noise dimension

  MatField X;      // n x m
  VecField A;      // Stratonovich drift
  VecField Z;      // Ito drift in ambient coordinates
  MatDeriv DX;     // DX(x)(u), n x m
  MatDeriv2 D2X;   // D^2X(x)(u, v), n x m
  VecDeriv DZ;
  VecDeriv2 D2Z;
  MatField Y;      // right inverse, m x n
  MatDeriv DY;     // DY(x)(u), m x n
  VecDeriv nabla_Z;

  std::optional<ManifoldGeometry> geometry;
  bool gradient_system = false;
  /// h of an h-Brownian system (generator 1/2 Laplacian + grad h).
  std::function<double(const Vec& x)> h;
  std::function<Vec(const Vec& x)> grad_h;  // ambient gradient of the extension of h

  double blow_up_radius = 1e8;

  [[nodiscard]] bool constrained() const noexcept { return geometry.has_value(); }
  [[nodiscard]] Vec project(const Vec& x, const Vec& w) const {
    return geometry ? geometry->project_tangent(x, w) : w;
  }
  [[nodiscard]] double inner(const Vec& x, const Vec& u, const Vec& v) const {
    return geometry ? geometry->inner(x, u, v) : u.dot(v);
  }
};

struct ScalarObservable {
  std::string id;
  std::function<double(const Vec& x)> f;
  std::function<Vec(const Vec& x)> grad;  // ambient gradient, df(x)(v) = <grad, v>
  std::function<Mat(const Vec& x)> hess;  // ambient Hessian
  std::optional<double> sup_abs;
};

struct PotentialField {
  std::function<double(double t, const Vec& x)> V;
  std::function<Vec(double t, const Vec& x)> grad;
  double upper_bound = 0.0;
};

/// Flat model from user callbacks; fills Y from `right_inverse` when absent.
DiffusionModel make_flat_model(int n, int m, MatField X, VecField Z, MatDeriv DX, VecDeriv DZ,
                               MatDeriv2 D2X = {}, VecDeriv2 D2Z = {}, MatDeriv DY = {});

DiffusionModel make_brownian_model(int n);
/// dx = dB + kappa * x dt (kappa = -1 is the Ornstein-Uhlenbeck case).
DiffusionModel make_linear_drift_model(double kappa);
/// Gradient Brownian system on the unit sphere S^{n-1} in R^n, h(x) = <a, x>.
DiffusionModel make_gradient_sphere_model(int n, std::optional<Vec> h_linear = std::nullopt);

/// Right inverse Y(x) of X(x): declared callback, else X^T (X X^T)^{-1} on flat
/// space, X^T on gradient systems and the pseudo-inverse otherwise.
Mat right_inverse(const DiffusionModel& model, double t, const Vec& x);
/// DY(x)(u); falls back to differentiating the flat right-inverse formula.
Mat right_inverse_derivative(const DiffusionModel& model, double t, const Vec& x, const Vec& u);

/// Stratonovich-to-Ito drift: A(x) + 1/2 sum_i DX^i(x)(X^i(x)).
Vec stratonovich_to_ito_drift(const DiffusionModel& model, double t, const Vec& x);

/// Central finite-difference fallbacks for missing analytic derivatives. Models
/// built this way carry a "fd" note in their id since estimator bias compounds.
MatDeriv finite_difference_DX(MatField X, double step = 1e-6);
VecDeriv finite_difference_DZ(VecField Z, double step = 1e-6);

/// Orthonormal basis of T_xM (ambient basis vectors projected and
/// Gram-Schmidt-orthonormalised in lexicographic order).
std::vector<Vec> tangent_frame(const DiffusionModel& model, const Vec& x);

}  // namespace semigrad
