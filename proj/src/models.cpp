#include "semigrad/models.hpp"

#include <algorithm>
#include <cmath>

namespace semigrad {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingDerivative: return "MissingDerivative";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::AllPathsBlewUp: return "AllPathsBlewUp";
    case ErrorCode::BlownUpPath: return "BlownUpPath";
    case ErrorCode::MissingGeometry: return "MissingGeometry";
    case ErrorCode::UnboundedPotential: return "UnboundedPotential";
    case ErrorCode::EmptyBin: return "EmptyBin";
    case ErrorCode::NotLieGroup: return "NotLieGroup";
    case ErrorCode::MissingCodifferential: return "MissingCodifferential";
    case ErrorCode::NotClosed: return "NotClosed";
    case ErrorCode::DegreeMismatch: return "DegreeMismatch";
    case ErrorCode::NotGradientSystem: return "NotGradientSystem";
    case ErrorCode::UnsupportedDegree: return "UnsupportedDegree";
    case ErrorCode::UnsupportedModel: return "UnsupportedModel";
    case ErrorCode::ZeroDirection: return "ZeroDirection";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::UnknownEstimator: return "UnknownEstimator";
    case ErrorCode::UnknownObservable: return "UnknownObservable";
    case ErrorCode::UnknownForm: return "UnknownForm";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::Flat: return "flat";
    case ModelKind::GradientSphere: return "gradient_sphere";
    case ModelKind::Circle: return "circle";
    case ModelKind::LieGroup: return "lie_group";
    case ModelKind::Custom: return "custom";
  }
  return "custom";
}

DiffusionModel make_flat_model(int n, int m, MatField X, VecField Z, MatDeriv DX, VecDeriv DZ,
                               MatDeriv2 D2X, VecDeriv2 D2Z, MatDeriv DY) {
  if (n < 1 || m < 1 || n > kMaxDim || m > kMaxDim) {
    fail(ErrorCode::DimensionMismatch, "dimensions must lie in [1, " + std::to_string(kMaxDim) + "]");
  }
  if (!X || !Z) fail(ErrorCode::InvalidArgument, "flat model needs X and Z");
  const Vec origin = Vec::Zero(n);
  const Mat x0 = X(0.0, origin);
  if (x0.rows() != n || x0.cols() != m) {
    fail(ErrorCode::DimensionMismatch, "X must map R^m to R^n");
  }
  if (Z(0.0, origin).size() != n) fail(ErrorCode::DimensionMismatch, "Z must be R^n valued");

  DiffusionModel model;
  model.id = "flat";
  model.kind = ModelKind::Flat;
  model.n = n;
  model.m = m;
  model.X = std::move(X);
  model.Z = std::move(Z);
  model.DX = std::move(DX);
  model.DZ = std::move(DZ);
  model.D2X = std::move(D2X);
  model.D2Z = std::move(D2Z);
  model.DY = std::move(DY);
  model.nabla_Z = model.DZ;
  return model;
}

DiffusionModel make_brownian_model(int n) {
  auto model = make_flat_model(
      n, n, [n](double, const Vec&) -> Mat { return Mat::Identity(n, n); },
      [n](double, const Vec&) -> Vec { return Vec::Zero(n); },
      [n](double, const Vec&, const Vec&) -> Mat { return Mat::Zero(n, n); },
      [n](double, const Vec&, const Vec&) -> Vec { return Vec::Zero(n); },
      [n](double, const Vec&, const Vec&, const Vec&) -> Mat { return Mat::Zero(n, n); },
      [n](double, const Vec&, const Vec&, const Vec&) -> Vec { return Vec::Zero(n); },
      [n](double, const Vec&, const Vec&) -> Mat { return Mat::Zero(n, n); });
  model.id = n == 1 ? "bm1d" : "bm" + std::to_string(n) + "d";
  // X = I is the gradient system of the identity embedding, with h = 0.
  model.gradient_system = true;
  model.h = [](const Vec&) { return 0.0; };
  model.grad_h = [n](const Vec&) -> Vec { return Vec::Zero(n); };
  model.Y = [n](double, const Vec&) -> Mat { return Mat::Identity(n, n); };
  return model;
}

DiffusionModel make_linear_drift_model(double kappa) {
  auto model = make_flat_model(
      1, 1, [](double, const Vec&) -> Mat { return Mat::Identity(1, 1); },
      [kappa](double, const Vec& x) -> Vec { return kappa * x; },
      [](double, const Vec&, const Vec&) -> Mat { return Mat::Zero(1, 1); },
      [kappa](double, const Vec&, const Vec& u) -> Vec { return kappa * u; },
      [](double, const Vec&, const Vec&, const Vec&) -> Mat { return Mat::Zero(1, 1); },
      [](double, const Vec&, const Vec&, const Vec&) -> Vec { return Vec::Zero(1); },
      [](double, const Vec&, const Vec&) -> Mat { return Mat::Zero(1, 1); });
  model.id = kappa == -1.0 ? "ou1d" : "linear1d";
  // Gradient h-Brownian system with h(x) = kappa x^2 / 2.
  model.gradient_system = true;
  model.h = [kappa](const Vec& x) { return 0.5 * kappa * x.squaredNorm(); };
  model.grad_h = [kappa](const Vec& x) -> Vec { return kappa * x; };
  model.Y = [](double, const Vec&) -> Mat { return Mat::Identity(1, 1); };
  return model;
}

DiffusionModel make_gradient_sphere_model(int n, std::optional<Vec> h_linear) {
  if (n < 2 || n > kMaxDim) fail(ErrorCode::InvalidArgument, "sphere model needs 2 <= n <= 9");
  const Vec a = h_linear.value_or(Vec::Zero(n));
  if (a.size() != n) fail(ErrorCode::DimensionMismatch, "h gradient must lie in R^n");
  const double half_codim_trace = 0.5 * (n - 1);

  DiffusionModel model;
  model.id = n == 2 ? "circle" : "sphere" + std::to_string(n);
  model.kind = n == 2 ? ModelKind::Circle : ModelKind::GradientSphere;
  model.n = n;
  model.m = n;
  model.gradient_system = true;

  // X(x) e = e - <x, e> x is the gradient of x -> <x, e> restricted to the sphere.
  model.X = [n](double, const Vec& x) -> Mat {
    return Mat::Identity(n, n) - x * x.transpose();
  };
  model.A = [a](double, const Vec& x) -> Vec { return a - a.dot(x) * x; };
  model.Z = [a, half_codim_trace](double, const Vec& x) -> Vec {
    return a - a.dot(x) * x - half_codim_trace * x;
  };
  model.DX = [](double, const Vec& x, const Vec& u) -> Mat {
    return -(u * x.transpose() + x * u.transpose());
  };
  model.DZ = [a, half_codim_trace](double, const Vec& x, const Vec& u) -> Vec {
    return -a.dot(u) * x - a.dot(x) * u - half_codim_trace * u;
  };
  model.Y = [n](double, const Vec& x) -> Mat {
    return Mat::Identity(n, n) - x * x.transpose();
  };
  model.DY = [](double, const Vec& x, const Vec& u) -> Mat {
    return -(u * x.transpose() + x * u.transpose());
  };
  model.nabla_Z = [a](double, const Vec& x, const Vec& v) -> Vec {
    const Vec d = -a.dot(v) * x - a.dot(x) * v;
    return d - x.dot(d) * x;
  };
  model.h = [a](const Vec& x) { return a.dot(x); };
  model.grad_h = [a](const Vec&) -> Vec { return a; };

  ManifoldGeometry geo;
  geo.dim = n - 1;
  geo.constraint_residual = [](const Vec& x) { return std::abs(x.norm() - 1.0); };
  geo.project_tangent = [](const Vec& x, const Vec& w) -> Vec { return w - x.dot(w) * x; };
  geo.retract = [](const Vec& x) -> Vec { return x / x.norm(); };
  geo.ricci_sharp = [n](const Vec& x, const Vec& v) -> Vec {
    return static_cast<double>(n - 2) * (v - x.dot(v) * x);
  };
  geo.exp_map = [](const Vec& x, const Vec& v) -> Vec {
    const double len = v.norm();
    if (len == 0.0) return x;
    return std::cos(len) * x + std::sin(len) * (v / len);
  };
  model.geometry = std::move(geo);
  return model;
}

Mat right_inverse(const DiffusionModel& model, double t, const Vec& x) {
  if (model.Y) return model.Y(t, x);
  const Mat X = model.X(t, x);
  if (model.gradient_system) return X.transpose();
  if (!model.constrained()) {
    const Mat G = X * X.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> eig(G);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * std::max(1.0, hi))) {
      fail(ErrorCode::Degenerate, "X(x) X(x)^T is singular at the requested point");
    }
    return X.transpose() * G.inverse();
  }
  Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double tol = 1e-12 * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > tol ? 1 : 0;
  if (rank < model.geometry->dim) {
    fail(ErrorCode::Degenerate, "X(x) does not span the tangent space");
  }
  Mat inv_s = Mat::Zero(s.size(), s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) inv_s(i, i) = s(i) > tol ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * inv_s * svd.matrixU().transpose();
}

Mat right_inverse_derivative(const DiffusionModel& model, double t, const Vec& x, const Vec& u) {
  if (model.DY) return model.DY(t, x, u);
  if (!model.DX) fail(ErrorCode::MissingDerivative, "DY needs DX");
  const Mat dX = model.DX(t, x, u);
  if (model.gradient_system) return dX.transpose();
  if (model.constrained()) {
    fail(ErrorCode::MissingDerivative, "constrained model must declare DY");
  }
  // Y = X^T G^{-1}, G = X X^T.
  const Mat X = model.X(t, x);
  const Mat G_inv = (X * X.transpose()).inverse();
  const Mat dG = dX * X.transpose() + X * dX.transpose();
  return dX.transpose() * G_inv - X.transpose() * G_inv * dG * G_inv;
}

Vec stratonovich_to_ito_drift(const DiffusionModel& model, double t, const Vec& x) {
  if (!model.DX) fail(ErrorCode::MissingDerivative, "Ito drift correction needs DX");
  const Mat X = model.X(t, x);
  Vec drift = model.A ? model.A(t, x) : Vec::Zero(model.n);
  for (int i = 0; i < model.m; ++i) {
    const Vec column = X.col(i);
    drift += 0.5 * model.DX(t, x, column).col(i);
  }
  return drift;
}

MatDeriv finite_difference_DX(MatField X, double step) {
  return [X = std::move(X), step](double t, const Vec& x, const Vec& u) -> Mat {
    return (X(t, x + step * u) - X(t, x - step * u)) / (2.0 * step);
  };
}

VecDeriv finite_difference_DZ(VecField Z, double step) {
  return [Z = std::move(Z), step](double t, const Vec& x, const Vec& u) -> Vec {
    return (Z(t, x + step * u) - Z(t, x - step * u)) / (2.0 * step);
  };
}

std::vector<Vec> tangent_frame(const DiffusionModel& model, const Vec& x) {
  const int dim = model.geometry ? model.geometry->dim : model.n;
  std::vector<Vec> frame;
  frame.reserve(static_cast<std::size_t>(dim));
  for (int j = 0; j < model.n && static_cast<int>(frame.size()) < dim; ++j) {
    Vec w = model.project(x, Vec::Unit(model.n, j));
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vec& e : frame) w -= model.inner(x, e, w) * e;
    }
    const double len = std::sqrt(model.inner(x, w, w));
    if (len > 1e-8) frame.push_back(w / len);
  }
  return frame;
}

}  // namespace semigrad
