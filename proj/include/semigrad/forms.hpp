#pragma once

#include "semigrad/estimators.hpp"
#include "semigrad/models.hpp"
#include "semigrad/paths.hpp"
#include "semigrad/variation.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace semigrad {

/// A differential q-form given extrinsically: eval(x, (v^1..v^q)) with tangent
/// v^i, and its h-codifferential as a (q-1)-form. Degree 0 holds functions.
struct FormField {
  std::string id;
  int degree = 1;
  std::function<double(const Vec& x, std::span<const Vec> vectors)> eval;
  std::function<double(const Vec& x, std::span<const Vec> vectors)> codiff;
  bool is_closed = false;
  std::optional<double> bound;

  [[nodiscard]] double operator()(const Vec& x, std::span<const Vec> vectors) const {
    return eval(x, vectors);
  }
};

/// Alternating q-tensor on a d-dimensional inner-product space, stored as the
/// full antisymmetric component array in an orthonormal frame (d <= 3).
/// Wedge products use the determinant convention: (e^1 ^ e^2)(e_1, e_2) = 1.
class AlternatingTensor {
 public:
  AlternatingTensor(int dim, int degree);

  static AlternatingTensor scalar(int dim, double value);
  /// Components form(x)(e_{i1}, ..., e_{iq}) in the given orthonormal frame.
  static AlternatingTensor from_form(const FormField& form, const Vec& x,
                                     const std::vector<Vec>& frame);

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] int degree() const noexcept { return degree_; }

  [[nodiscard]] double component(std::span<const int> indices) const;
  /// Sets the component for `indices` and every permutation with its sign.
  void set_component(std::span<const int> indices, double value);

  /// Full contraction with q vectors given in frame coordinates.
  [[nodiscard]] double evaluate(std::span<const Vec> coords) const;

  [[nodiscard]] AlternatingTensor wedge(const AlternatingTensor& other) const;

  AlternatingTensor& operator+=(const AlternatingTensor& other);
  AlternatingTensor& operator*=(double s);

 private:
  [[nodiscard]] std::size_t offset(std::span<const int> indices) const;

  int dim_;
  int degree_;
  std::vector<double> data_;
};

/// sum_k phi(x_k)(X(x_k) dB_k) - 1/2 sum_k delta^h phi(x_k) dt.
double line_integral_one_form(const DiffusionModel& model, const Trajectory& traj,
                              const NoisePath& noise, const FormField& phi);

/// (1/q) sum_k theta(X dB_k, TF alpha...) - 1/2 sum_k delta^h theta(TF alpha...) dt,
/// with alpha carried by the q-1 first-variation paths.
double q_form_line_integral(const DiffusionModel& model, const Trajectory& traj,
                            const NoisePath& noise, std::span<const VariationPath> alpha,
                            const FormField& theta);

/// (P_t phi)(v0) for a closed 1-form.
EstimatorResult one_form_semigroup(const DiffusionModel& model, const Vec& x0,
                                   const FormField& phi, const Vec& v0, const McConfig& cfg);

/// (P_t theta)(v0^1, ..., v0^q) = (1/t) E (Psi ^ L)(v0) for a closed q-form theta,
/// Psi = sum_k <X dB_k, TF_k(.)> and L the (q-1)-form line integral.
EstimatorResult q_form_semigroup(const DiffusionModel& model, const Vec& x0,
                                 const FormField& theta, std::span<const Vec> v0,
                                 const McConfig& cfg);

/// d(P_t phi)(v0^1, ..., v0^q) = (1/t) E (Psi ^ phi(TF_t .))(v0) for a (q-1)-form phi.
EstimatorResult form_exterior_gradient(const DiffusionModel& model, const Vec& x0,
                                       const FormField& phi, std::span<const Vec> v0,
                                       const McConfig& cfg);

// Built-in forms. Codifferentials include the h-term -2 i_{grad h}.

/// dtheta on the unit circle: v -> <(-x2, x1), v>.
FormField make_dtheta_form(const DiffusionModel& circle);
/// df, with delta^h df = -Laplacian^h f. Needs grad and hess of f.
FormField make_exact_form(const DiffusionModel& model, const ScalarObservable& f);
/// A function viewed as a 0-form.
FormField make_function_form(const ScalarObservable& f);
/// Area form of S^2: (a, b) -> det[x, a, b].
FormField make_volume_form_s2(const DiffusionModel& sphere);
/// g * vol on S^2; delta(g vol)(v) = <grad g, x cross v>.
FormField make_scaled_volume_form_s2(const DiffusionModel& sphere, const ScalarObservable& g);
/// Killing 1-form v -> <e3 x x, v> on S^2 (not closed: d of it is 2 x3 vol).
FormField make_rotation_form_s2(const DiffusionModel& sphere);

/// Laplace-Beltrami plus 2 L_{grad h} applied to f at x (flat or sphere models).
double h_laplacian(const DiffusionModel& model, const ScalarObservable& f, const Vec& x);

}  // namespace semigrad
