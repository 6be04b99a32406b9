#pragma once

#include "semigrad/estimators.hpp"
#include "semigrad/models.hpp"

#include <optional>
#include <string>
#include <vector>

namespace semigrad {

/// Which printed quadratic form evaluate_hp uses.
///  - RnIto: 2<DZ v,v> + sum|DX^i v|^2 + (p-2) sum <DX^i v,v>^2/|v|^2 (flat models).
///  - Manifold: -Ric + 2<grad Z v,v> + sum|grad X^i v|^2 + (p-2) sum <grad X^i v,v>^2/|v|^2.
///  - UnitCrossH2: RnIto with the cross term weighted by 1 (equals RnIto at p = 3).
///  - OperatorNormH2: manifold H_2 with the full norm |grad X^i(x)|^2 in place of |grad X^i(v)|^2.
enum class HpForm { RnIto, Manifold, UnitCrossH2, OperatorNormH2 };

std::string_view to_string(HpForm form) noexcept;
HpForm parse_hp_form(std::string_view name);

struct HpSample {
  Vec x;
  Vec v;
  double value = 0.0;  // H_p(x)(v,v) / |v|^2
};

struct HpReport {
  double p = 2.0;
  std::vector<HpSample> samples;
  double sup_estimate = 0.0;
  HpForm form_used = HpForm::RnIto;
};

struct BoundCheckReport {
  std::string name;
  double bound = 0.0;
  double empirical = 0.0;
  double std_error = 0.0;
  /// bound - (empirical - 3 SE); negative on failure.
  double margin = 0.0;
  bool pass = false;
  /// False when the bound constant is not established for this model (report is a ratio).
  bool decisive = true;
  std::vector<std::string> warnings;
  std::map<std::string, double> metadata;
};

/// H_p(x)(v,v) / |v|^2 for the chosen form. Norms use the model metric.
double evaluate_hp(const DiffusionModel& model, double p, const Vec& x, const Vec& v,
                   HpForm form);

/// Default form for a model: RnIto on flat space, Manifold otherwise.
HpForm default_hp_form(const DiffusionModel& model);

/// Quasi-random (Halton) points with unit tangent directions: the box [-box, box]^n on
/// flat space, the sphere for sphere models and exp-images of a ball for SO(3).
std::vector<std::pair<Vec, Vec>> sample_point_cloud(const DiffusionModel& model,
                                                    int n_points = 256, double box = 2.0);

HpReport sample_hp(const DiffusionModel& model, double p, HpForm form, int n_points = 256);

/// inf over unit v of Ric(v,v) - 2<grad Z v, v> at x (curvature lower bound function).
double curvature_rho(const DiffusionModel& model, const Vec& x);

/// Compares E|v_t|^p with k e^{c p t / 2}, k = 1. c defaults to sup H_p over the cloud.
/// Decisive only on flat models; elsewhere the report carries the ratio.
BoundCheckReport moment_bound_check(const DiffusionModel& model, const Vec& x0, const Vec& v0,
                                    double p, const McConfig& cfg,
                                    std::optional<double> c = std::nullopt);

/// Mean of W = sum <Y v_k, dB_k> against zero (3 SE); metadata carries
/// E int |Y v|^2 ds, E W^2 and its standard error.
BoundCheckReport martingale_mean_check(const DiffusionModel& model, const Vec& x0,
                                       const Vec& v0, const McConfig& cfg);

/// Per-path central difference of f(x_t) over x0 +- delta v0 (geodesic on manifolds)
/// with common noise.
EstimatorResult finite_difference_oracle(const DiffusionModel& model, const Vec& x0,
                                         const ScalarObservable& f, const Vec& v0, double delta,
                                         const McConfig& cfg);

struct GronwallConstants {
  double ellipticity = 1.0;  // delta with |Y(x)| <= 1/delta
  double alpha = 0.0;        // sup H_2
};

/// Sampled ellipticity and Gronwall constant over the point cloud.
GronwallConstants estimate_gronwall_constants(const DiffusionModel& model, int n_points = 256);

/// (1/delta) (1/t) sqrt((e^{alpha t} - 1) / alpha) sup|f|, alpha -> 0 limit t^{-1/2}.
double gronwall_bound_value(const GronwallConstants& c, double t, double sup_f);

/// bel_gradient at x0 against the Gronwall bound; pass if |estimate| - 3 SE <= bound.
BoundCheckReport gronwall_gradient_bound(const DiffusionModel& model, const ScalarObservable& f,
                                         const Vec& x0, const Vec& v0, const McConfig& cfg,
                                         std::optional<GronwallConstants> constants = std::nullopt);

/// |P_t f|_{L^p} + |grad P_t f|_{L^p} <= (1 + k/t) |f|_{L^p} on S^1 or S^2 with weight e^{2h}.
/// p = infinity is allowed. The left side is taken conservatively (|mean| - 3 SE).
BoundCheckReport sobolev_norm_check(const DiffusionModel& model, const ScalarObservable& f,
                                    double p, int grid_points, const McConfig& cfg);

}  // namespace semigrad
