// Scenario, observable and form registries plus the analytic oracle table.

#include "semigrad/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace semigrad {

namespace {

Mat zero_mat(int r, int c) { return Mat::Zero(r, c); }

DiffusionModel make_cubic_model() {
  auto model = make_flat_model(
      1, 1, [](double, const Vec&) -> Mat { return Mat::Identity(1, 1); },
      [](double, const Vec& x) -> Vec { return make_vec({x(0) * x(0) * x(0)}); },
      [](double, const Vec&, const Vec&) -> Mat { return zero_mat(1, 1); },
      [](double, const Vec& x, const Vec& u) -> Vec { return make_vec({3.0 * x(0) * x(0) * u(0)}); },
      [](double, const Vec&, const Vec&, const Vec&) -> Mat { return zero_mat(1, 1); },
      [](double, const Vec& x, const Vec& u, const Vec& v) -> Vec {
        return make_vec({6.0 * x(0) * u(0) * v(0)});
      });
  model.id = "cubic1d";
  model.Y = [](double, const Vec&) -> Mat { return Mat::Identity(1, 1); };
  return model;
}

/// dx^1 = dB^1, dx^2 = (2 + sin x^1) dB^2: DY is not symmetric in its two slots.
DiffusionModel make_warp_model() {
  auto model = make_flat_model(
      2, 2,
      [](double, const Vec& x) -> Mat {
        Mat X = Mat::Identity(2, 2);
        X(1, 1) = 2.0 + std::sin(x(0));
        return X;
      },
      [](double, const Vec&) -> Vec { return Vec::Zero(2); },
      [](double, const Vec& x, const Vec& u) -> Mat {
        Mat d = zero_mat(2, 2);
        d(1, 1) = std::cos(x(0)) * u(0);
        return d;
      },
      [](double, const Vec&, const Vec&) -> Vec { return Vec::Zero(2); },
      [](double, const Vec& x, const Vec& u, const Vec& v) -> Mat {
        Mat d = zero_mat(2, 2);
        d(1, 1) = -std::sin(x(0)) * u(0) * v(0);
        return d;
      },
      [](double, const Vec&, const Vec&, const Vec&) -> Vec { return Vec::Zero(2); });
  model.id = "warp2d";
  return model;
}

struct ScenarioEntry {
  std::string description;
  std::string oracle;
  std::function<Scenario()> build;
};

const std::map<std::string, ScenarioEntry>& registry() {
  static const std::map<std::string, ScenarioEntry> table = {
      {"bm1d",
       {"Brownian motion on R", "Gaussian heat kernel",
        [] { return Scenario{"", "", "", make_brownian_model(1), std::nullopt, make_vec({0.0}), make_vec({1.0})}; }}},
      {"bm2d",
       {"Brownian motion on R^2", "Gaussian heat kernel",
        [] {
          return Scenario{"", "", "", make_brownian_model(2), std::nullopt, make_vec({0.0, 0.0}),
                          make_vec({1.0, 0.0})};
        }}},
      {"ou1d",
       {"Ornstein-Uhlenbeck dx = dB - x dt", "Gaussian transition density",
        [] { return Scenario{"", "", "", make_linear_drift_model(-1.0), std::nullopt, make_vec({0.0}), make_vec({1.0})}; }}},
      {"grow1d",
       {"linear growth dx = dB + x dt", "Gaussian transition density",
        [] {
          auto m = make_linear_drift_model(1.0);
          m.id = "grow1d";
          return Scenario{"", "", "", m, std::nullopt, make_vec({0.0}), make_vec({1.0})};
        }}},
      {"cubic1d",
       {"explosive drift dx = dB + x^3 dt", "none",
        [] { return Scenario{"", "", "", make_cubic_model(), std::nullopt, make_vec({1.5}), make_vec({1.0})}; }}},
      {"warp2d",
       {"diagonal noise diag(1, 2 + sin x1) on R^2", "second moments in closed form",
        [] { return Scenario{"", "", "", make_warp_model(), std::nullopt, make_vec({0.3, 0.0}), make_vec({0.0, 1.0})}; }}},
      {"circle",
       {"gradient Brownian system on S^1", "Fourier modes e^{-t/2}",
        [] {
          return Scenario{"", "", "", make_gradient_sphere_model(2), std::nullopt, make_vec({1.0, 0.0}),
                          make_vec({0.0, 1.0})};
        }}},
      {"sphere3",
       {"gradient Brownian system on S^2 in R^3", "spherical harmonics e^{-t} (degree 1)",
        [] {
          return Scenario{"", "", "", make_gradient_sphere_model(3), std::nullopt,
                          make_vec({0.6, 0.0, 0.8}), make_vec({0.8, 0.0, -0.6})};
        }}},
      {"so3",
       {"left-invariant Brownian motion on SO(3), s = 1", "matrix entries e^{-s^2 t}",
        [] {
          LieGroupModel lie = make_so3_model(1.0);
          DiffusionModel embedded = lie.embedded;
          return Scenario{"", "", "", embedded, lie, so3_embed(Mat3::Identity()),
                          so3_embed(so3_hat(Vec3(0.0, 0.0, 1.0)))};
        }}},
  };
  return table;
}

int parse_index(std::string_view text, int n) {
  int k = -1;
  try {
    std::size_t used = 0;
    k = std::stoi(std::string(text), &used);
    if (used != text.size()) k = -1;
  } catch (const std::exception&) {
    k = -1;
  }
  if (k < 0 || k >= n) fail(ErrorCode::UnknownObservable, "coordinate index out of range");
  return k;
}

ScalarObservable coordinate(const std::string& id, int n, int k, std::optional<double> sup) {
  return ScalarObservable{
      id, [k](const Vec& x) { return x(k); },
      [n, k](const Vec&) -> Vec {
        Vec g = Vec::Zero(n);
        g(k) = 1.0;
        return g;
      },
      [n](const Vec&) -> Mat { return Mat::Zero(n, n); }, sup};
}

/// Linear functional x -> <c, x> with c given in embedded coordinates.
ScalarObservable linear(const std::string& id, const Vec& c, std::optional<double> sup) {
  const auto n = static_cast<int>(c.size());
  return ScalarObservable{id, [c](const Vec& x) { return c.dot(x); }, [c](const Vec&) -> Vec { return c; },
                          [n](const Vec&) -> Mat { return Mat::Zero(n, n); }, sup};
}

bool compact(const Scenario& s) { return s.model.constrained(); }

}  // namespace

std::vector<std::string> scenario_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, entry] : registry()) ids.push_back(id);
  return ids;
}

Scenario make_scenario(std::string_view id) {
  const auto it = registry().find(std::string(id));
  if (it == registry().end()) fail(ErrorCode::UnknownScenario, "no scenario '" + std::string(id) + "'");
  Scenario s = it->second.build();
  s.id = it->first;
  s.description = it->second.description;
  s.oracle_note = it->second.oracle;
  return s;
}

ScalarObservable make_observable(std::string_view id_view, const Scenario& scenario) {
  const std::string id(id_view);
  const int n = scenario.model.n;
  const bool sphere = compact(scenario) && !scenario.lie;
  if (id == "one") {
    return ScalarObservable{id, [](const Vec&) { return 1.0; }, [n](const Vec&) -> Vec { return Vec::Zero(n); },
                            [n](const Vec&) -> Mat { return Mat::Zero(n, n); }, 1.0};
  }
  if (id == "x") return coordinate(id, n, 0, sphere ? std::optional(1.0) : std::nullopt);
  if (id.rfind("coord:", 0) == 0) {
    return coordinate(id, n, parse_index(std::string_view(id).substr(6), n),
                      sphere ? std::optional(1.0) : std::nullopt);
  }
  if (id == "x_squared") {
    return ScalarObservable{id, [](const Vec& x) { return x.squaredNorm(); },
                            [](const Vec& x) -> Vec { return 2.0 * x; },
                            [n](const Vec&) -> Mat { return 2.0 * Mat::Identity(n, n); },
                            sphere ? std::optional(1.0) : std::nullopt};
  }
  if (id == "sin") {
    return ScalarObservable{id, [](const Vec& x) { return std::sin(x(0)); },
                            [n](const Vec& x) -> Vec {
                              Vec g = Vec::Zero(n);
                              g(0) = std::cos(x(0));
                              return g;
                            },
                            [n](const Vec& x) -> Mat {
                              Mat h = Mat::Zero(n, n);
                              h(0, 0) = -std::sin(x(0));
                              return h;
                            },
                            1.0};
  }
  if (id == "sin_theta" || id == "sign_sin_theta") {
    if (scenario.model.kind != ModelKind::Circle) {
      fail(ErrorCode::UnknownObservable, id + " is defined on the circle");
    }
    if (id == "sin_theta") return coordinate(id, n, 1, 1.0);
    // Discontinuous: no derivatives, so only derivative-free estimators apply.
    return ScalarObservable{id, [](const Vec& x) { return x(1) > 0.0 ? 1.0 : (x(1) < 0.0 ? -1.0 : 0.0); },
                            {}, {}, 1.0};
  }
  if (id == "height") {
    if (!sphere) fail(ErrorCode::UnknownObservable, "height is defined on spheres");
    return coordinate(id, n, n - 1, 1.0);
  }
  if (id == "trace" || id == "entry21") {
    if (!scenario.lie) fail(ErrorCode::UnknownObservable, id + " is defined on SO(3)");
    Mat3 c = Mat3::Zero();
    if (id == "trace") {
      c = Mat3::Identity();
    } else {
      c(1, 0) = 1.0;
    }
    return linear(id, so3_embed(c), id == "trace" ? 3.0 : 1.0);
  }
  fail(ErrorCode::UnknownObservable, "no observable '" + id + "'");
}

FormField make_form(std::string_view id_view, const Scenario& scenario) {
  const std::string id(id_view);
  if (id == "dtheta_s1") return make_dtheta_form(scenario.model);
  if (id == "vol_s2") return make_volume_form_s2(scenario.model);
  if (id == "rotation_s2") return make_rotation_form_s2(scenario.model);
  if (id == "height_vol_s2") return make_scaled_volume_form_s2(scenario.model, make_observable("height", scenario));
  if (id.rfind("exact:", 0) == 0) return make_exact_form(scenario.model, make_observable(id.substr(6), scenario));
  if (id.rfind("function:", 0) == 0) return make_function_form(make_observable(id.substr(9), scenario));
  fail(ErrorCode::UnknownForm, "no form '" + id + "'");
}

Vec second_form_vector(const std::optional<Vec>& v1, const Scenario& scenario, const Vec& x0,
                       const Vec& v0) {
  if (v1) {
    if (v1->size() != scenario.model.n) fail(ErrorCode::InvalidConfig, "v1 has the wrong length");
    return *v1;
  }
  if (scenario.model.kind != ModelKind::GradientSphere || scenario.model.n != 3) {
    fail(ErrorCode::InvalidConfig, "this estimator needs a second vector v1");
  }
  return make_vec({x0(1) * v0(2) - x0(2) * v0(1), x0(2) * v0(0) - x0(0) * v0(2),
                   x0(0) * v0(1) - x0(1) * v0(0)});
}

std::vector<std::string> estimator_ids() {
  return {"bel_gradient",       "bel_hessian",      "finite_difference_oracle", "form_exterior_gradient",
          "hessian_flow_gradient", "lie_group_gradient", "one_form_semigroup",   "pathwise_gradient",
          "potential_gradient", "q_form_semigroup", "score_gradient",           "semigroup_value"};
}

// ---------------------------------------------------------------------------
// Oracle table

namespace {

struct Gaussian1d {
  double mean_scale;  // E x_t = mean_scale * x0
  double var;         // Var x_t
};

std::optional<Gaussian1d> gaussian_law(const std::string& scenario, double t) {
  if (scenario == "bm1d") return Gaussian1d{1.0, t};
  if (scenario == "ou1d") return Gaussian1d{std::exp(-t), -std::expm1(-2.0 * t) / 2.0};
  if (scenario == "grow1d") return Gaussian1d{std::exp(t), std::expm1(2.0 * t) / 2.0};
  return std::nullopt;
}

/// Decay rate of linear functionals on the scenario (P_t f = e^{-rate t} f).
std::optional<double> linear_decay(const Scenario& s) {
  if (s.model.kind == ModelKind::Circle) return 0.5;
  if (s.model.kind == ModelKind::GradientSphere) return 0.5 * (s.model.n - 1);
  if (s.lie) return s.lie->noise_scale * s.lie->noise_scale;
  return std::nullopt;
}

bool is_linear_observable(const std::string& id) {
  return id == "x" || id.rfind("coord:", 0) == 0 || id == "sin_theta" || id == "height" || id == "trace" ||
         id == "entry21";
}

/// warp2d: x1 = a + B1 and E x2_t^2 = x2^2 + int E(2 + sin x1_s)^2 ds in closed form.
struct WarpMoments {
  double value, d1, d11;
};

WarpMoments warp_x_squared(double a, double t) {
  const double e_half = -std::expm1(-t / 2.0);
  const double e_two = -std::expm1(-2.0 * t);
  return {t + 4.5 * t + 8.0 * std::sin(a) * e_half - std::cos(2.0 * a) * e_two / 4.0,
          8.0 * std::cos(a) * e_half + std::sin(2.0 * a) * e_two / 2.0,
          -8.0 * std::sin(a) * e_half + std::cos(2.0 * a) * e_two};
}

std::optional<double> value_oracle(const Scenario& s, const ScalarObservable& f, const std::string& obs,
                                   const Vec& x0, double t) {
  if (obs == "one") return 1.0;
  if (s.id == "warp2d") {
    if (obs == "x_squared") return x0.squaredNorm() + warp_x_squared(x0(0), t).value;
    if (is_linear_observable(obs)) return f.f(x0);  // driftless
    return std::nullopt;
  }
  if (const auto g = gaussian_law(s.id, t)) {
    const double m = g->mean_scale * x0(0);
    if (obs == "x") return m;
    if (obs == "x_squared") return m * m + g->var;
    if (obs == "sin") return std::sin(m) * std::exp(-g->var / 2.0);
    return std::nullopt;
  }
  if (s.id == "bm2d") {
    if (obs == "sin") return std::sin(x0(0)) * std::exp(-t / 2.0);
    if (obs == "x_squared") return x0.squaredNorm() + 2.0 * t;
    if (is_linear_observable(obs)) return f.f(x0);
    return std::nullopt;
  }
  if (const auto rate = linear_decay(s)) {
    if (is_linear_observable(obs)) return std::exp(-*rate * t) * f.f(x0);
    if (obs == "x_squared") return 1.0;
  }
  return std::nullopt;
}

std::optional<double> gradient_oracle(const Scenario& s, const ScalarObservable& f, const std::string& obs,
                                      const Vec& x0, const Vec& v0, double t) {
  if (obs == "one") return 0.0;
  if (s.id == "warp2d") {
    if (obs == "x_squared") return 2.0 * x0.dot(v0) + warp_x_squared(x0(0), t).d1 * v0(0);
    if (is_linear_observable(obs)) return f.grad(x0).dot(v0);
    return std::nullopt;
  }
  if (const auto g = gaussian_law(s.id, t)) {
    const double m = g->mean_scale * x0(0);
    const double v = v0(0) * g->mean_scale;
    if (obs == "x") return v;
    if (obs == "x_squared") return 2.0 * m * v;
    if (obs == "sin") return std::cos(m) * std::exp(-g->var / 2.0) * v;
    return std::nullopt;
  }
  if (s.id == "bm2d") {
    if (obs == "sin") return std::cos(x0(0)) * std::exp(-t / 2.0) * v0(0);
    if (obs == "x_squared") return 2.0 * x0.dot(v0);
    if (is_linear_observable(obs)) return f.grad(x0).dot(v0);
    return std::nullopt;
  }
  if (const auto rate = linear_decay(s)) {
    if (is_linear_observable(obs)) return std::exp(-*rate * t) * f.grad(x0).dot(v0);
    if (obs == "x_squared") return 0.0;
  }
  return std::nullopt;
}

std::optional<double> hessian_oracle(const Scenario& s, const std::string& obs, const Vec& x0, const Vec& u0,
                                     const Vec& v0, double t) {
  if (obs == "one") return 0.0;
  if (s.id == "warp2d") {
    if (obs == "x_squared") return 2.0 * u0.dot(v0) + warp_x_squared(x0(0), t).d11 * u0(0) * v0(0);
    if (is_linear_observable(obs)) return 0.0;
    return std::nullopt;
  }
  if (const auto g = gaussian_law(s.id, t)) {
    const double m = g->mean_scale * x0(0);
    const double uv = u0(0) * v0(0) * g->mean_scale * g->mean_scale;
    if (obs == "x") return 0.0;
    if (obs == "x_squared") return 2.0 * uv;
    if (obs == "sin") return -std::sin(m) * std::exp(-g->var / 2.0) * uv;
    return std::nullopt;
  }
  if (s.id == "bm2d") {
    if (obs == "x_squared") return 2.0 * u0.dot(v0);
    if (obs == "sin") return -std::sin(x0(0)) * std::exp(-t / 2.0) * u0(0) * v0(0);
    if (is_linear_observable(obs)) return 0.0;
  }
  return std::nullopt;
}

std::optional<double> score_oracle(const Scenario& s, const Vec& x0, const Vec& y, const Vec& v0, double t) {
  if (const auto g = gaussian_law(s.id, t)) {
    return (y(0) - g->mean_scale * x0(0)) * g->mean_scale * v0(0) / g->var;
  }
  if (s.id == "bm2d") return (y - x0).dot(v0) / t;
  return std::nullopt;
}

double det3(const Vec& a, const Vec& b, const Vec& c) {
  return a(0) * (b(1) * c(2) - b(2) * c(1)) - a(1) * (b(0) * c(2) - b(2) * c(0)) + a(2) * (b(0) * c(1) - b(1) * c(0));
}

std::optional<double> form_oracle(const ExperimentConfig& cfg, const Scenario& s, const Vec& x0, const Vec& v0,
                                  const Vec& v1) {
  const std::string& id = cfg.form;
  const double t = cfg.mc.t;
  const bool exterior = cfg.estimator == "form_exterior_gradient";
  if (id.rfind("exact:", 0) == 0) {
    if (exterior) return 0.0;  // d(df) = 0
    const std::string obs = id.substr(6);
    return gradient_oracle(s, make_observable(obs, s), obs, x0, v0, t);
  }
  if (id.rfind("function:", 0) == 0) {
    if (!exterior) return std::nullopt;
    const std::string obs = id.substr(9);
    return gradient_oracle(s, make_observable(obs, s), obs, x0, v0, t);
  }
  if (exterior) {
    if (id == "rotation_s2") {
      return 2.0 * std::exp(-t) * (v0(0) * v1(1) - v0(1) * v1(0));
    }
    return std::nullopt;
  }
  // Harmonic forms are fixed points; the scaled volume form decays like its coefficient.
  if (id == "dtheta_s1") return -x0(1) * v0(0) + x0(0) * v0(1);
  if (id == "vol_s2") return det3(x0, v0, v1);
  if (id == "height_vol_s2") return std::exp(-t) * x0(2) * det3(x0, v0, v1);
  return std::nullopt;
}

}  // namespace

std::optional<double> oracle_value(const ExperimentConfig& cfg, const Scenario& s) {
  // Oracles assume h = 0 on the compact scenarios, which holds for every registered one.
  const Vec x0 = cfg.x0.value_or(s.default_x0);
  const Vec v0 = cfg.v0.value_or(s.default_v0);
  const double t = cfg.mc.t;
  const std::string& est = cfg.estimator;
  if (est == "one_form_semigroup" || est == "q_form_semigroup" || est == "form_exterior_gradient") {
    const int needed = cfg.estimator == "form_exterior_gradient" ? 1 : 0;
    const bool two = make_form(cfg.form, s).degree + needed >= 2;
    return form_oracle(cfg, s, x0, v0, two ? second_form_vector(cfg.v1, s, x0, v0) : Vec::Zero(s.model.n));
  }
  const ScalarObservable f = make_observable(cfg.observable, s);
  if (est == "semigroup_value") return value_oracle(s, f, cfg.observable, x0, t);
  if (est == "bel_gradient" || est == "pathwise_gradient" || est == "finite_difference_oracle" ||
      est == "hessian_flow_gradient" || est == "lie_group_gradient") {
    return gradient_oracle(s, f, cfg.observable, x0, v0, t);
  }
  if (est == "potential_gradient") {
    if (!cfg.potential) return std::nullopt;
    const auto g = gradient_oracle(s, f, cfg.observable, x0, v0, t);
    if (!g) return std::nullopt;
    return std::exp(*cfg.potential * t) * *g;
  }
  if (est == "bel_hessian") {
    return hessian_oracle(s, cfg.observable, x0, cfg.u0.value_or(v0), v0, t);
  }
  if (est == "score_gradient") {
    if (!cfg.y) return std::nullopt;
    return score_oracle(s, x0, *cfg.y, v0, t);
  }
  return std::nullopt;
}

std::string list_scenarios() {
  std::string out;
  for (const auto& [id, entry] : registry()) {
    out += id + "\t" + entry.description + "\toracle: " + entry.oracle + "\n";
  }
  return out;
}

}  // namespace semigrad
