#include "semigrad/forms.hpp"

#include "semigrad/engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace semigrad {

namespace {

int factorial(int k) {
  int f = 1;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

int permutation_sign(std::span<const int> perm) {
  int inversions = 0;
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = i + 1; j < perm.size(); ++j) inversions += perm[i] > perm[j] ? 1 : 0;
  return inversions % 2 == 0 ? 1 : -1;
}

/// Calls fn(indices) for every multi-index in [0, dim)^degree, last index fastest.
template <typename Fn>
void for_each_index(int dim, int degree, Fn&& fn) {
  std::vector<int> idx(static_cast<std::size_t>(degree), 0);
  for (;;) {
    fn(std::span<const int>(idx));
    int pos = degree - 1;
    while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == dim) {
      idx[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) return;
  }
}

Vec cross3(const Vec& a, const Vec& b) {
  return make_vec({a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2),
                   a(0) * b(1) - a(1) * b(0)});
}

double det3(const Vec& a, const Vec& b, const Vec& c) { return a.dot(cross3(b, c)); }

bool is_sphere(const DiffusionModel& model) {
  return model.kind == ModelKind::GradientSphere || model.kind == ModelKind::Circle;
}

/// Tangential gradient of h at x (zero when the model carries no h).
Vec tangential_grad_h(const DiffusionModel& model, const Vec& x) {
  if (!model.grad_h) return Vec::Zero(model.n);
  return model.project(x, model.grad_h(x));
}

void require_sphere(const DiffusionModel& model, int n, const char* what) {
  if (!is_sphere(model) || model.n != n) {
    fail(ErrorCode::UnsupportedModel, std::string(what) + " needs the unit sphere in R^" +
                                          std::to_string(n));
  }
}

constexpr int kMaxFormDim = 3;
constexpr int kMaxFormDegree = 2;

}  // namespace

// ---------------------------------------------------------------------------
// AlternatingTensor

AlternatingTensor::AlternatingTensor(int dim, int degree) : dim_(dim), degree_(degree) {
  if (dim < 1 || dim > kMaxFormDim) {
    fail(ErrorCode::UnsupportedDegree, "alternating tensors support dimension 1..3");
  }
  if (degree < 0 || degree > kMaxFormDim) {
    fail(ErrorCode::UnsupportedDegree, "alternating tensors support degree 0..3");
  }
  std::size_t size = 1;
  for (int i = 0; i < degree; ++i) size *= static_cast<std::size_t>(dim);
  data_.assign(size, 0.0);
}

AlternatingTensor AlternatingTensor::scalar(int dim, double value) {
  AlternatingTensor t(dim, 0);
  t.data_[0] = value;
  return t;
}

AlternatingTensor AlternatingTensor::from_form(const FormField& form, const Vec& x,
                                               const std::vector<Vec>& frame) {
  AlternatingTensor t(static_cast<int>(frame.size()), form.degree);
  std::vector<Vec> args(static_cast<std::size_t>(form.degree));
  for_each_index(t.dim_, t.degree_, [&](std::span<const int> idx) {
    for (std::size_t k = 0; k < idx.size(); ++k) args[k] = frame[static_cast<std::size_t>(idx[k])];
    t.data_[t.offset(idx)] = form.eval(x, args);
  });
  return t;
}

std::size_t AlternatingTensor::offset(std::span<const int> indices) const {
  std::size_t off = 0;
  for (int i : indices) off = off * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(i);
  return off;
}

double AlternatingTensor::component(std::span<const int> indices) const {
  if (static_cast<int>(indices.size()) != degree_) {
    fail(ErrorCode::DegreeMismatch, "index count differs from tensor degree");
  }
  return data_[offset(indices)];
}

void AlternatingTensor::set_component(std::span<const int> indices, double value) {
  if (static_cast<int>(indices.size()) != degree_) {
    fail(ErrorCode::DegreeMismatch, "index count differs from tensor degree");
  }
  std::vector<int> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    data_[offset(indices)] = 0.0;
    return;
  }
  // Sign of `indices` relative to sorted order, then spread to all permutations.
  const int base = permutation_sign(indices);
  std::vector<int> perm(sorted.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> target(sorted.size());
  do {
    for (std::size_t k = 0; k < perm.size(); ++k) target[k] = sorted[static_cast<std::size_t>(perm[k])];
    data_[offset(target)] = base * permutation_sign(perm) * value;
  } while (std::next_permutation(perm.begin(), perm.end()));
}

double AlternatingTensor::evaluate(std::span<const Vec> coords) const {
  if (static_cast<int>(coords.size()) != degree_) {
    fail(ErrorCode::DegreeMismatch, "argument count differs from tensor degree");
  }
  if (degree_ == 0) return data_[0];
  double total = 0.0;
  for_each_index(dim_, degree_, [&](std::span<const int> idx) {
    const double c = data_[offset(idx)];
    if (c == 0.0) return;
    double prod = c;
    for (std::size_t k = 0; k < idx.size(); ++k) prod *= coords[k](idx[k]);
    total += prod;
  });
  return total;
}

AlternatingTensor AlternatingTensor::wedge(const AlternatingTensor& other) const {
  if (other.dim_ != dim_) fail(ErrorCode::DimensionMismatch, "wedge of tensors on different spaces");
  const int p = degree_;
  const int q = other.degree_;
  const int r = p + q;
  if (r > kMaxFormDim) fail(ErrorCode::UnsupportedDegree, "wedge degree exceeds 3");
  AlternatingTensor out(dim_, r);
  if (r > dim_) return out;  // alternating tensors of degree > dim vanish
  const double scale = 1.0 / (factorial(p) * factorial(q));
  std::vector<int> perm(static_cast<std::size_t>(r));
  std::vector<int> left(static_cast<std::size_t>(p));
  std::vector<int> right(static_cast<std::size_t>(q));
  for_each_index(dim_, r, [&](std::span<const int> idx) {
    std::iota(perm.begin(), perm.end(), 0);
    double acc = 0.0;
    do {
      for (int k = 0; k < p; ++k) left[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
      for (int k = 0; k < q; ++k) right[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(perm[static_cast<std::size_t>(p + k)])];
      acc += permutation_sign(perm) * data_[offset(left)] * other.data_[other.offset(right)];
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.data_[out.offset(idx)] = scale * acc;
  });
  return out;
}

AlternatingTensor& AlternatingTensor::operator+=(const AlternatingTensor& other) {
  if (other.dim_ != dim_ || other.degree_ != degree_) {
    fail(ErrorCode::DegreeMismatch, "sum of tensors of different shape");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

AlternatingTensor& AlternatingTensor::operator*=(double s) {
  for (double& c : data_) c *= s;
  return *this;
}

// ---------------------------------------------------------------------------
// Line integrals

double q_form_line_integral(const DiffusionModel& model, const Trajectory& traj,
                            const NoisePath& noise, std::span<const VariationPath> alpha,
                            const FormField& theta) {
  const int q = theta.degree;
  if (q < 1) fail(ErrorCode::DegreeMismatch, "line integrals need a form of degree >= 1");
  if (static_cast<int>(alpha.size()) != q - 1) {
    fail(ErrorCode::DegreeMismatch, "a q-form line integral takes q-1 directions");
  }
  if (!theta.codiff) fail(ErrorCode::MissingCodifferential, theta.id + " has no codifferential");
  if (traj.blew_up) fail(ErrorCode::BlownUpPath, "trajectory left the blow-up radius");
  const int steps = traj.grid.n_steps();
  const double dt = traj.grid.dt();
  const double inv_q = 1.0 / q;
  std::vector<Vec> args(static_cast<std::size_t>(q));
  std::vector<Vec> rest(static_cast<std::size_t>(q - 1));
  double noise_part = 0.0;
  double drift_part = 0.0;
  for (int k = 0; k < steps; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Vec& x = traj.states[ks];
    const double tc = traj.coeff_time(k);
    args[0] = model.X(tc, x) * noise.step(k);
    for (int j = 0; j < q - 1; ++j) {
      const auto js = static_cast<std::size_t>(j);
      args[js + 1] = alpha[js].vectors[ks];
      rest[js] = alpha[js].vectors[ks];
    }
    noise_part += theta.eval(x, args);
    drift_part += theta.codiff(x, rest) * dt;
  }
  return inv_q * noise_part - 0.5 * drift_part;
}

double line_integral_one_form(const DiffusionModel& model, const Trajectory& traj,
                              const NoisePath& noise, const FormField& phi) {
  if (phi.degree != 1) fail(ErrorCode::DegreeMismatch, "expected a 1-form");
  return q_form_line_integral(model, traj, noise, {}, phi);
}

// ---------------------------------------------------------------------------
// Semigroups on forms

namespace {

void require_gradient(const DiffusionModel& model) {
  if (!model.gradient_system) {
    fail(ErrorCode::NotGradientSystem, model.id + " is not a gradient h-Brownian system");
  }
}

void require_scope(const DiffusionModel& model, int q) {
  const int dim = model.geometry ? model.geometry->dim : model.n;
  if (q > kMaxFormDegree || dim > kMaxFormDim) {
    fail(ErrorCode::UnsupportedDegree, "form semigroups support q <= 2 on manifolds of dim <= 3");
  }
  if (q > dim) fail(ErrorCode::DegreeMismatch, "form degree exceeds the manifold dimension");
}

/// Frame coordinates <e_j, v> of the input vectors at x0.
std::vector<Vec> frame_coordinates(const DiffusionModel& model, const Vec& x0,
                                   const std::vector<Vec>& frame, std::span<const Vec> v0) {
  std::vector<Vec> coords;
  coords.reserve(v0.size());
  for (const Vec& v : v0) {
    if (v.size() != model.n) fail(ErrorCode::DimensionMismatch, "direction must lie in R^n");
    Vec c(static_cast<Eigen::Index>(frame.size()));
    for (std::size_t j = 0; j < frame.size(); ++j) c(static_cast<Eigen::Index>(j)) = model.inner(x0, frame[j], v);
    coords.push_back(c);
  }
  return coords;
}

/// Psi(e_j) = sum_k <Y(x_k) TF_k e_j, dB_k> as a 1-tensor in the frame.
AlternatingTensor bismut_one_form(const DiffusionModel& model, const Trajectory& traj,
                                  const NoisePath& noise, const std::vector<VariationPath>& basis) {
  AlternatingTensor psi(static_cast<int>(basis.size()), 1);
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const int idx[1] = {static_cast<int>(j)};
    psi.set_component(idx, bismut_weight(model, traj, noise, basis[j].vectors, 0,
                                         traj.grid.n_steps()));
  }
  return psi;
}

std::vector<VariationPath> evolve_frame(const DiffusionModel& model, const Trajectory& traj,
                                        const NoisePath& noise, const std::vector<Vec>& frame) {
  std::vector<VariationPath> basis;
  basis.reserve(frame.size());
  for (const Vec& e : frame) basis.push_back(evolve_first_variation(model, traj, noise, e));
  return basis;
}

}  // namespace

EstimatorResult one_form_semigroup(const DiffusionModel& model, const Vec& x0,
                                   const FormField& phi, const Vec& v0, const McConfig& cfg) {
  detail::check_point(model, x0);
  detail::check_direction(model, v0);
  if (phi.degree != 1) fail(ErrorCode::DegreeMismatch, "one_form_semigroup needs a 1-form");
  if (!phi.is_closed) fail(ErrorCode::NotClosed, phi.id + " is not declared closed");
  if (!phi.codiff) fail(ErrorCode::MissingCodifferential, phi.id + " has no codifferential");
  detail::check_nondegenerate(model, x0);
  const double t = cfg.t;
  return detail::run("one_form_semigroup", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    const auto sim = detail::simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) return detail::Outcome{0.0, true};
    const double line = line_integral_one_form(model, sim.traj, sim.noise, phi);
    const VariationPath v = evolve_first_variation(model, sim.traj, sim.noise, v0);
    const double psi = bismut_weight(model, sim.traj, sim.noise, v.vectors, 0, grid.n_steps());
    return detail::Outcome{(line * psi) / t, false};
  });
}

EstimatorResult q_form_semigroup(const DiffusionModel& model, const Vec& x0,
                                 const FormField& theta, std::span<const Vec> v0,
                                 const McConfig& cfg) {
  detail::check_point(model, x0);
  require_gradient(model);
  const int q = theta.degree;
  if (q < 1 || static_cast<int>(v0.size()) != q) {
    fail(ErrorCode::DegreeMismatch, "q_form_semigroup needs q >= 1 and q input vectors");
  }
  require_scope(model, q);
  if (!theta.is_closed) fail(ErrorCode::NotClosed, theta.id + " is not declared closed");
  if (!theta.codiff) fail(ErrorCode::MissingCodifferential, theta.id + " has no codifferential");
  detail::check_nondegenerate(model, x0);
  const std::vector<Vec> frame = tangent_frame(model, x0);
  const std::vector<Vec> coords = frame_coordinates(model, x0, frame, v0);
  const int dim = static_cast<int>(frame.size());
  const double t = cfg.t;

  return detail::run("q_form_semigroup", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    const auto sim = detail::simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) return detail::Outcome{0.0, true};
    const std::vector<VariationPath> basis = evolve_frame(model, sim.traj, sim.noise, frame);
    const AlternatingTensor psi = bismut_one_form(model, sim.traj, sim.noise, basis);

    AlternatingTensor line(dim, q - 1);
    if (q == 1) {
      line = AlternatingTensor::scalar(dim, q_form_line_integral(model, sim.traj, sim.noise, {}, theta));
    } else {
      for (int j = 0; j < dim; ++j) {
        const int idx[1] = {j};
        const std::span<const VariationPath> alpha(&basis[static_cast<std::size_t>(j)], 1);
        line.set_component(idx, q_form_line_integral(model, sim.traj, sim.noise, alpha, theta));
      }
    }
    const double value = psi.wedge(line).evaluate(coords);
    return detail::Outcome{value / t, false};
  });
}

EstimatorResult form_exterior_gradient(const DiffusionModel& model, const Vec& x0,
                                       const FormField& phi, std::span<const Vec> v0,
                                       const McConfig& cfg) {
  detail::check_point(model, x0);
  require_gradient(model);
  const int q = phi.degree + 1;
  if (phi.degree < 0 || static_cast<int>(v0.size()) != q) {
    fail(ErrorCode::DegreeMismatch, "exterior gradient of a (q-1)-form takes q vectors");
  }
  require_scope(model, q);
  detail::check_nondegenerate(model, x0);
  const std::vector<Vec> frame = tangent_frame(model, x0);
  const std::vector<Vec> coords = frame_coordinates(model, x0, frame, v0);
  const double t = cfg.t;

  return detail::run("form_exterior_gradient", cfg, [&](std::uint64_t i, const TimeGrid& grid) {
    const auto sim = detail::simulate(model, x0, grid, cfg.seed, i);
    if (sim.traj.blew_up) return detail::Outcome{0.0, true};
    const std::vector<VariationPath> basis = evolve_frame(model, sim.traj, sim.noise, frame);
    const AlternatingTensor psi = bismut_one_form(model, sim.traj, sim.noise, basis);
    std::vector<Vec> pushed;
    pushed.reserve(basis.size());
    for (const auto& b : basis) pushed.push_back(b.vectors.back());
    const AlternatingTensor end = AlternatingTensor::from_form(phi, sim.traj.states.back(), pushed);
    const double value = psi.wedge(end).evaluate(coords);
    return detail::Outcome{value / t, false};
  });
}

// ---------------------------------------------------------------------------
// Built-in forms

double h_laplacian(const DiffusionModel& model, const ScalarObservable& f, const Vec& x) {
  if (!f.grad || !f.hess) fail(ErrorCode::MissingDerivative, f.id + " needs grad and hess");
  const Vec g = f.grad(x);
  const Mat H = f.hess(x);
  if (!model.constrained()) {
    const Vec gh = model.grad_h ? model.grad_h(x) : Vec::Zero(model.n);
    return H.trace() + 2.0 * gh.dot(g);
  }
  if (!is_sphere(model)) {
    fail(ErrorCode::UnsupportedModel, "h-Laplacian is available on flat and sphere models");
  }
  const double n = static_cast<double>(model.n);
  const double lap = H.trace() - (n - 1.0) * x.dot(g) - x.dot(H * x);
  return lap + 2.0 * tangential_grad_h(model, x).dot(model.project(x, g));
}

FormField make_dtheta_form(const DiffusionModel& circle) {
  require_sphere(circle, 2, "dtheta");
  FormField form;
  form.id = "dtheta_s1";
  form.degree = 1;
  form.eval = [](const Vec& x, std::span<const Vec> v) { return -x(1) * v[0](0) + x(0) * v[0](1); };
  // The rotation field is Killing, so only the h-term survives.
  const auto grad_h = circle.grad_h;
  form.codiff = [grad_h](const Vec& x, std::span<const Vec>) {
    if (!grad_h) return 0.0;
    const Vec a = grad_h(x);
    return -2.0 * (-x(1) * a(0) + x(0) * a(1));
  };
  form.is_closed = true;
  form.bound = 1.0;
  return form;
}

FormField make_exact_form(const DiffusionModel& model, const ScalarObservable& f) {
  if (!f.grad || !f.hess) fail(ErrorCode::MissingDerivative, "exact form needs grad and hess of f");
  if (model.constrained() && !is_sphere(model)) {
    fail(ErrorCode::UnsupportedModel, "exact forms are available on flat and sphere models");
  }
  FormField form;
  form.id = "exact:" + f.id;
  form.degree = 1;
  const auto grad = f.grad;
  form.eval = [grad](const Vec& x, std::span<const Vec> v) { return grad(x).dot(v[0]); };
  // Copy what the codifferential needs so the form outlives neither argument.
  DiffusionModel shape;
  shape.id = model.id;
  shape.kind = model.kind;
  shape.n = model.n;
  shape.geometry = model.geometry;
  shape.grad_h = model.grad_h;
  form.codiff = [shape, f](const Vec& x, std::span<const Vec>) {
    return -h_laplacian(shape, f, x);
  };
  form.is_closed = true;
  return form;
}

FormField make_function_form(const ScalarObservable& f) {
  FormField form;
  form.id = f.id;
  form.degree = 0;
  const auto fn = f.f;
  form.eval = [fn](const Vec& x, std::span<const Vec>) { return fn(x); };
  form.codiff = [](const Vec&, std::span<const Vec>) { return 0.0; };
  form.is_closed = false;
  form.bound = f.sup_abs;
  return form;
}

FormField make_volume_form_s2(const DiffusionModel& sphere) {
  require_sphere(sphere, 3, "vol_s2");
  FormField form;
  form.id = "vol_s2";
  form.degree = 2;
  form.eval = [](const Vec& x, std::span<const Vec> v) { return det3(x, v[0], v[1]); };
  const auto grad_h = sphere.grad_h;
  form.codiff = [grad_h](const Vec& x, std::span<const Vec> v) {
    if (!grad_h) return 0.0;
    const Vec a = grad_h(x);
    return -2.0 * det3(x, a - x.dot(a) * x, v[0]);
  };
  form.is_closed = true;
  form.bound = 1.0;
  return form;
}

FormField make_scaled_volume_form_s2(const DiffusionModel& sphere, const ScalarObservable& g) {
  require_sphere(sphere, 3, "scaled volume form");
  if (!g.grad) fail(ErrorCode::MissingDerivative, "scaled volume form needs grad g");
  FormField form;
  form.id = g.id + "_vol_s2";
  form.degree = 2;
  const auto gf = g.f;
  const auto gg = g.grad;
  form.eval = [gf](const Vec& x, std::span<const Vec> v) { return gf(x) * det3(x, v[0], v[1]); };
  const auto grad_h = sphere.grad_h;
  form.codiff = [gf, gg, grad_h](const Vec& x, std::span<const Vec> v) {
    const Vec dg = gg(x);
    double out = (dg - x.dot(dg) * x).dot(cross3(x, v[0]));
    if (grad_h) {
      const Vec a = grad_h(x);
      out -= 2.0 * gf(x) * det3(x, a - x.dot(a) * x, v[0]);
    }
    return out;
  };
  form.is_closed = true;  // top degree on S^2
  form.bound = g.sup_abs;
  return form;
}

FormField make_rotation_form_s2(const DiffusionModel& sphere) {
  require_sphere(sphere, 3, "rotation_s2");
  FormField form;
  form.id = "rotation_s2";
  form.degree = 1;
  form.eval = [](const Vec& x, std::span<const Vec> v) { return -x(1) * v[0](0) + x(0) * v[0](1); };
  const auto grad_h = sphere.grad_h;
  form.codiff = [grad_h](const Vec& x, std::span<const Vec>) {
    if (!grad_h) return 0.0;
    const Vec a = grad_h(x);
    return -2.0 * (-x(1) * a(0) + x(0) * a(1));
  };
  form.is_closed = false;
  form.bound = 1.0;
  return form;
}

}  // namespace semigrad
