#include "semigrad/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace semigrad {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorCode::InvalidConfig, "bad value '" + value + "' for key '" + key + "'");
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (trim(value.substr(used)).empty()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, value);
}

std::uint64_t to_count(const std::string& key, const std::string& value) {
  // Accept 2e5 style counts as long as they are exact non-negative integers.
  const double d = to_double(key, value);
  if (!(d >= 0.0) || d != std::floor(d) || d > 9.0e15) bad_value(key, value);
  return static_cast<std::uint64_t>(d);
}

Vec to_vec(const std::string& key, const std::string& value) {
  std::string body = trim(value);
  if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::vector<double> parts;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(to_double(key, trim(item)));
  if (parts.empty() || static_cast<int>(parts.size()) > kMaxDim) bad_value(key, value);
  Vec v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v(static_cast<Eigen::Index>(i)) = parts[i];
  return v;
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string json_scalar_text(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < value.size(); ++i) out += (i ? "," : "") + json_scalar_text(value[i]);
    return out;
  }
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  if (value.is_number()) return fmt(value.get<double>());
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  fail(ErrorCode::InvalidConfig, "unsupported JSON value " + value.dump());
}

ExperimentConfig config_from_json(const json& obj) {
  if (!obj.is_object()) fail(ErrorCode::InvalidConfig, "config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : obj.items()) apply_config_key(cfg, key, json_scalar_text(value));
  return cfg;
}

json vec_json(const std::optional<Vec>& v) {
  if (!v) return nullptr;
  json arr = json::array();
  for (Eigen::Index i = 0; i < v->size(); ++i) arr.push_back((*v)(i));
  return arr;
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["scenario"] = c.scenario;
  j["estimator"] = c.estimator;
  j["observable"] = c.observable;
  if (!c.form.empty()) j["form"] = c.form;
  j["t"] = c.mc.t;
  j["n_paths"] = c.mc.n_paths;
  j["n_steps"] = c.mc.n_steps;
  j["seed"] = c.mc.seed;
  if (c.x0) j["x0"] = vec_json(c.x0);
  if (c.theta) j["theta"] = *c.theta;
  if (c.v0) j["v0"] = vec_json(c.v0);
  if (c.v1) j["v1"] = vec_json(c.v1);
  if (c.u0) j["u0"] = vec_json(c.u0);
  if (c.potential) j["V"] = *c.potential;
  if (c.y) j["y"] = vec_json(c.y);
  if (c.estimator == "score_gradient") {
    j["bandwidth"] = c.bandwidth;
    j["kernel"] = c.kernel == BinKernel::Box ? "box" : "gaussian";
  }
  if (c.estimator == "bel_hessian") {
    j["variant"] = c.hessian.variant == HessianVariant::Weights ? "weights" : "nested";
    j["n_inner"] = c.hessian.n_inner;
    j["n_time_samples"] = c.hessian.n_time_samples;
  }
  if (c.estimator == "finite_difference_oracle") j["delta"] = c.fd_delta;
  j["rel_tol"] = c.rel_tol;
  j["abs_tol"] = c.abs_tol;
  return j;
}

/// Resolves x0 and the default direction (theta on the circle).
void resolve_point(const ExperimentConfig& cfg, const Scenario& s, Vec& x0, Vec& v0) {
  x0 = s.default_x0;
  v0 = s.default_v0;
  if (cfg.theta) {
    if (s.model.kind != ModelKind::Circle) fail(ErrorCode::InvalidConfig, "theta applies to the circle");
    x0 = make_vec({std::cos(*cfg.theta), std::sin(*cfg.theta)});
    v0 = make_vec({-std::sin(*cfg.theta), std::cos(*cfg.theta)});
  }
  if (cfg.x0) x0 = *cfg.x0;
  if (cfg.v0) v0 = *cfg.v0;
  if (x0.size() != s.model.n || v0.size() != s.model.n) {
    fail(ErrorCode::InvalidConfig, "x0 and v0 must have " + std::to_string(s.model.n) + " entries for " + s.id);
  }
}

std::vector<Vec> form_vectors(const ExperimentConfig& cfg, const Vec& x0, const Vec& v0, int count,
                              const Scenario& s) {
  std::vector<Vec> out{v0};
  if (count >= 2) out.push_back(second_form_vector(cfg.v1, s, x0, v0));
  if (count > 2) fail(ErrorCode::UnsupportedDegree, "at most two input vectors are supported");
  return out;
}

EstimatorResult dispatch(const ExperimentConfig& cfg, const Scenario& s, const Vec& x0, const Vec& v0) {
  const std::string& est = cfg.estimator;
  const DiffusionModel& model = s.model;
  const McConfig& mc = cfg.mc;
  if (est == "one_form_semigroup" || est == "q_form_semigroup" || est == "form_exterior_gradient") {
    if (cfg.form.empty()) fail(ErrorCode::InvalidConfig, est + " needs a form id");
    const FormField form = make_form(cfg.form, s);
    if (est == "one_form_semigroup") return one_form_semigroup(model, x0, form, v0, mc);
    if (est == "q_form_semigroup") {
      const auto vs = form_vectors(cfg, x0, v0, form.degree, s);
      return q_form_semigroup(model, x0, form, vs, mc);
    }
    const auto vs = form_vectors(cfg, x0, v0, form.degree + 1, s);
    return form_exterior_gradient(model, x0, form, vs, mc);
  }
  const ScalarObservable f = make_observable(cfg.observable, s);
  if (est == "semigroup_value") return semigroup_value(model, x0, f, mc);
  if (est == "pathwise_gradient") return pathwise_gradient(model, x0, f, v0, mc);
  if (est == "bel_gradient") return bel_gradient(model, x0, f, v0, mc);
  if (est == "hessian_flow_gradient") return hessian_flow_gradient(model, x0, f, v0, mc);
  if (est == "finite_difference_oracle") return finite_difference_oracle(model, x0, f, v0, cfg.fd_delta, mc);
  if (est == "bel_hessian") {
    const Vec u0 = cfg.u0.value_or(v0);
    if (u0.size() != model.n) fail(ErrorCode::InvalidConfig, "u0 has the wrong length");
    return bel_hessian(model, x0, f, u0, v0, mc, cfg.hessian);
  }
  if (est == "potential_gradient") {
    if (!cfg.potential) fail(ErrorCode::InvalidConfig, "potential_gradient needs V");
    const double c = *cfg.potential;
    const int n = model.n;
    const PotentialField V{[c](double, const Vec&) { return c; },
                           [n](double, const Vec&) -> Vec { return Vec::Zero(n); }, c};
    return potential_gradient(model, x0, f, V, v0, mc);
  }
  if (est == "score_gradient") {
    if (!cfg.y) fail(ErrorCode::InvalidConfig, "score_gradient needs y");
    return score_gradient(model, x0, ConditionalBinSpec{*cfg.y, cfg.bandwidth, cfg.kernel}, v0, mc);
  }
  if (est == "lie_group_gradient") {
    if (!s.lie) fail(ErrorCode::NotLieGroup, s.id + " is not a Lie group scenario");
    return lie_group_gradient(*s.lie, so3_unembed(x0), f, v0, mc);
  }
  fail(ErrorCode::UnknownEstimator, "no estimator '" + est + "'");
}

bool known_estimator(const std::string& id) {
  for (const auto& e : estimator_ids()) {
    if (e == id) return true;
  }
  return false;
}

}  // namespace

void apply_config_key(ExperimentConfig& cfg, const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in);
  const std::string value = trim(value_in);
  if (key == "scenario") {
    cfg.scenario = value;
  } else if (key == "estimator") {
    cfg.estimator = value;
  } else if (key == "observable" || key == "f") {
    cfg.observable = value;
  } else if (key == "form") {
    cfg.form = value;
  } else if (key == "x0") {
    cfg.x0 = to_vec(key, value);
  } else if (key == "theta") {
    cfg.theta = to_double(key, value);
  } else if (key == "v0") {
    cfg.v0 = to_vec(key, value);
  } else if (key == "v1") {
    cfg.v1 = to_vec(key, value);
  } else if (key == "u0") {
    cfg.u0 = to_vec(key, value);
  } else if (key == "t") {
    cfg.mc.t = to_double(key, value);
  } else if (key == "n_paths" || key == "paths") {
    cfg.mc.n_paths = to_count(key, value);
  } else if (key == "n_steps" || key == "steps") {
    cfg.mc.n_steps = static_cast<int>(to_count(key, value));
  } else if (key == "seed") {
    cfg.mc.seed = to_count(key, value);
  } else if (key == "V" || key == "potential") {
    cfg.potential = to_double(key, value);
  } else if (key == "y") {
    cfg.y = to_vec(key, value);
  } else if (key == "bandwidth") {
    cfg.bandwidth = to_double(key, value);
  } else if (key == "kernel") {
    if (value == "box") {
      cfg.kernel = BinKernel::Box;
    } else if (value == "gaussian") {
      cfg.kernel = BinKernel::Gaussian;
    } else {
      bad_value(key, value);
    }
  } else if (key == "variant") {
    if (value == "weights") {
      cfg.hessian.variant = HessianVariant::Weights;
    } else if (value == "nested") {
      cfg.hessian.variant = HessianVariant::Nested;
    } else {
      bad_value(key, value);
    }
  } else if (key == "n_inner") {
    cfg.hessian.n_inner = static_cast<int>(to_count(key, value));
  } else if (key == "n_time_samples") {
    cfg.hessian.n_time_samples = static_cast<int>(to_count(key, value));
  } else if (key == "delta") {
    cfg.fd_delta = to_double(key, value);
  } else if (key == "rel_tol") {
    cfg.rel_tol = to_double(key, value);
  } else if (key == "abs_tol") {
    cfg.abs_tol = to_double(key, value);
  } else if (key == "p") {
    cfg.p = value == "inf" ? INFINITY : to_double(key, value);
  } else if (key == "grid_points") {
    cfg.grid_points = static_cast<int>(to_count(key, value));
  } else if (key == "out") {
    cfg.out = value;
  } else {
    fail(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
  }
}

ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  std::stringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::stringstream pairs(line);
    std::string pair;
    while (std::getline(pairs, pair, ';')) {
      if (trim(pair).empty()) continue;
      // Several assignments on one segment are whitespace separated, as in manifests.
      std::vector<std::string> items;
      if (std::count(pair.begin(), pair.end(), '=') > 1) {
        std::stringstream words(pair);
        for (std::string w; words >> w;) items.push_back(w);
      } else {
        items.push_back(pair);
      }
      for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "expected key=value, got '" + trim(item) + "'");
        apply_config_key(cfg, item.substr(0, eq), item.substr(eq + 1));
      }
    }
  }
  return cfg;
}

ExperimentConfig parse_config_json(std::string_view text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("invalid JSON: ") + e.what());
  }
}

ExperimentConfig parse_config(std::string_view text) {
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '{') return parse_config_json(t);
  return parse_config_text(text);
}

namespace {
std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidConfig, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::vector<ExperimentConfig> parse_manifest(std::string_view text) {
  const std::string t = trim(text);
  std::vector<ExperimentConfig> out;
  if (!t.empty() && t.front() == '[') {
    json arr;
    try {
      arr = json::parse(t);
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidConfig, std::string("invalid JSON manifest: ") + e.what());
    }
    for (const auto& obj : arr) out.push_back(config_from_json(obj));
    return out;
  }
  std::stringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    ExperimentConfig cfg;
    std::stringstream words(line);
    std::string word;
    while (words >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "expected key=value, got '" + word + "'");
      apply_config_key(cfg, word.substr(0, eq), word.substr(eq + 1));
    }
    out.push_back(cfg);
  }
  return out;
}

std::vector<ExperimentConfig> load_manifest(const std::string& path) { return parse_manifest(read_file(path)); }

ReportRecord run_experiment(const ExperimentConfig& config) {
  const Scenario s = make_scenario(config.scenario);
  if (!known_estimator(config.estimator)) {
    fail(ErrorCode::UnknownEstimator, "no estimator '" + config.estimator + "'");
  }
  if (!(config.mc.t > 0.0)) fail(ErrorCode::InvalidConfig, "t must be > 0");
  if (config.mc.n_paths < 1) fail(ErrorCode::InvalidConfig, "n_paths must be >= 1");
  if (config.mc.n_steps < 1) fail(ErrorCode::InvalidConfig, "n_steps must be >= 1");

  ReportRecord rec;
  rec.config = config;
  const auto start = std::chrono::steady_clock::now();
  try {
    Vec x0;
    Vec v0;
    resolve_point(config, s, x0, v0);
    rec.result = dispatch(config, s, x0, v0);
    ExperimentConfig resolved = config;
    resolved.x0 = x0;
    resolved.v0 = v0;
    rec.oracle = oracle_value(resolved, s);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    rec.error = e.what();
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (!rec.error.empty()) {
    rec.pass = false;
    return rec;
  }
  if (rec.oracle) {
    rec.oracle_source = s.oracle_note;
    rec.abs_error = std::abs(rec.result.mean - *rec.oracle);
    rec.tolerance = std::max({3.0 * rec.result.std_error, config.rel_tol * std::abs(*rec.oracle), config.abs_tol});
    rec.pass = rec.result.valid && rec.abs_error <= rec.tolerance;
  } else {
    rec.oracle_source = "none";
    rec.pass = rec.result.valid;
  }
  return rec;
}

int exit_code(const ReportRecord& record) {
  if (!record.error.empty()) return 1;
  return record.pass ? 0 : 2;
}

int exit_code(const std::vector<ReportRecord>& records) {
  int code = 0;
  for (const auto& r : records) {
    const int c = exit_code(r);
    if (c == 1) return 1;
    if (c == 2) code = 2;
  }
  return code;
}

std::vector<ReportRecord> run_suite(const std::vector<ExperimentConfig>& configs) {
  std::vector<ReportRecord> out;
  out.reserve(configs.size());
  for (const auto& cfg : configs) {
    try {
      out.push_back(run_experiment(cfg));
    } catch (const std::exception& e) {
      ReportRecord rec;
      rec.config = cfg;
      rec.error = e.what();
      out.push_back(rec);
    }
  }
  return out;
}

void write_csv(std::ostream& os, const std::vector<ReportRecord>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) {
    const auto& c = r.config;
    os << c.scenario << ',' << c.estimator << ',' << fmt(c.mc.t) << ',' << c.mc.n_paths << ',' << c.mc.n_steps
       << ',' << c.mc.seed << ',';
    if (r.error.empty()) {
      os << fmt(r.result.mean) << ',' << fmt(r.result.std_error) << ',';
      if (r.oracle) {
        os << fmt(*r.oracle) << ',' << fmt(r.abs_error) << ',';
      } else {
        os << ",,";
      }
      os << (r.pass ? "true" : "false");
    } else {
      os << ",,,,error";
    }
    os << ',' << fmt(r.wall_ms) << '\n';
  }
}

void write_json(std::ostream& os, const std::vector<ReportRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) {
    json j;
    j["config"] = config_json(r.config);
    if (r.error.empty()) {
      j["estimator"] = r.result.estimator;
      j["mean"] = r.result.mean;
      j["std_error"] = r.result.std_error;
      j["variance"] = r.result.variance;
      j["n_paths"] = r.result.n_paths;
      j["n_rejected"] = r.result.n_rejected;
      j["seed"] = r.result.seed;
      j["valid"] = r.result.valid;
      j["metadata"] = r.result.metadata;
      j["oracle"] = r.oracle ? json(*r.oracle) : json(nullptr);
      j["oracle_source"] = r.oracle_source;
      j["abs_error"] = r.oracle ? json(r.abs_error) : json(nullptr);
      j["tolerance"] = r.oracle ? json(r.tolerance) : json(nullptr);
    } else {
      j["error"] = r.error;
    }
    j["pass"] = r.pass;
    j["wall_ms"] = r.wall_ms;
    arr.push_back(j);
  }
  os << arr.dump(2) << '\n';
}

std::vector<CsvRow> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != kCsvHeader) {
    fail(ErrorCode::InvalidConfig, "CSV header does not match the report schema");
  }
  std::vector<CsvRow> rows;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 12) fail(ErrorCode::InvalidConfig, "CSV row has " + std::to_string(cells.size()) + " cells");
    CsvRow row;
    row.scenario = cells[0];
    row.estimator = cells[1];
    row.t = to_double("t", cells[2]);
    row.n_paths = to_count("n_paths", cells[3]);
    row.n_steps = static_cast<int>(to_count("n_steps", cells[4]));
    row.seed = to_count("seed", cells[5]);
    if (!cells[6].empty()) row.mean = to_double("mean", cells[6]);
    if (!cells[7].empty()) row.std_error = to_double("std_error", cells[7]);
    if (!cells[8].empty()) row.oracle = to_double("oracle", cells[8]);
    if (!cells[9].empty()) row.abs_error = to_double("abs_error", cells[9]);
    row.pass = cells[10] == "true";
    row.wall_ms = to_double("wall_ms", cells[11]);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Diagnostics bundle

std::vector<BoundCheckReport> run_checks(const ExperimentConfig& config) {
  const Scenario s = make_scenario(config.scenario);
  Vec x0;
  Vec v0;
  resolve_point(config, s, x0, v0);
  const DiffusionModel& model = s.model;
  std::vector<BoundCheckReport> out;

  const HpForm form = default_hp_form(model);
  const HpReport hp = sample_hp(model, config.p, form);
  BoundCheckReport hp_rep;
  hp_rep.name = "hp_sample";
  hp_rep.empirical = hp.sup_estimate;
  hp_rep.bound = hp.sup_estimate;
  hp_rep.pass = std::isfinite(hp.sup_estimate);
  hp_rep.decisive = false;
  hp_rep.metadata["p"] = config.p;
  hp_rep.metadata["n_samples"] = static_cast<double>(hp.samples.size());
  hp_rep.warnings.push_back(std::string("form ") + std::string(to_string(form)) +
                            "; supremum sampled over a point cloud, not proven");
  out.push_back(hp_rep);

  out.push_back(moment_bound_check(model, x0, v0, std::isinf(config.p) ? 2.0 : config.p, config.mc, hp.sup_estimate));
  out.push_back(martingale_mean_check(model, x0, v0, config.mc));

  try {
    const ScalarObservable f = make_observable(config.observable, s);
    const EstimatorResult bel = bel_gradient(model, x0, f, v0, config.mc);
    const EstimatorResult fd = finite_difference_oracle(model, x0, f, v0, config.fd_delta, config.mc);
    BoundCheckReport agree;
    agree.name = "bel_vs_finite_difference";
    agree.empirical = std::abs(bel.mean - fd.mean);
    agree.bound = 0.0;
    agree.std_error = joint_std_error(bel, fd);
    agree.margin = 3.0 * agree.std_error - agree.empirical;
    agree.pass = agree.margin >= 0.0;
    agree.metadata["bel_gradient"] = bel.mean;
    agree.metadata["finite_difference"] = fd.mean;
    out.push_back(agree);
    if (f.sup_abs && !model.constrained()) {
      out.push_back(gronwall_gradient_bound(model, f, x0, v0, config.mc));
    }
    if (model.kind == ModelKind::Circle || model.kind == ModelKind::GradientSphere) {
      out.push_back(sobolev_norm_check(model, f, config.p, config.grid_points, config.mc));
    }
  } catch (const Error& e) {
    BoundCheckReport err;
    err.name = "estimator_checks";
    err.pass = false;
    err.warnings.push_back(e.what());
    out.push_back(err);
  }
  return out;
}

void write_checks_csv(std::ostream& os, const std::vector<BoundCheckReport>& reports) {
  os << "check,bound,empirical,std_error,margin,pass,decisive,warnings\n";
  for (const auto& r : reports) {
    std::string warn;
    for (const auto& w : r.warnings) warn += (warn.empty() ? "" : " | ") + w;
    for (char& ch : warn) {
      if (ch == ',') ch = ';';
    }
    os << r.name << ',' << fmt(r.bound) << ',' << fmt(r.empirical) << ',' << fmt(r.std_error) << ','
       << fmt(r.margin) << ',' << (r.pass ? "true" : "false") << ',' << (r.decisive ? "true" : "false") << ','
       << warn << '\n';
  }
}

void write_checks_json(std::ostream& os, const std::vector<BoundCheckReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    json j;
    j["check"] = r.name;
    j["bound"] = r.bound;
    j["empirical"] = r.empirical;
    j["std_error"] = r.std_error;
    j["margin"] = r.margin;
    j["pass"] = r.pass;
    j["decisive"] = r.decisive;
    j["warnings"] = r.warnings;
    j["metadata"] = r.metadata;
    arr.push_back(j);
  }
  os << arr.dump(2) << '\n';
}

}  // namespace semigrad
