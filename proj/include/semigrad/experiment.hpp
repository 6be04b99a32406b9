#pragma once

#include "semigrad/diagnostics.hpp"
#include "semigrad/estimators.hpp"
#include "semigrad/forms.hpp"
#include "semigrad/lie_group.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace semigrad {

/// A named model together with its default initial point and direction.
struct Scenario {
  std::string id;
  std::string description;
  std::string oracle_note;  // "none" when no analytic oracle is registered
  DiffusionModel model;
  std::optional<LieGroupModel> lie;
  Vec default_x0;
  Vec default_v0;
};

/// Registered scenario ids, sorted.
std::vector<std::string> scenario_ids();
Scenario make_scenario(std::string_view id);

/// Observables: one, x, coord:<k>, x_squared, sin, sin_theta, height, trace, entry21,
/// sign_sin_theta.
ScalarObservable make_observable(std::string_view id, const Scenario& scenario);

/// Forms: dtheta_s1, vol_s2, rotation_s2, height_vol_s2, exact:<obs>, function:<obs>.
FormField make_form(std::string_view id, const Scenario& scenario);

std::vector<std::string> estimator_ids();

/// Second input vector of 2-form estimators: v1 when given, else x0 x v0 on S^2
/// (completing an oriented orthonormal pair when v0 is a unit tangent).
Vec second_form_vector(const std::optional<Vec>& v1, const Scenario& scenario, const Vec& x0,
                       const Vec& v0);

struct ExperimentConfig {
  std::string scenario = "bm1d";
  std::string estimator = "bel_gradient";
  std::string observable = "sin";
  std::string form;
  std::optional<Vec> x0;
  std::optional<double> theta;  // circle angle; sets x0 and the default unit tangent
  std::optional<Vec> v0;
  std::optional<Vec> v1;  // second input vector of 2-form estimators
  std::optional<Vec> u0;  // first Hessian direction
  McConfig mc;
  // Estimator-specific parameters.
  std::optional<double> potential;  // constant potential V
  std::optional<Vec> y;             // score target point
  double bandwidth = 0.05;
  BinKernel kernel = BinKernel::Box;
  HessianOptions hessian;
  double fd_delta = 1e-3;
  // Pass rule: |mean - oracle| <= max(3 SE, rel_tol |oracle|, abs_tol).
  double rel_tol = 0.02;
  double abs_tol = 0.0;
  // Diagnostics.
  double p = 2.0;
  int grid_points = 16;
  std::string out;
};

/// Sets one key from its textual value (InvalidConfig on unknown keys or bad values).
void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// key=value lines ('#' comments); ';' also separates pairs on one line.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config_json(std::string_view text);
/// Picks the parser from the first non-blank character.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

struct ReportRecord {
  ExperimentConfig config;
  EstimatorResult result;
  std::optional<double> oracle;
  std::string oracle_source;
  double abs_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  double wall_ms = 0.0;
  std::string error;  // non-empty when the run threw
};

/// Analytic value for the configured quantity, if the scenario registers one.
std::optional<double> oracle_value(const ExperimentConfig& cfg, const Scenario& scenario);

/// Runs the configured estimator; never throws for estimator errors (see record.error),
/// but rethrows UnknownScenario / UnknownEstimator / InvalidConfig.
ReportRecord run_experiment(const ExperimentConfig& config);

/// 0 on pass, 2 on tolerance failure, 1 on error.
int exit_code(const ReportRecord& record);
int exit_code(const std::vector<ReportRecord>& records);

/// Manifest: a JSON array of config objects, or one inline config per line.
std::vector<ExperimentConfig> load_manifest(const std::string& path);
std::vector<ExperimentConfig> parse_manifest(std::string_view text);
/// Runs every config; a failing config yields an error record instead of aborting.
std::vector<ReportRecord> run_suite(const std::vector<ExperimentConfig>& configs);

inline constexpr const char* kCsvHeader =
    "scenario,estimator,t,n_paths,n_steps,seed,mean,std_error,oracle,abs_error,pass,wall_ms";

void write_csv(std::ostream& os, const std::vector<ReportRecord>& records);
void write_json(std::ostream& os, const std::vector<ReportRecord>& records);

struct CsvRow {
  std::string scenario;
  std::string estimator;
  double t = 0.0;
  std::uint64_t n_paths = 0;
  int n_steps = 0;
  std::uint64_t seed = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::optional<double> oracle;
  std::optional<double> abs_error;
  bool pass = false;
  double wall_ms = 0.0;
};

std::vector<CsvRow> read_csv(std::istream& is);

/// One line per scenario: id, description and oracle (or "none"), sorted by id.
std::string list_scenarios();

/// Diagnostics bundle for a scenario (check subcommand).
std::vector<BoundCheckReport> run_checks(const ExperimentConfig& config);
void write_checks_csv(std::ostream& os, const std::vector<BoundCheckReport>& reports);
void write_checks_json(std::ostream& os, const std::vector<BoundCheckReport>& reports);

}  // namespace semigrad
