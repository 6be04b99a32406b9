// Command-line runner: run, suite, check and list.

#include "semigrad/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace semigrad;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> paths;
  std::optional<int> steps;
  std::string out;
  std::string format = "csv";
};

void apply(const Overrides& o, ExperimentConfig& cfg) {
  if (o.seed) cfg.mc.seed = *o.seed;
  if (o.paths) cfg.mc.n_paths = *o.paths;
  if (o.steps) cfg.mc.n_steps = *o.steps;
}

/// Writes to --out when given, else stdout.
template <typename Fn>
void emit(const Overrides& o, const std::string& fallback_out, Fn&& write) {
  const std::string path = !o.out.empty() ? o.out : fallback_out;
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream file(path);
  if (!file) throw Error(ErrorCode::InvalidConfig, "cannot write '" + path + "'");
  write(file);
}

ExperimentConfig config_from(const std::string& path, const std::vector<std::string>& sets) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--set expects key=value");
    apply_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo estimators of diffusion semigroup derivatives"};
  app.require_subcommand(1);

  Overrides o;
  std::string config_path;
  std::vector<std::string> sets;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--paths", o.paths, "number of Monte Carlo paths");
    sub->add_option("--steps", o.steps, "number of time steps");
    sub->add_option("--out", o.out, "output file (default: stdout)");
    sub->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  };

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "key=value or JSON config file");
  run->add_option("--set", sets, "extra key=value overrides");
  add_common(run);

  std::string manifest;
  CLI::App* suite = app.add_subcommand("suite", "run every config of a manifest");
  suite->add_option("--config,manifest", manifest, "manifest file")->required();
  add_common(suite);

  CLI::App* check = app.add_subcommand("check", "run the diagnostics for a scenario");
  check->add_option("--config", config_path, "key=value or JSON config file");
  check->add_option("--set", sets, "extra key=value overrides");
  add_common(check);

  CLI::App* list = app.add_subcommand("list", "list registered scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*list) {
      std::cout << list_scenarios();
      return 0;
    }
    if (*run) {
      ExperimentConfig cfg = config_from(config_path, sets);
      apply(o, cfg);
      const std::vector<ReportRecord> records{run_experiment(cfg)};
      emit(o, cfg.out, [&](std::ostream& os) {
        if (o.format == "json") {
          write_json(os, records);
        } else {
          write_csv(os, records);
        }
      });
      if (!records.front().error.empty()) std::cerr << records.front().error << '\n';
      return exit_code(records);
    }
    if (*suite) {
      std::vector<ExperimentConfig> configs = load_manifest(manifest);
      for (auto& c : configs) apply(o, c);
      const std::vector<ReportRecord> records = run_suite(configs);
      emit(o, "", [&](std::ostream& os) {
        if (o.format == "json") {
          write_json(os, records);
        } else {
          write_csv(os, records);
        }
      });
      for (const auto& r : records) {
        if (!r.error.empty()) std::cerr << r.config.scenario << '/' << r.config.estimator << ": " << r.error << '\n';
      }
      return exit_code(records);
    }
    if (*check) {
      ExperimentConfig cfg = config_from(config_path, sets);
      apply(o, cfg);
      const std::vector<BoundCheckReport> reports = run_checks(cfg);
      emit(o, cfg.out, [&](std::ostream& os) {
        if (o.format == "json") {
          write_checks_json(os, reports);
        } else {
          write_checks_csv(os, reports);
        }
      });
      bool ok = true;
      for (const auto& r : reports) ok = ok && (r.pass || !r.decisive);
      return ok ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
