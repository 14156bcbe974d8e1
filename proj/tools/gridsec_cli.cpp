// Command-line front end: parse-case, simulate, attack, detect, sweep,
// theory, partial. Exit codes: 0 success, 2 configuration error,
// 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridsec/harness.hpp"

namespace fs = std::filesystem;
using namespace gridsec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << content;
}

GridCase load_case(const std::string& path) {
  const std::string text = read_file(path);
  const std::string stem = fs::path(path).stem().string();
  if (fs::path(path).extension() == ".json") return parse_json_case(text);
  return parse_matpower_case(text, stem);
}

struct CommonArgs {
  std::string case_path;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty())
    cfg = config_from_json(read_file(args.config_path));
  if (!args.case_path.empty()) cfg.case_path = args.case_path;
  if (args.seed) cfg.seed = *args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (cfg.case_path.empty())
    throw ConfigError("no case given (use --case or the config file)");
  cfg.validate_config();
  return cfg;
}

void default_out(ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) cfg.out_dir = "out";
}

// Refuses to mix artifacts from different configurations in one directory.
void check_hash_marker(const ExperimentConfig& cfg) {
  const std::uint64_t hash = config_hash(cfg);
  const fs::path marker = fs::path(cfg.out_dir) / "config_hash.txt";
  if (fs::exists(marker)) {
    const std::string prev = read_file(marker.string());
    if (prev != std::to_string(hash) + "\n")
      throw ConfigError(
          "output directory holds artifacts from a different config "
          "(config_hash.txt mismatch); use a fresh --out directory");
  }
  write_file(marker, std::to_string(hash) + "\n");
}

std::string hash_header(const ExperimentConfig& cfg) {
  return "# config_hash=" + std::to_string(config_hash(cfg)) + "\n";
}

int cmd_parse_case(const CommonArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  const GridCase gc = load_case(cfg.case_path);
  const OrientedGraph g = build_graph(gc);
  std::cout << gc.case_name << ": " << gc.n_buses() << " buses, "
            << gc.n_branches() << " branches, cycle space dim "
            << g.cycle_space_dim() << ", slack bus " << gc.slack_bus << "\n";
  if (!cfg.out_dir.empty()) {
    check_hash_marker(cfg);
    const fs::path out(cfg.out_dir);
    write_file(out / "case.json", write_json_case(gc));
    const CycleBasis basis = cfg.basis == BasisKind::minimum
                                 ? minimum_cycle_basis(g)
                                 : fundamental_cycle_basis(g);
    write_file(out / "basis.json", basis_to_json(basis));
  }
  return kExitOk;
}

int cmd_simulate(const CommonArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  default_out(cfg);
  const GridCase gc = load_case(cfg.case_path);
  check_hash_marker(cfg);

  const JacobianH h = build_h(gc);
  Rng sim_rng = Rng(cfg.seed).substream(Rng::mix(1, 0));
  const LoadProfile profile = synthetic_profile(cfg.t_total, sim_rng.next());
  const Eigen::MatrixXd states =
      simulate_states(gc, profile, cfg.t_total, cfg.jitter, sim_rng.next());
  const NoiseModel noise =
      NoiseModel::homoscedastic(gc.n_branches(), cfg.sigma_center());
  MeasurementSeries series =
      generate_measurements(h, states, noise, sim_rng.next());
  series.case_name = gc.case_name;

  const fs::path out(cfg.out_dir);
  write_file(out / "series.csv", hash_header(cfg) + series_to_csv(gc, series));
  write_file(out / "series.json", series_sidecar_json(series));
  std::cout << "wrote " << (out / "series.csv").string() << " ("
            << series.n_steps() << " steps, sigma " << series.sigma << ")\n";
  return kExitOk;
}

int cmd_attack(const CommonArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  default_out(cfg);
  const GridCase gc = load_case(cfg.case_path);
  check_hash_marker(cfg);

  ExperimentConfig attack_cfg = cfg;
  attack_cfg.detectors = {"csd"};  // pipeline runs; reports discarded here
  const ScenarioResult res =
      run_scenario(gc, attack_cfg, cfg.sigma_center(), cfg.kappa_center(),
                   cfg.sigma_grid.size() / 2, cfg.kappa_grid.size() / 2);

  AttackScenario sc;
  sc.family = cfg.family;
  sc.kappa = cfg.kappa_center();
  sc.gamma = cfg.gamma;
  sc.t_start = res.window_start;
  sc.t_end = res.window_end;

  const fs::path out(cfg.out_dir);
  write_file(out / "attacked.csv",
             hash_header(cfg) + series_to_csv(gc, res.eval));
  write_file(out / "attacked.json", series_sidecar_json(res.eval));
  write_file(out / "scenario.json", scenario_to_json(sc));
  if (cfg.family == AttackFamily::ae_blind) {
    TrainConfig tc;
    tc.epochs = cfg.ae_epochs;
    tc.seed = Rng::mix(cfg.seed, Rng::mix(2, cfg.sigma_grid.size() / 2));
    const TrainResult trained =
        train_autoencoder(res.train.z, gc.n_states(), tc);
    write_file(out / "model.json", trained.model.to_json());
  }
  std::cout << "attacked window [" << res.window_start << ", "
            << res.window_end << ") of " << res.eval.n_steps()
            << " evaluation steps\n";
  return kExitOk;
}

int cmd_detect(const CommonArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  default_out(cfg);
  const GridCase gc = load_case(cfg.case_path);
  check_hash_marker(cfg);

  const ScenarioResult res =
      run_scenario(gc, cfg, cfg.sigma_center(), cfg.kappa_center(),
                   cfg.sigma_grid.size() / 2, cfg.kappa_grid.size() / 2);
  const fs::path out(cfg.out_dir);
  if (res.csd) {
    write_file(out / "csd_report.json", report_to_json(*res.csd, &res.bank));
    write_file(out / "csd_scores.csv",
               hash_header(cfg) + report_to_csv(*res.csd));
  }
  if (res.svd) {
    write_file(out / "svd_report.json", report_to_json(*res.svd));
    write_file(out / "svd_scores.csv",
               hash_header(cfg) + report_to_csv(*res.svd));
  }
  if (res.bdd) {
    write_file(out / "bdd_report.json", report_to_json(*res.bdd));
    write_file(out / "bdd_scores.csv",
               hash_header(cfg) + report_to_csv(*res.bdd));
  }
  write_file(out / "metrics.csv",
             metric_rows_csv(res.rows, config_hash(cfg)));
  for (const auto& row : res.rows) {
    std::cout << row.detector << ": precision " << row.precision
              << ", recall " << row.recall << ", f1 " << row.f1 << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const CommonArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  default_out(cfg);
  const GridCase gc = load_case(cfg.case_path);
  check_hash_marker(cfg);

  const SweepResult sweep = run_sweep(gc, cfg);
  const fs::path out(cfg.out_dir);
  write_file(out / "sweep.csv", metric_rows_csv(sweep.rows, config_hash(cfg)));
  write_file(out / "strong_cells.json",
             strong_cells_json(sweep, config_hash(cfg)));
  std::cout << "wrote " << sweep.rows.size() << " metric rows over a "
            << cfg.kappa_grid.size() << "x" << cfg.sigma_grid.size()
            << " grid\n";
  return kExitOk;
}

int cmd_theory(const CommonArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  default_out(cfg);
  const GridCase gc = load_case(cfg.case_path);
  check_hash_marker(cfg);

  const TheoryResult res = run_theory(gc, cfg);
  const fs::path out(cfg.out_dir);
  write_file(out / "theory_validation.csv",
             hash_header(cfg) + validation_csv(res.validation,
                                               cfg.theory_trials, cfg.seed));
  write_file(out / "basis_comparison.csv",
             hash_header(cfg) + basis_comparison_csv(res.basis_rows));
  for (const auto& row : res.validation) {
    std::cout << "sigma " << row.sigma << ": closed " << row.e_gen_closed
              << ", empirical " << row.e_gen_empirical << ", rel_dev "
              << row.rel_dev << "\n";
  }
  return kExitOk;
}

const char* placement_name(AttackPlacement p) {
  switch (p) {
    case AttackPlacement::in_missing_cycles_only:
      return "in_missing_cycles_only";
    case AttackPlacement::in_remaining_cycles:
      return "in_remaining_cycles";
    case AttackPlacement::mixed:
      return "mixed";
  }
  return "unknown";
}

int cmd_partial(const CommonArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  default_out(cfg);
  const GridCase gc = load_case(cfg.case_path);
  check_hash_marker(cfg);

  const PartialResult res = run_partial(gc, cfg);
  const fs::path out(cfg.out_dir);
  write_file(out / "baseline.csv",
             metric_rows_csv(res.baseline.rows, config_hash(cfg)));
  write_file(out / "minus_small.csv",
             metric_rows_csv(res.minus_small.rows, config_hash(cfg)));
  write_file(out / "minus_large.csv",
             metric_rows_csv(res.minus_large.rows, config_hash(cfg)));
  nlohmann::json j{
      {"config_hash", config_hash(cfg)},
      {"removed_small", res.small_removed},
      {"removed_large", res.large_removed},
      {"small_placement", placement_name(res.small_placement)},
      {"large_placement", placement_name(res.large_placement)}};
  write_file(out / "partial.json", j.dump(2) + "\n");
  std::cout << "small-cycle mask: removed " << res.small_removed.size()
            << " branch(es), attack " << placement_name(res.small_placement)
            << "; large-cycle mask: removed " << res.large_removed.size()
            << " branch(es), attack " << placement_name(res.large_placement)
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-grid measurement simulation, blind FDIA generation, "
               "and cycle-space attack detection"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string command;
  for (const char* name : {"parse-case", "simulate", "attack", "detect",
                           "sweep", "theory", "partial"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--case", args.case_path, "case file (.m or .json)");
    sub->add_option("--config", args.config_path, "experiment config JSON");
    sub->add_option("--seed", args.seed, "RNG seed override");
    sub->add_option("--out", args.out_dir, "output directory");
    sub->callback([&command, name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (command == "parse-case") return cmd_parse_case(args);
    if (command == "simulate") return cmd_simulate(args);
    if (command == "attack") return cmd_attack(args);
    if (command == "detect") return cmd_detect(args);
    if (command == "sweep") return cmd_sweep(args);
    if (command == "theory") return cmd_theory(args);
    if (command == "partial") return cmd_partial(args);
    std::cerr << "unknown subcommand\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CaseError& e) {
    std::cerr << "case error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
