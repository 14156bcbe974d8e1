#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridsec/attack.hpp"
#include "gridsec/case_io.hpp"
#include "gridsec/detector.hpp"
#include "gridsec/theory.hpp"

namespace gridsec {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration shared by all subcommands. The series is split
/// into an attack-free training head (first train_fraction) and an
/// evaluation tail; the attack window is the middle third of the tail.
struct ExperimentConfig {
  std::string case_path;
  int t_total = 2000;
  double train_fraction = 0.6;
  std::vector<double> sigma_grid = {0.005, 0.01, 0.02, 0.05, 0.1};
  std::vector<double> kappa_grid = {0.25, 0.5, 1.0, 2.0, 4.0};
  AttackFamily family = AttackFamily::ae_blind;
  double gamma = 0.1;
  BasisKind basis = BasisKind::minimum;
  std::vector<std::string> detectors = {"csd", "svd", "bdd"};
  double alpha = 0.05;      // BDD false-alarm level
  double jitter = 0.1;      // per-bus load jitter
  int ae_epochs = 60;
  std::uint64_t seed = 1;
  std::string out_dir;  // empty -> command-dependent default

  // theory subcommand
  int theory_t_o = 0;  // 0 -> 2m
  int theory_t_star = 1000;
  int theory_trials = 100;
  std::vector<double> theory_sigma_grid = {0.01, 0.02, 0.05, 0.1, 0.5, 1.0};

  // partial subcommand; empty -> pick branches from the MCB automatically
  std::vector<int> removed_small;
  std::vector<int> removed_large;

  /// Center values used by single-point subcommands.
  double sigma_center() const { return sigma_grid[sigma_grid.size() / 2]; }
  double kappa_center() const { return kappa_grid[kappa_grid.size() / 2]; }

  void validate_config() const;
};

/// Parses the config JSON; unknown keys are rejected so typos fail loudly.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

/// FNV-1a over the canonical config JSON; recorded in output headers so
/// mixed-config artifact directories are detectable.
std::uint64_t config_hash(const ExperimentConfig& cfg);

struct MetricRow {
  std::string detector;  // "aggregate", "cycle_<i>", "svd", "bdd"
  double kappa = 0.0;
  double sigma = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t seed = 0;
};

/// One end-to-end run at fixed (sigma, kappa).
struct ScenarioResult {
  MeasurementSeries train;     // attack-free head
  MeasurementSeries eval;      // tail with the attack injected
  int window_start = 0;        // indices within eval
  int window_end = 0;
  DetectorBank bank;
  std::optional<DetectionReport> csd;
  std::optional<DetectionReport> svd;
  std::optional<DetectionReport> bdd;
  double bdd_window_rate = 0.0;  // fraction of window timesteps BDD flags
  std::vector<MetricRow> rows;
};

struct SweepResult {
  std::vector<MetricRow> rows;
  /// detector -> (kappa, sigma) cells with f1 >= 0.8.
  std::map<std::string, std::vector<std::pair<double, double>>> strong_cells;
};

struct PartialResult {
  SweepResult baseline;
  SweepResult minus_small;
  SweepResult minus_large;
  std::vector<int> small_removed, large_removed;
  AttackPlacement small_placement = AttackPlacement::mixed;
  AttackPlacement large_placement = AttackPlacement::mixed;
};

/// Caches one trained autoencoder per (seed, sigma) so sweep cells that
/// share a noise level reuse the model.
class AeCache {
 public:
  const MlpAutoencoder& get(const GridCase& grid_case,
                            const Eigen::MatrixXd& history, int latent,
                            int epochs, std::uint64_t key_seed);

 private:
  std::map<std::uint64_t, MlpAutoencoder> models_;
};

ScenarioResult run_scenario(const GridCase& grid_case,
                            const ExperimentConfig& cfg, double sigma,
                            double kappa, std::uint64_t sigma_key,
                            std::uint64_t kappa_key, AeCache* cache = nullptr);

SweepResult run_sweep(const GridCase& grid_case, const ExperimentConfig& cfg);

struct TheoryResult {
  std::vector<GenErrorEstimate> validation;
  std::vector<BasisComparisonRow> basis_rows;
};

TheoryResult run_theory(const GridCase& grid_case,
                        const ExperimentConfig& cfg);

PartialResult run_partial(const GridCase& grid_case,
                          const ExperimentConfig& cfg);

std::string metric_rows_csv(const std::vector<MetricRow>& rows,
                            std::uint64_t cfg_hash);
std::string strong_cells_json(const SweepResult& sweep,
                              std::uint64_t cfg_hash);

/// Columns [t_begin, t_end) of a series as a standalone series.
MeasurementSeries slice_series(const MeasurementSeries& series, int t_begin,
                               int t_end);

/// Restricts a series to the given channel rows (ascending original ids).
MeasurementSeries mask_channels(const MeasurementSeries& series,
                                const std::vector<int>& kept);

std::uint64_t fnv1a(const std::string& bytes);

}  // namespace gridsec
