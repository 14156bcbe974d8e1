#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/dc_sim.hpp"
#include "gridsec/graph.hpp"

namespace gridsec {

class DetectorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One local detector per basis cycle: a unit null vector on the cycle's
/// branch support, estimated from training data.
struct CycleDetector {
  Cycle cycle;
  std::vector<int> branch_ids;  // cycle members, ascending
  Eigen::VectorXd n_hat;        // unit norm, indexed like branch_ids
  bool degenerate = false;      // repeated smallest eigenvalue at fit time

  /// n_hat embedded into R^m, zero off the cycle support.
  Eigen::VectorXd embedded(int n_channels) const;
};

struct DetectorBank {
  std::vector<CycleDetector> detectors;
  BasisKind basis_kind = BasisKind::minimum;
  int fitted_steps = 0;

  int size() const { return static_cast<int>(detectors.size()); }
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool defined = false;  // false when the labels contain no positives
};

/// MCE threshold plus whether the two classes it induces are separated
/// (means differ by at least 3x the pooled std). Non-separable thresholds
/// flag nothing.
struct ThresholdDecision {
  double tau = 0.0;
  bool separable = false;
};

enum class DetectMode { local, aggregated };

struct DetectionReport {
  Eigen::MatrixXd cycle_scores;     // |bank| x T
  Eigen::VectorXd aggregate_score;  // T, = sqrt(column sums of squares)
  std::vector<ThresholdDecision> cycle_thresholds;
  ThresholdDecision aggregate_threshold;
  std::vector<std::vector<bool>> cycle_flags;  // [detector][t]
  std::vector<bool> aggregate_flags;           // [t]
  std::vector<bool> flags;                     // per selected mode
  DetectMode mode = DetectMode::aggregated;
  Metrics metrics;  // vs series labels, when positives exist

  int n_steps() const { return static_cast<int>(aggregate_score.size()); }
};

/// Unit null vector of the cycle-restricted data Gram matrix (smallest
/// eigenvalue of Z_c Z_c', a |c| x |c| solve). Sign fixed so the
/// largest-magnitude entry is positive. Requires T >= |c|.
CycleDetector fit_cycle_null(const Eigen::MatrixXd& train_z,
                             const Cycle& cycle);

DetectorBank fit_bank(const MeasurementSeries& train, const CycleBasis& basis);

/// Per-cycle score L_i(t) = |n_hat' z_c(t)|.
Eigen::MatrixXd score(const DetectorBank& bank, const MeasurementSeries& test);

/// Li's minimum-cross-entropy iteration: tau_0 = mean,
/// tau_{k+1} = (mu_b - mu_a) / (ln mu_b - ln mu_a) over the classes the
/// current tau induces; converged at |dtau| < 1e-9, capped at 500 rounds.
/// Values are floored at 1e-12; all-equal input returns that value.
double mce_threshold(const std::vector<double>& values);

ThresholdDecision mce_decision(const std::vector<double>& values);

/// Full detection run: transductive per-cycle and aggregate MCE thresholds
/// on the test trace, or frozen thresholds from a calibration report.
DetectionReport detect(const DetectorBank& bank, const MeasurementSeries& test,
                       DetectMode mode,
                       const DetectionReport* calibration = nullptr);

/// Global numerical-null-space baseline: null basis = left singular vectors
/// of the training matrix for the n_null smallest singular values; score
/// ||N' z_t||. Requires fitted_steps >= n_channels.
DetectionReport svd_baseline_detect(const MeasurementSeries& train,
                                    const MeasurementSeries& test, int n_null);

Metrics compute_metrics(const std::vector<bool>& flags,
                        const std::vector<bool>& labels);

enum class AttackPlacement {
  in_missing_cycles_only,  // support outside every remaining cycle
  in_remaining_cycles,
  mixed
};

struct ObservabilityMask {
  GridCase sub_case;            // observable branches only, re-identified
  std::vector<int> kept_branches;  // original branch ids, ascending
  CycleBasis sub_basis;         // minimum basis of the observable subgraph
};

/// Removes branches and recomputes the cycle basis on what remains.
/// Disconnection is allowed; the basis covers each component.
ObservabilityMask mask_observability(const GridCase& grid_case,
                                     const std::vector<int>& removed_branches);

/// Classifies an attack support (original branch ids) against the mask.
AttackPlacement classify_attack_support(const GridCase& grid_case,
                                        const ObservabilityMask& mask,
                                        const std::vector<int>& support);

std::string report_to_json(const DetectionReport& report,
                           const DetectorBank* bank = nullptr);
/// Score traces: t, per-cycle scores, aggregate, flagged.
std::string report_to_csv(const DetectionReport& report);

}  // namespace gridsec
