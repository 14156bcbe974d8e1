#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/case_io.hpp"
#include "gridsec/rng.hpp"

namespace gridsec {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// DC measurement Jacobian, m x n_s with n_s = n_buses - 1. Row e is
/// (1/x_e)(e_from - e_to) restricted to the non-slack columns; state order
/// is the non-slack buses in GridCase order, branch order matches the case.
struct JacobianH {
  Eigen::MatrixXd matrix;
  std::vector<int> state_bus_ids;  // external bus id per state column

  int n_channels() const { return static_cast<int>(matrix.rows()); }
  int n_states() const { return static_cast<int>(matrix.cols()); }
};

/// Per-channel sensor noise; R = diag(sigma_i^2).
struct NoiseModel {
  Eigen::VectorXd sigma;  // all > 0

  static NoiseModel homoscedastic(int m, double sigma_value);
  Eigen::VectorXd variances() const { return sigma.array().square(); }
};

/// A measurement time series: columns are timesteps. labels[t] is false for
/// normal and true for attacked samples.
struct MeasurementSeries {
  Eigen::MatrixXd z;       // m x T, observed
  Eigen::MatrixXd clean;   // m x T, noise-free H x_true
  Eigen::MatrixXd x_true;  // n_s x T
  std::vector<bool> labels;
  double sigma = 0.0;  // scalar noise level recorded for the sidecar
  std::uint64_t seed = 0;
  std::string case_name;

  int n_channels() const { return static_cast<int>(z.rows()); }
  int n_steps() const { return static_cast<int>(z.cols()); }
};

JacobianH build_h(const GridCase& grid_case);

/// Solves B*theta = P per timestep on the non-slack buses, where B is the
/// reduced 1/x-weighted Laplacian and P scales base loads by the profile
/// (cycled when T exceeds its length) with per-bus multiplicative jitter
/// Uniform(1-jitter, 1+jitter). Loads enter as negative injections.
Eigen::MatrixXd simulate_states(const GridCase& grid_case,
                                const LoadProfile& profile, int n_steps,
                                double jitter, std::uint64_t seed);

MeasurementSeries generate_measurements(const JacobianH& h,
                                        const Eigen::MatrixXd& states,
                                        const NoiseModel& noise,
                                        std::uint64_t seed);

/// iid standard-normal state columns, for the identifiability experiments.
Eigen::MatrixXd isotropic_states(int n_states, int n_steps,
                                 std::uint64_t seed);

/// CSV body: header of branch labels, one row per timestep.
std::string series_to_csv(const GridCase& grid_case,
                          const MeasurementSeries& series);
/// JSON sidecar {seed, sigma, labels, case_name}.
std::string series_sidecar_json(const MeasurementSeries& series);
/// Rebuilds z/labels/seed/sigma from CSV + sidecar; clean and x_true are
/// not serialized and come back empty.
MeasurementSeries series_from_csv(const std::string& csv_text,
                                  const std::string& sidecar_json);

}  // namespace gridsec
