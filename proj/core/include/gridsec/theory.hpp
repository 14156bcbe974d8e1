#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/dc_sim.hpp"
#include "gridsec/graph.hpp"

namespace gridsec {

class TheoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenErrorEstimate {
  double sigma = 0.0;
  int t_o = 0;
  int rank_h = 0;
  double e_gen_closed = 0.0;
  double e_gen_empirical = 0.0;
  double rel_dev = 0.0;  // |empirical - closed| / closed
};

struct MonteCarloConfig {
  int trials = 100;
  int t_star = 1000;
  std::vector<double> sigma_grid;
  std::uint64_t seed = 0;
};

/// Expected held-out projection energy sigma^2 (1 + rank / (t_o - n)),
/// with n = rank + 1 for the fits used here (global fit: n = bus count;
/// per-cycle fit: n = cycle length). Requires t_o > n.
double egen_closed_form(double sigma, int rank_h, int t_o, int n);

/// Per-cycle closed form sigma^2 (1 + (|c| - 1) / (t_o - |c|)).
double cycle_egen_closed_form(double sigma, int cycle_len, int t_o);

/// Total over a basis: sum of per-cycle closed forms.
double cycle_basis_egen(const CycleBasis& basis, int t_o, double sigma);

/// Monte-Carlo validation of the global fit: per trial, isotropic states
/// with fresh noise for train (t_o) and test (t_star); n_hat = left
/// singular direction of the smallest singular value of the training
/// matrix; empirical = ||Z_test' n_hat||^2 / t_star averaged over trials.
std::vector<GenErrorEstimate> egen_monte_carlo(const JacobianH& h,
                                               const MonteCarloConfig& cfg,
                                               int t_o);

/// First-order null-estimate error: err = -(clean')^+ noise' n_true.
/// clean and noise are m x T; n_true is a unit null vector of H'.
Eigen::VectorXd first_order_err(const Eigen::MatrixXd& clean,
                                const Eigen::MatrixXd& noise,
                                const Eigen::VectorXd& n_true);

/// Unit left singular vector of H for its smallest singular value, sign
/// fixed (largest-magnitude entry positive). Exact null vector of H' when
/// the nullity is positive.
Eigen::VectorXd smallest_left_singular_vector(const Eigen::MatrixXd& h);

struct CovarianceCheck {
  Eigen::VectorXd mean_err;
  Eigen::MatrixXd empirical;   // second moment of err over trials
  Eigen::MatrixXd closed;      // sigma^2 / (t_o - n) (H H')^+
  double frob_rel_err = 0.0;
};

CovarianceCheck err_covariance_check(const JacobianH& h, int t_o, double sigma,
                                     int trials, std::uint64_t seed);

struct BasisComparisonRow {
  std::string label;  // "mcb" or "fundamental_<k>"
  double total_length = 0.0;
  double closed_form = 0.0;
  double empirical_mean = 0.0;
  double empirical_se = 0.0;  // standard error over trials
};

/// Closed-form and per-cycle Monte-Carlo generalization error for the MCB
/// and n_random random fundamental bases of the case graph.
std::vector<BasisComparisonRow> mcb_optimality_experiment(
    const GridCase& grid_case, int t_o, double sigma, int trials,
    std::uint64_t seed, int n_random = 100, int t_star = 200);

/// CSV rows {sigma, t_o, rank, closed, empirical, rel_dev, trials, seed}.
std::string validation_csv(const std::vector<GenErrorEstimate>& rows,
                           int trials, std::uint64_t seed);

std::string basis_comparison_csv(const std::vector<BasisComparisonRow>& rows);

}  // namespace gridsec
