#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "gridsec/dc_sim.hpp"

namespace gridsec {

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WlsEstimate {
  Eigen::VectorXd x_hat;
  Eigen::VectorXd z_hat;  // = H x_hat
};

struct ResidualStats {
  double lnr = 0.0;
  int dof = 0;
  double threshold = 0.0;
  bool flagged = false;
};

/// Precomputed WLS operators for a fixed (H, R): shared read-only across
/// timesteps.
class Estimator {
 public:
  Estimator(const JacobianH& h, const NoiseModel& noise);

  WlsEstimate estimate(const Eigen::VectorXd& z) const;

  /// Residual sensitivity S = I - H (H'R^-1 H)^-1 H'R^-1. S H = 0, S S = S.
  const Eigen::MatrixXd& sensitivity() const { return s_; }

  /// Largest normalized residual statistic sum_i (S z)_i^2 / sigma_i^2.
  double lnr(const Eigen::VectorXd& z) const;

  ResidualStats detect(const Eigen::VectorXd& z, double alpha) const;

  int dof() const { return m_ - n_s_; }

 private:
  int m_, n_s_;
  Eigen::VectorXd inv_var_;
  Eigen::MatrixXd gain_;  // (H'R^-1 H)^-1 H'R^-1
  Eigen::MatrixXd h_;
  Eigen::MatrixXd s_;
};

/// Regularized lower incomplete gamma P(a, x), series for x < a+1 and
/// continued fraction otherwise. Absolute accuracy ~1e-14.
double regularized_gamma_p(double a, double x);

double chi2_cdf(double x, int dof);

/// Inverse chi-square CDF at probability 1 - alpha, by bisection to
/// |CDF(tau) - (1 - alpha)| <= 1e-10.
double chi2_threshold(int dof, double alpha);

}  // namespace gridsec
