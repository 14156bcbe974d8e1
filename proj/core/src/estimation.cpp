#include "gridsec/estimation.hpp"

#include <cmath>
#include <limits>

namespace gridsec {

Estimator::Estimator(const JacobianH& h, const NoiseModel& noise)
    : m_(h.n_channels()), n_s_(h.n_states()), h_(h.matrix) {
  if (noise.sigma.size() != m_)
    throw EstimationError("noise dimension does not match Jacobian");
  if ((noise.sigma.array() <= 0.0).any())
    throw EstimationError("sigma must be positive");
  inv_var_ = noise.sigma.array().square().inverse();

  // Normal equations; the grids here are small enough for dense inverses.
  const Eigen::MatrixXd htr = h_.transpose() * inv_var_.asDiagonal();
  const Eigen::MatrixXd gram = htr * h_;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (!lu.isInvertible())
    throw EstimationError("rank-deficient Jacobian: H'R^-1 H is singular");
  gain_ = lu.inverse() * htr;
  s_ = Eigen::MatrixXd::Identity(m_, m_) - h_ * gain_;
}

WlsEstimate Estimator::estimate(const Eigen::VectorXd& z) const {
  if (z.size() != m_) throw EstimationError("measurement size mismatch");
  WlsEstimate e;
  e.x_hat = gain_ * z;
  e.z_hat = h_ * e.x_hat;
  return e;
}

double Estimator::lnr(const Eigen::VectorXd& z) const {
  if (z.size() != m_) throw EstimationError("measurement size mismatch");
  const Eigen::VectorXd r = s_ * z;
  return (r.array().square() * inv_var_.array()).sum();
}

ResidualStats Estimator::detect(const Eigen::VectorXd& z, double alpha) const {
  ResidualStats stats;
  stats.lnr = lnr(z);
  stats.dof = dof();
  stats.threshold = chi2_threshold(stats.dof, alpha);
  stats.flagged = stats.lnr >= stats.threshold;
  return stats;
}

namespace {

// ln Gamma(x), Lanczos. Good to ~1e-15 for x > 0.
double ln_gamma(double x) {
  static const double c[6] = {76.18009172947146,     -86.50532032941677,
                              24.01409824083091,     -1.231739572450155,
                              0.1208650973866179e-2, -0.5395239384953e-5};
  double y = x;
  double tmp = x + 5.5;
  tmp -= (x + 0.5) * std::log(tmp);
  double ser = 1.000000000190015;
  for (int j = 0; j < 6; ++j) ser += c[j] / ++y;
  return -tmp + std::log(2.5066282746310005 * ser / x);
}

double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - ln_gamma(a));
}

double gamma_q_cont_frac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - ln_gamma(a)) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0)
    throw EstimationError("invalid incomplete-gamma arguments");
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cont_frac(a, x);
}

double chi2_cdf(double x, int dof) {
  if (dof < 1) throw EstimationError("dof must be >= 1");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_threshold(int dof, double alpha) {
  if (dof < 1) throw EstimationError("dof must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw EstimationError("alpha must be in (0, 1)");
  const double target = 1.0 - alpha;
  double lo = 0.0;
  double hi = static_cast<double>(dof);
  while (chi2_cdf(hi, dof) < target) hi *= 2.0;
  // Bisection: monotone CDF, so this always converges.
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double c = chi2_cdf(mid, dof);
    if (std::fabs(c - target) <= 1e-10) return mid;
    (c < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace gridsec
