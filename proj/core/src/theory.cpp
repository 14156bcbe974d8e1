#include "gridsec/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/SVD>

#include "gridsec/detector.hpp"
#include "gridsec/rng.hpp"

namespace gridsec {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng, double stddev) {
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.gaussian(0.0, stddev);
  return m;
}

}  // namespace

double egen_closed_form(double sigma, int rank_h, int t_o, int n) {
  if (sigma <= 0.0) throw TheoryError("sigma must be positive");
  if (rank_h < 0) throw TheoryError("rank must be nonnegative");
  if (t_o <= n) throw TheoryError("t_o must exceed n");
  return sigma * sigma * (1.0 + static_cast<double>(rank_h) / (t_o - n));
}

double cycle_egen_closed_form(double sigma, int cycle_len, int t_o) {
  return egen_closed_form(sigma, cycle_len - 1, t_o, cycle_len);
}

double cycle_basis_egen(const CycleBasis& basis, int t_o, double sigma) {
  double total = 0.0;
  for (const auto& c : basis.cycles)
    total += cycle_egen_closed_form(sigma, c.length(), t_o);
  return total;
}

Eigen::VectorXd smallest_left_singular_vector(const Eigen::MatrixXd& h) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeFullU);
  Eigen::VectorXd v = svd.matrixU().col(h.rows() - 1);
  int imax = 0;
  for (int i = 1; i < v.size(); ++i)
    if (std::fabs(v[i]) > std::fabs(v[imax])) imax = i;
  if (v[imax] < 0.0) v = -v;
  return v;
}

std::vector<GenErrorEstimate> egen_monte_carlo(const JacobianH& h,
                                               const MonteCarloConfig& cfg,
                                               int t_o) {
  const int m = h.n_channels();
  const int n_s = h.n_states();
  if (m <= n_s)
    throw TheoryError("Jacobian transpose has nullity zero (tree graph)");
  if (cfg.trials < 1 || cfg.t_star < 1)
    throw TheoryError("trials and t_star must be positive");
  if (cfg.sigma_grid.empty()) throw TheoryError("empty sigma grid");
  const int n = n_s + 1;  // bus count; rank(H) = n - 1
  if (t_o <= n) throw TheoryError("t_o must exceed the bus count");

  std::vector<GenErrorEstimate> out;
  Rng root(cfg.seed);
  for (std::size_t si = 0; si < cfg.sigma_grid.size(); ++si) {
    const double sigma = cfg.sigma_grid[si];
    double acc = 0.0;
    for (int trial = 0; trial < cfg.trials; ++trial) {
      Rng rng = root.substream(si * 1000003ULL + static_cast<std::uint64_t>(trial));
      const Eigen::MatrixXd x_train = gaussian_matrix(n_s, t_o, rng, 1.0);
      const Eigen::MatrixXd z_train =
          h.matrix * x_train + gaussian_matrix(m, t_o, rng, sigma);
      const Eigen::VectorXd n_hat = smallest_left_singular_vector(z_train);

      const Eigen::MatrixXd x_test = gaussian_matrix(n_s, cfg.t_star, rng, 1.0);
      const Eigen::MatrixXd z_test =
          h.matrix * x_test + gaussian_matrix(m, cfg.t_star, rng, sigma);
      acc += (z_test.transpose() * n_hat).squaredNorm() / cfg.t_star;
    }
    GenErrorEstimate e;
    e.sigma = sigma;
    e.t_o = t_o;
    e.rank_h = n_s;
    e.e_gen_closed = egen_closed_form(sigma, n_s, t_o, n);
    e.e_gen_empirical = acc / cfg.trials;
    e.rel_dev = std::fabs(e.e_gen_empirical - e.e_gen_closed) / e.e_gen_closed;
    out.push_back(e);
  }
  return out;
}

Eigen::VectorXd first_order_err(const Eigen::MatrixXd& clean,
                                const Eigen::MatrixXd& noise,
                                const Eigen::VectorXd& n_true) {
  if (clean.rows() != noise.rows() || clean.cols() != noise.cols())
    throw TheoryError("clean/noise shape mismatch");
  if (n_true.size() != clean.rows())
    throw TheoryError("null vector length mismatch");
  const Eigen::MatrixXd zt = clean.transpose();  // T x m
  const Eigen::VectorXd rhs = noise.transpose() * n_true;
  // err = -(Z')^+ E' n, via least squares on the thin SVD.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(
      zt, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return -svd.solve(rhs);
}

CovarianceCheck err_covariance_check(const JacobianH& h, int t_o, double sigma,
                                     int trials, std::uint64_t seed) {
  const int m = h.n_channels();
  const int n_s = h.n_states();
  if (m <= n_s) throw TheoryError("Jacobian transpose has nullity zero");
  const int n = n_s + 1;
  if (t_o <= n) throw TheoryError("t_o must exceed the bus count");
  if (trials < 2) throw TheoryError("need at least 2 trials");

  const Eigen::VectorXd n_true = smallest_left_singular_vector(h.matrix);

  CovarianceCheck chk;
  chk.mean_err = Eigen::VectorXd::Zero(m);
  chk.empirical = Eigen::MatrixXd::Zero(m, m);
  Rng root(seed);
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = root.substream(static_cast<std::uint64_t>(trial));
    const Eigen::MatrixXd x = gaussian_matrix(n_s, t_o, rng, 1.0);
    const Eigen::MatrixXd noise = gaussian_matrix(m, t_o, rng, sigma);
    const Eigen::VectorXd err = first_order_err(h.matrix * x, noise, n_true);
    chk.mean_err += err;
    chk.empirical += err * err.transpose();
  }
  chk.mean_err /= trials;
  chk.empirical /= trials;  // raw second moment; err is zero-mean

  const Eigen::MatrixXd hht = h.matrix * h.matrix.transpose();
  chk.closed = (sigma * sigma / (t_o - n)) *
               hht.completeOrthogonalDecomposition().pseudoInverse();
  chk.frob_rel_err =
      (chk.empirical - chk.closed).norm() / chk.closed.norm();
  return chk;
}

std::vector<BasisComparisonRow> mcb_optimality_experiment(
    const GridCase& gc, int t_o, double sigma, int trials, std::uint64_t seed,
    int n_random, int t_star) {
  const OrientedGraph g = build_graph(gc);
  const JacobianH h = build_h(gc);
  const int m = g.n_edges();
  const int n_s = gc.n_states();

  std::vector<std::pair<std::string, CycleBasis>> bases;
  bases.emplace_back("mcb", minimum_cycle_basis(g));
  Rng basis_rng = Rng(seed).substream(0xbau);
  for (int k = 0; k < n_random; ++k) {
    Rng r = basis_rng.substream(static_cast<std::uint64_t>(k));
    bases.emplace_back("fundamental_" + std::to_string(k),
                       random_fundamental_basis(g, r));
  }

  // Shared train/test realizations across bases so rows are comparable.
  const int n_trials = trials;
  std::vector<Eigen::MatrixXd> z_train(n_trials), z_test(n_trials);
  Rng data_rng = Rng(seed).substream(0xdau);
  for (int trial = 0; trial < n_trials; ++trial) {
    Rng rng = data_rng.substream(static_cast<std::uint64_t>(trial));
    z_train[trial] = h.matrix * gaussian_matrix(n_s, t_o, rng, 1.0) +
                     gaussian_matrix(m, t_o, rng, sigma);
    z_test[trial] = h.matrix * gaussian_matrix(n_s, t_star, rng, 1.0) +
                    gaussian_matrix(m, t_star, rng, sigma);
  }

  std::vector<BasisComparisonRow> rows;
  for (const auto& [label, basis] : bases) {
    BasisComparisonRow row;
    row.label = label;
    row.total_length = basis_weight(basis);
    row.closed_form = cycle_basis_egen(basis, t_o, sigma);

    std::vector<double> per_trial(n_trials, 0.0);
    for (int trial = 0; trial < n_trials; ++trial) {
      double total = 0.0;
      for (const auto& cycle : basis.cycles) {
        const CycleDetector d = fit_cycle_null(z_train[trial], cycle);
        const int c = static_cast<int>(d.branch_ids.size());
        Eigen::MatrixXd zc(c, t_star);
        for (int i = 0; i < c; ++i)
          zc.row(i) = z_test[trial].row(d.branch_ids[i]);
        total += (zc.transpose() * d.n_hat).squaredNorm() / t_star;
      }
      per_trial[trial] = total;
    }
    double mean = 0.0;
    for (double v : per_trial) mean += v;
    mean /= n_trials;
    double var = 0.0;
    for (double v : per_trial) var += (v - mean) * (v - mean);
    var /= std::max(1, n_trials - 1);
    row.empirical_mean = mean;
    row.empirical_se = std::sqrt(var / n_trials);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string validation_csv(const std::vector<GenErrorEstimate>& rows,
                           int trials, std::uint64_t seed) {
  std::ostringstream out;
  out << "sigma,t_o,rank,closed,empirical,rel_dev,trials,seed\n";
  for (const auto& r : rows) {
    out << fmt_double(r.sigma) << ',' << r.t_o << ',' << r.rank_h << ','
        << fmt_double(r.e_gen_closed) << ',' << fmt_double(r.e_gen_empirical)
        << ',' << fmt_double(r.rel_dev) << ',' << trials << ',' << seed
        << '\n';
  }
  return out.str();
}

std::string basis_comparison_csv(const std::vector<BasisComparisonRow>& rows) {
  std::ostringstream out;
  out << "basis,total_length,closed_form,empirical_mean,empirical_se\n";
  for (const auto& r : rows) {
    out << r.label << ',' << fmt_double(r.total_length) << ','
        << fmt_double(r.closed_form) << ',' << fmt_double(r.empirical_mean)
        << ',' << fmt_double(r.empirical_se) << '\n';
  }
  return out.str();
}

}  // namespace gridsec
