#include "gridsec/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

namespace gridsec {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Eigen::VectorXd CycleDetector::embedded(int n_channels) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n_channels);
  for (std::size_t i = 0; i < branch_ids.size(); ++i)
    v[branch_ids[i]] = n_hat[static_cast<Eigen::Index>(i)];
  return v;
}

CycleDetector fit_cycle_null(const Eigen::MatrixXd& train_z,
                             const Cycle& cycle) {
  CycleDetector d;
  d.cycle = cycle;
  d.branch_ids = cycle.edge_ids;
  std::sort(d.branch_ids.begin(), d.branch_ids.end());
  const int c = static_cast<int>(d.branch_ids.size());
  if (static_cast<int>(train_z.cols()) < c)
    throw DetectorError("training window shorter than the cycle length");

  Eigen::MatrixXd zc(c, train_z.cols());
  for (int i = 0; i < c; ++i) zc.row(i) = train_z.row(d.branch_ids[i]);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(zc * zc.transpose());
  if (eig.info() != Eigen::Success)
    throw DetectorError("eigen decomposition failed for cycle fit");
  d.n_hat = eig.eigenvectors().col(0).normalized();
  d.degenerate =
      c > 1 && eig.eigenvalues()[1] - eig.eigenvalues()[0] <= 1e-12;

  int imax = 0;
  for (int i = 1; i < c; ++i)
    if (std::fabs(d.n_hat[i]) > std::fabs(d.n_hat[imax])) imax = i;
  if (d.n_hat[imax] < 0.0) d.n_hat = -d.n_hat;
  return d;
}

DetectorBank fit_bank(const MeasurementSeries& train, const CycleBasis& basis) {
  DetectorBank bank;
  bank.basis_kind = basis.kind;
  bank.fitted_steps = train.n_steps();
  bank.detectors.reserve(basis.cycles.size());
  for (const auto& cycle : basis.cycles)
    bank.detectors.push_back(fit_cycle_null(train.z, cycle));
  return bank;
}

Eigen::MatrixXd score(const DetectorBank& bank, const MeasurementSeries& test) {
  const int n_det = bank.size();
  const int n_steps = test.n_steps();
  Eigen::MatrixXd scores(n_det, n_steps);
  for (int i = 0; i < n_det; ++i) {
    const auto& d = bank.detectors[i];
    const int c = static_cast<int>(d.branch_ids.size());
    for (int b : d.branch_ids) {
      if (b >= test.n_channels())
        throw DetectorError("detector support exceeds series channels");
    }
    Eigen::MatrixXd zc(c, n_steps);
    for (int k = 0; k < c; ++k) zc.row(k) = test.z.row(d.branch_ids[k]);
    scores.row(i) = (d.n_hat.transpose() * zc).cwiseAbs();
  }
  return scores;
}

double mce_threshold(const std::vector<double>& values) {
  if (values.empty()) throw DetectorError("empty score trace");
  std::vector<double> v(values);
  for (double& x : v) x = std::max(x, 1e-12);

  double tau = 0.0;
  for (double x : v) tau += x;
  tau /= static_cast<double>(v.size());

  const auto all_equal = std::all_of(
      v.begin(), v.end(), [&](double x) { return x == v.front(); });
  if (all_equal) return v.front();

  for (int it = 0; it < 500; ++it) {
    double sum_b = 0.0, sum_a = 0.0;
    int n_b = 0, n_a = 0;
    for (double x : v) {
      if (x <= tau) {
        sum_b += x;
        ++n_b;
      } else {
        sum_a += x;
        ++n_a;
      }
    }
    if (n_b == 0 || n_a == 0) return tau;
    const double mu_b = sum_b / n_b;
    const double mu_a = sum_a / n_a;
    const double next = (mu_b - mu_a) / (std::log(mu_b) - std::log(mu_a));
    if (std::fabs(next - tau) < 1e-9) return next;
    tau = next;
  }
  return tau;
}

ThresholdDecision mce_decision(const std::vector<double>& values) {
  ThresholdDecision d;
  d.tau = mce_threshold(values);

  double sum_b = 0.0, sum_a = 0.0;
  int n_b = 0, n_a = 0;
  for (double raw : values) {
    const double x = std::max(raw, 1e-12);
    if (x <= d.tau) {
      sum_b += x;
      ++n_b;
    } else {
      sum_a += x;
      ++n_a;
    }
  }
  if (n_b == 0 || n_a == 0) {
    d.separable = false;
    return d;
  }
  const double mu_b = sum_b / n_b;
  const double mu_a = sum_a / n_a;
  double ss = 0.0;
  for (double raw : values) {
    const double x = std::max(raw, 1e-12);
    const double mu = (x <= d.tau) ? mu_b : mu_a;
    ss += (x - mu) * (x - mu);
  }
  const int dof = n_b + n_a - 2;
  const double pooled_std = dof > 0 ? std::sqrt(ss / dof) : 0.0;
  // Two real classes, not just a noise split: means at least 3 pooled
  // standard deviations apart.
  d.separable = (mu_a - mu_b) >= 3.0 * pooled_std && mu_a > mu_b;
  return d;
}

Metrics compute_metrics(const std::vector<bool>& flags,
                        const std::vector<bool>& labels) {
  Metrics m;
  if (flags.size() != labels.size())
    throw DetectorError("flag/label length mismatch");
  int tp = 0, fp = 0, fn = 0;
  bool any_positive = false;
  for (std::size_t t = 0; t < flags.size(); ++t) {
    if (labels[t]) any_positive = true;
    if (flags[t] && labels[t]) ++tp;
    if (flags[t] && !labels[t]) ++fp;
    if (!flags[t] && labels[t]) ++fn;
  }
  m.defined = any_positive;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

namespace {

std::vector<double> row_values(const Eigen::MatrixXd& scores, int row) {
  std::vector<double> v(scores.cols());
  for (int t = 0; t < scores.cols(); ++t) v[t] = scores(row, t);
  return v;
}

DetectionReport assemble_report(Eigen::MatrixXd cycle_scores,
                                const std::vector<bool>& labels,
                                DetectMode mode,
                                const DetectionReport* calibration) {
  DetectionReport rep;
  rep.mode = mode;
  rep.cycle_scores = std::move(cycle_scores);
  const int n_det = static_cast<int>(rep.cycle_scores.rows());
  const int n_steps = static_cast<int>(rep.cycle_scores.cols());
  rep.aggregate_score = rep.cycle_scores.colwise().norm();

  if (calibration) {
    if (static_cast<int>(calibration->cycle_thresholds.size()) != n_det)
      throw DetectorError("calibration report detector count mismatch");
    rep.cycle_thresholds = calibration->cycle_thresholds;
    rep.aggregate_threshold = calibration->aggregate_threshold;
  } else {
    for (int i = 0; i < n_det; ++i)
      rep.cycle_thresholds.push_back(mce_decision(row_values(rep.cycle_scores, i)));
    std::vector<double> agg(rep.aggregate_score.data(),
                            rep.aggregate_score.data() + n_steps);
    rep.aggregate_threshold = mce_decision(agg);
  }

  rep.cycle_flags.assign(n_det, std::vector<bool>(n_steps, false));
  for (int i = 0; i < n_det; ++i) {
    const auto& th = rep.cycle_thresholds[i];
    if (!th.separable) continue;
    for (int t = 0; t < n_steps; ++t)
      rep.cycle_flags[i][t] = rep.cycle_scores(i, t) >= th.tau;
  }
  rep.aggregate_flags.assign(n_steps, false);
  if (rep.aggregate_threshold.separable) {
    for (int t = 0; t < n_steps; ++t)
      rep.aggregate_flags[t] = rep.aggregate_score[t] >= rep.aggregate_threshold.tau;
  }

  if (mode == DetectMode::aggregated) {
    rep.flags = rep.aggregate_flags;
  } else {
    rep.flags.assign(n_steps, false);
    for (int t = 0; t < n_steps; ++t) {
      for (int i = 0; i < n_det; ++i) {
        if (rep.cycle_flags[i][t]) {
          rep.flags[t] = true;
          break;
        }
      }
    }
  }
  if (static_cast<int>(labels.size()) == n_steps)
    rep.metrics = compute_metrics(rep.flags, labels);
  return rep;
}

}  // namespace

DetectionReport detect(const DetectorBank& bank, const MeasurementSeries& test,
                       DetectMode mode, const DetectionReport* calibration) {
  return assemble_report(score(bank, test), test.labels, mode, calibration);
}

DetectionReport svd_baseline_detect(const MeasurementSeries& train,
                                    const MeasurementSeries& test, int n_null) {
  const int m = train.n_channels();
  if (test.n_channels() != m)
    throw DetectorError("train/test channel mismatch");
  if (train.n_steps() < m)
    throw DetectorError("SVD baseline needs at least m training samples");
  if (n_null < 1 || n_null > m)
    throw DetectorError("invalid null-space dimension");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(train.z, Eigen::ComputeThinU);
  const Eigen::MatrixXd null_basis = svd.matrixU().rightCols(n_null);
  Eigen::MatrixXd scores(1, test.n_steps());
  scores.row(0) = (null_basis.transpose() * test.z).colwise().norm();
  return assemble_report(std::move(scores), test.labels,
                         DetectMode::aggregated, nullptr);
}

ObservabilityMask mask_observability(const GridCase& gc,
                                     const std::vector<int>& removed_branches) {
  const std::set<int> removed(removed_branches.begin(),
                              removed_branches.end());
  for (int b : removed)
    if (b < 0 || b >= gc.n_branches())
      throw DetectorError("removed branch id out of range");

  ObservabilityMask mask;
  mask.sub_case = gc;
  mask.sub_case.branches.clear();
  for (const auto& br : gc.branches) {
    if (removed.count(br.id)) continue;
    BranchRecord copy = br;
    copy.id = static_cast<int>(mask.sub_case.branches.size());
    mask.sub_case.branches.push_back(copy);
    mask.kept_branches.push_back(br.id);
  }
  if (mask.sub_case.branches.empty())
    throw DetectorError("no observable branches remain");

  OrientedGraph sub;
  sub.n_vertices = gc.n_buses();
  for (const auto& br : mask.sub_case.branches)
    sub.edges.push_back({gc.bus_index(br.from_bus), gc.bus_index(br.to_bus)});
  mask.sub_basis = minimum_cycle_basis(sub);
  return mask;
}

AttackPlacement classify_attack_support(const GridCase& gc,
                                        const ObservabilityMask& mask,
                                        const std::vector<int>& support) {
  if (support.empty()) throw DetectorError("empty attack support");

  OrientedGraph sub;
  sub.n_vertices = gc.n_buses();
  for (const auto& br : mask.sub_case.branches)
    sub.edges.push_back({gc.bus_index(br.from_bus), gc.bus_index(br.to_bus)});
  const PrunedGraph cyclic = prune_leaves(sub);

  // Original branch ids that still sit on some observable cycle.
  std::set<int> on_cycles;
  for (int sub_edge : cyclic.kept_edges)
    on_cycles.insert(mask.kept_branches[sub_edge]);

  bool any_remaining = false, any_missing = false;
  for (int b : support) {
    if (b < 0 || b >= gc.n_branches())
      throw DetectorError("support branch id out of range");
    (on_cycles.count(b) ? any_remaining : any_missing) = true;
  }
  if (any_remaining && any_missing) return AttackPlacement::mixed;
  return any_remaining ? AttackPlacement::in_remaining_cycles
                       : AttackPlacement::in_missing_cycles_only;
}

std::string report_to_json(const DetectionReport& rep,
                           const DetectorBank* bank) {
  nlohmann::json per_cycle = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.cycle_thresholds.size(); ++i) {
    nlohmann::json entry{
        {"cycle_id", i},
        {"threshold", rep.cycle_thresholds[i].tau},
        {"separable", rep.cycle_thresholds[i].separable}};
    if (bank && i < bank->detectors.size())
      entry["branch_ids"] = bank->detectors[i].branch_ids;
    if (!rep.cycle_thresholds[i].separable)
      entry["note"] = "no separable attack class";
    per_cycle.push_back(std::move(entry));
  }
  nlohmann::json aggregate{
      {"threshold", rep.aggregate_threshold.tau},
      {"separable", rep.aggregate_threshold.separable}};
  if (!rep.aggregate_threshold.separable)
    aggregate["note"] = "no separable attack class";
  nlohmann::json j{
      {"per_cycle", per_cycle},
      {"aggregate", aggregate},
      {"mode", rep.mode == DetectMode::aggregated ? "aggregated" : "local"},
      {"metrics",
       {{"precision", rep.metrics.precision},
        {"recall", rep.metrics.recall},
        {"f1", rep.metrics.f1},
        {"defined", rep.metrics.defined}}}};
  return j.dump(2) + "\n";
}

std::string report_to_csv(const DetectionReport& rep) {
  std::ostringstream out;
  out << "t";
  for (int i = 0; i < rep.cycle_scores.rows(); ++i) out << ",cycle_" << i;
  out << ",aggregate,flagged\n";
  for (int t = 0; t < rep.n_steps(); ++t) {
    out << t;
    for (int i = 0; i < rep.cycle_scores.rows(); ++i)
      out << ',' << fmt_double(rep.cycle_scores(i, t));
    out << ',' << fmt_double(rep.aggregate_score[t]) << ','
        << (rep.flags.empty() ? 0 : static_cast<int>(rep.flags[t])) << '\n';
  }
  return out.str();
}

}  // namespace gridsec
