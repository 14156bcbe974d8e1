#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gridsec/attack.hpp"
#include "gridsec/detector.hpp"
#include "gridsec/estimation.hpp"
#include "test_util.hpp"

using namespace gridsec;

namespace {

MeasurementSeries make_series(const GridCase& gc, int t_steps, double sigma,
                              std::uint64_t seed) {
  const JacobianH h = build_h(gc);
  LoadProfile prof = synthetic_profile(t_steps, seed);
  const Eigen::MatrixXd states =
      simulate_states(gc, prof, t_steps, 0.1, seed);
  const NoiseModel noise =
      NoiseModel::homoscedastic(gc.n_branches(), sigma > 0 ? sigma : 1e-300);
  MeasurementSeries s = generate_measurements(h, states, noise, seed + 1);
  if (sigma <= 0) s.z = s.clean;
  return s;
}

MeasurementSeries slice(const MeasurementSeries& s, int begin, int count) {
  MeasurementSeries out = s;
  out.z = s.z.middleCols(begin, count).eval();
  out.clean = s.clean.middleCols(begin, count).eval();
  out.x_true = s.x_true.middleCols(begin, count).eval();
  out.labels.assign(s.labels.begin() + begin, s.labels.begin() + begin + count);
  return out;
}

}  // namespace

TEST_CASE("cycle null vector on the triangle") {
  const GridCase gc = testutil::triangle_case();
  const CycleBasis basis = fundamental_cycle_basis(build_graph(gc));

  SUBCASE("noise-free data gives the reactance-weighted loop exactly") {
    const MeasurementSeries s = make_series(gc, 50, 0.0, 3);
    const CycleDetector d = fit_cycle_null(s.z, basis.cycles[0]);
    REQUIRE(d.branch_ids == std::vector<int>{0, 1, 2});
    Eigen::Vector3d expected(1.0, 2.0, 3.0);
    expected.normalize();
    CHECK((d.n_hat - expected).norm() < 1e-8);
    CHECK_FALSE(d.degenerate);
  }
  SUBCASE("noisy data stays within a few degrees of the true loop") {
    // Isotropic states excite both flow directions, so the null direction
    // is well conditioned against the noise.
    const JacobianH h = build_h(gc);
    const Eigen::MatrixXd states = isotropic_states(gc.n_states(), 200, 5);
    const MeasurementSeries s = generate_measurements(
        h, states, NoiseModel::homoscedastic(3, 0.02), 6);
    const CycleDetector d = fit_cycle_null(s.z, basis.cycles[0]);
    Eigen::Vector3d truth(1.0, 2.0, 3.0);
    truth.normalize();
    const double cosang = std::fabs(d.n_hat.dot(truth));
    CHECK(std::acos(std::min(1.0, cosang)) < 5.0 * M_PI / 180.0);
  }
  SUBCASE("too little data is rejected") {
    const MeasurementSeries s = make_series(gc, 2, 0.0, 3);
    CHECK_THROWS_AS(fit_cycle_null(s.z, basis.cycles[0]), DetectorError);
  }
}

TEST_CASE("bank fit on case14") {
  const GridCase gc = testutil::load_case("case14.m");
  const CycleBasis basis = minimum_cycle_basis(build_graph(gc));
  const MeasurementSeries s = make_series(gc, 120, 0.0, 7);
  const DetectorBank bank = fit_bank(s, basis);
  REQUIRE(bank.size() == 7);
  CHECK(bank.fitted_steps == 120);

  // Each estimated null vector annihilates its cycle-restricted data.
  for (const auto& d : bank.detectors) {
    Eigen::MatrixXd zc(d.branch_ids.size(), s.n_steps());
    for (std::size_t i = 0; i < d.branch_ids.size(); ++i)
      zc.row(i) = s.z.row(d.branch_ids[i]);
    CHECK((zc.transpose() * d.n_hat).norm() <= 1e-10 * zc.norm());
    CHECK(d.n_hat.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }

  const DetectorBank again = fit_bank(s, basis);
  for (int i = 0; i < bank.size(); ++i)
    CHECK((bank.detectors[i].n_hat - again.detectors[i].n_hat).norm() == 0.0);
}

TEST_CASE("scores") {
  const GridCase gc = testutil::triangle_case();
  const CycleBasis basis = fundamental_cycle_basis(build_graph(gc));

  SUBCASE("noise-free scores vanish") {
    const MeasurementSeries s = make_series(gc, 60, 0.0, 9);
    const DetectorBank bank = fit_bank(s, basis);
    CHECK(score(bank, s).norm() < 1e-10);
  }
  SUBCASE("clean noisy scores carry the channel noise level") {
    const double sigma = 0.02;
    const MeasurementSeries s = make_series(gc, 4000, sigma, 11);
    const DetectorBank bank = fit_bank(slice(s, 0, 2000), basis);
    const Eigen::MatrixXd sc = score(bank, slice(s, 2000, 2000));
    const double mean_sq = sc.array().square().mean();
    // n_hat is a unit vector, so E[L^2] is sigma^2 for clean data.
    CHECK(mean_sq == doctest::Approx(sigma * sigma).epsilon(0.15));
  }
}

TEST_CASE("window scores under a residual-injection attack stand out") {
  const GridCase gc = testutil::load_case("case14.m");
  const double sigma = 0.02;
  const NoiseModel noise = NoiseModel::homoscedastic(gc.n_branches(), sigma);
  const CycleBasis basis = minimum_cycle_basis(build_graph(gc));
  const MeasurementSeries s = make_series(gc, 700, sigma, 13);
  const MeasurementSeries train = slice(s, 0, 400);
  MeasurementSeries eval_part = slice(s, 400, 300);

  TrainConfig tc;
  tc.epochs = 80;
  tc.learning_rate = 1e-3;
  tc.seed = 6;
  const MlpAutoencoder model =
      train_autoencoder(train.z, gc.n_states(), tc).model;

  AttackScenario sc;
  sc.family = AttackFamily::ae_blind;
  sc.kappa = 2.0;
  sc.gamma = 0.1;
  sc.t_start = 100;
  sc.t_end = 200;
  sc.seed = 31;
  const MeasurementSeries attacked =
      ae_residual_attack(eval_part, model, sc, noise);

  const DetectorBank bank = fit_bank(train, basis);
  const Eigen::MatrixXd sc_mat = score(bank, attacked);
  Eigen::VectorXd agg(sc_mat.cols());
  for (int t = 0; t < sc_mat.cols(); ++t) agg[t] = sc_mat.col(t).norm();
  const double window_mean = agg.segment(100, 100).mean();
  const double clean_mean =
      (agg.head(100).sum() + agg.tail(100).sum()) / 200.0;
  CHECK(window_mean >= 3.0 * clean_mean);
}

TEST_CASE("minimum cross-entropy threshold") {
  SUBCASE("known fixed point") {
    const double tau = mce_threshold({1, 1, 1, 9, 9, 9});
    CHECK(tau == doctest::Approx(8.0 / std::log(9.0)).epsilon(1e-6));
  }
  SUBCASE("all-equal input returns the value") {
    CHECK(mce_threshold({2.5, 2.5, 2.5}) == doctest::Approx(2.5));
  }
  SUBCASE("two well-separated Gaussian clusters are split cleanly") {
    Rng rng(17);
    std::vector<double> values;
    for (int i = 0; i < 500; ++i)
      values.push_back(std::fabs(1.0 + rng.gaussian(0.0, 0.1)));
    for (int i = 0; i < 500; ++i)
      values.push_back(std::fabs(10.0 + rng.gaussian(0.0, 0.1)));
    const ThresholdDecision d = mce_decision(values);
    CHECK(d.separable);
    CHECK(d.tau > 1.5);
    CHECK(d.tau < 9.5);
    int correct = 0;
    for (int i = 0; i < 1000; ++i)
      if ((values[i] >= d.tau) == (i >= 500)) ++correct;
    CHECK(correct >= 990);
  }
  SUBCASE("a single tight cluster is not separable") {
    Rng rng(19);
    std::vector<double> values;
    for (int i = 0; i < 400; ++i)
      values.push_back(std::fabs(1.0 + rng.gaussian(0.0, 0.1)));
    CHECK_FALSE(mce_decision(values).separable);
  }
}

TEST_CASE("detect end to end") {
  const GridCase gc = testutil::load_case("case14.m");
  const double sigma = 0.02;
  const NoiseModel noise = NoiseModel::homoscedastic(gc.n_branches(), sigma);
  const CycleBasis basis = minimum_cycle_basis(build_graph(gc));
  const MeasurementSeries s = make_series(gc, 700, sigma, 23);
  const MeasurementSeries train = slice(s, 0, 400);
  MeasurementSeries eval_part = slice(s, 400, 300);
  const DetectorBank bank = fit_bank(train, basis);

  SUBCASE("report internals are consistent") {
    const DetectionReport r = detect(bank, eval_part, DetectMode::aggregated);
    REQUIRE(r.n_steps() == 300);
    const Eigen::MatrixXd sc_mat = score(bank, eval_part);
    for (int t = 0; t < 300; ++t)
      CHECK(std::fabs(r.aggregate_score[t] - sc_mat.col(t).norm()) < 1e-12);
    CHECK(r.flags == r.aggregate_flags);
  }
  SUBCASE("no attack means nothing separable, nothing flagged") {
    const DetectionReport r = detect(bank, eval_part, DetectMode::aggregated);
    CHECK_FALSE(r.aggregate_threshold.separable);
    for (bool f : r.flags) CHECK_FALSE(f);
    const nlohmann::json j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["aggregate"]["note"] == "no separable attack class");
  }
  SUBCASE("attacked window is found and flags grow with magnitude") {
    TrainConfig tc;
    tc.epochs = 80;
    tc.learning_rate = 1e-3;
    tc.seed = 6;
    const MlpAutoencoder model =
        train_autoencoder(train.z, gc.n_states(), tc).model;
    AttackScenario sc;
    sc.family = AttackFamily::ae_blind;
    sc.gamma = 0.1;
    sc.t_start = 100;
    sc.t_end = 200;
    sc.seed = 37;
    double last_recall = -1.0;
    for (double kappa : {1.0, 2.0, 4.0}) {
      sc.kappa = kappa;
      const MeasurementSeries attacked =
          ae_residual_attack(eval_part, model, sc, noise);
      const DetectionReport r =
          detect(bank, attacked, DetectMode::aggregated);
      REQUIRE(r.metrics.defined);
      CHECK(r.metrics.recall >= last_recall - 0.05);
      last_recall = r.metrics.recall;
      if (kappa >= 2.0) CHECK(r.metrics.f1 >= 0.8);
    }
  }
}

TEST_CASE("threshold scales with the data") {
  Rng rng(41);
  std::vector<double> values;
  for (int i = 0; i < 300; ++i)
    values.push_back(std::fabs(1.0 + rng.gaussian(0.0, 0.2)));
  for (int i = 0; i < 100; ++i)
    values.push_back(std::fabs(8.0 + rng.gaussian(0.0, 0.2)));
  const double tau = mce_threshold(values);
  std::vector<double> scaled = values;
  for (double& v : scaled) v *= 7.0;
  CHECK(mce_threshold(scaled) == doctest::Approx(7.0 * tau).epsilon(1e-9));
}

TEST_CASE("detection is equivariant under branch relabeling") {
  // Same triangle with branches listed in a different order: the detector
  // for the one cycle sees permuted channels and must produce the same
  // score trace.
  const GridCase a = testutil::triangle_case();
  GridCase b = a;
  std::swap(b.branches[0], b.branches[2]);
  for (int i = 0; i < 3; ++i) b.branches[i].id = i;

  const CycleBasis basis_a = fundamental_cycle_basis(build_graph(a));
  const CycleBasis basis_b = fundamental_cycle_basis(build_graph(b));
  const MeasurementSeries sa = make_series(a, 300, 0.02, 43);

  MeasurementSeries sb = sa;
  sb.z.row(0) = sa.z.row(2);
  sb.z.row(2) = sa.z.row(0);
  sb.clean.row(0) = sa.clean.row(2);
  sb.clean.row(2) = sa.clean.row(0);

  const DetectorBank bank_a = fit_bank(sa, basis_a);
  const DetectorBank bank_b = fit_bank(sb, basis_b);
  const Eigen::MatrixXd score_a = score(bank_a, sa);
  const Eigen::MatrixXd score_b = score(bank_b, sb);
  CHECK((score_a - score_b).norm() < 1e-10);
}

TEST_CASE("global numerical baseline") {
  const GridCase gc = testutil::load_case("case14.m");
  SUBCASE("noise-free data scores zero") {
    const MeasurementSeries s = make_series(gc, 200, 0.0, 47);
    const MeasurementSeries train = slice(s, 0, 150);
    const MeasurementSeries test = slice(s, 150, 50);
    const DetectionReport r =
        svd_baseline_detect(train, test, gc.n_branches() - gc.n_states());
    CHECK(r.aggregate_score.norm() < 1e-8);
  }
  SUBCASE("short history is rejected") {
    const MeasurementSeries s = make_series(gc, 30, 0.02, 47);
    const MeasurementSeries train = slice(s, 0, 10);
    CHECK_THROWS_AS(svd_baseline_detect(train, s, 7), DetectorError);
  }
}

TEST_CASE("observability masking") {
  SUBCASE("triangle minus one edge has no cycles left") {
    const GridCase gc = testutil::triangle_case();
    const ObservabilityMask mask = mask_observability(gc, {1});
    CHECK(mask.kept_branches == std::vector<int>{0, 2});
    CHECK(mask.sub_basis.size() == 0);
    // Any attack on the lost branch is invisible to cycle detectors.
    CHECK(classify_attack_support(gc, mask, {1}) ==
          AttackPlacement::in_missing_cycles_only);
  }
  SUBCASE("case14 minus one cycle branch drops the basis rank by one") {
    const GridCase gc = testutil::load_case("case14.m");
    const CycleBasis full = minimum_cycle_basis(build_graph(gc));
    // Pick a branch on some cycle.
    const int victim = full.cycles[0].edge_ids[0];
    const ObservabilityMask mask = mask_observability(gc, {victim});
    CHECK(mask.sub_basis.size() == 6);
    CHECK(static_cast<int>(mask.kept_branches.size()) == 19);
    CHECK(mask.sub_case.n_branches() == 19);
  }
  SUBCASE("support classification distinguishes the three placements") {
    const GridCase gc = testutil::load_case("case14.m");
    // Removing the radial spur 7-8 (edge 13) loses no cycles.
    const ObservabilityMask mask = mask_observability(gc, {13});
    REQUIRE(mask.sub_basis.size() == 7);
    const CycleBasis full = minimum_cycle_basis(build_graph(gc));
    const int on_cycle = full.cycles[0].edge_ids[0];
    CHECK(classify_attack_support(gc, mask, {on_cycle}) ==
          AttackPlacement::in_remaining_cycles);
    CHECK(classify_attack_support(gc, mask, {13}) ==
          AttackPlacement::in_missing_cycles_only);
    CHECK(classify_attack_support(gc, mask, {on_cycle, 13}) ==
          AttackPlacement::mixed);
  }
}

TEST_CASE("report serialization") {
  const GridCase gc = testutil::triangle_case();
  const CycleBasis basis = fundamental_cycle_basis(build_graph(gc));
  const MeasurementSeries s = make_series(gc, 200, 0.02, 53);
  const DetectorBank bank = fit_bank(slice(s, 0, 150), basis);
  const DetectionReport r =
      detect(bank, slice(s, 150, 50), DetectMode::local);

  const nlohmann::json j = nlohmann::json::parse(report_to_json(r));
  CHECK(j.contains("aggregate"));
  CHECK(j["aggregate"].contains("threshold"));
  CHECK(j["mode"] == "local");

  const std::string csv = report_to_csv(r);
  CHECK(csv.find("aggregate") != std::string::npos);
  // Header plus one row per step.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 51);
}
