#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridsec/attack.hpp"
#include "gridsec/estimation.hpp"
#include "test_util.hpp"

using namespace gridsec;

namespace {

// Clean-operation series for the 14-bus case; sigma = 0 gives flows lying
// exactly in the 13-dimensional column space of H.
MeasurementSeries sim_series(const GridCase& gc, int t_steps, double sigma,
                             std::uint64_t seed) {
  const JacobianH h = build_h(gc);
  LoadProfile flat;
  flat.scale_factors = {1.0};
  const Eigen::MatrixXd states =
      simulate_states(gc, flat, t_steps, 0.3, seed);
  const NoiseModel noise =
      NoiseModel::homoscedastic(gc.n_branches(), sigma > 0 ? sigma : 1e-300);
  MeasurementSeries s = generate_measurements(h, states, noise, seed + 1);
  if (sigma <= 0) s.z = s.clean;
  return s;
}

// History whose clean part spans the whole column space of H, which the
// subspace-estimation attacks assume.
MeasurementSeries rich_series(const GridCase& gc, int t_steps, double sigma,
                              std::uint64_t seed) {
  const JacobianH h = build_h(gc);
  const Eigen::MatrixXd states =
      isotropic_states(gc.n_states(), t_steps, seed);
  const NoiseModel noise =
      NoiseModel::homoscedastic(gc.n_branches(), sigma > 0 ? sigma : 1e-300);
  MeasurementSeries s = generate_measurements(h, states, noise, seed + 1);
  if (sigma <= 0) s.z = s.clean;
  return s;
}

}  // namespace

TEST_CASE("scenario JSON round trip and validation") {
  AttackScenario sc;
  sc.family = AttackFamily::pca_blind;
  sc.kappa = 1.5;
  sc.gamma = 0.2;
  sc.t_start = 10;
  sc.t_end = 20;
  sc.seed = 77;
  const AttackScenario back = scenario_from_json(scenario_to_json(sc));
  CHECK(back.family == sc.family);
  CHECK(back.kappa == sc.kappa);
  CHECK(back.gamma == sc.gamma);
  CHECK(back.t_start == sc.t_start);
  CHECK(back.t_end == sc.t_end);
  CHECK(back.seed == sc.seed);

  CHECK_THROWS_AS(scenario_from_json("{\"family\":\"nope\",\"kappa\":1,"
                                     "\"window\":[0,1]}"),
                  AttackError);
  sc.t_end = 5;
  CHECK_THROWS_AS(sc.check_window(100), AttackError);
  sc.t_end = 20;
  sc.kappa = 0.0;
  CHECK_THROWS_AS(sc.check_window(100), AttackError);
}

TEST_CASE("model-based injection") {
  const GridCase gc = testutil::load_case("case14.m");
  const JacobianH h = build_h(gc);
  const MeasurementSeries s = sim_series(gc, 40, 0.02, 3);
  const Estimator est(h, NoiseModel::homoscedastic(gc.n_branches(), 0.02));

  AttackScenario sc;
  sc.family = AttackFamily::model_based;
  sc.kappa = 2.0;
  sc.t_start = 10;
  sc.t_end = 30;

  SUBCASE("zero direction leaves the series unchanged") {
    sc.direction = Eigen::VectorXd::Zero(gc.n_states());
    const MeasurementSeries out = model_based_fdia(s, h, sc);
    CHECK((out.z - s.z).norm() == 0.0);
  }
  SUBCASE("residual statistic is invariant and the estimate shifts by ku") {
    Eigen::VectorXd u(gc.n_states());
    Rng rng(5);
    for (int i = 0; i < u.size(); ++i) u[i] = rng.gaussian();
    sc.direction = u;
    const MeasurementSeries out = model_based_fdia(s, h, sc);
    for (int t = sc.t_start; t < sc.t_end; ++t) {
      const double before = est.lnr(s.z.col(t));
      const double after = est.lnr(out.z.col(t));
      CHECK(std::fabs(after - before) <= 1e-8 * std::max(1.0, before));
      const Eigen::VectorXd shift =
          est.estimate(out.z.col(t)).x_hat - est.estimate(s.z.col(t)).x_hat;
      CHECK((shift - sc.kappa * u).norm() < 1e-8);
      CHECK(out.labels[t]);
    }
    // Outside the window nothing moves, bit for bit.
    for (int t = 0; t < sc.t_start; ++t)
      CHECK((out.z.col(t) - s.z.col(t)).norm() == 0.0);
  }
}

TEST_CASE("autoencoder training on exactly representable data") {
  const GridCase gc = testutil::load_case("case14.m");
  const MeasurementSeries s = sim_series(gc, 500, 0.0, 11);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.learning_rate = 1e-3;
  cfg.seed = 4;
  const TrainResult res =
      train_autoencoder(s.z.leftCols(400), gc.n_states(), cfg);

  // Held-out data from the same low-dimensional manifold reconstructs to
  // about a percent of the channel scale.
  CHECK(res.model.mse(s.z.rightCols(100)) <= 5e-4);
  // Loss at least halves from the first epoch.
  CHECK(res.final_loss < res.epoch_loss.front() / 2.0);
}

TEST_CASE("autoencoder denoises toward the flow manifold") {
  const GridCase gc = testutil::load_case("case14.m");
  const double sigma = 0.02;
  const MeasurementSeries s = sim_series(gc, 500, sigma, 13);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.learning_rate = 3e-3;
  cfg.seed = 4;
  const TrainResult res =
      train_autoencoder(s.z.leftCols(400), gc.n_states(), cfg);
  // Reconstruction error lands near the noise floor sigma^2.
  CHECK(res.model.mse(s.z.rightCols(100)) <= 3.0 * sigma * sigma);
}

TEST_CASE("training is seed deterministic and serializable") {
  const GridCase gc = testutil::triangle_case();
  const MeasurementSeries s = sim_series(gc, 200, 0.02, 17);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 21;
  const TrainResult a = train_autoencoder(s.z, gc.n_states(), cfg);
  const TrainResult b = train_autoencoder(s.z, gc.n_states(), cfg);
  CHECK(a.model.to_json() == b.model.to_json());

  const MlpAutoencoder restored = MlpAutoencoder::from_json(a.model.to_json());
  const Eigen::VectorXd z = s.z.col(0);
  CHECK((restored.reconstruct(z) - a.model.reconstruct(z)).norm() == 0.0);
}

TEST_CASE("residual injection attack") {
  const GridCase gc = testutil::load_case("case14.m");
  const JacobianH h = build_h(gc);
  const double sigma = 0.02;
  const NoiseModel noise = NoiseModel::homoscedastic(gc.n_branches(), sigma);
  const MeasurementSeries s = sim_series(gc, 600, sigma, 19);
  TrainConfig tc;
  tc.epochs = 300;
  tc.learning_rate = 3e-3;
  tc.seed = 6;
  const MlpAutoencoder model =
      train_autoencoder(s.z.leftCols(400), gc.n_states(), tc).model;
  const MeasurementSeries eval_part = [&] {
    MeasurementSeries e = s;
    e.z = s.z.rightCols(200).eval();
    e.clean = s.clean.rightCols(200).eval();
    e.x_true = s.x_true.rightCols(200).eval();
    e.labels.assign(200, false);
    return e;
  }();

  AttackScenario sc;
  sc.family = AttackFamily::ae_blind;
  sc.gamma = 0.1;
  sc.t_start = 50;
  sc.t_end = 150;
  sc.seed = 101;

  SUBCASE("vanishing magnitude leaves measurements almost unchanged") {
    sc.kappa = 1e-9;
    const MeasurementSeries out =
        ae_residual_attack(eval_part, model, sc, noise);
    CHECK((out.z - eval_part.z).norm() < 1e-6);
  }
  SUBCASE("injection scales linearly in kappa") {
    sc.kappa = 0.5;
    const MeasurementSeries at1 =
        ae_residual_attack(eval_part, model, sc, noise);
    sc.kappa = 1.0;
    const MeasurementSeries at2 =
        ae_residual_attack(eval_part, model, sc, noise);
    const double n1 = (at1.z - eval_part.z).norm();
    const double n2 = (at2.z - eval_part.z).norm();
    CHECK(n2 / n1 == doctest::Approx(2.0).epsilon(1e-6));
  }
  SUBCASE("the injected direction lives mostly off the flow manifold") {
    sc.kappa = 1.0;
    const MeasurementSeries out =
        ae_residual_attack(eval_part, model, sc, noise);
    const Eigen::MatrixXd pinv =
        h.matrix.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::MatrixXd proj =
        Eigen::MatrixXd::Identity(gc.n_branches(), gc.n_branches()) -
        h.matrix * pinv;
    double frac_sum = 0.0;
    for (int t = sc.t_start; t < sc.t_end; ++t) {
      const Eigen::VectorXd delta = out.z.col(t) - eval_part.z.col(t);
      frac_sum += (proj * delta).norm() / delta.norm();
    }
    CHECK(frac_sum / (sc.t_end - sc.t_start) >= 0.4);
  }
  SUBCASE("small magnitudes slip under the bad-data threshold") {
    sc.kappa = 0.08;
    const MeasurementSeries out =
        ae_residual_attack(eval_part, model, sc, noise);
    const Estimator est(h, noise);
    const double tau = chi2_threshold(est.dof(), 0.05);
    double increase = 0.0;
    for (int t = sc.t_start; t < sc.t_end; ++t)
      increase += est.lnr(out.z.col(t)) - est.lnr(eval_part.z.col(t));
    increase /= (sc.t_end - sc.t_start);
    CHECK(increase < 0.1 * tau);
  }
}

TEST_CASE("subspace-estimation attacks") {
  const GridCase gc = testutil::load_case("case14.m");
  const JacobianH h = build_h(gc);
  const Estimator est(h, NoiseModel::homoscedastic(gc.n_branches(), 0.02));

  AttackScenario sc;
  sc.family = AttackFamily::pca_blind;
  sc.kappa = 1.0;
  sc.t_start = 5;
  sc.t_end = 25;
  sc.seed = 55;

  SUBCASE("noise-free history gives an exactly transparent injection") {
    const MeasurementSeries clean = rich_series(gc, 80, 0.0, 23);
    const MeasurementSeries target = sim_series(gc, 40, 0.02, 29);
    const MeasurementSeries out =
        pca_blind_attack(target, clean.z, gc.n_states(), sc);
    for (int t = sc.t_start; t < sc.t_end; ++t) {
      const double before = est.lnr(target.z.col(t));
      const double after = est.lnr(out.z.col(t));
      CHECK(std::fabs(after - before) <= 1e-6 * std::max(1.0, before));
    }
    CHECK((out.z.col(0) - target.z.col(0)).norm() == 0.0);
  }
  SUBCASE("noisy history leaks a bounded but nonzero residual") {
    // A short noisy history gives a poorly estimated subspace; the leak
    // into the residual is then well above the noise fluctuation.
    const MeasurementSeries noisy = rich_series(gc, 16, 0.05, 31);
    const MeasurementSeries target = sim_series(gc, 40, 0.02, 37);
    const MeasurementSeries out =
        pca_blind_attack(target, noisy.z, gc.n_states(), sc);
    double diff = 0.0;
    for (int t = sc.t_start; t < sc.t_end; ++t)
      diff += est.lnr(out.z.col(t)) - est.lnr(target.z.col(t));
    diff /= (sc.t_end - sc.t_start);
    // A subspace estimated from noisy history leaks into the residual, so
    // unlike the noise-free case the attack is visible to the chi2 test.
    CHECK(diff > 0.0);
  }
  SUBCASE("history shorter than the state dimension is rejected") {
    const MeasurementSeries target = sim_series(gc, 40, 0.02, 37);
    CHECK_THROWS_AS(
        pca_blind_attack(target, Eigen::MatrixXd::Zero(gc.n_branches(), 5),
                         gc.n_states(), sc),
        AttackError);
  }
}

TEST_CASE("rank detection by singular value gap") {
  const GridCase gc = testutil::load_case("case14.m");
  SUBCASE("noise-free history has rank n_s") {
    const MeasurementSeries clean = rich_series(gc, 80, 0.0, 41);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(clean.z);
    CHECK(detect_rank_by_gap(svd.singularValues()) == gc.n_states());
  }
  SUBCASE("a rank-one history is detected as rank one") {
    Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(10, 1.0, 2.0);
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(30, -1.0, 1.0);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(u * v.transpose());
    CHECK(detect_rank_by_gap(svd.singularValues()) == 1);
  }
  SUBCASE("attack through the detected subspace stays transparent") {
    const Estimator est(build_h(gc),
                        NoiseModel::homoscedastic(gc.n_branches(), 0.02));
    const MeasurementSeries clean = rich_series(gc, 80, 0.0, 43);
    const MeasurementSeries target = sim_series(gc, 40, 0.02, 47);
    AttackScenario sc;
    sc.family = AttackFamily::lowrank_blind;
    sc.kappa = 1.0;
    sc.t_start = 5;
    sc.t_end = 25;
    sc.seed = 59;
    const MeasurementSeries out = lowrank_svd_attack(target, clean.z, sc);
    for (int t = sc.t_start; t < sc.t_end; ++t) {
      const double before = est.lnr(target.z.col(t));
      CHECK(std::fabs(est.lnr(out.z.col(t)) - before) <=
            1e-6 * std::max(1.0, before));
    }
  }
}
