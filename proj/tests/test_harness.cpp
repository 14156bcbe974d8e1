#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "gridsec/harness.hpp"
#include "test_util.hpp"

using namespace gridsec;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.t_total = 600;
  cfg.sigma_grid = {0.02};
  cfg.kappa_grid = {2.0};
  cfg.ae_epochs = 10;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("config JSON round trip") {
  ExperimentConfig cfg;
  cfg.t_total = 1234;
  cfg.sigma_grid = {0.01, 0.03};
  cfg.kappa_grid = {1.0};
  cfg.family = AttackFamily::pca_blind;
  cfg.detectors = {"csd"};
  cfg.seed = 99;
  cfg.theory_trials = 7;
  cfg.removed_small = {4};

  const ExperimentConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.t_total == cfg.t_total);
  CHECK(back.sigma_grid == cfg.sigma_grid);
  CHECK(back.kappa_grid == cfg.kappa_grid);
  CHECK(back.family == cfg.family);
  CHECK(back.detectors == cfg.detectors);
  CHECK(back.seed == cfg.seed);
  CHECK(back.theory_trials == cfg.theory_trials);
  CHECK(back.removed_small == cfg.removed_small);
  CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("config parsing fails loudly") {
  CHECK_THROWS_AS(config_from_json("{\"t_totl\": 100}"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{\"theory\": {\"t_oo\": 1}}"),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json("not json"), ConfigError);

  ExperimentConfig cfg;
  cfg.train_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate_config(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.sigma_grid = {};
  CHECK_THROWS_AS(cfg.validate_config(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.detectors = {"magic"};
  CHECK_THROWS_AS(cfg.validate_config(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate_config(), ConfigError);
}

TEST_CASE("hash primitives") {
  // FNV-1a reference values.
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);

  ExperimentConfig a, b;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("series slicing and channel masking") {
  const GridCase gc = testutil::triangle_case();
  const JacobianH h = build_h(gc);
  LoadProfile prof = synthetic_profile(20, 1);
  const Eigen::MatrixXd states = simulate_states(gc, prof, 20, 0.1, 1);
  MeasurementSeries s =
      generate_measurements(h, states, NoiseModel::homoscedastic(3, 0.02), 2);
  s.labels[5] = true;

  const MeasurementSeries mid = slice_series(s, 4, 9);
  CHECK(mid.n_steps() == 5);
  CHECK((mid.z.col(0) - s.z.col(4)).norm() == 0.0);
  CHECK(mid.labels[1]);

  const MeasurementSeries two = mask_channels(s, {0, 2});
  REQUIRE(two.n_channels() == 2);
  CHECK((two.z.row(1) - s.z.row(2)).norm() == 0.0);
  CHECK(two.n_steps() == s.n_steps());
}

TEST_CASE("single-cell scenario run") {
  const GridCase gc = testutil::load_case("case14.m");
  const ExperimentConfig cfg = small_config();
  AeCache cache;
  const ScenarioResult r =
      run_scenario(gc, cfg, cfg.sigma_center(), cfg.kappa_center(), 0, 0,
                   &cache);

  CHECK(r.train.n_steps() == 360);
  CHECK(r.eval.n_steps() == 240);
  // The window is the middle third of the evaluation span.
  CHECK(r.window_start == 80);
  CHECK(r.window_end == 160);
  for (int t = 0; t < r.eval.n_steps(); ++t)
    CHECK(r.eval.labels[t] == (t >= 80 && t < 160));
  // No label ever leaks into the training head.
  CHECK(std::none_of(r.train.labels.begin(), r.train.labels.end(),
                     [](bool b) { return b; }));

  REQUIRE(r.csd.has_value());
  REQUIRE(r.svd.has_value());
  REQUIRE(r.bdd.has_value());
  CHECK(r.bank.size() == 7);
  CHECK(r.bdd_window_rate >= 0.0);
  CHECK(r.bdd_window_rate <= 1.0);

  // One row per cycle detector plus aggregate, svd and bdd.
  CHECK(r.rows.size() == 10);
  for (const auto& row : r.rows) {
    CHECK(row.sigma == cfg.sigma_center());
    CHECK(row.kappa == cfg.kappa_center());
    CHECK(row.seed == cfg.seed);
  }
  const auto agg = std::find_if(r.rows.begin(), r.rows.end(), [](auto& m) {
    return m.detector == "aggregate";
  });
  REQUIRE(agg != r.rows.end());
  CHECK(agg->f1 > 0.5);  // kappa=2 is an easy catch
}

TEST_CASE("scenario run is deterministic") {
  const GridCase gc = testutil::triangle_case();
  ExperimentConfig cfg = small_config();
  cfg.t_total = 400;
  const ScenarioResult a = run_scenario(gc, cfg, 0.02, 2.0, 0, 0);
  const ScenarioResult b = run_scenario(gc, cfg, 0.02, 2.0, 0, 0);
  CHECK((a.eval.z - b.eval.z).norm() == 0.0);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].f1 == b.rows[i].f1);
    CHECK(a.rows[i].precision == b.rows[i].precision);
  }
}

TEST_CASE("sweep emits a row block per cell") {
  const GridCase gc = testutil::triangle_case();
  ExperimentConfig cfg = small_config();
  cfg.t_total = 400;
  cfg.sigma_grid = {0.02, 0.05};
  cfg.kappa_grid = {2.0};
  const SweepResult sweep = run_sweep(gc, cfg);

  // Two cells, each with 1 cycle + aggregate + svd + bdd.
  CHECK(sweep.rows.size() == 8);
  for (double sg : cfg.sigma_grid) {
    const long with_sigma =
        std::count_if(sweep.rows.begin(), sweep.rows.end(),
                      [&](const MetricRow& m) { return m.sigma == sg; });
    CHECK(with_sigma == 4);
  }
  // Any strong cell quoted must exist in the grid.
  for (const auto& [det, cells] : sweep.strong_cells)
    for (const auto& [kappa, sigma] : cells) {
      CHECK(std::find(cfg.kappa_grid.begin(), cfg.kappa_grid.end(), kappa) !=
            cfg.kappa_grid.end());
      CHECK(std::find(cfg.sigma_grid.begin(), cfg.sigma_grid.end(), sigma) !=
            cfg.sigma_grid.end());
    }

  const std::string csv = metric_rows_csv(sweep.rows, config_hash(cfg));
  CHECK(csv.rfind("# config_hash=", 0) == 0);
  CHECK(csv.find("detector,kappa,sigma,precision,recall,f1,seed") !=
        std::string::npos);
  const nlohmann::json j =
      nlohmann::json::parse(strong_cells_json(sweep, config_hash(cfg)));
  CHECK(j.contains("config_hash"));
  CHECK(j.contains("f1_at_least_0.8"));
}

TEST_CASE("theory runner covers its grid") {
  const GridCase gc = testutil::triangle_case();
  ExperimentConfig cfg;
  cfg.theory_t_o = 12;
  cfg.theory_t_star = 100;
  cfg.theory_trials = 10;
  cfg.theory_sigma_grid = {0.02, 0.1};
  cfg.seed = 5;
  const TheoryResult r = run_theory(gc, cfg);
  REQUIRE(r.validation.size() == 2);
  CHECK(r.validation[0].sigma == 0.02);
  CHECK(r.validation[0].t_o == 12);
  CHECK_FALSE(r.basis_rows.empty());
  CHECK(r.basis_rows[0].label == "mcb");
}

TEST_CASE("partial-observability runner on the triangle") {
  const GridCase gc = testutil::triangle_case();
  ExperimentConfig cfg = small_config();
  cfg.t_total = 400;
  cfg.detectors = {"csd"};
  const PartialResult r = run_partial(gc, cfg);

  // The triangle has a single cycle, so both removals take the same branch
  // and the attack support sits entirely in lost cycles.
  REQUIRE(r.small_removed.size() == 1);
  CHECK(r.small_placement == AttackPlacement::in_missing_cycles_only);
  CHECK(r.large_placement == AttackPlacement::in_missing_cycles_only);

  // With no cycles left, the cycle detectors see nothing.
  for (const auto& row : r.minus_small.rows)
    if (row.detector == "aggregate") CHECK(row.f1 == 0.0);
  CHECK_FALSE(r.baseline.rows.empty());
}
