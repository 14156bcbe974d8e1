#include <cmath>
#include <fstream>
#include <sstream>

#include <benchmark/benchmark.h>

#include "gridsec/attack.hpp"
#include "gridsec/detector.hpp"
#include "gridsec/estimation.hpp"
#include "gridsec/graph.hpp"
#include "gridsec/rng.hpp"

namespace {

using namespace gridsec;

GridCase load_fixture(const std::string& name) {
  std::ifstream in(std::string(GRIDSEC_FIXTURE_DIR) + "/" + name);
  std::stringstream buf;
  buf << in.rdbuf();
  GridCase gc = parse_matpower_case(buf.str());
  validate(gc);
  return gc;
}

MeasurementSeries make_series(const GridCase& gc, int t_steps, double sigma,
                              std::uint64_t seed) {
  const JacobianH h = build_h(gc);
  const LoadProfile prof = synthetic_profile(t_steps, seed);
  const Eigen::MatrixXd states = simulate_states(gc, prof, t_steps, 0.1, seed);
  return generate_measurements(
      h, states, NoiseModel::homoscedastic(gc.n_branches(), sigma), seed + 1);
}

void bm_minimum_cycle_basis(benchmark::State& state) {
  const GridCase gc = load_fixture("case57.m");
  const OrientedGraph g = build_graph(gc);
  for (auto _ : state) benchmark::DoNotOptimize(minimum_cycle_basis(g));
}
BENCHMARK(bm_minimum_cycle_basis)->Unit(benchmark::kMillisecond);

void bm_fit_bank(benchmark::State& state) {
  const GridCase gc = load_fixture("case30.m");
  const CycleBasis basis = minimum_cycle_basis(build_graph(gc));
  const MeasurementSeries s = make_series(gc, 1000, 0.02, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fit_bank(s, basis));
}
BENCHMARK(bm_fit_bank)->Unit(benchmark::kMillisecond);

void bm_wls_residual(benchmark::State& state) {
  const GridCase gc = load_fixture("case57.m");
  const JacobianH h = build_h(gc);
  const Estimator est(h, NoiseModel::homoscedastic(gc.n_branches(), 0.02));
  const MeasurementSeries s = make_series(gc, 1, 0.02, 3);
  const Eigen::VectorXd z = s.z.col(0);
  for (auto _ : state) benchmark::DoNotOptimize(est.lnr(z));
}
BENCHMARK(bm_wls_residual);

void bm_mce_threshold(benchmark::State& state) {
  Rng rng(7);
  std::vector<double> values;
  for (int i = 0; i < 4000; ++i)
    values.push_back(std::fabs(rng.gaussian(1.0, 0.3)));
  for (int i = 0; i < 1000; ++i)
    values.push_back(std::fabs(rng.gaussian(6.0, 0.3)));
  for (auto _ : state) benchmark::DoNotOptimize(mce_threshold(values));
}
BENCHMARK(bm_mce_threshold);

void bm_autoencoder_epoch(benchmark::State& state) {
  const GridCase gc = load_fixture("case14.m");
  const MeasurementSeries s = make_series(gc, 500, 0.02, 5);
  TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) {
    cfg.seed = static_cast<std::uint64_t>(state.iterations());
    benchmark::DoNotOptimize(train_autoencoder(s.z, gc.n_states(), cfg));
  }
}
BENCHMARK(bm_autoencoder_epoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
