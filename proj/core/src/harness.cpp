#include "gridsec/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridsec/estimation.hpp"

namespace gridsec {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Stream ids for deriving independent substreams from the experiment seed.
enum StreamId : std::uint64_t {
  kSimStream = 1,
  kTrainStream = 2,
  kAttackStream = 3,
  kTheoryStream = 4,
  kBasisStream = 5,
};

}  // namespace

void ExperimentConfig::validate_config() const {
  if (t_total < 50) throw ConfigError("t_total must be at least 50");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0, 1)");
  if (sigma_grid.empty() || kappa_grid.empty())
    throw ConfigError("sigma and kappa grids must be nonempty");
  for (double s : sigma_grid)
    if (s <= 0.0) throw ConfigError("sigma values must be positive");
  for (double k : kappa_grid)
    if (k <= 0.0) throw ConfigError("kappa values must be positive");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (jitter < 0.0 || jitter >= 1.0) throw ConfigError("jitter must be in [0, 1)");
  if (ae_epochs < 1 || ae_epochs > 300)
    throw ConfigError("ae_epochs must be in [1, 300]");
  if (detectors.empty()) throw ConfigError("detector set must be nonempty");
  for (const auto& d : detectors) {
    if (d != "csd" && d != "svd" && d != "bdd")
      throw ConfigError("unknown detector: " + d);
  }
  if (theory_t_star < 1 || theory_trials < 1)
    throw ConfigError("theory counts must be positive");
  if (theory_sigma_grid.empty())
    throw ConfigError("theory sigma grid must be nonempty");
}

ExperimentConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("bad config JSON: ") + ex.what());
  }
  ExperimentConfig cfg;
  const std::set<std::string> known = {
      "case",       "t_total",   "train_fraction", "sigma_grid", "kappa_grid",
      "family",     "gamma",     "basis",          "detectors",  "alpha",
      "jitter",     "ae_epochs", "seed",           "out_dir",    "theory",
      "partial"};
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw ConfigError("unknown config key: " + key);
      (void)value;
    }
    cfg.case_path = j.value("case", cfg.case_path);
    cfg.t_total = j.value("t_total", cfg.t_total);
    cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
    if (j.contains("sigma_grid"))
      cfg.sigma_grid = j["sigma_grid"].get<std::vector<double>>();
    if (j.contains("kappa_grid"))
      cfg.kappa_grid = j["kappa_grid"].get<std::vector<double>>();
    if (j.contains("family"))
      cfg.family = attack_family_from_string(j["family"].get<std::string>());
    cfg.gamma = j.value("gamma", cfg.gamma);
    if (j.contains("basis")) {
      const std::string b = j["basis"].get<std::string>();
      if (b == "minimum")
        cfg.basis = BasisKind::minimum;
      else if (b == "fundamental")
        cfg.basis = BasisKind::fundamental;
      else
        throw ConfigError("basis must be \"minimum\" or \"fundamental\"");
    }
    if (j.contains("detectors"))
      cfg.detectors = j["detectors"].get<std::vector<std::string>>();
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.jitter = j.value("jitter", cfg.jitter);
    cfg.ae_epochs = j.value("ae_epochs", cfg.ae_epochs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("theory")) {
      const auto& t = j["theory"];
      const std::set<std::string> tk = {"t_o", "t_star", "trials",
                                        "sigma_grid"};
      for (const auto& [key, value] : t.items()) {
        if (!tk.count(key))
          throw ConfigError("unknown theory config key: " + key);
        (void)value;
      }
      cfg.theory_t_o = t.value("t_o", cfg.theory_t_o);
      cfg.theory_t_star = t.value("t_star", cfg.theory_t_star);
      cfg.theory_trials = t.value("trials", cfg.theory_trials);
      if (t.contains("sigma_grid"))
        cfg.theory_sigma_grid = t["sigma_grid"].get<std::vector<double>>();
    }
    if (j.contains("partial")) {
      const auto& p = j["partial"];
      const std::set<std::string> pk = {"removed_small", "removed_large"};
      for (const auto& [key, value] : p.items()) {
        if (!pk.count(key))
          throw ConfigError("unknown partial config key: " + key);
        (void)value;
      }
      if (p.contains("removed_small"))
        cfg.removed_small = p["removed_small"].get<std::vector<int>>();
      if (p.contains("removed_large"))
        cfg.removed_large = p["removed_large"].get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("bad config JSON: ") + ex.what());
  }
  cfg.validate_config();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j{
      {"case", cfg.case_path},
      {"t_total", cfg.t_total},
      {"train_fraction", cfg.train_fraction},
      {"sigma_grid", cfg.sigma_grid},
      {"kappa_grid", cfg.kappa_grid},
      {"family", to_string(cfg.family)},
      {"gamma", cfg.gamma},
      {"basis", cfg.basis == BasisKind::minimum ? "minimum" : "fundamental"},
      {"detectors", cfg.detectors},
      {"alpha", cfg.alpha},
      {"jitter", cfg.jitter},
      {"ae_epochs", cfg.ae_epochs},
      {"seed", cfg.seed},
      {"out_dir", cfg.out_dir},
      {"theory",
       {{"t_o", cfg.theory_t_o},
        {"t_star", cfg.theory_t_star},
        {"trials", cfg.theory_trials},
        {"sigma_grid", cfg.theory_sigma_grid}}},
      {"partial",
       {{"removed_small", cfg.removed_small},
        {"removed_large", cfg.removed_large}}}};
  return j.dump(2) + "\n";
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  // The output location is not part of the experiment: the same run into
  // two directories must produce identical artifacts.
  ExperimentConfig canonical = cfg;
  canonical.out_dir.clear();
  return fnv1a(config_to_json(canonical));
}

MeasurementSeries slice_series(const MeasurementSeries& s, int t_begin,
                               int t_end) {
  if (t_begin < 0 || t_end > s.n_steps() || t_begin >= t_end)
    throw ConfigError("bad series slice");
  MeasurementSeries out;
  out.z = s.z.middleCols(t_begin, t_end - t_begin);
  if (s.clean.cols() == s.z.cols())
    out.clean = s.clean.middleCols(t_begin, t_end - t_begin);
  if (s.x_true.cols() == s.z.cols())
    out.x_true = s.x_true.middleCols(t_begin, t_end - t_begin);
  out.labels.assign(s.labels.begin() + t_begin, s.labels.begin() + t_end);
  out.sigma = s.sigma;
  out.seed = s.seed;
  out.case_name = s.case_name;
  return out;
}

MeasurementSeries mask_channels(const MeasurementSeries& s,
                                const std::vector<int>& kept) {
  MeasurementSeries out = s;
  out.z.resize(static_cast<int>(kept.size()), s.n_steps());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] < 0 || kept[i] >= s.n_channels())
      throw ConfigError("masked channel out of range");
    out.z.row(static_cast<int>(i)) = s.z.row(kept[i]);
  }
  out.clean.resize(0, 0);
  out.x_true.resize(0, 0);
  return out;
}

const MlpAutoencoder& AeCache::get(const GridCase& gc,
                                   const Eigen::MatrixXd& history, int latent,
                                   int epochs, std::uint64_t key_seed) {
  // A cache may serve several cases in one process; the channel count must
  // be part of the key or a 14-bus model would be replayed on a 30-bus run.
  const std::uint64_t key =
      Rng::mix(key_seed, static_cast<std::uint64_t>(history.rows()));
  auto it = models_.find(key);
  if (it != models_.end()) return it->second;
  (void)gc;
  TrainConfig tc;
  tc.epochs = epochs;
  tc.seed = key_seed;
  TrainResult res = train_autoencoder(history, latent, tc);
  return models_.emplace(key, std::move(res.model)).first->second;
}

namespace {

// One (sigma, kappa) cell. When mask is set, detection runs on the
// observable channels with the sub-graph basis; svd/bdd are skipped.
ScenarioResult run_cell(const GridCase& gc, const ExperimentConfig& cfg,
                        double sigma, double kappa, std::uint64_t sigma_key,
                        std::uint64_t kappa_key, AeCache* cache,
                        const ObservabilityMask* mask) {
  const JacobianH h = build_h(gc);
  const int m = gc.n_branches();
  const Rng root(cfg.seed);

  // Simulation keyed on sigma only so the trained attack model can be
  // shared across kappa cells.
  Rng sim_rng = root.substream(Rng::mix(kSimStream, sigma_key));
  const LoadProfile profile = synthetic_profile(cfg.t_total, sim_rng.next());
  const Eigen::MatrixXd states =
      simulate_states(gc, profile, cfg.t_total, cfg.jitter, sim_rng.next());
  const NoiseModel noise = NoiseModel::homoscedastic(m, sigma);
  MeasurementSeries series =
      generate_measurements(h, states, noise, sim_rng.next());
  series.case_name = gc.case_name;

  const int t_train =
      static_cast<int>(cfg.train_fraction * cfg.t_total);
  if (t_train < 2 * m)
    throw ConfigError("training segment too short for the detectors");
  ScenarioResult result;
  result.train = slice_series(series, 0, t_train);
  MeasurementSeries eval = slice_series(series, t_train, cfg.t_total);

  const int eval_len = eval.n_steps();
  result.window_start = eval_len / 3;
  result.window_end = 2 * eval_len / 3;

  AttackScenario sc;
  sc.family = cfg.family;
  sc.kappa = kappa;
  sc.gamma = cfg.gamma;
  sc.t_start = result.window_start;
  sc.t_end = result.window_end;
  sc.seed = Rng::mix(cfg.seed,
                     Rng::mix(kAttackStream, Rng::mix(sigma_key, kappa_key)));

  switch (cfg.family) {
    case AttackFamily::model_based: {
      Rng dir_rng(sc.seed);
      Eigen::VectorXd u(gc.n_states());
      for (int i = 0; i < u.size(); ++i) u[i] = dir_rng.gaussian();
      sc.direction = u.normalized();
      result.eval = model_based_fdia(eval, h, sc);
      break;
    }
    case AttackFamily::ae_blind: {
      const std::uint64_t train_key =
          Rng::mix(cfg.seed, Rng::mix(kTrainStream, sigma_key));
      AeCache local;
      AeCache& c = cache ? *cache : local;
      const MlpAutoencoder& model = c.get(gc, result.train.z, gc.n_states(),
                                          cfg.ae_epochs, train_key);
      result.eval = ae_residual_attack(eval, model, sc, noise);
      break;
    }
    case AttackFamily::pca_blind:
      result.eval =
          pca_blind_attack(eval, result.train.z, gc.n_states(), sc);
      break;
    case AttackFamily::lowrank_blind:
      result.eval = lowrank_svd_attack(eval, result.train.z, sc);
      break;
  }

  auto enabled = [&](const std::string& name) {
    return std::find(cfg.detectors.begin(), cfg.detectors.end(), name) !=
           cfg.detectors.end();
  };

  MeasurementSeries det_train = result.train;
  MeasurementSeries det_eval = result.eval;
  CycleBasis basis;
  if (mask) {
    det_train = mask_channels(result.train, mask->kept_branches);
    det_eval = mask_channels(result.eval, mask->kept_branches);
    basis = mask->sub_basis;
  } else {
    const OrientedGraph g = build_graph(gc);
    basis = cfg.basis == BasisKind::minimum ? minimum_cycle_basis(g)
                                            : fundamental_cycle_basis(g);
  }

  auto push_row = [&](const std::string& det, const Metrics& met) {
    result.rows.push_back(
        {det, kappa, sigma, met.precision, met.recall, met.f1, cfg.seed});
  };

  if (enabled("csd")) {
    result.bank = fit_bank(det_train, basis);
    result.csd = detect(result.bank, det_eval, DetectMode::aggregated);
    push_row("aggregate", result.csd->metrics);
    for (int i = 0; i < result.bank.size(); ++i) {
      push_row("cycle_" + std::to_string(i),
               compute_metrics(result.csd->cycle_flags[i], det_eval.labels));
    }
  }
  if (enabled("svd") && !mask) {
    result.svd = svd_baseline_detect(result.train, result.eval,
                                     m - gc.n_states());
    push_row("svd", result.svd->metrics);
  }
  if (enabled("bdd") && !mask) {
    const Estimator est(h, noise);
    const double tau = chi2_threshold(est.dof(), cfg.alpha);
    DetectionReport rep;
    rep.mode = DetectMode::aggregated;
    rep.cycle_scores.resize(1, result.eval.n_steps());
    rep.aggregate_threshold = {tau, true};
    rep.cycle_thresholds = {{tau, true}};
    rep.flags.assign(result.eval.n_steps(), false);
    int flagged_in_window = 0;
    for (int t = 0; t < result.eval.n_steps(); ++t) {
      const double l = est.lnr(result.eval.z.col(t));
      rep.cycle_scores(0, t) = l;
      rep.flags[t] = l >= tau;
      if (rep.flags[t] && t >= result.window_start && t < result.window_end)
        ++flagged_in_window;
    }
    rep.aggregate_score = rep.cycle_scores.row(0);
    rep.cycle_flags = {rep.flags};
    rep.aggregate_flags = rep.flags;
    rep.metrics = compute_metrics(rep.flags, result.eval.labels);
    result.bdd_window_rate =
        static_cast<double>(flagged_in_window) /
        std::max(1, result.window_end - result.window_start);
    result.bdd = std::move(rep);
    push_row("bdd", result.bdd->metrics);
  }
  return result;
}

SweepResult sweep_impl(const GridCase& gc, const ExperimentConfig& cfg,
                       const ObservabilityMask* mask) {
  SweepResult sweep;
  AeCache cache;
  for (std::size_t si = 0; si < cfg.sigma_grid.size(); ++si) {
    for (std::size_t ki = 0; ki < cfg.kappa_grid.size(); ++ki) {
      ScenarioResult cell =
          run_cell(gc, cfg, cfg.sigma_grid[si], cfg.kappa_grid[ki],
                   static_cast<std::uint64_t>(si),
                   static_cast<std::uint64_t>(ki), &cache, mask);
      for (const auto& row : cell.rows) {
        if (row.f1 >= 0.8)
          sweep.strong_cells[row.detector].push_back(
              {row.kappa, row.sigma});
        sweep.rows.push_back(row);
      }
    }
  }
  return sweep;
}

}  // namespace

ScenarioResult run_scenario(const GridCase& gc, const ExperimentConfig& cfg,
                            double sigma, double kappa,
                            std::uint64_t sigma_key, std::uint64_t kappa_key,
                            AeCache* cache) {
  return run_cell(gc, cfg, sigma, kappa, sigma_key, kappa_key, cache, nullptr);
}

SweepResult run_sweep(const GridCase& gc, const ExperimentConfig& cfg) {
  cfg.validate_config();
  return sweep_impl(gc, cfg, nullptr);
}

TheoryResult run_theory(const GridCase& gc, const ExperimentConfig& cfg) {
  cfg.validate_config();
  const JacobianH h = build_h(gc);
  const int t_o = cfg.theory_t_o > 0 ? cfg.theory_t_o : 2 * gc.n_branches();

  MonteCarloConfig mc;
  mc.trials = cfg.theory_trials;
  mc.t_star = cfg.theory_t_star;
  mc.sigma_grid = cfg.theory_sigma_grid;
  mc.seed = Rng::mix(cfg.seed, kTheoryStream);

  TheoryResult result;
  result.validation = egen_monte_carlo(h, mc, t_o);
  result.basis_rows = mcb_optimality_experiment(
      gc, t_o, 0.02, cfg.theory_trials, Rng::mix(cfg.seed, kBasisStream));
  return result;
}

PartialResult run_partial(const GridCase& gc, const ExperimentConfig& cfg) {
  cfg.validate_config();
  const OrientedGraph g = build_graph(gc);
  const CycleBasis mcb = minimum_cycle_basis(g);
  if (mcb.size() == 0) throw ConfigError("case has no cycles");

  PartialResult result;
  result.small_removed = cfg.removed_small;
  result.large_removed = cfg.removed_large;
  if (result.small_removed.empty() || result.large_removed.empty()) {
    // Pick one branch exclusive to a smallest cycle and one exclusive to a
    // largest cycle, preferring branches on no other basis cycle.
    int small_idx = 0, large_idx = 0;
    for (int i = 1; i < mcb.size(); ++i) {
      if (mcb.cycles[i].length() < mcb.cycles[small_idx].length())
        small_idx = i;
      if (mcb.cycles[i].length() > mcb.cycles[large_idx].length())
        large_idx = i;
    }
    auto exclusive_branch = [&](int cycle_idx) {
      for (int e : mcb.cycles[cycle_idx].edge_ids) {
        bool shared = false;
        for (int i = 0; i < mcb.size() && !shared; ++i) {
          if (i == cycle_idx) continue;
          const auto& ids = mcb.cycles[i].edge_ids;
          shared = std::find(ids.begin(), ids.end(), e) != ids.end();
        }
        if (!shared) return e;
      }
      return mcb.cycles[cycle_idx].edge_ids.front();
    };
    if (result.small_removed.empty())
      result.small_removed = {exclusive_branch(small_idx)};
    if (result.large_removed.empty())
      result.large_removed = {exclusive_branch(large_idx)};
  }

  ExperimentConfig csd_cfg = cfg;
  csd_cfg.detectors = {"csd"};
  result.baseline = sweep_impl(gc, csd_cfg, nullptr);

  const ObservabilityMask small_mask =
      mask_observability(gc, result.small_removed);
  const ObservabilityMask large_mask =
      mask_observability(gc, result.large_removed);
  result.minus_small = sweep_impl(gc, csd_cfg, &small_mask);
  result.minus_large = sweep_impl(gc, csd_cfg, &large_mask);

  std::vector<int> support(gc.n_branches());
  for (int e = 0; e < gc.n_branches(); ++e) support[e] = e;
  result.small_placement = classify_attack_support(gc, small_mask, support);
  result.large_placement = classify_attack_support(gc, large_mask, support);
  return result;
}

std::string metric_rows_csv(const std::vector<MetricRow>& rows,
                            std::uint64_t cfg_hash) {
  std::ostringstream out;
  out << "# config_hash=" << cfg_hash << '\n';
  out << "detector,kappa,sigma,precision,recall,f1,seed\n";
  for (const auto& r : rows) {
    out << r.detector << ',' << fmt_double(r.kappa) << ','
        << fmt_double(r.sigma) << ',' << fmt_double(r.precision) << ','
        << fmt_double(r.recall) << ',' << fmt_double(r.f1) << ',' << r.seed
        << '\n';
  }
  return out.str();
}

std::string strong_cells_json(const SweepResult& sweep,
                              std::uint64_t cfg_hash) {
  nlohmann::json regions = nlohmann::json::object();
  for (const auto& [det, cells] : sweep.strong_cells) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [kappa, sigma] : cells)
      list.push_back({{"kappa", kappa}, {"sigma", sigma}});
    regions[det] = std::move(list);
  }
  nlohmann::json j{{"config_hash", cfg_hash},
                   {"f1_at_least_0.8", regions}};
  return j.dump(2) + "\n";
}

}  // namespace gridsec
