#include "gridsec/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

namespace gridsec {

std::string to_string(AttackFamily family) {
  switch (family) {
    case AttackFamily::model_based:
      return "model_based";
    case AttackFamily::ae_blind:
      return "ae_blind";
    case AttackFamily::pca_blind:
      return "pca_blind";
    case AttackFamily::lowrank_blind:
      return "lowrank_blind";
  }
  throw AttackError("unknown attack family");
}

AttackFamily attack_family_from_string(const std::string& name) {
  if (name == "model_based") return AttackFamily::model_based;
  if (name == "ae_blind") return AttackFamily::ae_blind;
  if (name == "pca_blind") return AttackFamily::pca_blind;
  if (name == "lowrank_blind") return AttackFamily::lowrank_blind;
  throw AttackError("unknown attack family: " + name);
}

void AttackScenario::check_window(int n_steps) const {
  if (t_start < 0 || t_end > n_steps || t_start >= t_end)
    throw AttackError("attack window out of range");
  if (kappa <= 0.0) throw AttackError("kappa must be positive");
  if (gamma < 0.0 || gamma >= 1.0) throw AttackError("gamma must be in [0, 1)");
}

std::string scenario_to_json(const AttackScenario& s) {
  nlohmann::json j{{"family", to_string(s.family)},
                   {"kappa", s.kappa},
                   {"gamma", s.gamma},
                   {"window", {s.t_start, s.t_end}},
                   {"seed", s.seed}};
  if (s.direction.size() > 0) {
    std::vector<double> u(s.direction.data(),
                          s.direction.data() + s.direction.size());
    j["direction"] = u;
  }
  return j.dump(2) + "\n";
}

AttackScenario scenario_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw AttackError(std::string("bad scenario JSON: ") + ex.what());
  }
  AttackScenario s;
  try {
    s.family = attack_family_from_string(j.at("family").get<std::string>());
    s.kappa = j.at("kappa").get<double>();
    s.gamma = j.value("gamma", 0.1);
    const auto& w = j.at("window");
    if (!w.is_array() || w.size() != 2)
      throw AttackError("scenario window must be [t_start, t_end)");
    s.t_start = w[0].get<int>();
    s.t_end = w[1].get<int>();
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("direction")) {
      const auto u = j["direction"].get<std::vector<double>>();
      s.direction = Eigen::Map<const Eigen::VectorXd>(
          u.data(), static_cast<Eigen::Index>(u.size()));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw AttackError(std::string("bad scenario JSON: ") + ex.what());
  }
  return s;
}

// --- autoencoder -----------------------------------------------------------

MlpAutoencoder::MlpAutoencoder(int n_inputs, int latent_dim, int hidden_width,
                               std::uint64_t init_seed)
    : n_inputs_(n_inputs), latent_(latent_dim) {
  if (n_inputs < 1 || latent_dim < 1 || hidden_width < 1)
    throw AttackError("invalid autoencoder dimensions");
  const int w = hidden_width;
  const std::vector<int> dims = {n_inputs, w, w,      w, w, latent_dim,
                                 w,        w, w,      w, n_inputs};
  Rng rng(init_seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer layer;
    const int fan_in = dims[i];
    const int fan_out = dims[i + 1];
    // He-style scale; hidden layers are rectified.
    const double scale = std::sqrt(2.0 / fan_in);
    layer.w.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.w(r, c) = rng.gaussian() * scale;
    layer.b = Eigen::VectorXd::Zero(fan_out);
    // Identity on the encoder output (i == 4) and the decoder output.
    layer.relu = (i != 4 && i + 2 < dims.size());
    layers_.push_back(std::move(layer));
  }
  mean_ = Eigen::VectorXd::Zero(n_inputs);
  std_ = Eigen::VectorXd::Ones(n_inputs);
}

void MlpAutoencoder::set_normalization(const Eigen::VectorXd& mean,
                                       const Eigen::VectorXd& std) {
  if (mean.size() != n_inputs_ || std.size() != n_inputs_)
    throw AttackError("normalization size mismatch");
  if ((std.array() <= 0.0).any())
    throw AttackError("normalization std must be positive");
  mean_ = mean;
  std_ = std;
}

Eigen::VectorXd MlpAutoencoder::forward_normalized(
    const Eigen::VectorXd& v) const {
  Eigen::VectorXd a = v;
  for (const auto& layer : layers_) {
    a = layer.w * a + layer.b;
    if (layer.relu) a = a.cwiseMax(0.0);
  }
  return a;
}

Eigen::VectorXd MlpAutoencoder::reconstruct(const Eigen::VectorXd& z) const {
  if (z.size() != n_inputs_) throw AttackError("input size mismatch");
  const Eigen::VectorXd v = (z - mean_).cwiseQuotient(std_);
  return forward_normalized(v).cwiseProduct(std_) + mean_;
}

double MlpAutoencoder::mse(const Eigen::MatrixXd& data) const {
  if (data.rows() != n_inputs_) throw AttackError("input size mismatch");
  double total = 0.0;
  for (int t = 0; t < data.cols(); ++t)
    total += (data.col(t) - reconstruct(data.col(t))).squaredNorm();
  return total / (static_cast<double>(data.rows()) * data.cols());
}

std::string MlpAutoencoder::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : layers_) {
    std::vector<double> w(layer.w.size());
    // Row-major flattening for the interchange format.
    for (int r = 0; r < layer.w.rows(); ++r)
      for (int c = 0; c < layer.w.cols(); ++c)
        w[static_cast<std::size_t>(r) * layer.w.cols() + c] = layer.w(r, c);
    std::vector<double> b(layer.b.data(), layer.b.data() + layer.b.size());
    layers.push_back({{"rows", layer.w.rows()},
                      {"cols", layer.w.cols()},
                      {"weights", w},
                      {"bias", b},
                      {"relu", layer.relu}});
  }
  std::vector<double> mean(mean_.data(), mean_.data() + mean_.size());
  std::vector<double> std(std_.data(), std_.data() + std_.size());
  nlohmann::json j{{"n_inputs", n_inputs_},
                   {"latent_dim", latent_},
                   {"layers", layers},
                   {"channel_mean", mean},
                   {"channel_std", std}};
  return j.dump() + "\n";
}

MlpAutoencoder MlpAutoencoder::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw AttackError(std::string("bad model JSON: ") + ex.what());
  }
  MlpAutoencoder m;
  try {
    m.n_inputs_ = j.at("n_inputs").get<int>();
    m.latent_ = j.at("latent_dim").get<int>();
    for (const auto& jl : j.at("layers")) {
      Layer layer;
      const int rows = jl.at("rows").get<int>();
      const int cols = jl.at("cols").get<int>();
      const auto w = jl.at("weights").get<std::vector<double>>();
      const auto b = jl.at("bias").get<std::vector<double>>();
      if (static_cast<int>(w.size()) != rows * cols ||
          static_cast<int>(b.size()) != rows)
        throw AttackError("model JSON layer dimensions inconsistent");
      layer.w.resize(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          layer.w(r, c) = w[static_cast<std::size_t>(r) * cols + c];
      layer.b = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
      layer.relu = jl.at("relu").get<bool>();
      m.layers_.push_back(std::move(layer));
    }
    const auto mean = j.at("channel_mean").get<std::vector<double>>();
    const auto std = j.at("channel_std").get<std::vector<double>>();
    m.mean_ = Eigen::Map<const Eigen::VectorXd>(
        mean.data(), static_cast<Eigen::Index>(mean.size()));
    m.std_ = Eigen::Map<const Eigen::VectorXd>(
        std.data(), static_cast<Eigen::Index>(std.size()));
  } catch (const nlohmann::json::exception& ex) {
    throw AttackError(std::string("bad model JSON: ") + ex.what());
  }
  if (m.mean_.size() != m.n_inputs_ || m.std_.size() != m.n_inputs_)
    throw AttackError("model JSON normalization size mismatch");
  return m;
}

namespace {

struct AdamState {
  Eigen::MatrixXd mw, vw;
  Eigen::VectorXd mb, vb;
};

}  // namespace

TrainResult train_autoencoder(const Eigen::MatrixXd& history, int latent_dim,
                              const TrainConfig& cfg) {
  const int m = static_cast<int>(history.rows());
  const int n_train = static_cast<int>(history.cols());
  if (cfg.epochs < 1 || cfg.epochs > 300)
    throw AttackError("epochs must be in [1, 300]");
  if (cfg.learning_rate <= 0.0 || cfg.batch_size < 1)
    throw AttackError("invalid training hyperparameters");
  if (n_train < cfg.batch_size)
    throw AttackError("training set smaller than batch size");

  const int width = std::max(16, m);
  Rng rng(cfg.seed);
  TrainResult result;
  result.model = MlpAutoencoder(m, latent_dim, width, rng.next());

  // Standardization statistics from the history itself.
  Eigen::VectorXd mean = history.rowwise().mean();
  Eigen::VectorXd var = Eigen::VectorXd::Zero(m);
  for (int t = 0; t < n_train; ++t)
    var += (history.col(t) - mean).array().square().matrix();
  var /= std::max(1, n_train - 1);
  Eigen::VectorXd std = var.array().sqrt().max(1e-8).matrix();
  result.model.set_normalization(mean, std);

  Eigen::MatrixXd x(m, n_train);
  for (int t = 0; t < n_train; ++t)
    x.col(t) = (history.col(t) - mean).cwiseQuotient(std);

  auto& layers = result.model.layers();
  const int n_layers = static_cast<int>(layers.size());
  std::vector<AdamState> adam(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    adam[l].mw = Eigen::MatrixXd::Zero(layers[l].w.rows(), layers[l].w.cols());
    adam[l].vw = adam[l].mw;
    adam[l].mb = Eigen::VectorXd::Zero(layers[l].b.size());
    adam[l].vb = adam[l].mb;
  }

  auto full_loss = [&] {
    double total = 0.0;
    for (int t = 0; t < n_train; ++t)
      total +=
          (result.model.forward_normalized(x.col(t)) - x.col(t)).squaredNorm();
    return total / (static_cast<double>(m) * n_train);
  };

  std::vector<int> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n_train - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start + cfg.batch_size <= n_train;
         start += cfg.batch_size) {
      // Forward pass for the batch; activations kept for backprop.
      std::vector<Eigen::MatrixXd> act(n_layers + 1);
      act[0].resize(m, cfg.batch_size);
      for (int k = 0; k < cfg.batch_size; ++k)
        act[0].col(k) = x.col(order[start + k]);
      for (int l = 0; l < n_layers; ++l) {
        act[l + 1] = (layers[l].w * act[l]).colwise() + layers[l].b;
        if (layers[l].relu) act[l + 1] = act[l + 1].cwiseMax(0.0);
      }

      // d(loss)/d(output) for loss = mean over entries of squared error.
      const double scale = 2.0 / (static_cast<double>(m) * cfg.batch_size);
      Eigen::MatrixXd delta = scale * (act[n_layers] - act[0]);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (int l = n_layers - 1; l >= 0; --l) {
        if (layers[l].relu)
          delta = delta.cwiseProduct(
              (act[l + 1].array() > 0.0).cast<double>().matrix());
        const Eigen::MatrixXd gw = delta * act[l].transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        if (l > 0) delta = layers[l].w.transpose() * delta;

        auto& st = adam[l];
        st.mw = cfg.beta1 * st.mw + (1.0 - cfg.beta1) * gw;
        st.vw = cfg.beta2 * st.vw + (1.0 - cfg.beta2) * gw.array().square().matrix();
        st.mb = cfg.beta1 * st.mb + (1.0 - cfg.beta1) * gb;
        st.vb = cfg.beta2 * st.vb + (1.0 - cfg.beta2) * gb.array().square().matrix();
        layers[l].w -=
            (cfg.learning_rate * (st.mw / bc1).array() /
             ((st.vw / bc2).array().sqrt() + cfg.adam_eps))
                .matrix();
        layers[l].b -=
            (cfg.learning_rate * (st.mb / bc1).array() /
             ((st.vb / bc2).array().sqrt() + cfg.adam_eps))
                .matrix();
      }
    }
    const double loss = full_loss();
    if (!std::isfinite(loss))
      throw AttackError("autoencoder training diverged at epoch " +
                        std::to_string(epoch));
    result.epoch_loss.push_back(loss);
  }
  result.final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
  return result;
}

// --- attack families -------------------------------------------------------

MeasurementSeries model_based_fdia(const MeasurementSeries& series,
                                   const JacobianH& h,
                                   const AttackScenario& scenario) {
  scenario.check_window(series.n_steps());
  if (scenario.direction.size() != h.n_states())
    throw AttackError("direction dimension does not match state count");
  MeasurementSeries out = series;
  const Eigen::VectorXd delta = scenario.kappa * (h.matrix * scenario.direction);
  for (int t = scenario.t_start; t < scenario.t_end; ++t) {
    out.z.col(t) += delta;
    out.labels[t] = true;
  }
  return out;
}

MeasurementSeries ae_residual_attack(const MeasurementSeries& series,
                                     const MlpAutoencoder& model,
                                     const AttackScenario& scenario,
                                     const NoiseModel& noise) {
  scenario.check_window(series.n_steps());
  if (model.n_inputs() != series.n_channels())
    throw AttackError("model dimension does not match series");
  if (noise.sigma.size() != series.n_channels())
    throw AttackError("noise dimension does not match series");
  MeasurementSeries out = series;
  Rng rng(scenario.seed);
  const double eta_scale = std::sqrt(scenario.gamma);
  for (int t = scenario.t_start; t < scenario.t_end; ++t) {
    Rng step = rng.substream(static_cast<std::uint64_t>(t));
    Eigen::VectorXd inject = model.residual(series.z.col(t));
    if (scenario.gamma > 0.0) {
      for (int e = 0; e < inject.size(); ++e)
        inject[e] += step.gaussian(0.0, eta_scale * noise.sigma[e]);
    }
    out.z.col(t) += scenario.kappa * inject;
    out.labels[t] = true;
  }
  return out;
}

namespace {

MeasurementSeries subspace_attack(const MeasurementSeries& series,
                                  const Eigen::MatrixXd& basis,
                                  const AttackScenario& scenario) {
  MeasurementSeries out = series;
  Rng rng(scenario.seed);
  Eigen::VectorXd g(basis.cols());
  for (int i = 0; i < g.size(); ++i) g[i] = rng.gaussian();
  const Eigen::VectorXd delta = scenario.kappa * (basis * g);
  for (int t = scenario.t_start; t < scenario.t_end; ++t) {
    out.z.col(t) += delta;
    out.labels[t] = true;
  }
  return out;
}

}  // namespace

MeasurementSeries pca_blind_attack(const MeasurementSeries& series,
                                   const Eigen::MatrixXd& history,
                                   int n_states,
                                   const AttackScenario& scenario) {
  scenario.check_window(series.n_steps());
  if (history.rows() != series.n_channels())
    throw AttackError("history dimension does not match series");
  if (static_cast<int>(history.cols()) < n_states)
    throw AttackError("history shorter than the state dimension");
  Eigen::MatrixXd centered = history.colwise() - history.rowwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  return subspace_attack(series, svd.matrixU().leftCols(n_states), scenario);
}

int detect_rank_by_gap(const Eigen::VectorXd& sv) {
  const int n = static_cast<int>(sv.size());
  if (n < 1) throw AttackError("empty singular value vector");
  int best = n;
  double best_ratio = 0.0;
  for (int k = 0; k < n - 1; ++k) {
    const double lo = std::max(sv[k + 1], 1e-300);
    const double ratio = sv[k] / lo;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k + 1;
    }
  }
  return best;
}

MeasurementSeries lowrank_svd_attack(const MeasurementSeries& series,
                                     const Eigen::MatrixXd& history,
                                     const AttackScenario& scenario) {
  scenario.check_window(series.n_steps());
  if (history.rows() != series.n_channels())
    throw AttackError("history dimension does not match series");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(history, Eigen::ComputeThinU);
  const int rank = detect_rank_by_gap(svd.singularValues());
  return subspace_attack(series, svd.matrixU().leftCols(rank), scenario);
}

}  // namespace gridsec
