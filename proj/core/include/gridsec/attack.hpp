#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/dc_sim.hpp"

namespace gridsec {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AttackFamily { model_based, ae_blind, pca_blind, lowrank_blind };

std::string to_string(AttackFamily family);
AttackFamily attack_family_from_string(const std::string& name);

/// window = [t_start, t_end). direction applies to model_based only and is
/// scaled by kappa inside the attack.
struct AttackScenario {
  AttackFamily family = AttackFamily::ae_blind;
  double kappa = 1.0;
  double gamma = 0.1;       // masking noise variance ratio, in [0, 1)
  int t_start = 0;
  int t_end = 0;
  Eigen::VectorXd direction;
  std::uint64_t seed = 0;

  void check_window(int n_steps) const;
};

std::string scenario_to_json(const AttackScenario& scenario);
AttackScenario scenario_from_json(const std::string& text);

/// Fully connected autoencoder: five encoder layers m -> w -> w -> w -> w ->
/// n_s and five mirrored decoder layers back to m. Rectifier on hidden
/// layers, identity on the encoder output and decoder output. Inputs are
/// standardized per channel with training statistics; reconstruct() and
/// residual() work in original units.
class MlpAutoencoder {
 public:
  struct Layer {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;
    bool relu = false;
  };

  MlpAutoencoder() = default;
  MlpAutoencoder(int n_inputs, int latent_dim, int hidden_width,
                 std::uint64_t init_seed);

  int n_inputs() const { return n_inputs_; }
  int latent_dim() const { return latent_; }

  Eigen::VectorXd reconstruct(const Eigen::VectorXd& z) const;
  Eigen::VectorXd residual(const Eigen::VectorXd& z) const {
    return z - reconstruct(z);
  }

  /// Mean squared reconstruction error per entry, original units.
  double mse(const Eigen::MatrixXd& data) const;

  std::string to_json() const;
  static MlpAutoencoder from_json(const std::string& text);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  void set_normalization(const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& std);
  const Eigen::VectorXd& channel_mean() const { return mean_; }
  const Eigen::VectorXd& channel_std() const { return std_; }

  /// Forward pass in standardized units.
  Eigen::VectorXd forward_normalized(const Eigen::VectorXd& v) const;

 private:
  int n_inputs_ = 0;
  int latent_ = 0;
  std::vector<Layer> layers_;
  Eigen::VectorXd mean_, std_;
};

struct TrainConfig {
  int epochs = 300;
  double learning_rate = 2e-4;
  int batch_size = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

struct TrainResult {
  MlpAutoencoder model;
  std::vector<double> epoch_loss;  // full-set standardized MSE per epoch
  double final_loss = 0.0;
};

/// Minibatch Adam on the standardized mean-squared reconstruction error.
/// Deterministic given cfg.seed. Throws AttackError on divergence.
TrainResult train_autoencoder(const Eigen::MatrixXd& history,
                              int latent_dim, const TrainConfig& cfg);

/// z'_t = z_t + kappa * H * u inside the window.
MeasurementSeries model_based_fdia(const MeasurementSeries& series,
                                   const JacobianH& h,
                                   const AttackScenario& scenario);

/// z'_t = z_t + kappa * (r_t + eta_t), r_t = z_t - AE(z_t),
/// eta_t ~ N(0, gamma * R). gamma = 0 recovers the unmasked injection.
MeasurementSeries ae_residual_attack(const MeasurementSeries& series,
                                     const MlpAutoencoder& model,
                                     const AttackScenario& scenario,
                                     const NoiseModel& noise);

/// Subspace estimate = top n_s left singular vectors of the centered
/// history; injection kappa * U * g with g ~ N(0, I) drawn once per window.
MeasurementSeries pca_blind_attack(const MeasurementSeries& series,
                                   const Eigen::MatrixXd& history, int n_states,
                                   const AttackScenario& scenario);

/// Rank chosen by the largest consecutive singular-value ratio gap of the
/// uncentered history; otherwise identical to the PCA variant.
MeasurementSeries lowrank_svd_attack(const MeasurementSeries& series,
                                     const Eigen::MatrixXd& history,
                                     const AttackScenario& scenario);

/// Rank detected by the largest ratio gap sigma_k / sigma_{k+1}.
int detect_rank_by_gap(const Eigen::VectorXd& singular_values);

}  // namespace gridsec
