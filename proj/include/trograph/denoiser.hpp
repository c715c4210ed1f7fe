#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "trograph/autodiff.hpp"
#include "trograph/diffusion.hpp"
#include "trograph/graph.hpp"

namespace tro::denoise {

using graph::PoseMatrix;

struct ModelConfig {
  int d = 64;
  int layers = 6;
  int object_feature_dim = 64;
  int link_embed_dim = graph::kLinkEmbedDim;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Edge-augmented graph transformer predicting per-link pose noise.
class DenoiserModel {
 public:
  static DenoiserModel init(const ModelConfig& config);
  static DenoiserModel from_parameters(const ModelConfig& config, ad::ParameterSet params);

  const ModelConfig& config() const { return config_; }
  const ad::ParameterSet& params() const { return params_; }
  ad::ParameterSet& params() { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  /// L_pad x 6 prediction; masked rows are exactly zero.
  PoseMatrix forward(const graph::TroGraph& g, int t) const;
  /// Real-row prediction recorded on `tape` (rows follow links().real_rows()).
  ad::Var forward(ad::Tape& tape, const graph::TroGraph& g, int t) const;

 private:
  ModelConfig config_;
  ad::ParameterSet params_;
};

/// gamma_p * |eps_rho - pred_rho|^2 + gamma_r * |eps_theta - pred_theta|^2
/// summed over unmasked rows.
double loss(const PoseMatrix& eps_true, const PoseMatrix& eps_pred, const graph::LinkMask& mask, double gamma_p = 1.0,
            double gamma_r = 1.0);

struct LossGrad {
  double loss = 0.0;
  ad::Gradients grads;
};

LossGrad backward(const DenoiserModel& model, const graph::TroGraph& g_t, int t, const PoseMatrix& eps_true,
                  double gamma_p = 1.0, double gamma_r = 1.0);

struct TrainConfig {
  double gamma_p = 1.0;
  double gamma_r = 1.0;
  int epochs = 300;
  int batch_size = 8;
  double lr = 1e-3;
  double lr_decay = 0.8;
  int decay_epochs = 20;
  long max_steps = 0;  // 0 means epochs * steps_per_epoch
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct AdamState {
  std::vector<ad::Matrix> m, v;
  long step = 0;
};

struct TraceEntry {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<TraceEntry> trace;
  bool diverged = false;
  std::string message;
};

int steps_per_epoch(std::size_t dataset_size, int batch_size);
double learning_rate(const TrainConfig& c, int epoch);

/// Adam training with step-decayed learning rate. All randomness is derived
/// from (seed, epoch) and (seed, step), so a resumed run continues exactly.
TrainResult train(DenoiserModel& model, AdamState& state, const std::vector<graph::TroGraph>& dataset,
                  const diffusion::Schedule& schedule, const TrainConfig& config);

/// Mean of the first and last `window` entries.
double smoothed_loss(const std::vector<TraceEntry>& trace, bool head, std::size_t window = 50);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ad::ParameterSet params;
  std::optional<AdamState> adam;
};

/// Binary tensor container plus `<path>.json` sidecar.
void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& model, const TrainConfig& train,
                     const AdamState* adam = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Closed-form noise predictor for a single clean pose set.
diffusion::NoisePredictor oracle_denoiser(const PoseMatrix& psi0, const diffusion::Schedule& schedule);
diffusion::NoisePredictor as_predictor(const DenoiserModel& model);

}  // namespace tro::denoise
