#pragma once

#include <torch/torch.h>

#include <random>
#include <vector>

#include "sckd/options.hpp"

namespace sckd {

/// Modality keep-gates for one sample and the uniform draws behind them.
struct GateState {
  int lidar = 1;  // G_L
  int radar = 1;  // G_R
  double p1 = 1.0, p2 = 1.0;

  bool operator==(const GateState&) const = default;
};

/// Random modality dropout. Training: draw p1, p2 ~ U[0,1); no drop when p1 > p_drop, otherwise lidar is
/// dropped iff p2 <= p_lidar_drop and radar is dropped otherwise. Eval: (1, 1) without touching `rng`.
GateState dropout_gate(const FusionOptions& options, std::mt19937_64& rng, bool training);

/// Gate outcome for explicit draws.
GateState gate_from_draws(const FusionOptions& options, double p1, double p2);

struct FusionWeights {
  torch::Tensor lidar;  // B x C x 1 x 1 (per-channel) or B x 1 x 1 x 1 (scalar)
  torch::Tensor radar;
};

struct FusionOutput {
  torch::Tensor fused;  // B x 2C x H x W
  FusionWeights weights;
};

/// Adaptive fusion: softmax(BN(conv(concat(avgpool(F_L), avgpool(F_R))))) weights per modality,
/// applied after the dropout gates.
class AdaptiveFusionImpl : public torch::nn::Module {
 public:
  AdaptiveFusionImpl(int channels, const FusionOptions& options);

  /// Weights for already-gated features.
  FusionWeights adaptive_weights(const torch::Tensor& lidar, const torch::Tensor& radar);

  /// One gate per batch sample; `gates` empty means all-ones.
  FusionOutput forward(const torch::Tensor& lidar, const torch::Tensor& radar, const std::vector<GateState>& gates = {});

  const FusionOptions& options() const { return options_; }
  int channels() const { return channels_; }

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};

 private:
  int channels_;
  FusionOptions options_;
};
TORCH_MODULE(AdaptiveFusion);

}  // namespace sckd
