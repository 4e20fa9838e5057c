#pragma once

#include <torch/torch.h>

#include <vector>

#include "sckd/backbone.hpp"
#include "sckd/distill.hpp"
#include "sckd/fusion.hpp"
#include "sckd/head.hpp"
#include "sckd/options.hpp"

namespace sckd {

struct TeacherOutput {
  torch::Tensor lidar_bev;  // F_L, B x C x H x W
  torch::Tensor radar_bev;  // F_R
  torch::Tensor fused;      // B x 2C x H x W
  FusionWeights weights;
  HeadOutput head;
};

/// Lidar + radar encoders, adaptive fusion, 2D neck and detection head.
class TeacherNetImpl : public torch::nn::Module {
 public:
  explicit TeacherNetImpl(const ModelConfig& cfg);

  TeacherOutput forward(const torch::Tensor& lidar_dense, const torch::Tensor& radar_dense,
                        const std::vector<GateState>& gates = {});

  const ModelConfig& config() const { return cfg_; }
  BevGeometry head_geometry() const;

  VoxelEncoder lidar_encoder{nullptr};
  VoxelEncoder radar_encoder{nullptr};
  AdaptiveFusion fusion{nullptr};
  MultiScale2d neck{nullptr};
  DetectHead head{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(TeacherNet);

struct StudentOutput {
  torch::Tensor radar_bev;  // F_R^S
  HeadOutput head;
};

/// Radar-only detector plus the three adapters used while distilling.
class StudentNetImpl : public torch::nn::Module {
 public:
  StudentNetImpl(const ModelConfig& cfg, const DistillConfig& distill);

  StudentOutput forward(const torch::Tensor& radar_dense);

  const ModelConfig& config() const { return cfg_; }
  BevGeometry head_geometry() const;

  VoxelEncoder radar_encoder{nullptr};
  MultiScale2d neck{nullptr};
  DetectHead head{nullptr};
  Adapter adapter_lidar{nullptr};         // lidar-to-radar distillation
  Adapter adapter_fusion_lidar{nullptr};  // fusion-to-radar, lidar half
  Adapter adapter_fusion_radar{nullptr};  // fusion-to-radar, radar half

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(StudentNet);

/// Parameters and buffers in registration order, for hashing and checkpoints.
std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& m);

/// FNV-1a over every parameter/buffer name and byte.
std::uint64_t state_hash(const torch::nn::Module& m);

}  // namespace sckd
