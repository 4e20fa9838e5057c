#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sckd/types.hpp"
#include "sckd/voxel.hpp"

namespace sckd {

/// Dense voxel encoder: 3D convs, z folded into channels, one 2D conv, then the BEV stride stage.
struct EncoderOptions {
  std::vector<int> conv3d_channels{8, 8};
  int out_channels = 32;  // shared by the lidar, radar and student encoders
  int bev_stride = 2;     // 1 or 2

  bool operator==(const EncoderOptions&) const = default;
};

/// Two-scale 2D block feeding the detection head.
struct NeckOptions {
  int mid_channels = 32;
  int up_channels = 32;  // output has 2 * up_channels channels
  int stride = 1;        // total stride of the block; 1 or 2

  bool operator==(const NeckOptions&) const = default;
};

struct AnchorConfig {
  // l, w, h per class (car, pedestrian, cyclist).
  std::array<std::array<double, 3>, kNumClasses> size{{{3.9, 1.6, 1.56}, {0.8, 0.6, 1.73}, {1.76, 0.6, 1.73}}};
  std::array<double, kNumClasses> z_center{-0.82, -0.735, -0.735};
  std::array<double, kNumClasses> pos_iou{0.6, 0.5, 0.5};
  std::array<double, kNumClasses> neg_iou{0.45, 0.35, 0.35};
  std::vector<double> yaws{0.0, 1.5707963267948966};

  int anchors_per_cell() const { return kNumClasses * static_cast<int>(yaws.size()); }
  bool operator==(const AnchorConfig&) const = default;
};

enum class FusionWeightMode { kPerChannel, kScalar };

struct FusionOptions {
  double p_drop = 0.2;        // probability that one modality is dropped
  double p_lidar_drop = 0.2;  // given a drop, probability that it is the lidar one
  FusionWeightMode weight_mode = FusionWeightMode::kPerChannel;
  bool random_dropout = true;  // ablation switch for the dropout gate

  bool operator==(const FusionOptions&) const = default;
};

struct DistillConfig {
  double sigma = 0.1;    // pseudo-label confidence threshold (strict)
  double alpha = 3e-4;   // lidar-to-radar feature distillation weight
  double beta = 3e-4;    // fusion-to-radar feature distillation weight
  bool use_ssod = true;  // pseudo-label output supervision
  bool use_gt = false;   // ground-truth supervision (ablation rows only)
  int adapter_kernel = 3;
  bool adapter_identity_init = true;

  bool operator==(const DistillConfig&) const = default;
};

struct PostprocessOptions {
  double conf_min = 0.05;
  double nms_iou = 0.1;
  int pre_nms_max = 256;
  int post_nms_max = 64;

  bool operator==(const PostprocessOptions&) const = default;
};

struct TrainOptions {
  int teacher_epochs = 80;
  int student_epochs = 80;
  int batch_size = 4;
  bool augment = true;

  bool operator==(const TrainOptions&) const = default;
};

/// Everything that fixes network shapes.
struct ModelConfig {
  VoxelGridSpec lidar_grid{};
  VoxelGridSpec radar_grid{{0.0, -12.8, -3.0}, {25.6, 12.8, 1.0}, {0.4, 0.4, 1.0}, 10};
  EncoderOptions encoder{};
  NeckOptions neck{};
  AnchorConfig anchors{};
  FusionOptions fusion{};

  bool operator==(const ModelConfig&) const = default;
};

/// Grids must share range and voxel size; strides must divide the BEV dims. Throws ConfigError.
void validate(const ModelConfig& cfg);
void validate(const AnchorConfig& cfg);
void validate(const DistillConfig& cfg);

}  // namespace sckd
