#pragma once

#include <torch/torch.h>

#include <vector>

#include "sckd/options.hpp"
#include "sckd/voxel.hpp"

namespace sckd {

/// Placement of a BEV tensor on the ground plane: row h spans y, column w spans x.
struct BevGeometry {
  double x_min = 0.0, y_min = 0.0;
  double cell_x = 1.0, cell_y = 1.0;
  int height = 0, width = 0;

  double cell_center_x(int w) const { return x_min + (w + 0.5) * cell_x; }
  double cell_center_y(int h) const { return y_min + (h + 0.5) * cell_y; }
  bool operator==(const BevGeometry&) const = default;
};

BevGeometry bev_geometry(const VoxelGridSpec& grid, int stride);

/// B x C x H x W features with their grid placement.
struct BEVFeatureMap {
  torch::Tensor data;
  BevGeometry geometry;
  Modality modality = Modality::kLidar;
};

/// Encoder input channels per voxel: offset of the member mean from the voxel center (3, in voxel units),
/// scaled non-geometric features, and an occupancy flag.
int encoder_input_channels(Modality m);

/// Per-voxel encoder input rows, size() x encoder_input_channels.
torch::Tensor voxel_input_features(const VoxelSet& voxels, torch::Dtype dtype = torch::kFloat32);

/// Scatters per-voxel rows into a dense 1 x Cin x D x H x W tensor; differentiable w.r.t. `features`.
torch::Tensor scatter_dense(const torch::Tensor& features, const VoxelSet& voxels);

/// Dense B x Cin x D x H x W input for a batch of voxel sets sharing one grid.
torch::Tensor batch_dense(const std::vector<VoxelSet>& batch, torch::Dtype dtype = torch::kFloat32);

/// Dense stand-in for sparse 3D convolution followed by height compression.
class VoxelEncoderImpl : public torch::nn::Module {
 public:
  VoxelEncoderImpl(Modality modality, const VoxelGridSpec& grid, const EncoderOptions& options);

  /// BEV map at voxel resolution (before the stride stage).
  torch::Tensor pre_stride(const torch::Tensor& dense);
  /// B x C x H/s x W/s.
  torch::Tensor forward(const torch::Tensor& dense);

  BevGeometry output_geometry() const { return bev_geometry(grid_, options_.bev_stride); }
  Modality modality() const { return modality_; }
  const VoxelGridSpec& grid() const { return grid_; }
  int out_channels() const { return options_.out_channels; }

 private:
  Modality modality_;
  VoxelGridSpec grid_;
  EncoderOptions options_;
  torch::nn::ModuleList conv3d_{nullptr};
  torch::nn::Conv2d bev_conv_{nullptr};
  torch::nn::Conv2d stride_conv_{nullptr};
};
TORCH_MODULE(VoxelEncoder);

/// voxelize-free convenience: encodes one voxel set to a 1 x C x H x W map.
BEVFeatureMap encode(const VoxelSet& voxels, VoxelEncoder& encoder);

/// Two-scale 2D CNN: a full-resolution branch and a half-resolution branch upsampled back, concatenated.
class MultiScale2dImpl : public torch::nn::Module {
 public:
  MultiScale2dImpl(int in_channels, const NeckOptions& options);

  torch::Tensor forward(const torch::Tensor& x);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return 2 * options_.up_channels; }
  int stride() const { return options_.stride; }

 private:
  int in_channels_;
  NeckOptions options_;
  torch::nn::Sequential block1_{nullptr}, block2_{nullptr};
  torch::nn::Conv2d up1_{nullptr};
  torch::nn::ConvTranspose2d up2_{nullptr};
};
TORCH_MODULE(MultiScale2d);

/// Applies `neck` to a feature map, checking channels and keeping the grid geometry consistent.
BEVFeatureMap multiscale_2d(const BEVFeatureMap& bev, MultiScale2d& neck);

}  // namespace sckd
