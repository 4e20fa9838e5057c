#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sckd/types.hpp"

namespace sckd {

struct VoxelGridSpec {
  std::array<double, 3> range_min{0.0, -12.8, -3.0};
  std::array<double, 3> range_max{25.6, 12.8, 1.0};
  std::array<double, 3> voxel_size{0.4, 0.4, 1.0};
  int max_points_per_voxel = 5;

  /// Cells per axis in (x, y, z) order.
  std::array<int, 3> dims() const;
  bool operator==(const VoxelGridSpec&) const = default;
};

/// Throws ConfigError unless every axis has a positive extent that is an integer multiple of the voxel size.
void validate(const VoxelGridSpec& grid);

/// Non-empty voxels of one frame, sorted by (z, y, x).
struct VoxelSet {
  VoxelGridSpec grid;
  Modality modality = Modality::kLidar;
  std::vector<std::array<std::int32_t, 3>> coords;  // (z, y, x)
  std::vector<float> features;                      // row-major size() x num_features: member mean
  std::vector<std::int32_t> counts;                 // members kept (<= cap)

  int num_features() const { return feature_count(modality); }
  std::size_t size() const { return coords.size(); }
  bool operator==(const VoxelSet&) const = default;
};

/// Mean-of-members voxelization. Out-of-range points are discarded; a voxel keeps the first
/// `max_points_per_voxel` points in input order.
VoxelSet voxelize(const PointCloudFrame& frame, const VoxelGridSpec& grid);

}  // namespace sckd
