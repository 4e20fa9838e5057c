#include "sckd/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sckd/error.hpp"

namespace sckd {

std::array<int, 3> VoxelGridSpec::dims() const {
  std::array<int, 3> d{};
  for (int a = 0; a < 3; ++a)
    d[a] = static_cast<int>(std::lround((range_max[a] - range_min[a]) / voxel_size[a]));
  return d;
}

void validate(const VoxelGridSpec& grid) {
  for (int a = 0; a < 3; ++a) {
    if (!(grid.range_max[a] > grid.range_min[a])) throw ConfigError("voxel grid range_max must exceed range_min");
    if (!(grid.voxel_size[a] > 0.0)) throw ConfigError("voxel size must be positive");
    const double cells = (grid.range_max[a] - grid.range_min[a]) / grid.voxel_size[a];
    if (std::abs(cells - std::round(cells)) > 1e-6)
      throw ConfigError("voxel grid extent is not a whole number of voxels on axis " + std::to_string(a));
  }
  if (grid.max_points_per_voxel <= 0) throw ConfigError("max_points_per_voxel must be positive");
}

VoxelSet voxelize(const PointCloudFrame& frame, const VoxelGridSpec& grid) {
  validate(grid);
  const auto d = grid.dims();
  const int nf = frame.num_features();
  struct Acc {
    std::vector<double> sum;
    int count = 0;
  };
  std::map<std::int64_t, Acc> cells;
  const std::size_t n = frame.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float* p = frame.point(i);
    std::int64_t idx[3];
    bool inside = true;
    for (int a = 0; a < 3 && inside; ++a) {
      const double c = std::floor((static_cast<double>(p[a]) - grid.range_min[a]) / grid.voxel_size[a]);
      inside = c >= 0 && c < d[a];
      idx[a] = static_cast<std::int64_t>(c);
    }
    if (!inside) continue;
    const std::int64_t key = (idx[2] * d[1] + idx[1]) * d[0] + idx[0];
    Acc& acc = cells[key];
    if (acc.count >= grid.max_points_per_voxel) continue;
    if (acc.sum.empty()) acc.sum.assign(static_cast<std::size_t>(nf), 0.0);
    for (int f = 0; f < nf; ++f) acc.sum[f] += p[f];
    ++acc.count;
  }
  VoxelSet vs;
  vs.grid = grid;
  vs.modality = frame.modality;
  vs.coords.reserve(cells.size());
  vs.features.reserve(cells.size() * static_cast<std::size_t>(nf));
  for (const auto& [key, acc] : cells) {
    const auto x = static_cast<std::int32_t>(key % d[0]);
    const auto y = static_cast<std::int32_t>((key / d[0]) % d[1]);
    const auto z = static_cast<std::int32_t>(key / (static_cast<std::int64_t>(d[0]) * d[1]));
    vs.coords.push_back({z, y, x});
    for (int f = 0; f < nf; ++f) vs.features.push_back(static_cast<float>(acc.sum[f] / acc.count));
    vs.counts.push_back(acc.count);
  }
  return vs;
}

}  // namespace sckd
