#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sckd/types.hpp"

namespace sckd {

/// Parameters of the synthetic paired-scene generator.
struct SceneSpec {
  std::array<int, kNumClasses> n_objects{4, 3, 3};  // per class: car, pedestrian, cyclist
  // BEV area in which objects, clutter and ground are placed (meters).
  double x_min = 2.0, x_max = 24.0, y_min = -11.0, y_max = 11.0;
  double ground_z = -1.6;
  int lidar_points_per_object = 220;  // for a car at <= 10 m; other classes and range scale this down
  double background_density = 3.0;    // ground points per square meter
  int n_clutter = 6;                  // unlabeled static structures
  double radar_density_ratio = 0.08;  // radar points / lidar points, (0, 0.1]
  double radar_sigma = 0.08;          // radar position noise per axis (m)
  double ghost_rate = 0.1;            // fraction of radar points that are multipath ghosts
  std::uint64_t seed = 0;

  bool operator==(const SceneSpec&) const = default;
};

/// Throws ConfigError when a field violates its range.
void validate(const SceneSpec& spec);

struct Scene {
  PointCloudFrame lidar;
  PointCloudFrame radar;
  std::vector<Box3D> labels;
};

/// Deterministic function of `spec` (including its seed).
Scene generate_scene(const SceneSpec& spec, std::uint32_t frame_id = 0);

/// Seed for frame `frame_id` of a dataset built from `base_seed`.
std::uint64_t frame_seed(std::uint64_t base_seed, std::uint32_t frame_id);

struct AugmentParams {
  bool flip = false;   // y -> -y, yaw -> -yaw
  double scale = 1.0;  // uniform scale in [0.95, 1.05]
};

AugmentParams draw_augmentation(std::uint64_t seed);

/// Applies the same flip/scale to both sweeps and to the labels they carry.
FramePair apply_augmentation(const FramePair& pair, const AugmentParams& params);

/// draw_augmentation + apply_augmentation.
FramePair augment_pair(const FramePair& pair, std::uint64_t seed);

/// Transforms a single box the way apply_augmentation does.
Box3D augment_box(const Box3D& box, const AugmentParams& params);

}  // namespace sckd
