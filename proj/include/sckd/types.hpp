#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sckd {

enum class Modality : std::uint8_t { kLidar = 0, kRadar = 1 };

enum class ClassId : std::uint8_t { kCar = 0, kPedestrian = 1, kCyclist = 2 };
inline constexpr int kNumClasses = 3;
inline constexpr std::array<ClassId, kNumClasses> kAllClasses = {ClassId::kCar, ClassId::kPedestrian,
                                                                 ClassId::kCyclist};

enum class Split : std::uint8_t { kLabeledTrain = 0, kUnlabeledTrain = 1, kVal = 2 };

std::string_view to_string(Modality m);
std::string_view to_string(ClassId c);
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);
ClassId class_from_string(std::string_view s);

/// Feature columns per point: lidar (x, y, z, intensity), radar (x, y, z, rcs, doppler).
inline constexpr int feature_count(Modality m) { return m == Modality::kLidar ? 4 : 5; }

/// Oriented 3D box. `score` is set only for detections.
struct Box3D {
  std::array<double, 3> center{};
  std::array<double, 3> size{1.0, 1.0, 1.0};  // l, w, h
  double yaw = 0.0;                            // [-pi, pi)
  ClassId class_id = ClassId::kCar;
  std::optional<double> score;

  bool operator==(const Box3D&) const = default;
};

using Detection = Box3D;

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

/// Throws ContractViolation on non-positive size or out-of-range yaw/score.
void validate_box(const Box3D& b);

/// One sensor sweep; points are row-major N x F.
struct PointCloudFrame {
  std::uint32_t frame_id = 0;
  Modality modality = Modality::kLidar;
  std::vector<float> points;
  std::optional<std::vector<Box3D>> labels;
  Split split = Split::kLabeledTrain;

  int num_features() const { return feature_count(modality); }
  std::size_t size() const { return points.size() / static_cast<std::size_t>(num_features()); }
  const float* point(std::size_t i) const { return points.data() + i * num_features(); }
  float* point(std::size_t i) { return points.data() + i * num_features(); }

  bool operator==(const PointCloudFrame&) const = default;
};

/// Lidar and radar sweeps of the same scene.
struct FramePair {
  PointCloudFrame lidar;
  PointCloudFrame radar;

  const std::optional<std::vector<Box3D>>& labels() const { return lidar.labels; }
  std::uint32_t frame_id() const { return lidar.frame_id; }
};

}  // namespace sckd
