#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sckd/types.hpp"

namespace sckd {

enum class ApMode { kAP11, kAP40 };
enum class IouKind { kBev, k3d };

/// Axis-aligned BEV rectangle, meters.
struct Region {
  double x_min, x_max, y_min, y_max;
  bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
  bool operator==(const Region&) const = default;
};

struct EvalConfig {
  ApMode mode = ApMode::kAP11;
  std::array<double, kNumClasses> iou_threshold{0.5, 0.25, 0.25};
  IouKind iou_kind = IouKind::k3d;
  std::optional<Region> region;                // applied by ap_class
  Region corridor{0.0, 25.0, -4.0, 4.0};       // second region reported by map_eval

  bool operator==(const EvalConfig&) const = default;
};

void validate(const EvalConfig& cfg);

/// Recall sample points of the interpolation grid: {0, 0.1, ..., 1} or {1/40, ..., 1}.
std::vector<double> recall_grid(ApMode mode);

/// Boxes of one frame; detections carry scores.
struct FrameBoxes {
  std::uint32_t frame_id = 0;
  std::vector<Box3D> boxes;
};

/// AP in percent for one class, pooling detections over frames; frames are matched by position.
double ap_pooled(const std::vector<FrameBoxes>& dets, const std::vector<FrameBoxes>& gts, ClassId cls,
                 const EvalConfig& cfg);

/// Single-frame AP for `cls`; boxes of other classes are ignored.
double ap_class(const std::vector<Detection>& dets, const std::vector<Box3D>& gts, ClassId cls, const EvalConfig& cfg);

struct RegionReport {
  std::array<std::optional<double>, kNumClasses> ap;  // empty when the class has neither GT nor detections
  double map = 0.0;
};

struct EvalReport {
  RegionReport entire;
  RegionReport corridor;
};

/// Per-class AP and mAP over the entire area and the corridor. Frame sets must match by frame_id.
EvalReport map_eval(const std::vector<FrameBoxes>& dets, const std::vector<FrameBoxes>& gts, const EvalConfig& cfg);

/// Human-readable table.
std::string format_report_text(const EvalReport& r, const EvalConfig& cfg);
/// `key=value` lines, e.g. `entire.CAR=41.2345`, `corridor.mAP=...`.
std::string format_report_kv(const EvalReport& r);

}  // namespace sckd
