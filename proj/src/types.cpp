#include "sckd/types.hpp"

#include <cmath>
#include <numbers>

#include "sckd/error.hpp"

namespace sckd {

std::string_view to_string(Modality m) { return m == Modality::kLidar ? "LIDAR" : "RADAR"; }

std::string_view to_string(ClassId c) {
  switch (c) {
    case ClassId::kCar:
      return "CAR";
    case ClassId::kPedestrian:
      return "PEDESTRIAN";
    case ClassId::kCyclist:
      return "CYCLIST";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kLabeledTrain:
      return "labeled_train";
    case Split::kUnlabeledTrain:
      return "unlabeled_train";
    case Split::kVal:
      return "val";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "labeled_train") return Split::kLabeledTrain;
  if (s == "unlabeled_train") return Split::kUnlabeledTrain;
  if (s == "val") return Split::kVal;
  throw ParseError("unknown split tag '" + std::string(s) + "'");
}

ClassId class_from_string(std::string_view s) {
  for (ClassId c : kAllClasses)
    if (to_string(c) == s) return c;
  throw ParseError("unknown class '" + std::string(s) + "'");
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, kTwoPi);
  if (r < 0) r += kTwoPi;
  r -= std::numbers::pi;
  // fmod rounding can land exactly on +pi
  if (r >= std::numbers::pi) r -= kTwoPi;
  return r;
}

void validate_box(const Box3D& b) {
  for (double v : b.center) SCKD_EXPECT(std::isfinite(v), "box center must be finite");
  for (double v : b.size) SCKD_EXPECT(std::isfinite(v) && v > 0.0, "box size must be positive");
  SCKD_EXPECT(b.yaw >= -std::numbers::pi && b.yaw < std::numbers::pi, "box yaw outside [-pi, pi)");
  if (b.score) SCKD_EXPECT(*b.score >= 0.0 && *b.score <= 1.0, "detection score outside [0, 1]");
}

}  // namespace sckd
