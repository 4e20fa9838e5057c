#pragma once

#include <array>
#include <vector>

#include "sckd/types.hpp"

namespace sckd {

struct Vec2 {
  double x, y;
};

/// Counter-clockwise BEV footprint of a box.
std::array<Vec2, 4> bev_corners(const Box3D& b);

/// Area of the intersection of two convex counter-clockwise polygons (Sutherland-Hodgman clipping).
double convex_intersection_area(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip);

/// BEV footprint intersection area of two boxes.
double bev_intersection(const Box3D& a, const Box3D& b);

/// Rotated-rectangle IoU of the BEV footprints. Zero-area boxes are a contract violation.
double iou_bev(const Box3D& a, const Box3D& b);

/// BEV intersection times z-overlap, over union volume.
double iou_3d(const Box3D& a, const Box3D& b);

/// True when the BEV point lies inside the box footprint.
bool contains_bev(const Box3D& b, double x, double y);

}  // namespace sckd
