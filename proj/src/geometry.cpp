#include "sckd/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "sckd/error.hpp"

namespace sckd {
namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double polygon_area(const std::vector<Vec2>& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec2& a = p[i];
    const Vec2& b = p[(i + 1) % p.size()];
    s += a.x * b.y - a.y * b.x;
  }
  return 0.5 * std::abs(s);
}

void check_box(const Box3D& b) {
  SCKD_EXPECT(b.size[0] > 0.0 && b.size[1] > 0.0 && b.size[2] > 0.0, "IoU of a degenerate (zero-size) box");
}

}  // namespace

std::array<Vec2, 4> bev_corners(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = b.size[0] / 2, hw = b.size[1] / 2;
  const double lx[4] = {hl, -hl, -hl, hl};
  const double ly[4] = {hw, hw, -hw, -hw};
  std::array<Vec2, 4> out{};
  for (int i = 0; i < 4; ++i) out[i] = {b.center[0] + c * lx[i] - s * ly[i], b.center[1] + s * lx[i] + c * ly[i]};
  return out;
}

double convex_intersection_area(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip) {
  std::vector<Vec2> out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Vec2& a = clip[i];
    const Vec2& b = clip[(i + 1) % clip.size()];
    std::vector<Vec2> in;
    in.swap(out);
    for (std::size_t j = 0; j < in.size(); ++j) {
      const Vec2& p = in[j];
      const Vec2& q = in[(j + 1) % in.size()];
      const double dp = cross(a, b, p), dq = cross(a, b, q);
      if (dp >= 0) out.push_back(p);
      if ((dp >= 0) != (dq >= 0)) {
        const double t = dp / (dp - dq);
        out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
  }
  return out.size() < 3 ? 0.0 : polygon_area(out);
}

double bev_intersection(const Box3D& a, const Box3D& b) {
  const double ra = std::hypot(a.size[0], a.size[1]) / 2, rb = std::hypot(b.size[0], b.size[1]) / 2;
  if (std::hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) > ra + rb) return 0.0;
  const auto ca = bev_corners(a), cb = bev_corners(b);
  return convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
}

double iou_bev(const Box3D& a, const Box3D& b) {
  check_box(a);
  check_box(b);
  const double inter = bev_intersection(a, b);
  const double uni = a.size[0] * a.size[1] + b.size[0] * b.size[1] - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  check_box(a);
  check_box(b);
  const double za0 = a.center[2] - a.size[2] / 2, za1 = a.center[2] + a.size[2] / 2;
  const double zb0 = b.center[2] - b.size[2] / 2, zb1 = b.center[2] + b.size[2] / 2;
  const double dz = std::min(za1, zb1) - std::max(za0, zb0);
  if (dz <= 0.0) return 0.0;
  const double inter = bev_intersection(a, b) * dz;
  const double va = a.size[0] * a.size[1] * a.size[2], vb = b.size[0] * b.size[1] * b.size[2];
  return std::clamp(inter / (va + vb - inter), 0.0, 1.0);
}

bool contains_bev(const Box3D& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.center[0], dy = y - b.center[1];
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::abs(lx) <= b.size[0] / 2 && std::abs(ly) <= b.size[1] / 2;
}

}  // namespace sckd
