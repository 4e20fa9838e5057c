#include "sckd/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "sckd/error.hpp"

namespace sckd {
namespace {

using Rng = std::mt19937_64;

struct ClassPrior {
  std::array<double, 3> size_mean;
  std::array<double, 3> size_std;
  double point_factor;  // share of lidar_points_per_object
  double intensity_mean, intensity_std;
  double rcs_mean, rcs_std;
  double max_speed;
};

// Rough real-world shapes; only the relative ordering matters for the synthetic task.
constexpr std::array<ClassPrior, kNumClasses> kPriors = {{
    {{4.0, 1.7, 1.55}, {0.25, 0.1, 0.08}, 1.0, 0.65, 0.08, 12.0, 3.0, 10.0},  // car
    {{0.8, 0.6, 1.75}, {0.08, 0.06, 0.1}, 0.3, 0.30, 0.06, -4.0, 2.0, 1.5},   // pedestrian
    {{1.8, 0.6, 1.7}, {0.1, 0.05, 0.08}, 0.45, 0.45, 0.08, 2.0, 2.5, 6.0},    // cyclist
}};

double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Value stored on disk is float32; keep boxes exactly representable.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct Solid {
  std::array<double, 3> center;
  std::array<double, 3> size;
  double yaw;
  double intensity_mean, intensity_std;
  double rcs;
  std::array<double, 2> velocity;
};

struct SurfacePoint {
  std::array<double, 3> p;
  int solid;  // index into solids, -1 for ground
};

// Samples points uniformly over the faces of a box that face the sensor at the origin (sides) plus its top.
void sample_visible_surface(const Solid& s, int solid_index, int count, Rng& rng, std::vector<SurfacePoint>& out) {
  const double c = std::cos(s.yaw), sn = std::sin(s.yaw);
  const double hl = s.size[0] / 2, hw = s.size[1] / 2, hh = s.size[2] / 2;
  struct Face {
    int kind;  // 0: +x, 1: -x, 2: +y, 3: -y, 4: top (local frame)
    double area;
  };
  std::vector<Face> faces;
  auto side_visible = [&](double nx_local, double ny_local, double offset) {
    const double nx = c * nx_local - sn * ny_local;
    const double ny = sn * nx_local + c * ny_local;
    const double fx = s.center[0] + nx * offset, fy = s.center[1] + ny * offset;
    return nx * (0.0 - fx) + ny * (0.0 - fy) > 0.0;
  };
  if (side_visible(1, 0, hl)) faces.push_back({0, s.size[1] * s.size[2]});
  if (side_visible(-1, 0, hl)) faces.push_back({1, s.size[1] * s.size[2]});
  if (side_visible(0, 1, hw)) faces.push_back({2, s.size[0] * s.size[2]});
  if (side_visible(0, -1, hw)) faces.push_back({3, s.size[0] * s.size[2]});
  faces.push_back({4, s.size[0] * s.size[1]});

  std::vector<double> areas;
  for (const Face& f : faces) areas.push_back(f.area);
  std::discrete_distribution<int> pick(areas.begin(), areas.end());
  for (int i = 0; i < count; ++i) {
    const Face& f = faces[pick(rng)];
    double lx = 0, ly = 0, lz = 0;
    const double u = uniform(rng, -1.0, 1.0), v = uniform(rng, -1.0, 1.0);
    switch (f.kind) {
      case 0: lx = hl, ly = u * hw, lz = v * hh; break;
      case 1: lx = -hl, ly = u * hw, lz = v * hh; break;
      case 2: lx = u * hl, ly = hw, lz = v * hh; break;
      case 3: lx = u * hl, ly = -hw, lz = v * hh; break;
      default: lx = u * hl, ly = v * hw, lz = hh; break;
    }
    out.push_back({{s.center[0] + c * lx - sn * ly, s.center[1] + sn * lx + c * ly, s.center[2] + lz}, solid_index});
  }
}

bool overlaps(const std::vector<Solid>& placed, const Solid& s, double margin) {
  const double rs = std::hypot(s.size[0], s.size[1]) / 2;
  for (const Solid& o : placed) {
    const double ro = std::hypot(o.size[0], o.size[1]) / 2;
    if (std::hypot(o.center[0] - s.center[0], o.center[1] - s.center[1]) < rs + ro + margin) return true;
  }
  return false;
}

std::array<double, 3> truncated_noise(Rng& rng, double sigma) {
  // Norm capped at 3 sigma so every radar return stays near the surface it came from.
  if (sigma <= 0.0) return {0, 0, 0};
  for (;;) {
    std::array<double, 3> n = {normal(rng, 0, sigma), normal(rng, 0, sigma), normal(rng, 0, sigma)};
    if (std::hypot(n[0], n[1], n[2]) <= 3.0 * sigma) return n;
  }
}

}  // namespace

void validate(const SceneSpec& spec) {
  for (int n : spec.n_objects)
    if (n < 0) throw ConfigError("scene.n_objects must be non-negative");
  if (!(spec.x_max > spec.x_min) || !(spec.y_max > spec.y_min)) throw ConfigError("scene area bounds are empty");
  if (spec.x_min < 0.5) throw ConfigError("scene.x_min must keep objects in front of the sensor (>= 0.5 m)");
  if (spec.lidar_points_per_object <= 0) throw ConfigError("scene.lidar_points_per_object must be positive");
  if (!(spec.background_density > 0.0)) throw ConfigError("scene.background_density must be positive");
  if (spec.n_clutter < 0) throw ConfigError("scene.n_clutter must be non-negative");
  if (!(spec.radar_density_ratio > 0.0 && spec.radar_density_ratio <= 0.1))
    throw ConfigError("scene.radar_density_ratio must lie in (0, 0.1]");
  if (!(spec.radar_sigma >= 0.0)) throw ConfigError("scene.radar_sigma must be non-negative");
  if (!(spec.ghost_rate >= 0.0 && spec.ghost_rate < 1.0)) throw ConfigError("scene.ghost_rate must lie in [0, 1)");
}

std::uint64_t frame_seed(std::uint64_t base_seed, std::uint32_t frame_id) {
  // splitmix64 of the pair
  std::uint64_t z = base_seed * 0x9E3779B97F4A7C15ULL + frame_id + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Scene generate_scene(const SceneSpec& spec, std::uint32_t frame_id) {
  validate(spec);
  Rng rng(spec.seed);

  std::vector<Solid> solids;
  std::vector<Box3D> labels;
  const double area_pad = 1.0;
  for (int k = 0; k < kNumClasses; ++k) {
    const ClassPrior& prior = kPriors[k];
    for (int i = 0; i < spec.n_objects[k]; ++i) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        Solid s;
        for (int d = 0; d < 3; ++d)
          s.size[d] = f32(std::max(0.2, normal(rng, prior.size_mean[d], prior.size_std[d])));
        s.center = {f32(uniform(rng, spec.x_min + area_pad, spec.x_max - area_pad)),
                    f32(uniform(rng, spec.y_min + area_pad, spec.y_max - area_pad)),
                    f32(spec.ground_z + s.size[2] / 2)};
        s.yaw = f32(wrap_angle(uniform(rng, -std::numbers::pi, std::numbers::pi)));
        if (s.yaw >= std::numbers::pi) s.yaw = -std::numbers::pi;
        s.intensity_mean = prior.intensity_mean;
        s.intensity_std = prior.intensity_std;
        s.rcs = normal(rng, prior.rcs_mean, prior.rcs_std);
        const double speed = uniform(rng, 0.0, prior.max_speed);
        s.velocity = {speed * std::cos(s.yaw), speed * std::sin(s.yaw)};
        if (overlaps(solids, s, 0.5)) continue;
        solids.push_back(s);
        labels.push_back(Box3D{s.center, s.size, s.yaw, static_cast<ClassId>(k), std::nullopt});
        break;
      }
    }
  }
  const std::size_t n_labeled_solids = solids.size();

  // Unlabeled static structures: poles, walls, bushes.
  for (int i = 0; i < spec.n_clutter; ++i) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      Solid s;
      const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
      if (kind == 0) {
        s.size = {0.3, 0.3, uniform(rng, 2.5, 4.0)};
      } else if (kind == 1) {
        s.size = {uniform(rng, 2.0, 6.0), uniform(rng, 0.2, 0.4), uniform(rng, 1.0, 2.5)};
      } else {
        s.size = {uniform(rng, 0.8, 2.5), uniform(rng, 0.8, 2.0), uniform(rng, 0.4, 1.2)};
      }
      s.center = {uniform(rng, spec.x_min + area_pad, spec.x_max - area_pad),
                  uniform(rng, spec.y_min + area_pad, spec.y_max - area_pad), spec.ground_z + s.size[2] / 2};
      s.yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
      s.intensity_mean = 0.5;
      s.intensity_std = 0.15;
      s.rcs = normal(rng, 6.0, 5.0);
      s.velocity = {0.0, 0.0};
      if (overlaps(solids, s, 0.5)) continue;
      solids.push_back(s);
      break;
    }
  }

  std::vector<SurfacePoint> surface;
  for (std::size_t i = 0; i < solids.size(); ++i) {
    const Solid& s = solids[i];
    const double range = std::hypot(s.center[0], s.center[1]);
    const double falloff = std::clamp(10.0 / range, 0.3, 1.0);
    const double factor = i < n_labeled_solids ? kPriors[static_cast<int>(labels[i].class_id)].point_factor : 0.6;
    const int count = std::max(3, static_cast<int>(std::lround(spec.lidar_points_per_object * factor * falloff)));
    sample_visible_surface(s, static_cast<int>(i), count, rng, surface);
  }
  const std::size_t n_structure = surface.size();
  const double ground_area = (spec.x_max - spec.x_min) * (spec.y_max - spec.y_min);
  const auto n_ground = static_cast<std::size_t>(std::lround(ground_area * spec.background_density));
  for (std::size_t i = 0; i < n_ground; ++i) {
    surface.push_back({{uniform(rng, spec.x_min, spec.x_max), uniform(rng, spec.y_min, spec.y_max),
                        spec.ground_z + normal(rng, 0.0, 0.02)},
                       -1});
  }

  Scene scene;
  scene.labels = labels;
  scene.lidar.frame_id = frame_id;
  scene.lidar.modality = Modality::kLidar;
  scene.lidar.labels = labels;
  scene.lidar.points.reserve(surface.size() * 4);
  for (const SurfacePoint& sp : surface) {
    double intensity = sp.solid < 0 ? normal(rng, 0.1, 0.04)
                                    : normal(rng, solids[sp.solid].intensity_mean, solids[sp.solid].intensity_std);
    intensity = std::clamp(intensity, 0.0, 1.0);
    scene.lidar.points.insert(scene.lidar.points.end(),
                              {static_cast<float>(sp.p[0]), static_cast<float>(sp.p[1]), static_cast<float>(sp.p[2]),
                               static_cast<float>(intensity)});
  }

  // Radar: sparse noisy subsample of structure surfaces (ground is filtered like real radar does), plus ghosts.
  scene.radar.frame_id = frame_id;
  scene.radar.modality = Modality::kRadar;
  scene.radar.labels = labels;
  const std::size_t budget =
      static_cast<std::size_t>(std::floor(spec.radar_density_ratio * static_cast<double>(surface.size())));
  const std::size_t n_ghost_target = static_cast<std::size_t>(std::lround(spec.ghost_rate * static_cast<double>(budget)));
  const std::size_t n_true = std::min(budget - n_ghost_target, n_structure);
  std::vector<std::size_t> order(n_structure);
  for (std::size_t i = 0; i < n_structure; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n_true);
  std::sort(order.begin(), order.end());

  std::vector<std::array<double, 5>> radar;
  for (std::size_t idx : order) {
    const SurfacePoint& sp = surface[idx];
    const Solid& s = solids[sp.solid];
    const auto noise = truncated_noise(rng, spec.radar_sigma);
    std::array<double, 3> p = {sp.p[0] + noise[0], sp.p[1] + noise[1], sp.p[2] + noise[2]};
    const double r = std::max(1e-6, std::hypot(p[0], p[1], p[2]));
    const double doppler = (s.velocity[0] * p[0] + s.velocity[1] * p[1]) / r + normal(rng, 0.0, 0.1);
    const double rcs = s.rcs + normal(rng, 0.0, 1.0);
    radar.push_back({p[0], p[1], p[2], rcs, doppler});
  }
  const std::size_t n_ghost = radar.empty() ? 0 : n_ghost_target;
  if (n_ghost > 0) {
    // One vertical reflector per scene: n . p = d with n horizontal.
    const double theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const double nx = std::cos(theta), ny = std::sin(theta);
    const double d = uniform(rng, -5.0, 5.0) + nx * (spec.x_min + spec.x_max) / 2 + ny * (spec.y_min + spec.y_max) / 2;
    const std::size_t n_src = radar.size();
    for (std::size_t g = 0; g < n_ghost; ++g) {
      const auto& src = radar[std::uniform_int_distribution<std::size_t>(0, n_src - 1)(rng)];
      const double dist = nx * src[0] + ny * src[1] - d;
      radar.push_back({src[0] - 2 * dist * nx, src[1] - 2 * dist * ny, src[2], src[3] - 6.0, src[4]});
    }
  }
  scene.radar.points.reserve(radar.size() * 5);
  for (const auto& row : radar)
    for (double v : row) scene.radar.points.push_back(static_cast<float>(v));
  return scene;
}

AugmentParams draw_augmentation(std::uint64_t seed) {
  Rng rng(seed);
  AugmentParams p;
  p.flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  p.scale = uniform(rng, 0.95, 1.05);
  return p;
}

Box3D augment_box(const Box3D& box, const AugmentParams& params) {
  Box3D b = box;
  if (params.flip) {
    b.center[1] = -b.center[1];
    b.yaw = wrap_angle(-b.yaw);
  }
  for (double& v : b.center) v *= params.scale;
  for (double& v : b.size) v *= params.scale;
  return b;
}

namespace {

void augment_frame(PointCloudFrame& f, const AugmentParams& params) {
  const std::size_t n = f.size();
  const float s = static_cast<float>(params.scale);
  for (std::size_t i = 0; i < n; ++i) {
    float* p = f.point(i);
    if (params.flip) p[1] = -p[1];
    p[0] *= s;
    p[1] *= s;
    p[2] *= s;
  }
  if (f.labels)
    for (Box3D& b : *f.labels) b = augment_box(b, params);
}

}  // namespace

FramePair apply_augmentation(const FramePair& pair, const AugmentParams& params) {
  SCKD_EXPECT(pair.lidar.frame_id == pair.radar.frame_id, "augment_pair: frames are not paired");
  FramePair out = pair;
  if (!params.flip && params.scale == 1.0) return out;
  augment_frame(out.lidar, params);
  augment_frame(out.radar, params);
  return out;
}

FramePair augment_pair(const FramePair& pair, std::uint64_t seed) {
  return apply_augmentation(pair, draw_augmentation(seed));
}

}  // namespace sckd
