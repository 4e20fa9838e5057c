#include <torch/torch.h>
#undef CHECK  // c10 logging macro, doctest defines its own

#include <doctest.h>

#include <random>

#include "common.hpp"
#include "sckd/backbone.hpp"
#include "sckd/error.hpp"
#include "sckd/scene.hpp"

using namespace sckd;

namespace {

VoxelGridSpec small_grid() {
  VoxelGridSpec g;
  g.range_min = {0.0, -3.2, -3.0};
  g.range_max = {6.4, 3.2, 1.0};
  return g;
}

PointCloudFrame lidar(std::vector<float> pts) {
  PointCloudFrame f;
  f.modality = Modality::kLidar;
  f.points = std::move(pts);
  return f;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST_CASE("voxelize: singleton, mean and range filter") {
  const VoxelGridSpec g = small_grid();
  const VoxelSet one = voxelize(lidar({0.1f, -3.1f, -2.9f, 0.7f}), g);
  REQUIRE(one.size() == 1);
  CHECK((one.coords[0] == std::array<std::int32_t, 3>{0, 0, 0}));
  CHECK((one.features == std::vector<float>{0.1f, -3.1f, -2.9f, 0.7f}));

  const VoxelSet two = voxelize(lidar({1.0f, 0.1f, 0.0f, 0.2f, 1.1f, 0.2f, 0.5f, 0.6f}), g);
  REQUIRE(two.size() == 1);
  CHECK(two.features[3] == doctest::Approx(0.4));
  CHECK(two.counts[0] == 2);

  const VoxelSet out = voxelize(lidar({1.0f, 0.1f, 0.0f, 0.2f, 6.5f, 0.1f, 0.0f, 0.2f}), g);
  CHECK(out.size() == 1);
}

TEST_CASE("voxelize: cap and ordering") {
  const VoxelGridSpec g = small_grid();
  std::vector<float> pts;
  for (int i = 0; i < 8; ++i) pts.insert(pts.end(), {1.05f, 0.05f, 0.1f, static_cast<float>(i) / 10});
  pts.insert(pts.end(), {0.05f, 0.05f, 0.1f, 0.0f});
  pts.insert(pts.end(), {0.05f, 0.05f, -2.5f, 0.0f});
  const VoxelSet v = voxelize(lidar(pts), g);
  REQUIRE(v.size() == 3);
  CHECK(v.counts[2] == g.max_points_per_voxel);
  CHECK(v.features[2 * 4 + 3] == doctest::Approx((0.0 + 0.1 + 0.2 + 0.3 + 0.4) / 5));  // first N kept
  CHECK(std::is_sorted(v.coords.begin(), v.coords.end()));
}

TEST_CASE("grid validation") {
  VoxelGridSpec g = small_grid();
  g.voxel_size[0] = 0.3;
  CHECK_THROWS_AS(validate(g), ConfigError);
  g = small_grid();
  g.max_points_per_voxel = 0;
  CHECK_THROWS_AS(validate(g), ConfigError);
}

TEST_CASE("empty voxel set encodes to an all-zero map of the right shape") {
  torch::manual_seed(0);
  const VoxelGridSpec g = small_grid();
  VoxelEncoder enc(Modality::kRadar, g, EncoderOptions{{4}, 8, 2});
  VoxelSet empty;
  empty.grid = g;
  empty.modality = Modality::kRadar;
  const BEVFeatureMap m = encode(empty, enc);
  CHECK((m.data.sizes() == torch::IntArrayRef{1, 8, 8, 8}));
  CHECK(m.data.abs().max().item<double>() == 0.0);
  CHECK(m.geometry.width == 8);
  CHECK(m.geometry.cell_x == doctest::Approx(0.8));
}

TEST_CASE("encoder gradient w.r.t. voxel features matches central differences") {
  torch::manual_seed(1);
  const VoxelGridSpec g = small_grid();
  VoxelEncoder enc(Modality::kRadar, g, EncoderOptions{{4}, 6, 2});
  enc->to(torch::kFloat64);
  SceneSpec spec;
  spec.x_min = 1.0, spec.x_max = 6.0, spec.y_min = -3.0, spec.y_max = 3.0;
  spec.n_objects = {1, 1, 0};
  spec.n_clutter = 0;
  const Scene sc = generate_scene(spec);
  const VoxelSet v = voxelize(sc.radar, g);
  REQUIRE(v.size() > 3);
  auto feats = voxel_input_features(v, torch::kFloat64).requires_grad_(true);
  auto f = [&](const torch::Tensor& x) { return enc->forward(scatter_dense(x, v)).sum(); };
  f(feats).backward();
  const auto grad = feats.grad().clone();
  std::mt19937_64 rng(2);
  torch::NoGradGuard ng;
  for (int k = 0; k < 20; ++k) {
    const auto i = static_cast<std::int64_t>(rng() % v.size());
    const auto c = static_cast<std::int64_t>(rng() % feats.size(1));
    auto p = feats.detach().clone(), m = feats.detach().clone();
    const double h = 1e-6;
    p[i][c] += h;
    m[i][c] -= h;
    const double num = (f(p).item<double>() - f(m).item<double>()) / (2 * h);
    CHECK(rel_err(grad[i][c].item<double>(), num) <= 1e-4);
  }
}

TEST_CASE("one-voxel translation shifts the pre-stride map by one cell") {
  torch::manual_seed(3);
  VoxelGridSpec g = small_grid();
  VoxelEncoder enc(Modality::kLidar, g, EncoderOptions{{4}, 6, 2});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(2.0, 4.0), uy(-1.5, 1.5), uz(-2.5, 0.5), ui(0.0, 1.0);
  std::vector<float> pts, shifted;
  for (int i = 0; i < 60; ++i) {
    const double x = ux(rng), y = uy(rng), z = uz(rng), in = ui(rng);
    pts.insert(pts.end(), {static_cast<float>(x), static_cast<float>(y), static_cast<float>(z), static_cast<float>(in)});
    shifted.insert(shifted.end(),
                   {static_cast<float>(x + 0.4), static_cast<float>(y), static_cast<float>(z), static_cast<float>(in)});
  }
  torch::NoGradGuard ng;
  auto a = enc->pre_stride(batch_dense({voxelize(lidar(pts), g)}));
  auto b = enc->pre_stride(batch_dense({voxelize(lidar(shifted), g)}));
  const auto w = a.size(3);
  auto diff = (b.slice(3, 2, w - 1) - a.slice(3, 1, w - 2)).abs().max().item<double>();
  CHECK(diff <= 1e-4 * std::max(1.0, a.abs().max().item<double>()));
}

TEST_CASE("multiscale block: shapes, zero in zero out, gradient") {
  torch::manual_seed(5);
  for (int stride : {1, 2}) {
    MultiScale2d neck(6, NeckOptions{5, 4, stride});
    auto x = torch::rand({2, 6, 8, 12});
    auto y = neck->forward(x);
    CHECK((y.sizes() == torch::IntArrayRef{2, 8, 8 / stride, 12 / stride}));
    BEVFeatureMap in{x, BevGeometry{0, 0, 0.4, 0.4, 8, 12}, Modality::kRadar};
    const BEVFeatureMap out = multiscale_2d(in, neck);
    CHECK(out.geometry.width == 12 / stride);
    CHECK(out.geometry.cell_x == doctest::Approx(0.4 * stride));
  }
  MultiScale2d neck(6, NeckOptions{5, 4, 1});
  {
    torch::NoGradGuard ng;
    for (auto& p : neck->named_parameters())
      if (p.key().find("bias") != std::string::npos) p.value().zero_();
  }
  CHECK(neck->forward(torch::zeros({1, 6, 8, 8})).abs().max().item<double>() == 0.0);
  CHECK_THROWS_AS(neck->forward(torch::zeros({1, 5, 8, 8})), ContractViolation);

  MultiScale2d dn(3, NeckOptions{4, 3, 1});
  dn->to(torch::kFloat64);
  auto x = torch::rand({1, 3, 8, 8}, torch::kFloat64).requires_grad_(true);
  auto f = [&](const torch::Tensor& t) { return (dn->forward(t) * dn->forward(t)).sum(); };
  f(x).backward();
  const auto grad = x.grad().clone();
  std::mt19937_64 rng(6);
  torch::NoGradGuard ng;
  for (int k = 0; k < 20; ++k) {
    const auto idx = static_cast<std::int64_t>(rng() % x.numel());
    auto p = x.detach().clone().flatten(), m = x.detach().clone().flatten();
    p[idx] += 1e-6;
    m[idx] -= 1e-6;
    const double num = (f(p.view_as(x)).item<double>() - f(m.view_as(x)).item<double>()) / 2e-6;
    CHECK(rel_err(grad.flatten()[idx].item<double>(), num) <= 1e-4);
  }
}

TEST_CASE("encoder rejects inputs from another grid") {
  VoxelEncoder enc(Modality::kLidar, small_grid(), EncoderOptions{{4}, 6, 2});
  CHECK_THROWS_AS(enc->forward(torch::zeros({1, 5, 4, 16, 8})), ContractViolation);
  CHECK(encoder_input_channels(Modality::kLidar) == 5);
  CHECK(encoder_input_channels(Modality::kRadar) == 6);
}
