#include "sckd/backbone.hpp"

#include <cmath>

#include "sckd/error.hpp"

namespace sckd {

namespace F = torch::nn::functional;

BevGeometry bev_geometry(const VoxelGridSpec& grid, int stride) {
  const auto d = grid.dims();
  SCKD_EXPECT(stride > 0 && d[0] % stride == 0 && d[1] % stride == 0, "BEV dims not divisible by stride");
  BevGeometry g;
  g.x_min = grid.range_min[0];
  g.y_min = grid.range_min[1];
  g.cell_x = grid.voxel_size[0] * stride;
  g.cell_y = grid.voxel_size[1] * stride;
  g.width = d[0] / stride;
  g.height = d[1] / stride;
  return g;
}

int encoder_input_channels(Modality m) { return feature_count(m) + 1; }

namespace {

// Non-geometric columns are brought to O(1): lidar intensity as is, radar RCS / 10 and Doppler / 5.
constexpr float kLidarScale[1] = {1.0f};
constexpr float kRadarScale[2] = {0.1f, 0.2f};

void fill_row(const VoxelSet& v, std::size_t i, float* out) {
  const int nf = v.num_features();
  const float* f = v.features.data() + i * static_cast<std::size_t>(nf);
  const auto& c = v.coords[i];  // z, y, x
  const int axis_cell[3] = {c[2], c[1], c[0]};
  for (int a = 0; a < 3; ++a) {
    const double center = v.grid.range_min[a] + (axis_cell[a] + 0.5) * v.grid.voxel_size[a];
    out[a] = static_cast<float>((static_cast<double>(f[a]) - center) / v.grid.voxel_size[a]);
  }
  const float* scale = v.modality == Modality::kLidar ? kLidarScale : kRadarScale;
  for (int k = 3; k < nf; ++k) out[k] = f[k] * scale[k - 3];
  out[nf] = 1.0f;
}

}  // namespace

torch::Tensor voxel_input_features(const VoxelSet& voxels, torch::Dtype dtype) {
  const int cin = encoder_input_channels(voxels.modality);
  auto t = torch::empty({static_cast<std::int64_t>(voxels.size()), cin}, torch::kFloat32);
  float* p = t.data_ptr<float>();
  for (std::size_t i = 0; i < voxels.size(); ++i) fill_row(voxels, i, p + i * cin);
  return t.to(dtype);
}

torch::Tensor scatter_dense(const torch::Tensor& features, const VoxelSet& voxels) {
  const auto d = voxels.grid.dims();
  const int cin = encoder_input_channels(voxels.modality);
  SCKD_EXPECT(features.dim() == 2 && features.size(0) == static_cast<std::int64_t>(voxels.size()) &&
                  features.size(1) == cin,
              "scatter_dense: feature rows do not match the voxel set");
  std::vector<std::int64_t> lin;
  lin.reserve(voxels.size());
  for (const auto& c : voxels.coords) {
    SCKD_EXPECT(c[0] >= 0 && c[0] < d[2] && c[1] >= 0 && c[1] < d[1] && c[2] >= 0 && c[2] < d[0],
                "encode: voxel coordinate outside the grid");
    lin.push_back((static_cast<std::int64_t>(c[0]) * d[1] + c[1]) * d[0] + c[2]);
  }
  const std::int64_t cells = static_cast<std::int64_t>(d[0]) * d[1] * d[2];
  auto dense = torch::zeros({cells, cin}, features.options());
  if (!lin.empty()) {
    auto idx = torch::tensor(lin, torch::kInt64);
    dense = dense.index_put({idx}, features);
  }
  return dense.t().reshape({1, cin, d[2], d[1], d[0]});
}

torch::Tensor batch_dense(const std::vector<VoxelSet>& batch, torch::Dtype dtype) {
  SCKD_EXPECT(!batch.empty(), "batch_dense: empty batch");
  const VoxelGridSpec& grid = batch.front().grid;
  const Modality m = batch.front().modality;
  const auto d = grid.dims();
  const int cin = encoder_input_channels(m);
  const std::int64_t cells = static_cast<std::int64_t>(d[0]) * d[1] * d[2];
  auto dense = torch::zeros({static_cast<std::int64_t>(batch.size()), cin, d[2], d[1], d[0]}, torch::kFloat32);
  float* base = dense.data_ptr<float>();
  std::vector<float> row(static_cast<std::size_t>(cin));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const VoxelSet& v = batch[b];
    SCKD_EXPECT(v.grid == grid && v.modality == m, "batch_dense: mixed grids or modalities in one batch");
    float* sample = base + static_cast<std::int64_t>(b) * cin * cells;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto& c = v.coords[i];
      SCKD_EXPECT(c[0] >= 0 && c[0] < d[2] && c[1] >= 0 && c[1] < d[1] && c[2] >= 0 && c[2] < d[0],
                  "encode: voxel coordinate outside the grid");
      const std::int64_t lin = (static_cast<std::int64_t>(c[0]) * d[1] + c[1]) * d[0] + c[2];
      fill_row(v, i, row.data());
      for (int ch = 0; ch < cin; ++ch) sample[ch * cells + lin] = row[ch];
    }
  }
  return dtype == torch::kFloat32 ? dense : dense.to(dtype);
}

VoxelEncoderImpl::VoxelEncoderImpl(Modality modality, const VoxelGridSpec& grid, const EncoderOptions& options)
    : modality_(modality), grid_(grid), options_(options) {
  validate(grid);
  SCKD_EXPECT(!options.conv3d_channels.empty() && options.out_channels > 0, "encoder channel widths must be positive");
  SCKD_EXPECT(options.bev_stride == 1 || options.bev_stride == 2, "encoder bev_stride must be 1 or 2");
  const auto d = grid.dims();
  // Bias-free convolutions keep empty space at exactly zero.
  conv3d_ = register_module("conv3d", torch::nn::ModuleList());
  int in = encoder_input_channels(modality);
  for (int c : options.conv3d_channels) {
    SCKD_EXPECT(c > 0, "encoder channel widths must be positive");
    conv3d_->push_back(torch::nn::Conv3d(torch::nn::Conv3dOptions(in, c, 3).padding(1).bias(false)));
    in = c;
  }
  bev_conv_ = register_module(
      "bev_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in * d[2], options.out_channels, 3).padding(1).bias(false)));
  stride_conv_ = register_module(
      "stride_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(options.out_channels, options.out_channels, 3)
                                           .stride(options.bev_stride)
                                           .padding(1)
                                           .bias(false)));
}

torch::Tensor VoxelEncoderImpl::pre_stride(const torch::Tensor& dense) {
  const auto d = grid_.dims();
  SCKD_EXPECT(dense.dim() == 5 && dense.size(1) == encoder_input_channels(modality_) && dense.size(2) == d[2] &&
                  dense.size(3) == d[1] && dense.size(4) == d[0],
              "encoder input does not match the voxel grid");
  torch::Tensor x = dense;
  for (const auto& m : *conv3d_) x = torch::relu(m->as<torch::nn::Conv3d>()->forward(x));
  x = x.reshape({x.size(0), x.size(1) * x.size(2), x.size(3), x.size(4)});
  return torch::relu(bev_conv_->forward(x));
}

torch::Tensor VoxelEncoderImpl::forward(const torch::Tensor& dense) {
  return torch::relu(stride_conv_->forward(pre_stride(dense)));
}

BEVFeatureMap encode(const VoxelSet& voxels, VoxelEncoder& encoder) {
  SCKD_EXPECT(voxels.modality == encoder->modality(), "encode: modality mismatch");
  SCKD_EXPECT(voxels.grid == encoder->grid(), "encode: voxel grid differs from the encoder's grid");
  const auto dtype = encoder->parameters().front().scalar_type();
  auto dense = batch_dense({voxels}, dtype);
  return {encoder->forward(dense), encoder->output_geometry(), voxels.modality};
}

MultiScale2dImpl::MultiScale2dImpl(int in_channels, const NeckOptions& options)
    : in_channels_(in_channels), options_(options) {
  SCKD_EXPECT(in_channels > 0 && options.mid_channels > 0 && options.up_channels > 0, "neck widths must be positive");
  SCKD_EXPECT(options.stride == 1 || options.stride == 2, "neck stride must be 1 or 2");
  using torch::nn::Conv2d;
  using torch::nn::Conv2dOptions;
  using torch::nn::ReLU;
  const int m = options.mid_channels;
  block1_ = register_module(
      "block1", torch::nn::Sequential(Conv2d(Conv2dOptions(in_channels, m, 3).stride(options.stride).padding(1)), ReLU(),
                                      Conv2d(Conv2dOptions(m, m, 3).padding(1)), ReLU()));
  block2_ = register_module(
      "block2", torch::nn::Sequential(Conv2d(Conv2dOptions(m, 2 * m, 3).stride(2).padding(1)), ReLU(),
                                      Conv2d(Conv2dOptions(2 * m, 2 * m, 3).padding(1)), ReLU()));
  up1_ = register_module("up1", Conv2d(Conv2dOptions(m, options.up_channels, 1)));
  up2_ = register_module(
      "up2", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(2 * m, options.up_channels, 2).stride(2)));
}

torch::Tensor MultiScale2dImpl::forward(const torch::Tensor& x) {
  SCKD_EXPECT(x.dim() == 4 && x.size(1) == in_channels_, "multiscale_2d: input channel count mismatch");
  SCKD_EXPECT(x.size(2) % (2 * options_.stride) == 0 && x.size(3) % (2 * options_.stride) == 0,
              "multiscale_2d: spatial dims must be divisible by twice the stride");
  auto a = block1_->forward(x);
  auto b = block2_->forward(a);
  return torch::cat({torch::relu(up1_->forward(a)), torch::relu(up2_->forward(b))}, 1);
}

BEVFeatureMap multiscale_2d(const BEVFeatureMap& bev, MultiScale2d& neck) {
  BEVFeatureMap out;
  out.data = neck->forward(bev.data);
  out.geometry = bev.geometry;
  out.geometry.cell_x *= neck->stride();
  out.geometry.cell_y *= neck->stride();
  out.geometry.height /= neck->stride();
  out.geometry.width /= neck->stride();
  out.modality = bev.modality;
  return out;
}

}  // namespace sckd
