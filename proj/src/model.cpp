#include "sckd/model.hpp"

#include "sckd/error.hpp"
#include "sckd/hash.hpp"

namespace sckd {

namespace {

BevGeometry head_geometry_of(const ModelConfig& cfg) {
  BevGeometry g = bev_geometry(cfg.radar_grid, cfg.encoder.bev_stride);
  g.cell_x *= cfg.neck.stride;
  g.cell_y *= cfg.neck.stride;
  g.width /= cfg.neck.stride;
  g.height /= cfg.neck.stride;
  return g;
}

}  // namespace

TeacherNetImpl::TeacherNetImpl(const ModelConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  const int c = cfg.encoder.out_channels;
  lidar_encoder = register_module("lidar_encoder", VoxelEncoder(Modality::kLidar, cfg.lidar_grid, cfg.encoder));
  radar_encoder = register_module("radar_encoder", VoxelEncoder(Modality::kRadar, cfg.radar_grid, cfg.encoder));
  fusion = register_module("fusion", AdaptiveFusion(c, cfg.fusion));
  neck = register_module("neck", MultiScale2d(2 * c, cfg.neck));
  head = register_module("head", DetectHead(neck->out_channels(), cfg.anchors.anchors_per_cell()));
}

BevGeometry TeacherNetImpl::head_geometry() const { return head_geometry_of(cfg_); }

TeacherOutput TeacherNetImpl::forward(const torch::Tensor& lidar_dense, const torch::Tensor& radar_dense,
                                      const std::vector<GateState>& gates) {
  TeacherOutput out;
  out.lidar_bev = lidar_encoder->forward(lidar_dense);
  out.radar_bev = radar_encoder->forward(radar_dense);
  FusionOutput f = fusion->forward(out.lidar_bev, out.radar_bev, gates);
  out.fused = f.fused;
  out.weights = f.weights;
  out.head = head->forward(neck->forward(out.fused));
  return out;
}

StudentNetImpl::StudentNetImpl(const ModelConfig& cfg, const DistillConfig& distill) : cfg_(cfg) {
  validate(cfg);
  const int c = cfg.encoder.out_channels;
  radar_encoder = register_module("radar_encoder", VoxelEncoder(Modality::kRadar, cfg.radar_grid, cfg.encoder));
  neck = register_module("neck", MultiScale2d(c, cfg.neck));
  head = register_module("head", DetectHead(neck->out_channels(), cfg.anchors.anchors_per_cell()));
  adapter_lidar = register_module("adapter_lidar", Adapter(c, distill.adapter_kernel, distill.adapter_identity_init));
  adapter_fusion_lidar =
      register_module("adapter_fusion_lidar", Adapter(c, distill.adapter_kernel, distill.adapter_identity_init));
  adapter_fusion_radar =
      register_module("adapter_fusion_radar", Adapter(c, distill.adapter_kernel, distill.adapter_identity_init));
}

BevGeometry StudentNetImpl::head_geometry() const { return head_geometry_of(cfg_); }

StudentOutput StudentNetImpl::forward(const torch::Tensor& radar_dense) {
  StudentOutput out;
  out.radar_bev = radar_encoder->forward(radar_dense);
  out.head = head->forward(neck->forward(out.radar_bev));
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value());
  for (const auto& b : m.named_buffers()) out.emplace_back(b.key(), b.value());
  return out;
}

std::uint64_t state_hash(const torch::nn::Module& m) {
  Fnv1a h;
  for (const auto& [name, t] : named_state(m)) {
    h.update(name.data(), name.size());
    auto c = t.detach().contiguous();
    h.update(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size());
  }
  return h.digest();
}

}  // namespace sckd
