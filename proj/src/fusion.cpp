#include "sckd/fusion.hpp"

#include "sckd/error.hpp"

namespace sckd {

GateState gate_from_draws(const FusionOptions& options, double p1, double p2) {
  GateState g;
  g.p1 = p1;
  g.p2 = p2;
  g.lidar = (p1 > options.p_drop || p2 > options.p_lidar_drop) ? 1 : 0;
  g.radar = (p1 > options.p_drop || p2 <= options.p_lidar_drop) ? 1 : 0;
  return g;
}

GateState dropout_gate(const FusionOptions& options, std::mt19937_64& rng, bool training) {
  if (!training || !options.random_dropout) return GateState{};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p1 = u(rng);
  const double p2 = u(rng);
  return gate_from_draws(options, p1, p2);
}

AdaptiveFusionImpl::AdaptiveFusionImpl(int channels, const FusionOptions& options)
    : channels_(channels), options_(options) {
  SCKD_EXPECT(channels > 0, "fusion channel count must be positive");
  SCKD_EXPECT(options.p_drop >= 0.0 && options.p_drop <= 1.0 && options.p_lidar_drop >= 0.0 &&
                  options.p_lidar_drop <= 1.0,
              "fusion dropout probabilities must lie in [0, 1]");
  const int logits = options.weight_mode == FusionWeightMode::kPerChannel ? 2 * channels : 2;
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * channels, logits, 1)));
  bn = register_module("bn", torch::nn::BatchNorm2d(logits));
}

FusionWeights AdaptiveFusionImpl::adaptive_weights(const torch::Tensor& lidar, const torch::Tensor& radar) {
  SCKD_EXPECT(lidar.dim() == 4 && lidar.sizes() == radar.sizes(), "adaptive fusion: lidar/radar shapes differ");
  SCKD_EXPECT(lidar.size(1) == channels_, "adaptive fusion: channel count mismatch");
  const auto batch = lidar.size(0);
  auto mix = torch::cat({lidar.mean({2, 3}, true), radar.mean({2, 3}, true)}, 1);  // B x 2C x 1 x 1
  auto z = conv->forward(mix);
  if (is_training() && batch > 1) {
    z = bn->forward(z);
  } else {
    // Running statistics; a single training sample has no batch variance to normalize with.
    z = torch::batch_norm(z, bn->weight, bn->bias, bn->running_mean, bn->running_var, false, 0.0, bn->options.eps(),
                          false);
  }
  const auto per = options_.weight_mode == FusionWeightMode::kPerChannel ? channels_ : 1;
  auto w = torch::softmax(z.reshape({batch, 2, per}), 1);
  return {w.select(1, 0).reshape({batch, per, 1, 1}), w.select(1, 1).reshape({batch, per, 1, 1})};
}

FusionOutput AdaptiveFusionImpl::forward(const torch::Tensor& lidar, const torch::Tensor& radar,
                                         const std::vector<GateState>& gates) {
  SCKD_EXPECT(lidar.dim() == 4 && lidar.sizes() == radar.sizes(), "fuse: lidar/radar shapes differ");
  torch::Tensor gl = lidar, gr = radar;
  if (!gates.empty()) {
    SCKD_EXPECT(static_cast<std::int64_t>(gates.size()) == lidar.size(0), "fuse: one gate per sample required");
    std::vector<double> l, r;
    for (const GateState& g : gates) {
      SCKD_EXPECT((g.lidar == 0 || g.lidar == 1) && (g.radar == 0 || g.radar == 1) && g.lidar + g.radar >= 1,
                  "fuse: invalid gate state");
      l.push_back(g.lidar);
      r.push_back(g.radar);
    }
    const auto opts = torch::TensorOptions().dtype(lidar.scalar_type());
    gl = lidar * torch::tensor(l, opts).reshape({-1, 1, 1, 1});
    gr = radar * torch::tensor(r, opts).reshape({-1, 1, 1, 1});
  }
  FusionWeights w = adaptive_weights(gl, gr);
  return {torch::cat({w.lidar * gl, w.radar * gr}, 1), w};
}

}  // namespace sckd
