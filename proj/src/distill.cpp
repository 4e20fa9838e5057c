#include "sckd/distill.hpp"

#include "sckd/error.hpp"

namespace sckd {

AdapterImpl::AdapterImpl(int channels, int kernel, bool identity_init) : channels_(channels) {
  SCKD_EXPECT(channels > 0 && kernel > 0 && kernel % 2 == 1, "adapter needs positive channels and an odd kernel");
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, kernel).padding(kernel / 2)));
  if (identity_init) reset_identity();
}

void AdapterImpl::reset_identity() {
  torch::NoGradGuard ng;
  conv->weight.zero_();
  conv->bias.zero_();
  const auto c = conv->weight.size(2) / 2;
  for (int i = 0; i < channels_; ++i) conv->weight[i][i][c][c] = 1.0;
}

torch::Tensor AdapterImpl::forward(const torch::Tensor& x) {
  SCKD_EXPECT(x.dim() == 4 && x.size(1) == channels_, "adapter: channel count mismatch");
  return conv->forward(x);
}

torch::Tensor lrfd_loss(const torch::Tensor& student, const torch::Tensor& teacher_lidar, Adapter& adapter_lidar) {
  SCKD_EXPECT(student.sizes() == teacher_lidar.sizes(), "lrfd: student and teacher feature shapes differ");
  return torch::mse_loss(adapter_lidar->forward(student), teacher_lidar.detach());
}

torch::Tensor frfd_loss(const torch::Tensor& student, const torch::Tensor& teacher_fusion, Adapter& adapter_lidar,
                        Adapter& adapter_radar) {
  SCKD_EXPECT(student.dim() == 4 && teacher_fusion.dim() == 4, "frfd: expected B x C x H x W tensors");
  SCKD_EXPECT(teacher_fusion.size(0) == student.size(0) && teacher_fusion.size(1) == 2 * student.size(1) &&
                  teacher_fusion.size(2) == student.size(2) && teacher_fusion.size(3) == student.size(3),
              "frfd: fusion feature must have twice the student's channels at the same resolution");
  auto simulated = torch::cat({adapter_lidar->forward(student), adapter_radar->forward(student)}, 1);
  return torch::mse_loss(simulated, teacher_fusion.detach());
}

std::vector<Box3D> filter_pseudo_labels(const std::vector<Detection>& teacher_dets, double sigma) {
  std::vector<Box3D> out;
  for (const Detection& d : teacher_dets) {
    SCKD_EXPECT(d.score.has_value(), "filter_pseudo_labels: detection without confidence");
    if (*d.score > sigma) {
      Box3D b = d;
      b.score.reset();
      out.push_back(b);
    }
  }
  return out;
}

DetectionLoss ssod_loss(const HeadOutput& student_out, const std::vector<std::vector<Box3D>>& pseudo,
                        const AnchorGrid& anchors, const AnchorConfig& cfg) {
  SCKD_EXPECT(static_cast<std::int64_t>(pseudo.size()) == student_out.cls_logits.size(0),
              "ssod_loss: one pseudo-label set per sample required");
  std::vector<AnchorTargets> targets;
  targets.reserve(pseudo.size());
  for (const auto& boxes : pseudo) targets.push_back(assign_targets(anchors, boxes, cfg));
  return gt_loss(student_out, stack_targets(targets, student_out.box_deltas.scalar_type()));
}

torch::Tensor total_loss(const torch::Tensor& lrfd, const torch::Tensor& frfd, const torch::Tensor& ssod,
                         const DistillConfig& cfg, const std::optional<torch::Tensor>& gt) {
  SCKD_EXPECT(lrfd.item<double>() >= 0.0 && frfd.item<double>() >= 0.0 && ssod.item<double>() >= 0.0,
              "total_loss: component losses must be non-negative");
  auto total = cfg.alpha * lrfd + cfg.beta * frfd;
  if (cfg.use_ssod) total = total + ssod;
  if (cfg.use_gt) {
    SCKD_EXPECT(gt.has_value(), "total_loss: use_gt set but no ground-truth loss given");
    SCKD_EXPECT(gt->item<double>() >= 0.0, "total_loss: ground-truth loss must be non-negative");
    total = total + *gt;
  }
  return total;
}

double total_loss(double lrfd, double frfd, double ssod, const DistillConfig& cfg, std::optional<double> gt) {
  SCKD_EXPECT(lrfd >= 0.0 && frfd >= 0.0 && ssod >= 0.0, "total_loss: component losses must be non-negative");
  double total = cfg.alpha * lrfd + cfg.beta * frfd;
  if (cfg.use_ssod) total += ssod;
  if (cfg.use_gt) {
    SCKD_EXPECT(gt.has_value() && *gt >= 0.0, "total_loss: use_gt set but no valid ground-truth loss given");
    total += *gt;
  }
  return total;
}

}  // namespace sckd
