#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

#include "sckd/head.hpp"
#include "sckd/options.hpp"

namespace sckd {

/// Single same-padding conv mapping student features C -> C toward a teacher feature space.
class AdapterImpl : public torch::nn::Module {
 public:
  AdapterImpl(int channels, int kernel, bool identity_init);

  torch::Tensor forward(const torch::Tensor& x);
  /// Identity mapping: center tap is the identity matrix, everything else zero.
  void reset_identity();

  torch::nn::Conv2d conv{nullptr};

 private:
  int channels_;
};
TORCH_MODULE(Adapter);

/// MSE (mean over every element) between adapter_L(student) and the teacher lidar feature.
torch::Tensor lrfd_loss(const torch::Tensor& student, const torch::Tensor& teacher_lidar, Adapter& adapter_lidar);

/// MSE between concat(adapter_L'(student), adapter_R'(student)) and the 2C-channel teacher fusion feature.
torch::Tensor frfd_loss(const torch::Tensor& student, const torch::Tensor& teacher_fusion, Adapter& adapter_lidar,
                        Adapter& adapter_radar);

/// Teacher detections with confidence strictly above `sigma`, scores stripped, order kept.
std::vector<Box3D> filter_pseudo_labels(const std::vector<Detection>& teacher_dets, double sigma);

/// Detection loss of the student against pseudo-label targets (one entry per batch sample).
DetectionLoss ssod_loss(const HeadOutput& student_out, const std::vector<std::vector<Box3D>>& pseudo,
                        const AnchorGrid& anchors, const AnchorConfig& cfg);

/// alpha * L_lrfd + beta * L_frfd + L_ssod (when enabled) + L_gt (only with use_gt).
torch::Tensor total_loss(const torch::Tensor& lrfd, const torch::Tensor& frfd, const torch::Tensor& ssod,
                         const DistillConfig& cfg, const std::optional<torch::Tensor>& gt = std::nullopt);

/// Scalar form used by the harness report and tests.
double total_loss(double lrfd, double frfd, double ssod, const DistillConfig& cfg, std::optional<double> gt = {});

}  // namespace sckd
