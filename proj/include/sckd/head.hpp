#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

#include "sckd/backbone.hpp"
#include "sckd/options.hpp"
#include "sckd/types.hpp"

namespace sckd {

/// Anchors laid out (a, h, w) with a = class * n_yaws + yaw index.
struct AnchorGrid {
  int num_per_cell = 0;
  int height = 0, width = 0;
  std::vector<Box3D> boxes;

  std::size_t size() const { return boxes.size(); }
  ClassId anchor_class(std::size_t i, int n_yaws) const {
    return static_cast<ClassId>((i / (static_cast<std::size_t>(height) * width)) / n_yaws);
  }
};

AnchorGrid make_anchors(const BevGeometry& geometry, const AnchorConfig& cfg);

/// Residual box encoding relative to an anchor: center offsets over the anchor BEV diagonal (z over anchor
/// height), log size ratios, and the raw yaw difference.
std::array<double, 7> encode_box(const Box3D& box, const Box3D& anchor);
Box3D decode_box(const std::array<double, 7>& delta, const Box3D& anchor);

struct HeadOutput {
  torch::Tensor cls_logits;  // B x A x K x H x W
  torch::Tensor box_deltas;  // B x A x 7 x H x W
};

class DetectHeadImpl : public torch::nn::Module {
 public:
  DetectHeadImpl(int in_channels, int anchors_per_cell, int num_classes = kNumClasses);

  HeadOutput forward(const torch::Tensor& features);

  int in_channels() const { return in_channels_; }

  torch::nn::Conv2d cls{nullptr};
  torch::nn::Conv2d box{nullptr};

 private:
  int in_channels_;
  int anchors_;
  int classes_;
};
TORCH_MODULE(DetectHead);

/// Confidence is the max class sigmoid; candidates need confidence > conf_min. Per-class greedy rotated
/// BEV NMS; result sorted by descending confidence.
std::vector<Detection> decode_nms(const HeadOutput& out, std::int64_t sample, const AnchorGrid& anchors,
                                  const PostprocessOptions& post);

/// Greedy NMS over already-decoded detections of mixed classes; suppression happens within a class only.
std::vector<Detection> rotated_nms(std::vector<Detection> dets, double nms_iou);

/// Per-anchor training targets. label: -1 ignored, 0 background, k + 1 for class k.
struct AnchorTargets {
  std::vector<std::int64_t> labels;
  std::vector<std::array<double, 7>> deltas;

  std::size_t num_positive() const;
};

/// An anchor is matched only against boxes of its own class: positive at IoU >= pos threshold or when it
/// is (one of) the best anchors of a box; negative below the negative threshold; ignored in between.
AnchorTargets assign_targets(const AnchorGrid& anchors, const std::vector<Box3D>& boxes, const AnchorConfig& cfg);

struct TargetTensors {
  torch::Tensor labels;  // B x N int64
  torch::Tensor deltas;  // B x N x 7
};

TargetTensors stack_targets(const std::vector<AnchorTargets>& targets, torch::Dtype dtype);

struct LossConstants {
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double smooth_l1_beta = 1.0 / 9.0;
};

struct DetectionLoss {
  torch::Tensor cls;
  torch::Tensor reg;
  torch::Tensor total() const { return cls + reg; }
};

/// Sigmoid focal loss over non-ignored anchors and smooth-L1 over positive anchors (yaw via the
/// sine-difference trick), both normalized by max(1, #positives).
DetectionLoss gt_loss(const HeadOutput& out, const TargetTensors& targets, const LossConstants& k = {});

}  // namespace sckd
