#include "sckd/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sckd/error.hpp"
#include "sckd/geometry.hpp"

namespace sckd {

AnchorGrid make_anchors(const BevGeometry& g, const AnchorConfig& cfg) {
  AnchorGrid grid;
  grid.num_per_cell = cfg.anchors_per_cell();
  grid.height = g.height;
  grid.width = g.width;
  grid.boxes.reserve(static_cast<std::size_t>(grid.num_per_cell) * g.height * g.width);
  for (int k = 0; k < kNumClasses; ++k) {
    for (double yaw : cfg.yaws) {
      for (int h = 0; h < g.height; ++h) {
        for (int w = 0; w < g.width; ++w) {
          Box3D b;
          b.center = {g.cell_center_x(w), g.cell_center_y(h), cfg.z_center[k]};
          b.size = cfg.size[k];
          b.yaw = wrap_angle(yaw);
          b.class_id = static_cast<ClassId>(k);
          grid.boxes.push_back(b);
        }
      }
    }
  }
  return grid;
}

std::array<double, 7> encode_box(const Box3D& box, const Box3D& a) {
  const double diag = std::hypot(a.size[0], a.size[1]);
  return {(box.center[0] - a.center[0]) / diag,
          (box.center[1] - a.center[1]) / diag,
          (box.center[2] - a.center[2]) / a.size[2],
          std::log(box.size[0] / a.size[0]),
          std::log(box.size[1] / a.size[1]),
          std::log(box.size[2] / a.size[2]),
          wrap_angle(box.yaw - a.yaw)};
}

Box3D decode_box(const std::array<double, 7>& d, const Box3D& a) {
  const double diag = std::hypot(a.size[0], a.size[1]);
  Box3D b;
  b.center = {a.center[0] + d[0] * diag, a.center[1] + d[1] * diag, a.center[2] + d[2] * a.size[2]};
  // Clamp log-size deltas so early, untrained outputs cannot overflow.
  for (int i = 0; i < 3; ++i) b.size[i] = a.size[i] * std::exp(std::clamp(d[3 + i], -6.0, 6.0));
  b.yaw = wrap_angle(a.yaw + d[6]);
  b.class_id = a.class_id;
  return b;
}

DetectHeadImpl::DetectHeadImpl(int in_channels, int anchors_per_cell, int num_classes)
    : in_channels_(in_channels), anchors_(anchors_per_cell), classes_(num_classes) {
  SCKD_EXPECT(in_channels > 0 && anchors_per_cell > 0 && num_classes > 0, "detect head sizes must be positive");
  cls = register_module("cls", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, anchors_ * classes_, 1)));
  box = register_module("box", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, anchors_ * 7, 1)));
  // Background prior of 0.01 keeps the focal loss well-behaved at the start.
  torch::NoGradGuard ng;
  cls->bias.fill_(-std::log((1.0 - 0.01) / 0.01));
}

HeadOutput DetectHeadImpl::forward(const torch::Tensor& x) {
  SCKD_EXPECT(x.dim() == 4 && x.size(1) == in_channels_, "detect head: feature channel count mismatch");
  const auto b = x.size(0), h = x.size(2), w = x.size(3);
  return {cls->forward(x).reshape({b, anchors_, classes_, h, w}), box->forward(x).reshape({b, anchors_, 7, h, w})};
}

std::vector<Detection> rotated_nms(std::vector<Detection> dets, double nms_iou) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score.value_or(0) > b.score.value_or(0); });
  std::vector<Detection> keep;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : keep) {
      if (k.class_id == d.class_id && iou_bev(k, d) >= nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(d);
  }
  return keep;
}

std::vector<Detection> decode_nms(const HeadOutput& out, std::int64_t sample, const AnchorGrid& anchors,
                                  const PostprocessOptions& post) {
  SCKD_EXPECT(post.conf_min >= 0.0 && post.conf_min <= 1.0 && post.nms_iou >= 0.0 && post.nms_iou <= 1.0,
              "decode_nms: thresholds must lie in [0, 1]");
  torch::NoGradGuard ng;
  const auto logits = out.cls_logits[sample].to(torch::kFloat64).contiguous();  // A x K x H x W
  const auto deltas = out.box_deltas[sample].to(torch::kFloat64).contiguous();  // A x 7 x H x W
  const auto A = logits.size(0), K = logits.size(1), H = logits.size(2), W = logits.size(3);
  SCKD_EXPECT(static_cast<std::size_t>(A * H * W) == anchors.size(), "decode_nms: anchor grid does not match output");
  const double* lp = logits.data_ptr<double>();
  const double* dp = deltas.data_ptr<double>();
  const std::int64_t plane = H * W;

  struct Cand {
    double conf;
    std::int64_t anchor;
    int cls;
  };
  std::vector<Cand> cands;
  for (std::int64_t a = 0; a < A; ++a) {
    for (std::int64_t p = 0; p < plane; ++p) {
      double best = -INFINITY;
      int best_k = 0;
      for (std::int64_t k = 0; k < K; ++k) {
        const double v = lp[(a * K + k) * plane + p];
        if (v > best) best = v, best_k = static_cast<int>(k);
      }
      const double conf = 1.0 / (1.0 + std::exp(-best));
      if (conf > post.conf_min) cands.push_back({conf, a * plane + p, best_k});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.conf > y.conf; });
  if (static_cast<int>(cands.size()) > post.pre_nms_max) cands.resize(static_cast<std::size_t>(post.pre_nms_max));

  std::vector<Detection> dets;
  dets.reserve(cands.size());
  for (const Cand& c : cands) {
    const std::int64_t a = c.anchor / plane, p = c.anchor % plane;
    std::array<double, 7> d{};
    for (int j = 0; j < 7; ++j) d[j] = dp[(a * 7 + j) * plane + p];
    Detection det = decode_box(d, anchors.boxes[static_cast<std::size_t>(c.anchor)]);
    det.class_id = static_cast<ClassId>(c.cls);
    det.score = c.conf;
    dets.push_back(det);
  }
  auto kept = rotated_nms(std::move(dets), post.nms_iou);
  if (static_cast<int>(kept.size()) > post.post_nms_max) kept.resize(static_cast<std::size_t>(post.post_nms_max));
  return kept;
}

std::size_t AnchorTargets::num_positive() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::int64_t l) { return l > 0; }));
}

AnchorTargets assign_targets(const AnchorGrid& anchors, const std::vector<Box3D>& boxes, const AnchorConfig& cfg) {
  const std::size_t n = anchors.size();
  const int n_yaws = static_cast<int>(cfg.yaws.size());
  AnchorTargets t;
  t.labels.assign(n, 0);
  t.deltas.assign(n, std::array<double, 7>{});
  if (boxes.empty()) return t;
  for (const Box3D& b : boxes) validate_box(b);

  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_box(n, -1);
  std::vector<double> box_best(boxes.size(), 0.0);
  std::vector<std::vector<std::pair<std::size_t, double>>> overlaps(boxes.size());
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    const Box3D& b = boxes[j];
    for (std::size_t i = 0; i < n; ++i) {
      if (anchors.anchor_class(i, n_yaws) != b.class_id) continue;
      const double iou = iou_bev(anchors.boxes[i], b);
      if (iou <= 0.0) continue;
      overlaps[j].push_back({i, iou});
      if (iou > best_iou[i]) best_iou[i] = iou, best_box[i] = static_cast<int>(j);
      box_best[j] = std::max(box_best[j], iou);
    }
  }
  std::vector<int> match(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (best_box[i] < 0) continue;
    const int k = static_cast<int>(boxes[static_cast<std::size_t>(best_box[i])].class_id);
    if (best_iou[i] >= cfg.pos_iou[k]) {
      match[i] = best_box[i];
    } else if (best_iou[i] >= cfg.neg_iou[k]) {
      t.labels[i] = -1;
    }
  }
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    if (box_best[j] <= 0.0) continue;
    for (const auto& [i, iou] : overlaps[j])
      if (iou == box_best[j]) match[i] = static_cast<int>(j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (match[i] < 0) continue;
    const Box3D& b = boxes[static_cast<std::size_t>(match[i])];
    t.labels[i] = static_cast<std::int64_t>(b.class_id) + 1;
    t.deltas[i] = encode_box(b, anchors.boxes[i]);
  }
  return t;
}

TargetTensors stack_targets(const std::vector<AnchorTargets>& targets, torch::Dtype dtype) {
  SCKD_EXPECT(!targets.empty(), "stack_targets: empty batch");
  const auto b = static_cast<std::int64_t>(targets.size());
  const auto n = static_cast<std::int64_t>(targets.front().labels.size());
  auto labels = torch::empty({b, n}, torch::kInt64);
  auto deltas = torch::empty({b, n, 7}, torch::kFloat64);
  auto* lp = labels.data_ptr<std::int64_t>();
  auto* dp = deltas.data_ptr<double>();
  for (std::int64_t s = 0; s < b; ++s) {
    const AnchorTargets& t = targets[static_cast<std::size_t>(s)];
    SCKD_EXPECT(static_cast<std::int64_t>(t.labels.size()) == n, "stack_targets: anchor counts differ");
    std::copy(t.labels.begin(), t.labels.end(), lp + s * n);
    for (std::int64_t i = 0; i < n; ++i)
      std::copy(t.deltas[static_cast<std::size_t>(i)].begin(), t.deltas[static_cast<std::size_t>(i)].end(),
                dp + (s * n + i) * 7);
  }
  return {labels, deltas.to(dtype)};
}

DetectionLoss gt_loss(const HeadOutput& out, const TargetTensors& targets, const LossConstants& k) {
  const auto B = out.cls_logits.size(0), A = out.cls_logits.size(1), K = out.cls_logits.size(2);
  const auto H = out.cls_logits.size(3), W = out.cls_logits.size(4);
  const auto N = A * H * W;
  SCKD_EXPECT(targets.labels.size(0) == B && targets.labels.size(1) == N, "gt_loss: targets do not match the output");
  auto logits = out.cls_logits.permute({0, 1, 3, 4, 2}).reshape({B, N, K});
  auto deltas = out.box_deltas.permute({0, 1, 3, 4, 2}).reshape({B, N, 7});

  const auto labels = targets.labels;
  auto positive = labels > 0;
  auto cared = (labels >= 0).to(logits.scalar_type());
  const double num_pos = std::max<double>(1.0, positive.sum().item<double>());

  auto one_hot = torch::zeros({B, N, K + 1}, logits.options());
  one_hot.scatter_(2, labels.clamp_min(0).unsqueeze(2), 1.0);
  auto target = one_hot.slice(2, 1);  // background -> all zeros

  // Stable sigmoid BCE with the focal modulating factor.
  auto p = torch::sigmoid(logits);
  auto bce = torch::clamp_min(logits, 0) - logits * target + torch::log1p(torch::exp(-torch::abs(logits)));
  auto pt = p * target + (1 - p) * (1 - target);
  auto alpha_t = k.focal_alpha * target + (1 - k.focal_alpha) * (1 - target);
  auto focal = alpha_t * torch::pow(1 - pt, k.focal_gamma) * bce;
  auto cls = (focal.sum(2) * cared).sum() / num_pos;

  auto pos_mask = positive.unsqueeze(2).to(logits.scalar_type());
  auto tgt = targets.deltas.to(deltas.scalar_type());
  auto pred_yaw = deltas.select(2, 6), tgt_yaw = tgt.select(2, 6);
  auto pred = torch::cat({deltas.slice(2, 0, 6), (torch::sin(pred_yaw) * torch::cos(tgt_yaw)).unsqueeze(2)}, 2);
  auto goal = torch::cat({tgt.slice(2, 0, 6), (torch::cos(pred_yaw) * torch::sin(tgt_yaw)).unsqueeze(2)}, 2);
  auto diff = torch::abs(pred - goal);
  const double beta = k.smooth_l1_beta;
  auto sl1 = torch::where(diff < beta, 0.5 * diff * diff / beta, diff - 0.5 * beta);
  auto reg = (sl1 * pos_mask).sum() / num_pos;
  return {cls, reg};
}

}  // namespace sckd
