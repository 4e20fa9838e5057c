#include "sckd/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "sckd/error.hpp"
#include "sckd/geometry.hpp"
#include "sckd/scene.hpp"
#include "sckd/schedule.hpp"
#include "sckd/voxel.hpp"

namespace sckd {
namespace {

constexpr std::uint64_t kTeacherStream = 0x7465616368657231ULL;
constexpr std::uint64_t kStudentStream = 0x73747564656e7431ULL;

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

torch::optim::AdamW make_optimizer(torch::nn::Module& m, const OptimizerSpec& spec) {
  return torch::optim::AdamW(m.parameters(), torch::optim::AdamWOptions(spec.initial_lr)
                                                 .betas({spec.beta1, spec.beta2})
                                                 .weight_decay(spec.weight_decay));
}

void set_lr(torch::optim::AdamW& opt, double lr) {
  for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(g.options()).lr(lr);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return out;
}

std::int64_t batches_per_epoch(std::size_t n, int batch_size) {
  return static_cast<std::int64_t>((n + batch_size - 1) / batch_size);
}

const std::optional<std::vector<Box3D>>& labels_of(const FramePair& p) {
  return p.lidar.labels ? p.lidar.labels : p.radar.labels;
}

AnchorTargets ignore_all(const AnchorGrid& anchors) {
  AnchorTargets t;
  t.labels.assign(anchors.size(), -1);
  t.deltas.assign(anchors.size(), std::array<double, 7>{});
  return t;
}

struct Batch {
  std::vector<FramePair> pairs;
  torch::Tensor lidar, radar;
};

Batch load_batch(const std::vector<FramePair>& frames, const std::vector<std::size_t>& idx, const ModelConfig& m,
                 bool augment, bool need_lidar, std::mt19937_64& rng) {
  Batch b;
  std::vector<VoxelSet> lv, rv;
  for (std::size_t i : idx) {
    const std::uint64_t aug_seed = rng();
    b.pairs.push_back(augment ? augment_pair(frames[i], aug_seed) : frames[i]);
    rv.push_back(voxelize(b.pairs.back().radar, m.radar_grid));
    if (need_lidar) lv.push_back(voxelize(b.pairs.back().lidar, m.lidar_grid));
  }
  b.radar = batch_dense(rv);
  if (need_lidar) b.lidar = batch_dense(lv);
  return b;
}

}  // namespace

std::string format_step(const StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s epoch=%d step=%lld/%lld lr=%.6e total=%.6f gt=%.6f lrfd=%.6f frfd=%.6f ssod=%.6f",
                s.phase, s.epoch, static_cast<long long>(s.step), static_cast<long long>(s.total_steps), s.lr, s.total,
                s.gt, s.lrfd, s.frfd, s.ssod);
  return buf;
}

TeacherResult pretrain_teacher(const std::vector<FramePair>& labeled, const RunConfig& cfg, std::uint64_t seed,
                               const StepCallback& log) {
  if (labeled.empty()) throw ConfigError("teacher pretraining needs a non-empty labeled split");
  for (const auto& p : labeled)
    if (!labels_of(p)) throw ConfigError("teacher pretraining frame " + std::to_string(p.lidar.frame_id) + " has no labels");
  validate(cfg.model);
  validate(cfg.optimizer);
  at::set_num_threads(1);
  torch::manual_seed(seed);
  std::mt19937_64 rng(seed ^ kTeacherStream);

  TeacherResult r;
  r.net = TeacherNet(cfg.model);
  auto& net = r.net;
  const AnchorGrid anchors = make_anchors(net->head_geometry(), cfg.model.anchors);
  auto opt = make_optimizer(*net, cfg.optimizer);
  const std::int64_t total = cfg.train.teacher_epochs * batches_per_epoch(labeled.size(), cfg.train.batch_size);
  std::int64_t step = 0;

  net->train();
  for (int epoch = 0; epoch < cfg.train.teacher_epochs; ++epoch) {
    double sum = 0.0;
    const auto batches = epoch_batches(labeled.size(), cfg.train.batch_size, rng);
    for (const auto& idx : batches) {
      Batch b = load_batch(labeled, idx, cfg.model, cfg.train.augment, true, rng);
      std::vector<GateState> gates;
      std::vector<AnchorTargets> targets;
      for (const auto& p : b.pairs) {
        gates.push_back(dropout_gate(cfg.model.fusion, rng, true));
        targets.push_back(assign_targets(anchors, *labels_of(p), cfg.model.anchors));
      }
      const double lr = lr_schedule(step, total, cfg.optimizer);
      set_lr(opt, lr);
      auto out = net->forward(b.lidar, b.radar, gates);
      auto loss = gt_loss(out.head, stack_targets(targets, torch::kFloat32)).total();
      opt.zero_grad();
      loss.backward();
      opt.step();
      const double v = loss.item<double>();
      sum += v;
      if (log) log(StepLog{"teacher", epoch, step, total, lr, v, v, 0.0, 0.0, 0.0});
      ++step;
    }
    r.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
  }
  net->eval();
  r.checkpoint = make_checkpoint(CheckpointKind::kTeacher, *net, cfg.model, cfg.distill.adapter_kernel,
                                 static_cast<std::uint32_t>(cfg.train.teacher_epochs), rng_text(rng), &opt);
  return r;
}

bool needs_teacher(const DistillConfig& d) { return d.use_ssod || d.alpha > 0.0 || d.beta > 0.0; }

StudentResult distill_student(TeacherNet* teacher, const std::vector<FramePair>& frames, const RunConfig& cfg,
                              const DistillConfig& distill, std::uint64_t seed, const StepCallback& log) {
  validate(distill);
  validate(cfg.optimizer);
  if (frames.empty()) throw ConfigError("student training needs at least one frame");
  const bool use_teacher = needs_teacher(distill);
  if (use_teacher && (teacher == nullptr || teacher->is_empty()))
    throw ConfigError("this distillation configuration needs a teacher checkpoint");
  if (use_teacher && !(teacher->get()->config() == cfg.model))
    throw ConfigError("teacher checkpoint was built with a different model configuration");
  at::set_num_threads(1);

  // No-label-leak: the student only ever sees these copies.
  std::vector<FramePair> train = frames;
  if (!distill.use_gt)
    for (auto& p : train) {
      p.lidar.labels.reset();
      p.radar.labels.reset();
    }

  torch::manual_seed(seed + 1);
  std::mt19937_64 rng(seed ^ kStudentStream);
  StudentResult r;
  r.net = StudentNet(cfg.model, distill);
  auto& net = r.net;
  const AnchorGrid anchors = make_anchors(net->head_geometry(), cfg.model.anchors);
  auto opt = make_optimizer(*net, cfg.optimizer);
  const std::int64_t total = cfg.train.student_epochs * batches_per_epoch(train.size(), cfg.train.batch_size);
  std::int64_t step = 0;

  if (use_teacher) {
    (*teacher)->eval();
    for (auto& p : (*teacher)->parameters()) p.set_requires_grad(false);
    r.teacher_hash_before = state_hash(**teacher);
  }

  net->train();
  for (int epoch = 0; epoch < cfg.train.student_epochs; ++epoch) {
    double sum = 0.0;
    const auto batches = epoch_batches(train.size(), cfg.train.batch_size, rng);
    for (const auto& idx : batches) {
      Batch b = load_batch(train, idx, cfg.model, cfg.train.augment, use_teacher, rng);
      const auto n = static_cast<std::int64_t>(b.pairs.size());

      TeacherOutput t;
      std::vector<std::vector<Box3D>> pseudo;
      if (use_teacher) {
        torch::NoGradGuard ng;
        t = (*teacher)->forward(b.lidar, b.radar);
        if (distill.use_ssod)
          for (std::int64_t s = 0; s < n; ++s) {
            pseudo.push_back(filter_pseudo_labels(decode_nms(t.head, s, anchors, cfg.postprocess), distill.sigma));
            r.pseudo_labels += pseudo.back().size();
          }
      }

      const double lr = lr_schedule(step, total, cfg.optimizer);
      set_lr(opt, lr);
      auto out = net->forward(b.radar);
      auto zero = torch::zeros({}, out.radar_bev.options());
      auto lrfd = distill.alpha > 0.0 ? lrfd_loss(out.radar_bev, t.lidar_bev, net->adapter_lidar) : zero;
      auto frfd = distill.beta > 0.0
                      ? frfd_loss(out.radar_bev, t.fused, net->adapter_fusion_lidar, net->adapter_fusion_radar)
                      : zero;
      auto ssod = distill.use_ssod ? ssod_loss(out.head, pseudo, anchors, cfg.model.anchors).total() : zero;
      std::optional<torch::Tensor> gt;
      if (distill.use_gt) {
        std::vector<AnchorTargets> targets;
        for (const auto& p : b.pairs)
          targets.push_back(labels_of(p) ? assign_targets(anchors, *labels_of(p), cfg.model.anchors) : ignore_all(anchors));
        gt = gt_loss(out.head, stack_targets(targets, torch::kFloat32)).total();
      }
      auto loss = total_loss(lrfd, frfd, ssod, distill, gt);
      opt.zero_grad();
      if (loss.requires_grad()) {
        loss.backward();
        opt.step();
      }
      const double v = loss.item<double>();
      sum += v;
      if (log)
        log(StepLog{"student", epoch, step, total, lr, v, gt ? gt->item<double>() : 0.0, lrfd.item<double>(),
                    frfd.item<double>(), ssod.item<double>()});
      ++step;
    }
    r.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
  }
  net->eval();
  if (use_teacher) r.teacher_hash_after = state_hash(**teacher);
  r.checkpoint = make_checkpoint(CheckpointKind::kStudent, *net, cfg.model, distill.adapter_kernel,
                                 static_cast<std::uint32_t>(cfg.train.student_epochs), rng_text(rng), &opt);
  return r;
}

std::vector<FrameBoxes> detect_student(StudentNet& net, const std::vector<FramePair>& frames,
                                       const PostprocessOptions& post) {
  torch::NoGradGuard ng;
  net->eval();
  const AnchorGrid anchors = make_anchors(net->head_geometry(), net->config().anchors);
  std::vector<FrameBoxes> out;
  for (const auto& p : frames) {
    auto o = net->forward(batch_dense({voxelize(p.radar, net->config().radar_grid)}));
    out.push_back(FrameBoxes{p.radar.frame_id, decode_nms(o.head, 0, anchors, post)});
  }
  return out;
}

std::vector<FrameBoxes> detect_teacher(TeacherNet& net, const std::vector<FramePair>& frames,
                                       const PostprocessOptions& post) {
  torch::NoGradGuard ng;
  net->eval();
  const AnchorGrid anchors = make_anchors(net->head_geometry(), net->config().anchors);
  std::vector<FrameBoxes> out;
  for (const auto& p : frames) {
    auto o = net->forward(batch_dense({voxelize(p.lidar, net->config().lidar_grid)}),
                          batch_dense({voxelize(p.radar, net->config().radar_grid)}));
    out.push_back(FrameBoxes{p.lidar.frame_id, decode_nms(o.head, 0, anchors, post)});
  }
  return out;
}

std::vector<FrameBoxes> ground_truth(const std::vector<FramePair>& frames) {
  std::vector<FrameBoxes> out;
  for (const auto& p : frames) {
    if (!labels_of(p)) throw ConfigError("evaluation frame " + std::to_string(p.lidar.frame_id) + " has no labels");
    out.push_back(FrameBoxes{p.lidar.frame_id, *labels_of(p)});
  }
  return out;
}

EvalReport evaluate_student(StudentNet& net, const std::vector<FramePair>& val, const RunConfig& cfg) {
  return map_eval(detect_student(net, val, cfg.postprocess), ground_truth(val), cfg.eval);
}

torch::Tensor activation_heatmap(VoxelEncoder& encoder, const PointCloudFrame& frame) {
  if (frame.modality != encoder->modality()) throw ConfigError("heatmap: frame modality does not match the encoder");
  torch::NoGradGuard ng;
  encoder->eval();
  auto f = encoder->forward(batch_dense({voxelize(frame, encoder->grid())}));
  return f.abs().amax(1)[0].to(torch::kFloat64).contiguous();
}

double contrast_ratio(const torch::Tensor& heatmap, const BevGeometry& g, const std::vector<Box3D>& boxes) {
  SCKD_EXPECT(heatmap.dim() == 2 && heatmap.size(0) == g.height && heatmap.size(1) == g.width,
              "contrast_ratio: heatmap does not match the grid geometry");
  auto hm = heatmap.to(torch::kFloat64).contiguous();
  const double* d = hm.data_ptr<double>();
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_n = 0, out_n = 0;
  for (int h = 0; h < g.height; ++h)
    for (int w = 0; w < g.width; ++w) {
      const double x = g.cell_center_x(w), y = g.cell_center_y(h);
      const bool inside = std::any_of(boxes.begin(), boxes.end(), [&](const Box3D& b) { return contains_bev(b, x, y); });
      const double v = d[static_cast<std::size_t>(h) * g.width + w];
      if (inside) {
        in_sum += v;
        ++in_n;
      } else {
        out_sum += v;
        ++out_n;
      }
    }
  SCKD_EXPECT(in_n > 0 && out_n > 0, "contrast_ratio: need cells both inside and outside the boxes");
  const double in_mean = in_sum / in_n, out_mean = out_sum / out_n;
  if (out_mean == 0.0) return in_mean > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return in_mean / out_mean;
}

void write_heatmap_csv(const torch::Tensor& heatmap, const std::filesystem::path& path) {
  SCKD_EXPECT(heatmap.dim() == 2, "heatmap must be H x W");
  auto hm = heatmap.to(torch::kFloat64).contiguous();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const double* d = hm.data_ptr<double>();
  char buf[32];
  for (std::int64_t h = 0; h < hm.size(0); ++h) {
    for (std::int64_t w = 0; w < hm.size(1); ++w) {
      std::snprintf(buf, sizeof(buf), "%.9g", d[h * hm.size(1) + w]);
      if (w) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

double median(std::vector<double> v) {
  SCKD_EXPECT(!v.empty(), "median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<AblationVariant> ablation_variants(const RunConfig& cfg) {
  if (!cfg.ablation.empty()) return cfg.ablation;
  std::vector<AblationVariant> out;
  for (const char* name : {"gt", "ssod", "gt+ssod", "ssod+frfd", "gt+ssod+frfd", "ssod+lrfd", "gt+ssod+frfd+lrfd", "sckd"})
    out.push_back(preset_variant(name, cfg.distill));
  return out;
}

AblationTable run_ablation(const RunConfig& cfg, const std::vector<AblationVariant>& variants,
                           const std::vector<FramePair>& labeled, const std::vector<FramePair>& unlabeled,
                           const std::vector<FramePair>& val, const StepCallback& log) {
  AblationTable table;
  table.seeds = cfg.ablation_seeds;
  SCKD_EXPECT(!table.seeds.empty(), "run_ablation: no seeds");
  std::map<std::pair<std::uint64_t, int>, TeacherNet> teachers;

  for (const auto& v : variants) {
    AblationRow row;
    row.variant = v;
    const int n_teacher = std::max(1, static_cast<int>(v.teacher_labeled_fraction * labeled.size()));
    if (v.student_unlabeled > static_cast<int>(unlabeled.size()))
      throw ConfigError("variant '" + v.name + "' asks for more unlabeled frames than the dataset has");
    std::vector<FramePair> student_frames;
    if (v.student_uses_labeled) student_frames = labeled;
    student_frames.insert(student_frames.end(), unlabeled.begin(), unlabeled.begin() + v.student_unlabeled);

    std::vector<double> maps, corridor;
    for (std::uint64_t seed : table.seeds) {
      TeacherNet* teacher = nullptr;
      if (needs_teacher(v.distill)) {
        auto key = std::make_pair(seed, n_teacher);
        auto it = teachers.find(key);
        if (it == teachers.end()) {
          std::vector<FramePair> subset(labeled.begin(), labeled.begin() + std::min<std::size_t>(n_teacher, labeled.size()));
          it = teachers.emplace(key, pretrain_teacher(subset, cfg, seed, log).net).first;
        }
        teacher = &it->second;
      }
      auto student = distill_student(teacher, student_frames, cfg, v.distill, seed, log);
      row.reports.push_back(evaluate_student(student.net, val, cfg));
      maps.push_back(row.reports.back().entire.map);
      corridor.push_back(row.reports.back().corridor.map);
    }
    row.median_map = median(maps);
    row.median_corridor_map = median(corridor);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_ablation(const AblationTable& t) {
  std::ostringstream os;
  char buf[128];
  os << "variant";
  for (auto s : t.seeds) os << "\tseed" << s << ".mAP";
  os << "\tmedian.mAP\tmedian.corridor_mAP\n";
  for (const auto& r : t.rows) {
    os << r.variant.name;
    for (const auto& rep : r.reports) {
      std::snprintf(buf, sizeof(buf), "\t%.4f", rep.entire.map);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "\t%.4f\t%.4f\n", r.median_map, r.median_corridor_map);
    os << buf;
  }
  return os.str();
}

}  // namespace sckd
