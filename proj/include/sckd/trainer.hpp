#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sckd/checkpoint.hpp"
#include "sckd/config.hpp"
#include "sckd/metrics.hpp"
#include "sckd/model.hpp"

namespace sckd {

/// One optimizer step as reported to the progress log.
struct StepLog {
  const char* phase = "";
  int epoch = 0;
  std::int64_t step = 0;
  std::int64_t total_steps = 0;
  double lr = 0.0;
  double total = 0.0;
  double gt = 0.0;  // detection loss against ground truth
  double lrfd = 0.0;
  double frfd = 0.0;
  double ssod = 0.0;
};
using StepCallback = std::function<void(const StepLog&)>;

std::string format_step(const StepLog& s);

struct TeacherResult {
  TeacherNet net{nullptr};
  Checkpoint checkpoint;
  std::vector<double> epoch_loss;  // mean total loss per epoch
};

/// Ground-truth detection loss on the fused path with the dropout gate active. Throws ConfigError on an
/// empty training set.
TeacherResult pretrain_teacher(const std::vector<FramePair>& labeled, const RunConfig& cfg, std::uint64_t seed,
                               const StepCallback& log = {});

struct StudentResult {
  StudentNet net{nullptr};
  Checkpoint checkpoint;
  std::vector<double> epoch_loss;
  std::uint64_t teacher_hash_before = 0;
  std::uint64_t teacher_hash_after = 0;
  std::size_t pseudo_labels = 0;  // total over all steps
};

/// Whether `distill` needs a teacher at all (any feature term or pseudo-label supervision).
bool needs_teacher(const DistillConfig& distill);

/// Trains a radar-only student. The teacher stays in eval mode and is never updated. Labels are stripped
/// from every frame unless `distill.use_gt`.
StudentResult distill_student(TeacherNet* teacher, const std::vector<FramePair>& frames, const RunConfig& cfg,
                              const DistillConfig& distill, std::uint64_t seed, const StepCallback& log = {});

std::vector<FrameBoxes> detect_student(StudentNet& net, const std::vector<FramePair>& frames,
                                       const PostprocessOptions& post);
std::vector<FrameBoxes> detect_teacher(TeacherNet& net, const std::vector<FramePair>& frames,
                                       const PostprocessOptions& post);
std::vector<FrameBoxes> ground_truth(const std::vector<FramePair>& frames);

EvalReport evaluate_student(StudentNet& net, const std::vector<FramePair>& val, const RunConfig& cfg);

/// H x W grid (float64) of the max over channels of |encoder BEV activation| for one radar frame.
torch::Tensor activation_heatmap(VoxelEncoder& encoder, const PointCloudFrame& frame);
/// Mean activation over cells whose centers fall inside a box, divided by the mean over the other cells.
double contrast_ratio(const torch::Tensor& heatmap, const BevGeometry& geometry, const std::vector<Box3D>& boxes);
void write_heatmap_csv(const torch::Tensor& heatmap, const std::filesystem::path& path);

struct AblationRow {
  AblationVariant variant;
  std::vector<EvalReport> reports;  // one per seed
  double median_map = 0.0;
  double median_corridor_map = 0.0;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
};

/// Variants in `cfg.ablation`, or every preset when that list is empty.
std::vector<AblationVariant> ablation_variants(const RunConfig& cfg);

/// Trains and evaluates each variant for each seed. Teachers are shared between variants with the same
/// seed and labeled fraction.
AblationTable run_ablation(const RunConfig& cfg, const std::vector<AblationVariant>& variants,
                           const std::vector<FramePair>& labeled, const std::vector<FramePair>& unlabeled,
                           const std::vector<FramePair>& val, const StepCallback& log = {});

std::string format_ablation(const AblationTable& table);

double median(std::vector<double> v);

}  // namespace sckd
