#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sckd/metrics.hpp"
#include "sckd/options.hpp"
#include "sckd/scene.hpp"
#include "sckd/schedule.hpp"

namespace sckd {

struct DatasetCounts {
  int n_labeled = 200;
  int n_unlabeled = 0;
  int n_val = 50;

  bool operator==(const DatasetCounts&) const = default;
};

/// One row of an ablation table.
struct AblationVariant {
  std::string name;
  DistillConfig distill;
  double teacher_labeled_fraction = 1.0;  // share of the labeled split the teacher is trained on
  bool student_uses_labeled = true;       // student sees the labeled frames (labels only if use_gt)
  int student_unlabeled = 0;              // unlabeled frames added to the student's training set

  bool operator==(const AblationVariant&) const = default;
};

/// Named presets: gt, ssod, gt+ssod, ssod+frfd, gt+ssod+frfd, ssod+lrfd, gt+ssod+frfd+lrfd, sckd.
AblationVariant preset_variant(const std::string& name, const DistillConfig& base);

struct PathsConfig {
  std::string data_dir = "data";
  std::string teacher_checkpoint = "teacher.ckpt";
  std::string student_checkpoint = "student.ckpt";

  bool operator==(const PathsConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SceneSpec scene{};
  DatasetCounts dataset{};
  ModelConfig model{};
  DistillConfig distill{};
  OptimizerSpec optimizer{};
  TrainOptions train{};
  PostprocessOptions postprocess{};
  EvalConfig eval{};
  PathsConfig paths{};
  std::vector<AblationVariant> ablation{};
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};

  bool operator==(const RunConfig&) const = default;
};

/// Validates every section; throws ConfigError.
void validate(const RunConfig& cfg);

/// Strict JSON parsing: unknown keys and wrongly-typed values are errors; omitted keys keep defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with every field present.
std::string serialize_config(const RunConfig& cfg);

/// Canonical JSON of the shape-determining model settings.
std::string serialize_model_config(const ModelConfig& m);
ModelConfig parse_model_config(const std::string& json_text);
std::uint64_t model_config_hash(const ModelConfig& m);

}  // namespace sckd
