// sckd: synthesize data, pretrain the teacher, distill the student, evaluate, run ablations, export heatmaps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "sckd/checkpoint.hpp"
#include "sckd/config.hpp"
#include "sckd/error.hpp"
#include "sckd/frame_io.hpp"
#include "sckd/trainer.hpp"

namespace fs = std::filesystem;
using namespace sckd;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int log_every = 10;
};

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.scene.seed = *c.seed;
  }
  validate(cfg);
  return cfg;
}

StepCallback progress(int every) {
  return [every](const StepLog& s) {
    if (every > 0 && (s.step % every == 0 || s.step + 1 == s.total_steps)) std::cerr << format_step(s) << '\n';
  };
}

DatasetManifest open_dataset(const fs::path& dir) {
  const fs::path m = dir / "manifest.txt";
  if (!fs::exists(m)) throw ConfigError("dataset manifest not found: " + m.string());
  return read_manifest(m);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radar student / lidar-radar teacher detector toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "Overrides the run and scene seeds");
  app.add_option("--log-every", common.log_every, "Progress line every N optimizer steps (0: silent)");

  std::string data_dir, out, teacher_path, checkpoint_path, frame_path;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  synth->add_option("--out", out, "Output directory (default: paths.data_dir)");

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain the lidar-radar teacher on the labeled split");
  pretrain->add_option("--data", data_dir, "Dataset directory (default: paths.data_dir)");
  pretrain->add_option("--out", out, "Teacher checkpoint (default: paths.teacher_checkpoint)");

  auto* distill = app.add_subcommand("distill", "Distill the radar student from a frozen teacher");
  distill->add_option("--data", data_dir, "Dataset directory");
  distill->add_option("--teacher", teacher_path, "Teacher checkpoint (default: paths.teacher_checkpoint)");
  distill->add_option("--out", out, "Student checkpoint (default: paths.student_checkpoint)");

  auto* eval = app.add_subcommand("eval", "Evaluate a student or teacher checkpoint on the val split");
  eval->add_option("--data", data_dir, "Dataset directory");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint (default: paths.student_checkpoint)");
  eval->add_option("--out", out, "Report file (key=value lines); printed when omitted");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate every ablation variant over the configured seeds");
  ablate->add_option("--data", data_dir, "Dataset directory");
  ablate->add_option("--out", out, "Table file (tab separated); printed when omitted");

  auto* heatmap = app.add_subcommand("heatmap", "Export the radar encoder BEV activation magnitude as CSV");
  heatmap->add_option("--checkpoint", checkpoint_path, "Student or teacher checkpoint")->required();
  heatmap->add_option("--frame", frame_path, "Radar frame file")->required();
  heatmap->add_option("--out", out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = load(common);
    const fs::path data = data_dir.empty() ? fs::path(cfg.paths.data_dir) : fs::path(data_dir);
    const auto log = progress(common.log_every);

    if (*synth) {
      const fs::path dir = out.empty() ? fs::path(cfg.paths.data_dir) : fs::path(out);
      const auto m = make_dataset(cfg.dataset.n_labeled, cfg.dataset.n_unlabeled, cfg.dataset.n_val, cfg.scene, dir);
      std::printf("wrote %s: labeled=%zu unlabeled=%zu val=%zu\n", (dir / "manifest.txt").c_str(),
                  m.count(Split::kLabeledTrain), m.count(Split::kUnlabeledTrain), m.count(Split::kVal));
    } else if (*pretrain) {
      const auto labeled = load_split(open_dataset(data), Split::kLabeledTrain);
      auto r = pretrain_teacher(labeled, cfg, cfg.seed, log);
      const fs::path dst = out.empty() ? fs::path(cfg.paths.teacher_checkpoint) : fs::path(out);
      save_checkpoint(r.checkpoint, dst);
      std::printf("wrote %s (final epoch loss %.6f)\n", dst.c_str(), r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back());
    } else if (*distill) {
      const auto m = open_dataset(data);
      std::vector<FramePair> frames = load_split(m, Split::kLabeledTrain);
      const auto unlabeled = load_split(m, Split::kUnlabeledTrain);
      frames.insert(frames.end(), unlabeled.begin(), unlabeled.end());
      std::optional<TeacherNet> teacher;
      if (needs_teacher(cfg.distill)) {
        const fs::path src = teacher_path.empty() ? fs::path(cfg.paths.teacher_checkpoint) : fs::path(teacher_path);
        require_file(src, "teacher checkpoint");
        teacher = load_teacher(load_checkpoint(src));
      }
      auto r = distill_student(teacher ? &*teacher : nullptr, frames, cfg, cfg.distill, cfg.seed, log);
      const fs::path dst = out.empty() ? fs::path(cfg.paths.student_checkpoint) : fs::path(out);
      save_checkpoint(r.checkpoint, dst);
      std::printf("wrote %s (final epoch loss %.6f, pseudo-labels %zu)\n", dst.c_str(),
                  r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back(), r.pseudo_labels);
    } else if (*eval) {
      const fs::path src = checkpoint_path.empty() ? fs::path(cfg.paths.student_checkpoint) : fs::path(checkpoint_path);
      require_file(src, "checkpoint");
      const Checkpoint ckpt = load_checkpoint(src);
      const auto val = load_split(open_dataset(data), Split::kVal);
      std::vector<FrameBoxes> dets;
      if (ckpt.kind == CheckpointKind::kTeacher) {
        auto net = load_teacher(ckpt);
        dets = detect_teacher(net, val, cfg.postprocess);
      } else {
        auto net = load_student(ckpt);
        dets = detect_student(net, val, cfg.postprocess);
      }
      const auto report = map_eval(dets, ground_truth(val), cfg.eval);
      if (out.empty()) {
        std::cout << format_report_text(report, cfg.eval);
      } else {
        write_text(out, format_report_kv(report));
        std::printf("wrote %s\n", out.c_str());
      }
    } else if (*ablate) {
      const auto m = open_dataset(data);
      const auto table = run_ablation(cfg, ablation_variants(cfg), load_split(m, Split::kLabeledTrain),
                                       load_split(m, Split::kUnlabeledTrain), load_split(m, Split::kVal), log);
      const std::string text = format_ablation(table);
      if (out.empty()) {
        std::cout << text;
      } else {
        write_text(out, text);
        std::printf("wrote %s\n", out.c_str());
      }
    } else if (*heatmap) {
      require_file(checkpoint_path, "checkpoint");
      require_file(frame_path, "frame");
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      const PointCloudFrame frame = read_frame(frame_path);
      torch::Tensor hm;
      if (ckpt.kind == CheckpointKind::kTeacher) {
        auto net = load_teacher(ckpt);
        hm = activation_heatmap(frame.modality == Modality::kLidar ? net->lidar_encoder : net->radar_encoder, frame);
      } else {
        auto net = load_student(ckpt);
        hm = activation_heatmap(net->radar_encoder, frame);
      }
      write_heatmap_csv(hm, out);
      std::printf("wrote %s (%lld x %lld)\n", out.c_str(), static_cast<long long>(hm.size(0)),
                  static_cast<long long>(hm.size(1)));
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 3;
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
