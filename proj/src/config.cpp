#include "sckd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sckd/error.hpp"
#include "sckd/hash.hpp"
#include "sckd/metrics.hpp"

namespace sckd {

using nlohmann::json;

namespace {

// Reads a JSON object field by field and rejects anything left unread.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong value type");
    }
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    Section s(*it, path_ + "." + key);
    fn(s);
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E enum_from(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const std::string& where) {
  for (const auto& [name, v] : table)
    if (s == name) return v;
  throw ConfigError(where + ": unknown value '" + s + "'");
}

void read_grid(Section& s, VoxelGridSpec& g) {
  s.get("range_min", g.range_min);
  s.get("range_max", g.range_max);
  s.get("voxel_size", g.voxel_size);
  s.get("max_points_per_voxel", g.max_points_per_voxel);
}

json write_grid(const VoxelGridSpec& g) {
  return {{"range_min", g.range_min},
          {"range_max", g.range_max},
          {"voxel_size", g.voxel_size},
          {"max_points_per_voxel", g.max_points_per_voxel}};
}

void read_model(Section& s, ModelConfig& m) {
  s.section("lidar_grid", [&](Section& g) { read_grid(g, m.lidar_grid); });
  s.section("radar_grid", [&](Section& g) { read_grid(g, m.radar_grid); });
  s.section("encoder", [&](Section& e) {
    e.get("conv3d_channels", m.encoder.conv3d_channels);
    e.get("out_channels", m.encoder.out_channels);
    e.get("bev_stride", m.encoder.bev_stride);
  });
  s.section("neck", [&](Section& n) {
    n.get("mid_channels", m.neck.mid_channels);
    n.get("up_channels", m.neck.up_channels);
    n.get("stride", m.neck.stride);
  });
  s.section("anchors", [&](Section& a) {
    a.get("size", m.anchors.size);
    a.get("z_center", m.anchors.z_center);
    a.get("pos_iou", m.anchors.pos_iou);
    a.get("neg_iou", m.anchors.neg_iou);
    a.get("yaws", m.anchors.yaws);
  });
  s.section("fusion", [&](Section& f) {
    f.get("p_drop", m.fusion.p_drop);
    f.get("p_lidar_drop", m.fusion.p_lidar_drop);
    f.get("random_dropout", m.fusion.random_dropout);
    std::string mode;
    f.get("weight_mode", mode);
    if (!mode.empty())
      m.fusion.weight_mode = enum_from<FusionWeightMode>(
          mode, {{"per_channel", FusionWeightMode::kPerChannel}, {"scalar", FusionWeightMode::kScalar}},
          f.path() + ".weight_mode");
  });
}

json write_model(const ModelConfig& m) {
  return {
      {"lidar_grid", write_grid(m.lidar_grid)},
      {"radar_grid", write_grid(m.radar_grid)},
      {"encoder",
       {{"conv3d_channels", m.encoder.conv3d_channels},
        {"out_channels", m.encoder.out_channels},
        {"bev_stride", m.encoder.bev_stride}}},
      {"neck",
       {{"mid_channels", m.neck.mid_channels}, {"up_channels", m.neck.up_channels}, {"stride", m.neck.stride}}},
      {"anchors",
       {{"size", m.anchors.size},
        {"z_center", m.anchors.z_center},
        {"pos_iou", m.anchors.pos_iou},
        {"neg_iou", m.anchors.neg_iou},
        {"yaws", m.anchors.yaws}}},
      {"fusion",
       {{"p_drop", m.fusion.p_drop},
        {"p_lidar_drop", m.fusion.p_lidar_drop},
        {"random_dropout", m.fusion.random_dropout},
        {"weight_mode", m.fusion.weight_mode == FusionWeightMode::kPerChannel ? "per_channel" : "scalar"}}},
  };
}

void read_distill(Section& d, DistillConfig& c) {
  d.get("sigma", c.sigma);
  d.get("alpha", c.alpha);
  d.get("beta", c.beta);
  d.get("use_ssod", c.use_ssod);
  d.get("use_gt", c.use_gt);
  d.get("adapter_kernel", c.adapter_kernel);
  d.get("adapter_identity_init", c.adapter_identity_init);
}

json write_distill(const DistillConfig& c) {
  return {{"sigma", c.sigma},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"use_ssod", c.use_ssod},
          {"use_gt", c.use_gt},
          {"adapter_kernel", c.adapter_kernel},
          {"adapter_identity_init", c.adapter_identity_init}};
}

json write_region(const Region& r) { return {r.x_min, r.x_max, r.y_min, r.y_max}; }

Region read_region(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(where + ": expected [x_min, x_max, y_min, y_max]");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  } catch (const json::exception&) {
    throw ConfigError(where + ": expected numbers");
  }
}

}  // namespace

AblationVariant preset_variant(const std::string& name, const DistillConfig& base) {
  AblationVariant v;
  v.name = name;
  v.distill = base;
  auto set = [&](bool gt, bool ssod, bool frfd, bool lrfd) {
    v.distill.use_gt = gt;
    v.distill.use_ssod = ssod;
    v.distill.beta = frfd ? (base.beta > 0 ? base.beta : 3e-4) : 0.0;
    v.distill.alpha = lrfd ? (base.alpha > 0 ? base.alpha : 3e-4) : 0.0;
  };
  if (name == "gt") set(true, false, false, false);
  else if (name == "ssod") set(false, true, false, false);
  else if (name == "gt+ssod") set(true, true, false, false);
  else if (name == "ssod+frfd") set(false, true, true, false);
  else if (name == "gt+ssod+frfd") set(true, true, true, false);
  else if (name == "ssod+lrfd") set(false, true, false, true);
  else if (name == "gt+ssod+frfd+lrfd") set(true, true, true, true);
  else if (name == "sckd") set(false, true, true, true);
  else throw ConfigError("unknown ablation preset '" + name + "'");
  return v;
}

void validate(const AnchorConfig& cfg) {
  for (int k = 0; k < kNumClasses; ++k) {
    for (double s : cfg.size[k])
      if (!(s > 0.0)) throw ConfigError("anchor sizes must be positive");
    if (!(cfg.pos_iou[k] > cfg.neg_iou[k])) throw ConfigError("anchor positive IoU must exceed negative IoU");
    if (!(cfg.neg_iou[k] >= 0.0 && cfg.pos_iou[k] <= 1.0)) throw ConfigError("anchor IoU thresholds must lie in [0, 1]");
  }
  if (cfg.yaws.empty()) throw ConfigError("anchor yaw set is empty");
}

void validate(const DistillConfig& cfg) {
  if (!(cfg.sigma >= 0.0 && cfg.sigma <= 1.0)) throw ConfigError("distill.sigma must lie in [0, 1]");
  if (!(cfg.alpha >= 0.0) || !(cfg.beta >= 0.0)) throw ConfigError("distill.alpha and distill.beta must be >= 0");
  if (cfg.adapter_kernel <= 0 || cfg.adapter_kernel % 2 == 0) throw ConfigError("distill.adapter_kernel must be odd");
  if (!cfg.use_ssod && !cfg.use_gt && cfg.alpha == 0.0 && cfg.beta == 0.0)
    throw ConfigError("distill config enables no loss term");
}

void validate(const ModelConfig& cfg) {
  validate(cfg.lidar_grid);
  validate(cfg.radar_grid);
  validate(cfg.anchors);
  if (cfg.lidar_grid.range_min != cfg.radar_grid.range_min || cfg.lidar_grid.range_max != cfg.radar_grid.range_max ||
      cfg.lidar_grid.voxel_size != cfg.radar_grid.voxel_size)
    throw ConfigError("lidar and radar grids must share range and voxel size (only the point cap may differ)");
  const auto d = cfg.lidar_grid.dims();
  const int s = cfg.encoder.bev_stride * cfg.neck.stride * 2;
  if (d[0] % s != 0 || d[1] % s != 0)
    throw ConfigError("BEV dims must be divisible by encoder stride * neck stride * 2");
  if (cfg.encoder.bev_stride != 1 && cfg.encoder.bev_stride != 2) throw ConfigError("encoder.bev_stride must be 1 or 2");
  if (cfg.neck.stride != 1 && cfg.neck.stride != 2) throw ConfigError("neck.stride must be 1 or 2");
  if (cfg.encoder.out_channels <= 0 || cfg.neck.mid_channels <= 0 || cfg.neck.up_channels <= 0)
    throw ConfigError("channel widths must be positive");
  for (int c : cfg.encoder.conv3d_channels)
    if (c <= 0) throw ConfigError("encoder.conv3d_channels must be positive");
  if (!(cfg.fusion.p_drop >= 0.0 && cfg.fusion.p_drop <= 1.0 && cfg.fusion.p_lidar_drop >= 0.0 &&
        cfg.fusion.p_lidar_drop <= 1.0))
    throw ConfigError("fusion probabilities must lie in [0, 1]");
}

void validate(const RunConfig& cfg) {
  validate(cfg.scene);
  if (cfg.dataset.n_labeled < 0 || cfg.dataset.n_unlabeled < 0 || cfg.dataset.n_val < 0)
    throw ConfigError("dataset counts must be non-negative");
  validate(cfg.model);
  validate(cfg.distill);
  validate(cfg.optimizer);
  if (cfg.train.teacher_epochs < 0 || cfg.train.student_epochs < 0) throw ConfigError("train epochs must be >= 0");
  if (cfg.train.batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  const auto& p = cfg.postprocess;
  if (!(p.conf_min >= 0 && p.conf_min <= 1 && p.nms_iou >= 0 && p.nms_iou <= 1))
    throw ConfigError("postprocess thresholds must lie in [0, 1]");
  if (p.pre_nms_max <= 0 || p.post_nms_max <= 0) throw ConfigError("postprocess box limits must be positive");
  validate(cfg.eval);
  for (const AblationVariant& v : cfg.ablation) {
    validate(v.distill);
    if (!(v.teacher_labeled_fraction > 0.0 && v.teacher_labeled_fraction <= 1.0))
      throw ConfigError("ablation variant '" + v.name + "': teacher_labeled_fraction must lie in (0, 1]");
    if (v.student_unlabeled < 0) throw ConfigError("ablation variant '" + v.name + "': student_unlabeled must be >= 0");
  }
  if (!cfg.ablation.empty() && cfg.ablation_seeds.empty()) throw ConfigError("ablation.seeds is empty");
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  {
    Section root(j, "config");
    root.get("seed", c.seed);
    root.section("scene", [&](Section& s) {
      s.get("n_objects", c.scene.n_objects);
      s.get("x_min", c.scene.x_min);
      s.get("x_max", c.scene.x_max);
      s.get("y_min", c.scene.y_min);
      s.get("y_max", c.scene.y_max);
      s.get("ground_z", c.scene.ground_z);
      s.get("lidar_points_per_object", c.scene.lidar_points_per_object);
      s.get("background_density", c.scene.background_density);
      s.get("n_clutter", c.scene.n_clutter);
      s.get("radar_density_ratio", c.scene.radar_density_ratio);
      s.get("radar_sigma", c.scene.radar_sigma);
      s.get("ghost_rate", c.scene.ghost_rate);
      s.get("seed", c.scene.seed);
    });
    root.section("dataset", [&](Section& s) {
      s.get("n_labeled", c.dataset.n_labeled);
      s.get("n_unlabeled", c.dataset.n_unlabeled);
      s.get("n_val", c.dataset.n_val);
    });
    root.section("model", [&](Section& s) { read_model(s, c.model); });
    root.section("distill", [&](Section& s) { read_distill(s, c.distill); });
    root.section("optimizer", [&](Section& s) {
      s.get("initial_lr", c.optimizer.initial_lr);
      s.get("max_lr", c.optimizer.max_lr);
      s.get("min_lr", c.optimizer.min_lr);
      s.get("weight_decay", c.optimizer.weight_decay);
      s.get("warmup_fraction", c.optimizer.warmup_fraction);
      s.get("beta1", c.optimizer.beta1);
      s.get("beta2", c.optimizer.beta2);
    });
    root.section("train", [&](Section& s) {
      s.get("teacher_epochs", c.train.teacher_epochs);
      s.get("student_epochs", c.train.student_epochs);
      s.get("batch_size", c.train.batch_size);
      s.get("augment", c.train.augment);
    });
    root.section("postprocess", [&](Section& s) {
      s.get("conf_min", c.postprocess.conf_min);
      s.get("nms_iou", c.postprocess.nms_iou);
      s.get("pre_nms_max", c.postprocess.pre_nms_max);
      s.get("post_nms_max", c.postprocess.post_nms_max);
    });
    root.section("eval", [&](Section& s) {
      std::string mode, kind;
      s.get("mode", mode);
      s.get("iou_kind", kind);
      if (!mode.empty())
        c.eval.mode = enum_from<ApMode>(mode, {{"AP11", ApMode::kAP11}, {"AP40", ApMode::kAP40}}, s.path() + ".mode");
      if (!kind.empty())
        c.eval.iou_kind = enum_from<IouKind>(kind, {{"BEV", IouKind::kBev}, {"3D", IouKind::k3d}}, s.path() + ".iou_kind");
      s.get("iou_threshold", c.eval.iou_threshold);
      if (const json* r = s.raw("corridor")) c.eval.corridor = read_region(*r, s.path() + ".corridor");
      if (const json* r = s.raw("region")) {
        if (r->is_null()) c.eval.region.reset();
        else c.eval.region = read_region(*r, s.path() + ".region");
      }
    });
    root.section("paths", [&](Section& s) {
      s.get("data_dir", c.paths.data_dir);
      s.get("teacher_checkpoint", c.paths.teacher_checkpoint);
      s.get("student_checkpoint", c.paths.student_checkpoint);
    });
    root.section("ablation", [&](Section& s) {
      s.get("seeds", c.ablation_seeds);
      if (const json* vs = s.raw("variants")) {
        if (!vs->is_array()) throw ConfigError(s.path() + ".variants: expected an array");
        c.ablation.clear();
        for (std::size_t i = 0; i < vs->size(); ++i) {
          Section v((*vs)[i], s.path() + ".variants[" + std::to_string(i) + "]");
          std::string name, preset;
          v.get("name", name);
          v.get("preset", preset);
          AblationVariant var = preset.empty() ? AblationVariant{name, c.distill} : preset_variant(preset, c.distill);
          if (!name.empty()) var.name = name;
          if (var.name.empty()) throw ConfigError(v.path() + ": variant needs a name or a preset");
          v.section("distill", [&](Section& d) { read_distill(d, var.distill); });
          v.get("teacher_labeled_fraction", var.teacher_labeled_fraction);
          v.get("student_uses_labeled", var.student_uses_labeled);
          v.get("student_unlabeled", var.student_unlabeled);
          c.ablation.push_back(var);
        }
      }
    });
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& c) {
  json variants = json::array();
  for (const AblationVariant& v : c.ablation)
    variants.push_back({{"name", v.name},
                        {"distill", write_distill(v.distill)},
                        {"teacher_labeled_fraction", v.teacher_labeled_fraction},
                        {"student_uses_labeled", v.student_uses_labeled},
                        {"student_unlabeled", v.student_unlabeled}});
  json j = {
      {"seed", c.seed},
      {"scene",
       {{"n_objects", c.scene.n_objects},
        {"x_min", c.scene.x_min},
        {"x_max", c.scene.x_max},
        {"y_min", c.scene.y_min},
        {"y_max", c.scene.y_max},
        {"ground_z", c.scene.ground_z},
        {"lidar_points_per_object", c.scene.lidar_points_per_object},
        {"background_density", c.scene.background_density},
        {"n_clutter", c.scene.n_clutter},
        {"radar_density_ratio", c.scene.radar_density_ratio},
        {"radar_sigma", c.scene.radar_sigma},
        {"ghost_rate", c.scene.ghost_rate},
        {"seed", c.scene.seed}}},
      {"dataset",
       {{"n_labeled", c.dataset.n_labeled}, {"n_unlabeled", c.dataset.n_unlabeled}, {"n_val", c.dataset.n_val}}},
      {"model", write_model(c.model)},
      {"distill", write_distill(c.distill)},
      {"optimizer",
       {{"initial_lr", c.optimizer.initial_lr},
        {"max_lr", c.optimizer.max_lr},
        {"min_lr", c.optimizer.min_lr},
        {"weight_decay", c.optimizer.weight_decay},
        {"warmup_fraction", c.optimizer.warmup_fraction},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2}}},
      {"train",
       {{"teacher_epochs", c.train.teacher_epochs},
        {"student_epochs", c.train.student_epochs},
        {"batch_size", c.train.batch_size},
        {"augment", c.train.augment}}},
      {"postprocess",
       {{"conf_min", c.postprocess.conf_min},
        {"nms_iou", c.postprocess.nms_iou},
        {"pre_nms_max", c.postprocess.pre_nms_max},
        {"post_nms_max", c.postprocess.post_nms_max}}},
      {"eval",
       {{"mode", c.eval.mode == ApMode::kAP11 ? "AP11" : "AP40"},
        {"iou_kind", c.eval.iou_kind == IouKind::kBev ? "BEV" : "3D"},
        {"iou_threshold", c.eval.iou_threshold},
        {"corridor", write_region(c.eval.corridor)},
        {"region", c.eval.region ? write_region(*c.eval.region) : json(nullptr)}}},
      {"paths",
       {{"data_dir", c.paths.data_dir},
        {"teacher_checkpoint", c.paths.teacher_checkpoint},
        {"student_checkpoint", c.paths.student_checkpoint}}},
      {"ablation", {{"seeds", c.ablation_seeds}, {"variants", variants}}},
  };
  return j.dump(2) + "\n";
}

std::string serialize_model_config(const ModelConfig& m) { return write_model(m).dump(); }

ModelConfig parse_model_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("embedded model config is not valid JSON: ") + e.what());
  }
  ModelConfig m;
  {
    Section s(j, "model");
    read_model(s, m);
  }
  return m;
}

std::uint64_t model_config_hash(const ModelConfig& m) {
  Fnv1a h;
  h.update(serialize_model_config(m));
  return h.digest();
}

}  // namespace sckd
