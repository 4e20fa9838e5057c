#include "sckd/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "sckd/error.hpp"
#include "sckd/geometry.hpp"

namespace sckd {

void validate(const EvalConfig& cfg) {
  for (double t : cfg.iou_threshold)
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("eval IoU thresholds must lie in (0, 1]");
  auto check = [](const Region& r, const char* name) {
    if (!(r.x_max > r.x_min && r.y_max > r.y_min)) throw ConfigError(std::string(name) + " rectangle is empty");
  };
  check(cfg.corridor, "eval.corridor");
  if (cfg.region) check(*cfg.region, "eval.region");
}

std::vector<double> recall_grid(ApMode mode) {
  std::vector<double> g;
  if (mode == ApMode::kAP11) {
    for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  } else {
    for (int i = 1; i <= 40; ++i) g.push_back(i / 40.0);
  }
  return g;
}

namespace {

std::vector<Box3D> select(const std::vector<Box3D>& boxes, ClassId cls, const std::optional<Region>& region) {
  std::vector<Box3D> out;
  for (const Box3D& b : boxes)
    if (b.class_id == cls && (!region || region->contains(b.center[0], b.center[1]))) out.push_back(b);
  return out;
}

struct Candidate {
  double score;
  std::size_t frame;
  std::size_t index;
};

}  // namespace

double ap_pooled(const std::vector<FrameBoxes>& dets, const std::vector<FrameBoxes>& gts, ClassId cls,
                 const EvalConfig& cfg) {
  SCKD_EXPECT(dets.size() == gts.size(), "ap_pooled: detection and ground-truth frame counts differ");
  std::vector<std::vector<Box3D>> frame_dets, frame_gts;
  std::size_t n_gt = 0;
  std::vector<Candidate> cands;
  for (std::size_t f = 0; f < dets.size(); ++f) {
    frame_dets.push_back(select(dets[f].boxes, cls, cfg.region));
    frame_gts.push_back(select(gts[f].boxes, cls, cfg.region));
    n_gt += frame_gts.back().size();
    for (std::size_t i = 0; i < frame_dets.back().size(); ++i)
      cands.push_back({frame_dets.back()[i].score.value_or(0.0), f, i});
  }
  if (n_gt == 0) return 0.0;
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  const double thr = cfg.iou_threshold[static_cast<int>(cls)];
  std::vector<std::vector<char>> used(frame_gts.size());
  for (std::size_t f = 0; f < frame_gts.size(); ++f) used[f].assign(frame_gts[f].size(), 0);

  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const Candidate& c : cands) {
    const Box3D& d = frame_dets[c.frame][c.index];
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < frame_gts[c.frame].size(); ++j) {
      if (used[c.frame][j]) continue;
      const double iou = cfg.iou_kind == IouKind::kBev ? iou_bev(d, frame_gts[c.frame][j]) : iou_3d(d, frame_gts[c.frame][j]);
      if (iou > best) best = iou, best_j = j;
    }
    if (best >= thr) {
      used[c.frame][best_j] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }

  // Precision envelope: max precision at recall >= r.
  std::vector<double> envelope(precision.size());
  double running = 0.0;
  for (std::size_t i = precision.size(); i-- > 0;) envelope[i] = running = std::max(running, precision[i]);

  const auto grid = recall_grid(cfg.mode);
  double sum = 0.0;
  for (double r : grid) {
    auto it = std::lower_bound(recall.begin(), recall.end(), r - 1e-12);
    if (it != recall.end()) sum += envelope[static_cast<std::size_t>(it - recall.begin())];
  }
  return 100.0 * sum / static_cast<double>(grid.size());
}

double ap_class(const std::vector<Detection>& dets, const std::vector<Box3D>& gts, ClassId cls, const EvalConfig& cfg) {
  return ap_pooled({FrameBoxes{0, dets}}, {FrameBoxes{0, gts}}, cls, cfg);
}

namespace {

RegionReport region_report(const std::vector<FrameBoxes>& dets, const std::vector<FrameBoxes>& gts,
                           const EvalConfig& cfg, const std::optional<Region>& region) {
  EvalConfig c = cfg;
  c.region = region;
  RegionReport rep;
  double sum = 0.0;
  int n = 0;
  for (ClassId cls : kAllClasses) {
    bool any = false;
    for (std::size_t f = 0; f < dets.size() && !any; ++f)
      any = !select(dets[f].boxes, cls, region).empty() || !select(gts[f].boxes, cls, region).empty();
    if (!any) continue;
    const double ap = ap_pooled(dets, gts, cls, c);
    rep.ap[static_cast<int>(cls)] = ap;
    sum += ap;
    ++n;
  }
  rep.map = n > 0 ? sum / n : 0.0;
  return rep;
}

}  // namespace

EvalReport map_eval(const std::vector<FrameBoxes>& dets, const std::vector<FrameBoxes>& gts, const EvalConfig& cfg) {
  validate(cfg);
  std::map<std::uint32_t, std::size_t> det_index, gt_index;
  for (std::size_t i = 0; i < dets.size(); ++i)
    SCKD_EXPECT(det_index.emplace(dets[i].frame_id, i).second, "map_eval: duplicate detection frame_id");
  for (std::size_t i = 0; i < gts.size(); ++i)
    SCKD_EXPECT(gt_index.emplace(gts[i].frame_id, i).second, "map_eval: duplicate ground-truth frame_id");
  SCKD_EXPECT(det_index.size() == gt_index.size(), "map_eval: detection and ground-truth frame sets differ");
  std::vector<FrameBoxes> d, g;
  for (const auto& [id, gi] : gt_index) {
    auto it = det_index.find(id);
    SCKD_EXPECT(it != det_index.end(), "map_eval: frame " + std::to_string(id) + " has no detections entry");
    d.push_back(dets[it->second]);
    g.push_back(gts[gi]);
  }
  EvalReport r;
  r.entire = region_report(d, g, cfg, cfg.region);
  r.corridor = region_report(d, g, cfg, cfg.corridor);
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string format_report_text(const EvalReport& r, const EvalConfig& cfg) {
  std::string out = std::string(cfg.mode == ApMode::kAP11 ? "AP11" : "AP40") + " (" +
                    (cfg.iou_kind == IouKind::kBev ? "BEV" : "3D") + " IoU)\n";
  out += "region      CAR        PEDESTRIAN CYCLIST    mAP\n";
  auto row = [&](const char* name, const RegionReport& rr) {
    char buf[160];
    auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("-"); };
    std::snprintf(buf, sizeof(buf), "%-11s %-10s %-10s %-10s %s\n", name, cell(rr.ap[0]).c_str(), cell(rr.ap[1]).c_str(),
                  cell(rr.ap[2]).c_str(), fmt(rr.map).c_str());
    out += buf;
  };
  row("entire", r.entire);
  row("corridor", r.corridor);
  return out;
}

std::string format_report_kv(const EvalReport& r) {
  std::string out;
  auto emit = [&](const char* region, const RegionReport& rr) {
    for (ClassId c : kAllClasses) {
      const auto& ap = rr.ap[static_cast<int>(c)];
      out += std::string(region) + "." + std::string(to_string(c)) + "=" + (ap ? fmt(*ap) : std::string("nan")) + "\n";
    }
    out += std::string(region) + ".mAP=" + fmt(rr.map) + "\n";
  };
  emit("entire", r.entire);
  emit("corridor", r.corridor);
  return out;
}

}  // namespace sckd
