#include "sckd/frame_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "sckd/error.hpp"

namespace sckd {
namespace {

static_assert(std::endian::native == std::endian::little, "frame IO assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  template <typename T>
  T pod(const char* field) {
    T v;
    need(sizeof(T), field);
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void floats(float* out, std::size_t n, const char* field) {
    need(n * sizeof(float), field);
    std::memcpy(out, buf_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (buf_.size() - pos_ < n) throw ParseError(std::string("truncated frame file while reading ") + field, pos_);
  }

  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_frame(const PointCloudFrame& frame) {
  const auto f = static_cast<std::uint32_t>(frame.num_features());
  SCKD_EXPECT(frame.points.size() % f == 0, "point buffer is not a multiple of the feature count");
  Writer w;
  w.bytes(kFrameMagic, sizeof(kFrameMagic));
  w.pod<std::uint32_t>(frame.frame_id);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(frame.modality));
  w.pod<std::uint8_t>(frame.labels ? 1 : 0);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(frame.size()));
  w.pod<std::uint32_t>(f);
  w.bytes(frame.points.data(), frame.points.size() * sizeof(float));
  if (frame.labels) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(frame.labels->size()));
    for (const Box3D& b : *frame.labels) {
      const float rec[7] = {static_cast<float>(b.center[0]), static_cast<float>(b.center[1]),
                            static_cast<float>(b.center[2]), static_cast<float>(b.size[0]),
                            static_cast<float>(b.size[1]),   static_cast<float>(b.size[2]),
                            static_cast<float>(b.yaw)};
      w.bytes(rec, sizeof(rec));
      w.pod<std::uint8_t>(static_cast<std::uint8_t>(b.class_id));
    }
  }
  return w.take();
}

PointCloudFrame decode_frame(const std::vector<std::uint8_t>& bytes, Split split) {
  Reader r(bytes);
  char magic[8];
  for (char& c : magic) c = static_cast<char>(r.pod<std::uint8_t>("magic"));
  if (std::memcmp(magic, kFrameMagic, sizeof(magic)) != 0) throw ParseError("bad magic, expected SCKDFRM1", 0);

  PointCloudFrame f;
  f.split = split;
  f.frame_id = r.pod<std::uint32_t>("frame_id");
  const std::size_t modality_offset = r.pos();
  const auto modality = r.pod<std::uint8_t>("modality");
  if (modality > 1) throw ParseError("field modality: unknown value", modality_offset);
  f.modality = static_cast<Modality>(modality);
  const std::size_t has_labels_offset = r.pos();
  const auto has_labels = r.pod<std::uint8_t>("has_labels");
  if (has_labels > 1) throw ParseError("field has_labels: expected 0 or 1", has_labels_offset);
  const auto n = r.pod<std::uint32_t>("N");
  const std::size_t f_offset = r.pos();
  const auto nf = r.pod<std::uint32_t>("F");
  if (static_cast<int>(nf) != feature_count(f.modality))
    throw ParseError("field F: " + std::to_string(nf) + " columns declared for " + std::string(to_string(f.modality)) +
                         ", expected " + std::to_string(feature_count(f.modality)),
                     f_offset);
  const std::size_t total = static_cast<std::size_t>(n) * nf;
  if (total * sizeof(float) > r.remaining()) throw ParseError("truncated frame file while reading points", r.pos());
  f.points.resize(total);
  r.floats(f.points.data(), total, "points");
  for (std::size_t i = 0; i < total; ++i)
    if (!std::isfinite(f.points[i]))
      throw ParseError("field points: non-finite coordinate", r.pos() - (total - i) * sizeof(float));
  if (has_labels) {
    const auto nb = r.pod<std::uint32_t>("label count");
    std::vector<Box3D> boxes;
    boxes.reserve(std::min<std::size_t>(nb, r.remaining() / 29));
    for (std::uint32_t i = 0; i < nb; ++i) {
      float rec[7];
      r.floats(rec, 7, "label record");
      const std::size_t class_offset = r.pos();
      const auto cls = r.pod<std::uint8_t>("class_id");
      if (cls >= kNumClasses) throw ParseError("field class_id: unknown class", class_offset);
      Box3D b;
      b.center = {rec[0], rec[1], rec[2]};
      b.size = {rec[3], rec[4], rec[5]};
      b.yaw = rec[6];
      b.class_id = static_cast<ClassId>(cls);
      boxes.push_back(b);
    }
    f.labels = std::move(boxes);
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after frame", r.pos());
  return f;
}

void write_frame(const PointCloudFrame& frame, const std::filesystem::path& path) {
  const auto bytes = encode_frame(frame);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PointCloudFrame read_frame(const std::filesystem::path& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open frame file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_frame(bytes, split);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const ManifestEntry& e : manifest.entries)
    out << to_string(e.split) << ' ' << e.lidar.generic_string() << ' ' << e.radar.generic_string() << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string split, lidar, radar, extra;
    if (!(ls >> split >> lidar >> radar) || (ls >> extra))
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected '<split> <lidar path> <radar path>'");
    m.entries.push_back({split_from_string(split), lidar, radar});
  }
  return m;
}

std::vector<FramePair> synthesize_frames(int n_labeled, int n_unlabeled, int n_val, const SceneSpec& spec) {
  if (n_labeled < 0 || n_unlabeled < 0 || n_val < 0) throw ConfigError("dataset split counts must be non-negative");
  validate(spec);
  std::vector<FramePair> frames;
  frames.reserve(static_cast<std::size_t>(n_labeled + n_unlabeled + n_val));
  std::uint32_t id = 0;
  auto emit = [&](int count, Split split) {
    for (int i = 0; i < count; ++i, ++id) {
      SceneSpec s = spec;
      s.seed = frame_seed(spec.seed, id);
      Scene scene = generate_scene(s, id);
      scene.lidar.split = scene.radar.split = split;
      if (split == Split::kUnlabeledTrain) scene.lidar.labels.reset(), scene.radar.labels.reset();
      frames.push_back({std::move(scene.lidar), std::move(scene.radar)});
    }
  };
  emit(n_labeled, Split::kLabeledTrain);
  emit(n_unlabeled, Split::kUnlabeledTrain);
  emit(n_val, Split::kVal);
  return frames;
}

DatasetManifest make_dataset(int n_labeled, int n_unlabeled, int n_val, const SceneSpec& spec,
                             const std::filesystem::path& out_dir) {
  const auto frames = synthesize_frames(n_labeled, n_unlabeled, n_val, spec);
  std::filesystem::create_directories(out_dir / "frames");
  DatasetManifest m;
  m.root = out_dir;
  for (const FramePair& p : frames) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "%06u", p.frame_id());
    const std::filesystem::path lidar = std::filesystem::path("frames") / (std::string(stem) + "_lidar.frm");
    const std::filesystem::path radar = std::filesystem::path("frames") / (std::string(stem) + "_radar.frm");
    write_frame(p.lidar, out_dir / lidar);
    write_frame(p.radar, out_dir / radar);
    m.entries.push_back({p.lidar.split, lidar, radar});
  }
  write_manifest(m, out_dir / "manifest.txt");
  return m;
}

std::vector<FramePair> load_split(const DatasetManifest& manifest, Split split) {
  std::vector<FramePair> out;
  for (const ManifestEntry& e : manifest.entries) {
    if (e.split != split) continue;
    FramePair p{read_frame(manifest.root / e.lidar, split), read_frame(manifest.root / e.radar, split)};
    if (p.lidar.modality != Modality::kLidar || p.radar.modality != Modality::kRadar)
      throw ParseError("manifest entry " + e.lidar.generic_string() + ": sweeps listed in the wrong order");
    if (p.lidar.frame_id != p.radar.frame_id)
      throw ParseError("manifest entry " + e.lidar.generic_string() + ": lidar and radar frame ids differ");
    if (p.lidar.labels != p.radar.labels)
      throw ParseError("frame " + std::to_string(p.lidar.frame_id) + ": sweeps carry different labels");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace sckd
