#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sckd/scene.hpp"
#include "sckd/types.hpp"

namespace sckd {

// Frame file layout (little endian):
//   "SCKDFRM1" | u32 frame_id | u8 modality | u8 has_labels | u32 N | u32 F
//   | N*F float32 | [u32 B | B * (7 float32 cx,cy,cz,l,w,h,yaw + u8 class_id)]
inline constexpr char kFrameMagic[8] = {'S', 'C', 'K', 'D', 'F', 'R', 'M', '1'};

std::vector<std::uint8_t> encode_frame(const PointCloudFrame& frame);
/// The split tag is not part of the frame file; it comes from the manifest.
PointCloudFrame decode_frame(const std::vector<std::uint8_t>& bytes, Split split = Split::kLabeledTrain);

void write_frame(const PointCloudFrame& frame, const std::filesystem::path& path);
PointCloudFrame read_frame(const std::filesystem::path& path, Split split = Split::kLabeledTrain);

/// One frame pair; manifest line `<split> <lidar path> <radar path>`, paths relative to the manifest.
struct ManifestEntry {
  Split split;
  std::filesystem::path lidar;
  std::filesystem::path radar;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::size_t count(Split s) const;
};

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Generates frames in memory: ids [0, n_labeled) labeled, then unlabeled, then val.
/// Unlabeled frames have their labels discarded.
std::vector<FramePair> synthesize_frames(int n_labeled, int n_unlabeled, int n_val, const SceneSpec& spec);

/// synthesize_frames + write every sweep under `out_dir` and a `manifest.txt` listing them.
DatasetManifest make_dataset(int n_labeled, int n_unlabeled, int n_val, const SceneSpec& spec,
                             const std::filesystem::path& out_dir);

/// Reads every pair of a split back from disk, paired by frame_id.
std::vector<FramePair> load_split(const DatasetManifest& manifest, Split split);

}  // namespace sckd
