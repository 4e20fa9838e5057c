#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sckd/model.hpp"
#include "sckd/options.hpp"

namespace sckd {

enum class CheckpointKind : std::uint8_t { kTeacher = 0, kStudent = 1 };

// File layout (little endian):
//   "SCKDCKP1" | u8 kind | u64 config_hash | u32 epoch | u32 len + meta JSON | u32 len + RNG state
//   | u32 count | count * (u16 name_len, name, u8 dtype, u8 ndim, ndim * i64 dims, raw data)
// Tensors named "optim/<param>/<field>" hold AdamW state.
struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kTeacher;
  std::string meta;  // {"model": ..., "adapter_kernel": k}
  std::uint64_t config_hash = 0;
  std::uint32_t epoch = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  ModelConfig model_config() const;
  int adapter_kernel() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_meta(const ModelConfig& model, int adapter_kernel);

/// Snapshot of model state (and optimizer state when given).
Checkpoint make_checkpoint(CheckpointKind kind, const torch::nn::Module& model, const ModelConfig& cfg,
                           int adapter_kernel, std::uint32_t epoch, const std::string& rng_state,
                           const torch::optim::AdamW* optimizer = nullptr);

/// Copies checkpoint tensors into `model`; a missing name or shape mismatch is a ConfigError.
void restore_model(torch::nn::Module& model, const Checkpoint& ckpt);
void restore_optimizer(torch::optim::AdamW& optimizer, const torch::nn::Module& model, const Checkpoint& ckpt);

TeacherNet load_teacher(const Checkpoint& ckpt);
StudentNet load_student(const Checkpoint& ckpt);

}  // namespace sckd
