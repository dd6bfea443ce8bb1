#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "latcast/model.hpp"
#include "latcast/pipeline.hpp"

// Checkpoint file: one JSON header line (format tag, config, scaler, tensor
// shapes, CRC-32 of the binary section, best val loss, epoch) terminated by
// '\n', followed by the raw little-endian float64 tensor data in param_views
// order, column-major within each tensor. Round-trips are bit-exact.

namespace latcast {

inline constexpr const char* kCheckpointFormat = "latcast-checkpoint/1";

struct Checkpoint {
  ModelConfig config;
  Scaler scaler;
  Weights weights;
  double best_val_loss = 0.0;
  int epoch = 0;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Verifies the format tag, tensor shapes against the embedded config, and the
// checksum; throws CheckpointError naming what is wrong.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// For sessions that require a particular geometry: throws CheckpointError
// naming the first mismatching field (units, lookback, input_dim).
void check_compatible(const Checkpoint& ckpt, const ModelConfig& expected);

std::uint32_t crc32(std::span<const unsigned char> bytes);

}  // namespace latcast
