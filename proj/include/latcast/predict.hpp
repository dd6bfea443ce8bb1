#pragma once

#include <span>

#include "latcast/checkpoint.hpp"

namespace latcast {

// One-step latency forecast in milliseconds from exactly `lookback` valid,
// strictly time-ordered records: applies the checkpoint's scaler, runs a
// mask-free forward pass, denormalizes the output.
double predict(const Checkpoint& ckpt, std::span<const KpmRecord> window);

}  // namespace latcast
