#include "latcast/predict.hpp"

#include <stdexcept>

namespace latcast {

double predict(const Checkpoint& ckpt, std::span<const KpmRecord> window) {
  const Index lookback = ckpt.config.lookback;
  if (static_cast<Index>(window.size()) != lookback) {
    throw std::invalid_argument(
        "predict: window has " + std::to_string(window.size()) +
        " records, checkpoint lookback is " + std::to_string(lookback));
  }
  for (std::size_t i = 1; i < window.size(); ++i) {
    if (window[i].ts_ms <= window[i - 1].ts_ms) {
      throw std::invalid_argument("predict: window not strictly time-ordered");
    }
  }

  // A batch with exactly one window: lookback rows, no target row.
  Mat series(lookback, kFeatureCount);
  for (Index i = 0; i < lookback; ++i) {
    series.row(i) = apply_scaler(ckpt.scaler,
                                 to_feature_vector(window[i])).transpose();
  }
  WindowBatch batch;
  batch.series = std::move(series);
  batch.lookback = lookback;
  batch.targets = Vec::Zero(1);

  Vec out = forward(ckpt.config, ckpt.weights, batch, 0, 1, RunMode::kInfer);
  return ckpt.scaler.denormalize_target(out[0]);
}

}  // namespace latcast
