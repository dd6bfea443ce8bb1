#pragma once

#include <span>
#include <utility>

#include "latcast/dense.hpp"
#include "latcast/kpm.hpp"

// Raw KPM streams -> normalized supervised windows. Min-max scaling to [0,1]
// (fitted on the training split only, target included), lookback windows with
// a fixed one-step horizon, chronological train/val split.

namespace latcast {

// Rows of `records` in canonical feature order, one record per row.
Mat feature_matrix(std::span<const KpmRecord> records);

struct Scaler {
  FeatureVector min = FeatureVector::Zero();
  FeatureVector max = FeatureVector::Zero();
  double target_min = 0.0;  // latency_ms channel
  double target_max = 0.0;

  double normalize_target(double latency_ms) const;
  double denormalize_target(double normalized) const;
};

// Per-feature min/max over the rows; the target channel tracks latency_ms.
// Throws std::invalid_argument with fewer than 2 rows.
Scaler fit_scaler(const Eigen::Ref<const Mat>& rows);

// x -> (x - min) / (max - min); a constant feature maps to 0. Out-of-range
// inputs are not clamped, so inference values may leave [0,1].
Mat apply_scaler_rows(const Scaler& s, const Eigen::Ref<const Mat>& rows);
FeatureVector apply_scaler(const Scaler& s, const FeatureVector& v);

// Supervised windows over a normalized series. Window i is rows
// [i, i+lookback); its target is the target-column value of row i+lookback.
// Physically backed by the series matrix (windows overlap), so memory stays
// O(rows x features).
struct WindowBatch {
  Mat series;          // rows x features, normalized
  Index lookback = 0;
  int target_col = kFeatLatencyMs;
  Vec targets;         // count() entries

  Index count() const { return targets.size(); }
  Index input_dim() const { return series.cols(); }
  auto window(Index i) const { return series.middleRows(i, lookback); }
};

// horizon is fixed at 1; any other value is rejected. count() == max(0, rows
// - lookback); an empty batch is allowed.
WindowBatch make_windows(Mat normalized_series, Index lookback,
                         Index horizon = 1, int target_col = kFeatLatencyMs);

// First floor(ratio*n) rows to train, remainder to val, order preserved.
// Throws std::invalid_argument on a degenerate (empty) side or bad ratio.
std::pair<Mat, Mat> chronological_split(const Eigen::Ref<const Mat>& rows,
                                        double ratio);

}  // namespace latcast
