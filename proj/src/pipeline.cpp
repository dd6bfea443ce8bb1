#include "latcast/pipeline.hpp"

#include <cmath>
#include <stdexcept>

namespace latcast {

Mat feature_matrix(std::span<const KpmRecord> records) {
  Mat rows(static_cast<Index>(records.size()), kFeatureCount);
  for (std::size_t i = 0; i < records.size(); ++i) {
    rows.row(static_cast<Index>(i)) = to_feature_vector(records[i]).transpose();
  }
  return rows;
}

double Scaler::normalize_target(double latency_ms) const {
  const double span = target_max - target_min;
  if (span == 0.0) return 0.0;
  return (latency_ms - target_min) / span;
}

double Scaler::denormalize_target(double normalized) const {
  return target_min + normalized * (target_max - target_min);
}

Scaler fit_scaler(const Eigen::Ref<const Mat>& rows) {
  if (rows.rows() < 2) {
    throw std::invalid_argument("fit_scaler needs at least 2 rows, got " +
                                std::to_string(rows.rows()));
  }
  if (rows.cols() != kFeatureCount) {
    throw std::invalid_argument("fit_scaler expects " +
                                std::to_string(kFeatureCount) + " columns");
  }
  Scaler s;
  s.min = rows.colwise().minCoeff().transpose();
  s.max = rows.colwise().maxCoeff().transpose();
  s.target_min = s.min[kFeatLatencyMs];
  s.target_max = s.max[kFeatLatencyMs];
  return s;
}

namespace {

// Normalization denominators; 1 for constant features so they map to 0.
FeatureVector safe_span(const Scaler& s) {
  FeatureVector span = s.max - s.min;
  for (int i = 0; i < kFeatureCount; ++i) {
    if (span[i] == 0.0) span[i] = 1.0;
  }
  return span;
}

}  // namespace

Mat apply_scaler_rows(const Scaler& s, const Eigen::Ref<const Mat>& rows) {
  const FeatureVector span = safe_span(s);
  Mat out = rows.rowwise() - s.min.transpose();
  out.array().rowwise() /= span.transpose().array();
  for (int j = 0; j < kFeatureCount; ++j) {
    if (s.max[j] == s.min[j]) out.col(j).setZero();
  }
  return out;
}

FeatureVector apply_scaler(const Scaler& s, const FeatureVector& v) {
  const FeatureVector span = safe_span(s);
  FeatureVector out = (v - s.min).cwiseQuotient(span);
  for (int j = 0; j < kFeatureCount; ++j) {
    if (s.max[j] == s.min[j]) out[j] = 0.0;
  }
  return out;
}

WindowBatch make_windows(Mat normalized_series, Index lookback, Index horizon,
                         int target_col) {
  if (horizon != 1) {
    throw std::invalid_argument("horizon is fixed at 1");
  }
  if (lookback < 1) {
    throw std::invalid_argument("lookback must be >= 1");
  }
  if (target_col < 0 || target_col >= normalized_series.cols()) {
    throw std::invalid_argument("target_col out of range");
  }
  WindowBatch batch;
  batch.lookback = lookback;
  batch.target_col = target_col;
  const Index n = std::max<Index>(0, normalized_series.rows() - lookback);
  batch.targets = Vec(n);
  for (Index i = 0; i < n; ++i) {
    batch.targets[i] = normalized_series(i + lookback, target_col);
  }
  batch.series = std::move(normalized_series);
  return batch;
}

std::pair<Mat, Mat> chronological_split(const Eigen::Ref<const Mat>& rows,
                                        double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split ratio must be in (0,1)");
  }
  const Index n = rows.rows();
  // Nearest integer, not floor: ratio 0.999 on 10 rows must leave the
  // validation side empty and fail, while 0.8 on 10 still gives 8/2.
  const Index n_train =
      static_cast<Index>(std::llround(ratio * static_cast<double>(n)));
  const Index n_val = n - n_train;
  if (n_train < 1 || n_val < 1) {
    throw std::invalid_argument("degenerate split: " + std::to_string(n_train) +
                                " train / " + std::to_string(n_val) + " val");
  }
  return {rows.topRows(n_train), rows.bottomRows(n_val)};
}

}  // namespace latcast
