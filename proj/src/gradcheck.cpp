#include "latcast/gradcheck.hpp"

#include <cmath>

namespace latcast {

ModelConfig gradcheck_model_config(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.units = 2;
  cfg.lookback = 5;
  cfg.input_dim = 3;
  cfg.dropout_p = 0.2;
  cfg.seed = seed;
  return cfg;
}

GradCheckReport run_gradient_check(const ModelConfig& cfg, double epsilon,
                                   bool corrupt) {
  validate_config(cfg);
  constexpr Index kWindows = 6;
  const Index rows = cfg.lookback + kWindows;

  // Synthetic series and targets from the model seed.
  Rng data_rng(cfg.seed);
  Mat series(rows, cfg.input_dim);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cfg.input_dim; ++j) {
      series(i, j) = data_rng.uniform01();
    }
  }
  WindowBatch batch = make_windows(std::move(series), cfg.lookback, 1,
                                   /*target_col=*/1);

  Weights w = init_weights(cfg);
  const std::uint64_t mask_seed = cfg.seed ^ 0xA5A5A5A55A5A5A5Aull;

  // The mask rng restarts per evaluation, so the dropout mask is a constant
  // of the loss rather than a fresh random draw.
  auto loss_at = [&](const Weights& theta) {
    Rng mask_rng(mask_seed);
    ForwardCache cache;
    Vec preds = forward(cfg, theta, batch, 0, kWindows, RunMode::kTrain,
                        &mask_rng, &cache);
    return mse_loss(preds, batch.targets);
  };

  Weights analytic;
  {
    Rng mask_rng(mask_seed);
    ForwardCache cache;
    forward(cfg, w, batch, 0, kWindows, RunMode::kTrain, &mask_rng, &cache);
    analytic = backward(cfg, w, batch, cache);
  }
  if (corrupt) {
    analytic.fwd.w_in(0, 0) += 0.05;
  }

  GradCheckReport report;
  auto theta_views = param_views(w);
  auto grad_views = param_views(const_cast<const Weights&>(analytic));
  for (std::size_t k = 0; k < theta_views.size(); ++k) {
    GradCheckRow row;
    row.name = theta_views[k].name;
    row.size = theta_views[k].values.size();
    for (Index e = 0; e < row.size; ++e) {
      const double saved = theta_views[k].values[e];
      theta_views[k].values[e] = saved + epsilon;
      const double loss_hi = loss_at(w);
      theta_views[k].values[e] = saved - epsilon;
      const double loss_lo = loss_at(w);
      theta_views[k].values[e] = saved;

      const double numeric = (loss_hi - loss_lo) / (2.0 * epsilon);
      const double a = grad_views[k].values[e];
      const double rel = std::abs(a - numeric) / (std::abs(a) + 1e-8);
      row.max_rel_err = std::max(row.max_rel_err, rel);
    }
    if (row.max_rel_err >= report.max_rel_err) {
      // ">=" so the worst param is always named, even for all-zero errors.
      report.max_rel_err = row.max_rel_err;
      report.worst_param = row.name;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace latcast
