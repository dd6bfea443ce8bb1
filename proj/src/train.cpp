#include "latcast/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "latcast/textio.hpp"

namespace latcast {

double evaluate_loss(const ModelConfig& cfg, const Weights& w,
                     const WindowBatch& batch) {
  const Index n = batch.count();
  if (n < 1) throw std::invalid_argument("evaluate_loss: empty batch");
  constexpr Index kChunk = 1024;
  double sq_sum = 0.0;
  for (Index first = 0; first < n; first += kChunk) {
    const Index count = std::min(kChunk, n - first);
    Vec preds = forward(cfg, w, batch, first, count, RunMode::kInfer);
    sq_sum += (preds - batch.targets.segment(first, count)).squaredNorm();
  }
  return sq_sum / static_cast<double>(n);
}

TrainResult train(const ModelConfig& cfg, const WindowBatch& train_batch,
                  const WindowBatch& val_batch, const Scaler& scaler,
                  const EpochObserver& observer) {
  validate_config(cfg);
  if (train_batch.count() < 1 || val_batch.count() < 1) {
    throw std::invalid_argument("train: empty train or val batch");
  }

  Weights w = init_weights(cfg);
  AdamState adam = init_adam(w);
  // Separate stream for dropout masks so weight init and masks stay
  // independently reproducible.
  Rng dropout_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);

  EarlyStopping stopping(cfg.patience);
  Weights best = w;
  std::vector<EpochStats> history;
  ForwardCache cache;

  const Index n_train = train_batch.count();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double train_sq_sum = 0.0;
    try {
      for (Index first = 0; first < n_train; first += cfg.batch_size) {
        const Index count = std::min<Index>(cfg.batch_size, n_train - first);
        forward(cfg, w, train_batch, first, count, RunMode::kTrain,
                &dropout_rng, &cache);
        const auto targets = train_batch.targets.segment(first, count);
        train_sq_sum += (cache.preds - targets).squaredNorm();
        Weights grads = backward(cfg, w, train_batch, cache);
        adam_step(w, grads, adam, cfg.learning_rate);
      }
    } catch (const std::runtime_error& e) {
      // Overflowed activations or gradients are divergence, same as a
      // non-finite validation loss.
      throw TrainingDiverged(std::string(e.what()) + " at epoch " +
                             std::to_string(epoch));
    }
    const double train_loss = train_sq_sum / static_cast<double>(n_train);
    const double val_loss = evaluate_loss(cfg, w, val_batch);
    if (!std::isfinite(val_loss)) {
      throw TrainingDiverged("validation loss is non-finite at epoch " +
                             std::to_string(epoch));
    }

    history.push_back({epoch, train_loss, val_loss});
    if (stopping.observe(val_loss)) {
      best = w;
    }
    if (observer) observer(history.back());
    if (stopping.should_stop()) break;
  }

  TrainResult result;
  result.checkpoint.config = cfg;
  result.checkpoint.scaler = scaler;
  result.checkpoint.weights = std::move(best);
  result.checkpoint.best_val_loss = stopping.best();
  result.checkpoint.epoch = stopping.best_epoch();
  result.history = std::move(history);
  return result;
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochStats>& history) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path.string());
  os << "epoch,train_loss,val_loss\n";
  for (const EpochStats& row : history) {
    os << row.epoch << ',' << format_double(row.train_loss) << ','
       << format_double(row.val_loss) << '\n';
  }
}

}  // namespace latcast
