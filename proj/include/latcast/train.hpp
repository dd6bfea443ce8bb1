#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "latcast/checkpoint.hpp"
#include "latcast/model.hpp"

// Offline training: chronological mini-batches, Adam, dropout, early stopping
// on validation loss with best-weight restoration.

namespace latcast {

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// The stopping rule, factored out so injected loss sequences can exercise it
// directly: stop after `patience` consecutive epochs without a strict
// improvement of the best validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true iff this epoch improved the best value.
  bool observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  Checkpoint checkpoint;           // best-epoch weights, restored
  std::vector<EpochStats> history; // one row per completed epoch
};

// Thrown when the validation loss goes non-finite.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using EpochObserver = std::function<void(const EpochStats&)>;

// Validation loss of `w` over the batch, infer mode, evaluated in chunks.
double evaluate_loss(const ModelConfig& cfg, const Weights& w,
                     const WindowBatch& batch);

// Trains from a fresh seeded initialization. Both batches must be non-empty.
// The epoch train loss is the window-weighted mean of mini-batch losses
// (dropout active); the val loss is mask-free.
TrainResult train(const ModelConfig& cfg, const WindowBatch& train_batch,
                  const WindowBatch& val_batch, const Scaler& scaler,
                  const EpochObserver& observer = nullptr);

// History CSV: header epoch,train_loss,val_loss.
void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochStats>& history);

}  // namespace latcast
