#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latcast/dense.hpp"
#include "latcast/pipeline.hpp"
#include "latcast/rng.hpp"

// Bidirectional LSTM regressor, built natively on Eigen. Gate equations are
// the standard LSTM formulation with relu replacing tanh in the candidate and
// cell-output activations; gates stay sigmoid. Two passes (forward and
// time-reversed) run over the lookback window, their final hidden states are
// concatenated [fwd, bwd], dropout (inverted scaling) applies to that
// concatenation in train mode only, and a dense head reads out one value.

namespace latcast {

struct ModelConfig {
  int units = 100;
  int lookback = 60;
  int input_dim = kFeatureCount;
  double dropout_p = 0.2;
  double learning_rate = 1e-5;
  int patience = 10;
  int max_epochs = 200;
  int batch_size = 64;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Throws std::invalid_argument naming the offending field.
void validate_config(const ModelConfig& cfg);

// JSON round-trip for config files; absent fields keep their defaults.
ModelConfig model_config_from_json(std::string_view text);
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig load_model_config_file(const std::filesystem::path& path);

// Kernel layout: columns hold the four gate blocks in order (i, f, g, o),
// each `units` wide.
struct DirectionWeights {
  Mat w_in;   // input_dim x 4*units
  Mat w_rec;  // units x 4*units
  Vec bias;   // 4*units
};

struct Weights {
  DirectionWeights fwd, bwd;
  Vec head_w;     // 2*units, first half reads the fwd state
  Vec head_bias;  // 1

  Index units() const { return fwd.w_rec.rows(); }
  Index input_dim() const { return fwd.w_in.rows(); }

  static Weights zeros(Index input_dim, Index units);
};

// Glorot-uniform kernels (limit sqrt(6/(fan_in+fan_out)) per matrix), zero
// biases except forget-gate blocks at 1.0. Seeded and bit-reproducible.
Weights init_weights(const ModelConfig& cfg);

// Flat view over one parameter tensor; param_views enumerates all eight in
// the fixed order (w_in_fwd, w_rec_fwd, bias_fwd, w_in_bwd, w_rec_bwd,
// bias_bwd, head_w, head_bias) used by Adam, the gradient check and the
// checkpoint codec alike.
struct ParamView {
  const char* name;
  Eigen::Map<Eigen::ArrayXd> values;
};
struct ConstParamView {
  const char* name;
  Eigen::Map<const Eigen::ArrayXd> values;
};
std::vector<ParamView> param_views(Weights& w);
std::vector<ConstParamView> param_views(const Weights& w);

// Single cell step in vector form; the batched forward uses the same math.
// i = sigmoid(x W_i + h U_i + b_i), f/o likewise, g = relu(x W_g + h U_g +
// b_g), c' = f.c + i.g, h' = o.relu(c').
struct CellStep {
  Vec h;
  Vec c;
};
CellStep lstm_cell_step(const Vec& x, const Vec& h, const Vec& c,
                        const Mat& w_in, const Mat& w_rec, const Vec& bias);

enum class RunMode { kTrain, kInfer };

// Activations recorded by a train-mode forward, consumed by backward().
struct ForwardCache {
  struct Direction {
    std::vector<Mat> gate_i, gate_f, gate_g, gate_o;  // per processing step
    std::vector<Mat> cell, cell_act, hidden;
  };
  Direction fwd, bwd;
  Mat concat;  // count x 2*units, pre-dropout
  Mat mask;    // inverted-scale dropout mask; empty when no dropout applied
  Mat dropped; // concat after dropout
  Vec preds;
  Index first = 0;
  Index count = 0;
};

// Runs windows [first, first+count) of the batch. Train mode records
// activations into `cache` and draws a dropout mask from `dropout_rng`
// (row-major draw order); infer mode is mask-free and deterministic.
// Throws on shape mismatch and on non-finite activations (reporting
// direction and step index).
Vec forward(const ModelConfig& cfg, const Weights& w, const WindowBatch& batch,
            Index first, Index count, RunMode mode, Rng* dropout_rng = nullptr,
            ForwardCache* cache = nullptr);

// Mean squared error; n >= 1.
double mse_loss(const Eigen::Ref<const Vec>& pred,
                const Eigen::Ref<const Vec>& target);

// Exact analytic gradients of mse_loss(forward(...), targets) for the slice
// recorded in `cache`, full BPTT over both directions. relu subgradient at 0
// is 0.
Weights backward(const ModelConfig& cfg, const Weights& w,
                 const WindowBatch& batch, const ForwardCache& cache);

struct AdamState {
  Weights m, v;
  long step = 0;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

AdamState init_adam(const Weights& like);

// One bias-corrected Adam update; throws on non-finite gradients.
void adam_step(Weights& w, const Weights& grads, AdamState& st, double lr);

}  // namespace latcast
