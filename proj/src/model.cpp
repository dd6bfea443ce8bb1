#include "latcast/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace latcast {

void validate_config(const ModelConfig& cfg) {
  auto bad = [](const char* field, const char* why) {
    throw std::invalid_argument(std::string("model config field ") + field +
                                ": " + why);
  };
  if (cfg.units < 1) bad("units", "must be >= 1");
  if (cfg.lookback < 1) bad("lookback", "must be >= 1");
  if (cfg.input_dim < 1) bad("input_dim", "must be >= 1");
  if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) {
    bad("dropout_p", "must be in [0,1)");
  }
  if (!(cfg.learning_rate > 0.0)) bad("learning_rate", "must be > 0");
  if (cfg.patience < 1) bad("patience", "must be >= 1");
  if (cfg.max_epochs < 1) bad("max_epochs", "must be >= 1");
  if (cfg.batch_size < 1) bad("batch_size", "must be >= 1");
}

ModelConfig model_config_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") +
                                e.what());
  }
  ModelConfig cfg;
  cfg.units = j.value("units", cfg.units);
  cfg.lookback = j.value("lookback", cfg.lookback);
  cfg.input_dim = j.value("input_dim", cfg.input_dim);
  cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  validate_config(cfg);
  return cfg;
}

std::string model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["units"] = cfg.units;
  j["lookback"] = cfg.lookback;
  j["input_dim"] = cfg.input_dim;
  j["dropout_p"] = cfg.dropout_p;
  j["learning_rate"] = cfg.learning_rate;
  j["patience"] = cfg.patience;
  j["max_epochs"] = cfg.max_epochs;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

ModelConfig load_model_config_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot open config: " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return model_config_from_json(buf.str());
}

Weights Weights::zeros(Index input_dim, Index units) {
  Weights w;
  w.fwd.w_in = Mat::Zero(input_dim, 4 * units);
  w.fwd.w_rec = Mat::Zero(units, 4 * units);
  w.fwd.bias = Vec::Zero(4 * units);
  w.bwd = w.fwd;
  w.head_w = Vec::Zero(2 * units);
  w.head_bias = Vec::Zero(1);
  return w;
}

namespace {

void fill_uniform(Rng& rng, double limit, Eigen::Map<Eigen::ArrayXd> values) {
  for (Index k = 0; k < values.size(); ++k) {
    values[k] = (rng.uniform01() * 2.0 - 1.0) * limit;
  }
}

}  // namespace

Weights init_weights(const ModelConfig& cfg) {
  validate_config(cfg);
  const Index d = cfg.input_dim;
  const Index u = cfg.units;
  Weights w = Weights::zeros(d, u);
  Rng rng(cfg.seed);

  const double lim_in = std::sqrt(6.0 / static_cast<double>(d + 4 * u));
  const double lim_rec = std::sqrt(6.0 / static_cast<double>(u + 4 * u));
  const double lim_head = std::sqrt(6.0 / static_cast<double>(2 * u + 1));

  // Draw order is part of the reproducibility contract: fwd kernels, bwd
  // kernels, head; biases are not drawn.
  using Map = Eigen::Map<Eigen::ArrayXd>;
  fill_uniform(rng, lim_in, Map(w.fwd.w_in.data(), w.fwd.w_in.size()));
  fill_uniform(rng, lim_rec, Map(w.fwd.w_rec.data(), w.fwd.w_rec.size()));
  fill_uniform(rng, lim_in, Map(w.bwd.w_in.data(), w.bwd.w_in.size()));
  fill_uniform(rng, lim_rec, Map(w.bwd.w_rec.data(), w.bwd.w_rec.size()));
  fill_uniform(rng, lim_head, Map(w.head_w.data(), w.head_w.size()));

  // Forget-gate bias 1.0 keeps early training from flushing the cell state.
  w.fwd.bias.segment(u, u).setOnes();
  w.bwd.bias.segment(u, u).setOnes();
  return w;
}

std::vector<ParamView> param_views(Weights& w) {
  using Map = Eigen::Map<Eigen::ArrayXd>;
  std::vector<ParamView> out;
  out.push_back({"w_in_fwd", Map(w.fwd.w_in.data(), w.fwd.w_in.size())});
  out.push_back({"w_rec_fwd", Map(w.fwd.w_rec.data(), w.fwd.w_rec.size())});
  out.push_back({"bias_fwd", Map(w.fwd.bias.data(), w.fwd.bias.size())});
  out.push_back({"w_in_bwd", Map(w.bwd.w_in.data(), w.bwd.w_in.size())});
  out.push_back({"w_rec_bwd", Map(w.bwd.w_rec.data(), w.bwd.w_rec.size())});
  out.push_back({"bias_bwd", Map(w.bwd.bias.data(), w.bwd.bias.size())});
  out.push_back({"head_w", Map(w.head_w.data(), w.head_w.size())});
  out.push_back({"head_bias", Map(w.head_bias.data(), w.head_bias.size())});
  return out;
}

std::vector<ConstParamView> param_views(const Weights& w) {
  using Map = Eigen::Map<const Eigen::ArrayXd>;
  std::vector<ConstParamView> out;
  out.push_back({"w_in_fwd", Map(w.fwd.w_in.data(), w.fwd.w_in.size())});
  out.push_back({"w_rec_fwd", Map(w.fwd.w_rec.data(), w.fwd.w_rec.size())});
  out.push_back({"bias_fwd", Map(w.fwd.bias.data(), w.fwd.bias.size())});
  out.push_back({"w_in_bwd", Map(w.bwd.w_in.data(), w.bwd.w_in.size())});
  out.push_back({"w_rec_bwd", Map(w.bwd.w_rec.data(), w.bwd.w_rec.size())});
  out.push_back({"bias_bwd", Map(w.bwd.bias.data(), w.bwd.bias.size())});
  out.push_back({"head_w", Map(w.head_w.data(), w.head_w.size())});
  out.push_back({"head_bias", Map(w.head_bias.data(), w.head_bias.size())});
  return out;
}

CellStep lstm_cell_step(const Vec& x, const Vec& h, const Vec& c,
                        const Mat& w_in, const Mat& w_rec, const Vec& bias) {
  const Index units = w_rec.rows();
  if (w_in.cols() != 4 * units || w_rec.cols() != 4 * units ||
      bias.size() != 4 * units || x.size() != w_in.rows() ||
      h.size() != units || c.size() != units) {
    throw std::invalid_argument("lstm_cell_step: shape mismatch");
  }
  Vec a = w_in.transpose() * x + w_rec.transpose() * h + bias;
  Vec gi = sigmoid(a.segment(0, units).array()).matrix();
  Vec gf = sigmoid(a.segment(units, units).array()).matrix();
  Vec gg = relu(a.segment(2 * units, units).array()).matrix();
  Vec go = sigmoid(a.segment(3 * units, units).array()).matrix();
  CellStep out;
  out.c = (gf.array() * c.array() + gi.array() * gg.array()).matrix();
  out.h = (go.array() * relu(out.c.array())).matrix();
  return out;
}

namespace {

// One direction over the window slice; returns the final hidden state and,
// when `record` is set, fills the per-step activation cache.
Mat run_direction(const WindowBatch& batch, Index first, Index count,
                  Index lookback, bool reverse, const DirectionWeights& dw,
                  bool record, ForwardCache::Direction* dir_cache,
                  const char* dir_name) {
  const Index units = dw.w_rec.rows();
  Mat h = Mat::Zero(count, units);
  Mat c = Mat::Zero(count, units);
  Mat a(count, 4 * units);

  if (record) {
    dir_cache->gate_i.clear();
    dir_cache->gate_f.clear();
    dir_cache->gate_g.clear();
    dir_cache->gate_o.clear();
    dir_cache->cell.clear();
    dir_cache->cell_act.clear();
    dir_cache->hidden.clear();
    dir_cache->gate_i.reserve(lookback);
    dir_cache->gate_f.reserve(lookback);
    dir_cache->gate_g.reserve(lookback);
    dir_cache->gate_o.reserve(lookback);
    dir_cache->cell.reserve(lookback);
    dir_cache->cell_act.reserve(lookback);
    dir_cache->hidden.reserve(lookback);
  }

  for (Index s = 0; s < lookback; ++s) {
    const Index t = reverse ? (lookback - 1 - s) : s;
    // Window k of the slice starts at series row first+k, so the inputs of
    // all windows at offset t form the contiguous block below.
    auto x = batch.series.middleRows(first + t, count);
    a.noalias() = x * dw.w_in;
    a.noalias() += h * dw.w_rec;
    a.rowwise() += dw.bias.transpose();

    Mat gi = sigmoid(a.leftCols(units).array()).matrix();
    Mat gf = sigmoid(a.middleCols(units, units).array()).matrix();
    Mat gg = relu(a.middleCols(2 * units, units).array()).matrix();
    Mat go = sigmoid(a.rightCols(units).array()).matrix();

    c = (gf.array() * c.array() + gi.array() * gg.array()).matrix();
    Mat r = relu(c.array()).matrix();
    h = (go.array() * r.array()).matrix();

    if (!h.allFinite() || !c.allFinite()) {
      throw std::runtime_error(std::string("non-finite activation in ") +
                               dir_name + " lstm at step t=" +
                               std::to_string(t));
    }

    if (record) {
      dir_cache->gate_i.push_back(std::move(gi));
      dir_cache->gate_f.push_back(std::move(gf));
      dir_cache->gate_g.push_back(std::move(gg));
      dir_cache->gate_o.push_back(std::move(go));
      dir_cache->cell.push_back(c);
      dir_cache->cell_act.push_back(std::move(r));
      dir_cache->hidden.push_back(h);
    }
  }
  return h;
}

void check_shapes(const ModelConfig& cfg, const Weights& w,
                  const WindowBatch& batch, Index first, Index count) {
  if (batch.input_dim() != cfg.input_dim) {
    throw std::invalid_argument("forward: batch input_dim " +
                                std::to_string(batch.input_dim()) +
                                " != config input_dim " +
                                std::to_string(cfg.input_dim));
  }
  if (batch.lookback != cfg.lookback) {
    throw std::invalid_argument("forward: batch lookback " +
                                std::to_string(batch.lookback) +
                                " != config lookback " +
                                std::to_string(cfg.lookback));
  }
  if (w.input_dim() != cfg.input_dim || w.units() != cfg.units ||
      w.head_w.size() != 2 * cfg.units || w.head_bias.size() != 1) {
    throw std::invalid_argument("forward: weight shapes do not match config");
  }
  if (first < 0 || count < 0 || first + count > batch.count()) {
    throw std::invalid_argument("forward: window slice out of range");
  }
}

}  // namespace

Vec forward(const ModelConfig& cfg, const Weights& w, const WindowBatch& batch,
            Index first, Index count, RunMode mode, Rng* dropout_rng,
            ForwardCache* cache) {
  check_shapes(cfg, w, batch, first, count);
  const bool record = (mode == RunMode::kTrain);
  if (record && cache == nullptr) {
    throw std::invalid_argument("forward: train mode requires a cache");
  }
  const Index units = cfg.units;

  ForwardCache local;  // scratch for infer mode
  ForwardCache& cc = cache ? *cache : local;
  cc.first = first;
  cc.count = count;

  Mat h_fwd = run_direction(batch, first, count, cfg.lookback, false, w.fwd,
                            record, &cc.fwd, "forward");
  Mat h_bwd = run_direction(batch, first, count, cfg.lookback, true, w.bwd,
                            record, &cc.bwd, "backward");

  Mat concat(count, 2 * units);
  concat << h_fwd, h_bwd;

  Mat dropped;
  Mat mask;
  if (record && cfg.dropout_p > 0.0) {
    if (dropout_rng == nullptr) {
      throw std::invalid_argument("forward: dropout requires an rng");
    }
    const double scale = 1.0 / (1.0 - cfg.dropout_p);
    mask = Mat(count, 2 * units);
    for (Index i = 0; i < count; ++i) {
      for (Index j = 0; j < 2 * units; ++j) {
        mask(i, j) = dropout_rng->uniform01() < cfg.dropout_p ? 0.0 : scale;
      }
    }
    dropped = (concat.array() * mask.array()).matrix();
  } else {
    dropped = concat;
  }

  Vec preds = dropped * w.head_w;
  preds.array() += w.head_bias[0];
  if (!preds.allFinite()) {
    throw std::runtime_error("non-finite activation in dense head");
  }

  if (record) {
    cc.concat = std::move(concat);
    cc.mask = std::move(mask);
    cc.dropped = std::move(dropped);
    cc.preds = preds;
  }
  return preds;
}

double mse_loss(const Eigen::Ref<const Vec>& pred,
                const Eigen::Ref<const Vec>& target) {
  if (pred.size() == 0 || pred.size() != target.size()) {
    throw std::invalid_argument("mse_loss: need n >= 1 and equal sizes");
  }
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

namespace {

void backprop_direction(const WindowBatch& batch, Index first, Index count,
                        Index lookback, bool reverse,
                        const DirectionWeights& dw,
                        const ForwardCache::Direction& acts,
                        const Mat& dh_final, DirectionWeights& grads) {
  const Index units = dw.w_rec.rows();
  Mat dh = dh_final;
  Mat dc = Mat::Zero(count, units);
  Mat da(count, 4 * units);

  for (Index s = lookback - 1; s >= 0; --s) {
    const Index t = reverse ? (lookback - 1 - s) : s;
    const Mat& gi = acts.gate_i[s];
    const Mat& gf = acts.gate_f[s];
    const Mat& gg = acts.gate_g[s];
    const Mat& go = acts.gate_o[s];
    const Mat& cell = acts.cell[s];
    const Mat& r = acts.cell_act[s];

    Mat d_o = (dh.array() * r.array()).matrix();
    dc.array() += dh.array() * go.array() * relu_grad(cell.array());

    Mat d_i = (dc.array() * gg.array()).matrix();
    Mat d_g = (dc.array() * gi.array()).matrix();

    da.leftCols(units) = (d_i.array() * gi.array() * (1.0 - gi.array())).matrix();
    if (s > 0) {
      const Mat& c_prev = acts.cell[s - 1];
      da.middleCols(units, units) =
          (dc.array() * c_prev.array() * gf.array() * (1.0 - gf.array()))
              .matrix();
    } else {
      da.middleCols(units, units).setZero();  // c_prev is the zero state
    }
    da.middleCols(2 * units, units) =
        (d_g.array() * relu_grad(gg.array())).matrix();
    da.rightCols(units) =
        (d_o.array() * go.array() * (1.0 - go.array())).matrix();

    auto x = batch.series.middleRows(first + t, count);
    grads.w_in.noalias() += x.transpose() * da;
    if (s > 0) {
      grads.w_rec.noalias() += acts.hidden[s - 1].transpose() * da;
    }
    grads.bias += da.colwise().sum().transpose();

    if (s > 0) {
      dh.noalias() = da * dw.w_rec.transpose();
      dc = (dc.array() * gf.array()).matrix();
    }
  }
}

}  // namespace

Weights backward(const ModelConfig& cfg, const Weights& w,
                 const WindowBatch& batch, const ForwardCache& cache) {
  if (cache.preds.size() != cache.count || cache.count < 1) {
    throw std::invalid_argument("backward: cache missing or empty");
  }
  if (cache.fwd.hidden.size() != static_cast<std::size_t>(cfg.lookback) ||
      cache.bwd.hidden.size() != static_cast<std::size_t>(cfg.lookback)) {
    throw std::invalid_argument("backward: cache was not recorded in train mode");
  }
  const Index units = cfg.units;
  const Index count = cache.count;
  Weights grads = Weights::zeros(cfg.input_dim, units);

  const auto targets = batch.targets.segment(cache.first, count);
  Vec dpred = (2.0 / static_cast<double>(count)) * (cache.preds - targets);

  grads.head_w.noalias() = cache.dropped.transpose() * dpred;
  grads.head_bias[0] = dpred.sum();

  Mat dz = dpred * w.head_w.transpose();  // count x 2*units
  if (cache.mask.size() > 0) {
    dz.array() *= cache.mask.array();
  }

  backprop_direction(batch, cache.first, count, cfg.lookback, false, w.fwd,
                     cache.fwd, dz.leftCols(units), grads.fwd);
  backprop_direction(batch, cache.first, count, cfg.lookback, true, w.bwd,
                     cache.bwd, dz.rightCols(units), grads.bwd);
  return grads;
}

AdamState init_adam(const Weights& like) {
  AdamState st;
  st.m = Weights::zeros(like.input_dim(), like.units());
  st.v = st.m;
  st.step = 0;
  return st;
}

void adam_step(Weights& w, const Weights& grads, AdamState& st, double lr) {
  auto wv = param_views(w);
  auto gv = param_views(grads);
  auto mv = param_views(st.m);
  auto vv = param_views(st.v);
  st.step += 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, st.step);
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, st.step);
  for (std::size_t k = 0; k < wv.size(); ++k) {
    const auto& g = gv[k].values;
    if (g.size() != wv[k].values.size()) {
      throw std::invalid_argument(std::string("adam_step: shape mismatch in ") +
                                  gv[k].name);
    }
    if (!g.isFinite().all()) {
      throw std::runtime_error(std::string("adam_step: non-finite gradient in ") +
                               gv[k].name);
    }
    mv[k].values = AdamState::kBeta1 * mv[k].values +
                   (1.0 - AdamState::kBeta1) * g;
    vv[k].values = AdamState::kBeta2 * vv[k].values +
                   (1.0 - AdamState::kBeta2) * g.square();
    wv[k].values -= lr * (mv[k].values / bc1) /
                    ((vv[k].values / bc2).sqrt() + AdamState::kEps);
  }
}

}  // namespace latcast
