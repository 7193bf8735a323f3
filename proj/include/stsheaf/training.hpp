// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "stsheaf/data_io.hpp"
#include "stsheaf/model.hpp"

namespace stsheaf {

inline constexpr double kStdGuard = 1e-8;
inline constexpr double kMapeFloor = 1e-3;

// population mean/std per (node, feature), std guarded to 1 for constant
// series
struct NodeStats {
  int num_nodes = 0;
  int f = 1;
  std::vector<double> mean;  // n * F + k
  std::vector<double> std;
};

// Windowed tensors for one split. Inputs are stored z-scored (missing cells
// become 0, the node mean); targets are kept both raw and z-scored along
// with the observation mask.
struct Dataset {
  int num_windows = 0;
  int window = 0;
  int horizon = 0;
  int num_nodes = 0;
  int f = 1;
  std::vector<double> inputs_norm;   // w, t, n, k
  std::vector<double> targets_raw;   // w, h, n, k
  std::vector<double> targets_norm;  // w, h, n, k
  std::vector<uint8_t> mask;         // 1 = observed
  NodeStats stats;

  size_t input_stride() const { return static_cast<size_t>(window) * num_nodes * f; }
  size_t target_stride() const { return static_cast<size_t>(horizon) * num_nodes * f; }
};

struct SplitDatasets {
  Dataset train, val, test;
};

inline double zscore_value(double x, double mean, double std) { return (x - mean) / std; }
inline double inverse_zscore_value(double z, double mean, double std) { return z * std + mean; }

inline void zscore_inplace(std::vector<double>& values, const std::vector<uint8_t>& missing,
                           const NodeStats& st, int num_nodes, int f) {
  size_t per_row = static_cast<size_t>(num_nodes) * f;
  for (size_t i = 0; i < values.size(); ++i) {
    size_t nk = i % per_row;
    values[i] = missing[i] ? 0.0 : zscore_value(values[i], st.mean[nk], st.std[nk]);
  }
}

inline void inverse_zscore_inplace(std::vector<double>& values, const NodeStats& st, int num_nodes,
                                   int f) {
  size_t per_row = static_cast<size_t>(num_nodes) * f;
  for (size_t i = 0; i < values.size(); ++i) {
    size_t nk = i % per_row;
    values[i] = inverse_zscore_value(values[i], st.mean[nk], st.std[nk]);
  }
}

namespace detail {

// stats over series rows [0, row_end) per (node, feature), skipping missing
inline NodeStats compute_stats(const SeriesFile& s, int row_end) {
  NodeStats st;
  st.num_nodes = s.num_nodes;
  st.f = s.f;
  size_t per_row = static_cast<size_t>(s.num_nodes) * s.f;
  st.mean.assign(per_row, 0.0);
  st.std.assign(per_row, 1.0);
  std::vector<int64_t> count(per_row, 0);
  for (int t = 0; t < row_end; ++t)
    for (size_t nk = 0; nk < per_row; ++nk) {
      size_t i = t * per_row + nk;
      if (s.missing[i]) continue;
      st.mean[nk] += s.values[i];
      ++count[nk];
    }
  for (size_t nk = 0; nk < per_row; ++nk)
    if (count[nk] > 0) st.mean[nk] /= count[nk];
  std::vector<double> var(per_row, 0.0);
  for (int t = 0; t < row_end; ++t)
    for (size_t nk = 0; nk < per_row; ++nk) {
      size_t i = t * per_row + nk;
      if (s.missing[i]) continue;
      double dev = s.values[i] - st.mean[nk];
      var[nk] += dev * dev;
    }
  for (size_t nk = 0; nk < per_row; ++nk) {
    double sd = count[nk] > 0 ? std::sqrt(var[nk] / count[nk]) : 0.0;  // population std
    st.std[nk] = sd < kStdGuard ? 1.0 : sd;
  }
  return st;
}

inline Dataset slice_windows(const SeriesFile& s, const NodeStats& st, int first, int count,
                             int window, int horizon) {
  Dataset d;
  d.num_windows = count;
  d.window = window;
  d.horizon = horizon;
  d.num_nodes = s.num_nodes;
  d.f = s.f;
  size_t per_row = static_cast<size_t>(s.num_nodes) * s.f;
  d.inputs_norm.reserve(count * window * per_row);
  d.targets_raw.reserve(count * horizon * per_row);
  for (int w = 0; w < count; ++w) {
    int t0 = first + w;
    for (int t = t0; t < t0 + window; ++t)
      for (size_t nk = 0; nk < per_row; ++nk) {
        size_t i = t * per_row + nk;
        d.inputs_norm.push_back(s.missing[i] ? 0.0
                                             : zscore_value(s.values[i], st.mean[nk], st.std[nk]));
      }
    for (int t = t0 + window; t < t0 + window + horizon; ++t)
      for (size_t nk = 0; nk < per_row; ++nk) {
        size_t i = t * per_row + nk;
        d.targets_raw.push_back(s.values[i]);
        d.targets_norm.push_back(s.missing[i] ? 0.0
                                              : zscore_value(s.values[i], st.mean[nk], st.std[nk]));
        d.mask.push_back(s.missing[i] ? 0 : 1);
      }
  }
  d.stats = st;
  return d;
}

}  // namespace detail

// Sliding windows with stride 1, chronological split, stats from the
// training coverage only. Split sizes: floor(train), floor(val), remainder
// to test.
inline SplitDatasets make_windows(const SeriesFile& s, int window, int horizon,
                                  std::array<double, 3> split) {
  require(window >= 1 && horizon >= 1, "make_windows: window and horizon must be >= 1");
  double fsum = split[0] + split[1] + split[2];
  require(std::abs(fsum - 1.0) <= 1e-9, "make_windows: split fractions must sum to 1");
  int total = s.t_total - window - horizon + 1;
  if (total < 1)
    throw ConfigError("make_windows: series too short: " + std::to_string(s.t_total) +
                      " rows for window " + std::to_string(window) + " + horizon " +
                      std::to_string(horizon));
  int n_train = static_cast<int>(std::floor(split[0] * total));
  int n_val = static_cast<int>(std::floor(split[1] * total));
  int n_test = total - n_train - n_val;
  if (n_train < 1) throw ConfigError("make_windows: training split is empty");

  // rows touched by any training window (inputs and targets)
  int stats_rows = (n_train - 1) + window + horizon;
  NodeStats st = detail::compute_stats(s, stats_rows);

  SplitDatasets out;
  out.train = detail::slice_windows(s, st, 0, n_train, window, horizon);
  out.val = detail::slice_windows(s, st, n_train, n_val, window, horizon);
  out.test = detail::slice_windows(s, st, n_train + n_val, n_test, window, horizon);
  return out;
}

// ---- metrics ----

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent
  int64_t count = 0;
};

// Masked metrics over de-normalized values. MAPE additionally excludes
// |target| < mape_floor.
inline Metrics evaluate(std::span<const double> preds, std::span<const double> targets,
                        std::span<const uint8_t> mask, double mape_floor = kMapeFloor) {
  require(preds.size() == targets.size() && preds.size() == mask.size(),
          "evaluate: shape mismatch");
  Metrics m;
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  int64_t pct_count = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (!mask[i]) continue;
    double err = preds[i] - targets[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    ++m.count;
    if (std::abs(targets[i]) >= mape_floor) {
      pct_sum += std::abs(err / targets[i]);
      ++pct_count;
    }
  }
  if (m.count == 0) throw ConfigError("evaluate: all elements are masked");
  m.mae = abs_sum / m.count;
  m.rmse = std::sqrt(sq_sum / m.count);
  m.mape = pct_count > 0 ? 100.0 * pct_sum / pct_count : 0.0;
  return m;
}

// ---- Adam ----

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 12;
  int patience = 10;
  int max_epochs = 50;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  // optional early exit once validation MAE falls to this value (disabled
  // when negative); used by benchmark drivers with a fixed target
  double stop_val_below = -1.0;
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.learning_rate <= 0.0 || c.batch_size < 1 || c.patience < 1 || c.max_epochs < 1 ||
      c.adam_eps <= 0.0)
    throw ConfigError("train config: rates, sizes, and patience must be positive");
  if (c.adam_beta1 < 0.0 || c.adam_beta1 >= 1.0 || c.adam_beta2 < 0.0 || c.adam_beta2 >= 1.0)
    throw ConfigError("train config: adam betas must lie in [0, 1)");
}

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;
};

inline AdamState make_adam_state(const ModelParams& params) {
  AdamState st;
  for (const auto& [name, t] : params.entries) {
    st.m.emplace_back(t.data.size(), 0.0);
    st.v.emplace_back(t.data.size(), 0.0);
  }
  return st;
}

// standard bias-corrected Adam, elementwise
inline void adam_step(ModelParams& params, const std::vector<ad::Tensor>& grads, AdamState& st,
                      const TrainConfig& cfg) {
  require(grads.size() == params.entries.size(), "adam_step: gradient count mismatch");
  st.step += 1;
  double bc1 = 1.0 - std::pow(cfg.adam_beta1, st.step);
  double bc2 = 1.0 - std::pow(cfg.adam_beta2, st.step);
  for (size_t pi = 0; pi < params.entries.size(); ++pi) {
    ad::Tensor& p = params.entries[pi].second;
    const ad::Tensor& g = grads[pi];
    require(g.shape == p.shape, "adam_step: gradient shape mismatch for " +
                                    params.entries[pi].first);
    std::vector<double>& m = st.m[pi];
    std::vector<double>& v = st.v[pi];
    for (size_t i = 0; i < p.data.size(); ++i) {
      double gi = g.data[i];
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---- batched forward helpers ----

namespace detail {

inline ad::Tensor batch_inputs(const Dataset& ds, std::span<const int> idx) {
  int b = static_cast<int>(idx.size());
  ad::Tensor x = ad::Tensor::zeros({b, ds.window, ds.num_nodes, ds.f});
  size_t stride = ds.input_stride();
  for (int i = 0; i < b; ++i)
    std::copy(ds.inputs_norm.begin() + idx[i] * stride,
              ds.inputs_norm.begin() + (idx[i] + 1) * stride, x.data.begin() + i * stride);
  return x;
}

}  // namespace detail

// De-normalized predictions for every window in the dataset, shape
// (W, H, N, F) flattened.
inline std::vector<double> predict(const ModelParams& params, const ModelConfig& cfg,
                                   const Graph& g, const Dataset& ds, int batch_size) {
  std::vector<double> preds;
  preds.reserve(ds.num_windows * ds.target_stride());
  for (int start = 0; start < ds.num_windows; start += batch_size) {
    int b = std::min(batch_size, ds.num_windows - start);
    std::vector<int> idx(b);
    for (int i = 0; i < b; ++i) idx[i] = start + i;
    ad::Tensor x = detail::batch_inputs(ds, idx);
    ModelForward fw = model_forward(params, cfg, g, x);
    const ad::Tensor& y = fw.tape.value(fw.output);
    preds.insert(preds.end(), y.data.begin(), y.data.end());
  }
  inverse_zscore_inplace(preds, ds.stats, ds.num_nodes, ds.f);
  return preds;
}

// masked de-normalized MAE over a dataset
inline double validation_mae(const ModelParams& params, const ModelConfig& cfg, const Graph& g,
                             const Dataset& ds, int batch_size) {
  std::vector<double> preds = predict(params, cfg, g, ds, batch_size);
  Metrics m = evaluate(preds, ds.targets_raw, ds.mask);
  return m.mae;
}

// ---- training loop ----

struct EpochRow {
  int epoch = 0;
  double train_mae = std::numeric_limits<double>::quiet_NaN();  // normalized-space loss
  double val_mae = 0.0;                                         // de-normalized
  double lr = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochRow> history;  // row 0 is the pre-training validation
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
};

// Mini-batch masked MAE on normalized targets, Adam, early stopping on
// validation MAE with the configured patience. Deterministic given the seed.
inline TrainResult train_model(ModelParams params, const ModelConfig& mcfg, const Graph& g,
                               const Dataset& train_ds, const Dataset& val_ds,
                               const TrainConfig& tcfg) {
  validate_model_config(mcfg);
  validate_train_config(tcfg);
  if (train_ds.num_windows < 1 || val_ds.num_windows < 1)
    throw ConfigError("train: empty dataset");

  Rng shuffle_rng(tcfg.seed ^ 0x7261696e5f726eull);
  TrainResult res;
  AdamState adam = make_adam_state(params);

  double val0 = validation_mae(params, mcfg, g, val_ds, tcfg.batch_size);
  res.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), val0, tcfg.learning_rate});
  res.best_val = val0;
  res.best_epoch = 0;
  res.best_params = params;

  std::vector<int> order(train_ds.num_windows);
  for (int i = 0; i < train_ds.num_windows; ++i) order[i] = i;

  int since_best = 0;
  size_t tstride = train_ds.target_stride();
  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (int start = 0; start < train_ds.num_windows; start += tcfg.batch_size) {
      int b = std::min(tcfg.batch_size, train_ds.num_windows - start);
      std::vector<int> idx(order.begin() + start, order.begin() + start + b);
      ad::Tensor x = detail::batch_inputs(train_ds, idx);
      ad::Tensor target = ad::Tensor::zeros({b, train_ds.horizon, train_ds.num_nodes, train_ds.f});
      ad::Tensor maskt = ad::Tensor::zeros(target.shape);
      int64_t observed = 0;
      for (int i = 0; i < b; ++i)
        for (size_t j = 0; j < tstride; ++j) {
          size_t src = idx[i] * tstride + j;
          target.data[i * tstride + j] = train_ds.targets_norm[src];
          double mv = train_ds.mask[src] ? 1.0 : 0.0;
          maskt.data[i * tstride + j] = mv;
          observed += train_ds.mask[src];
        }
      if (observed == 0) continue;

      ModelForward fw = model_forward(params, mcfg, g, x);
      ad::Tape& t = fw.tape;
      ad::Var diff = t.sub(fw.output, t.constant(std::move(target)));
      ad::Var masked = t.elementwise_mul(t.abs_op(diff), t.constant(std::move(maskt)));
      ad::Var loss = t.mul_scalar(t.reduce_sum(masked), 1.0 / static_cast<double>(observed));
      double loss_val = t.value(loss).data[0];
      if (!std::isfinite(loss_val))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
      t.backward(loss);
      std::vector<ad::Tensor> grads;
      grads.reserve(params.entries.size());
      for (size_t pi = 0; pi < params.entries.size(); ++pi)
        grads.push_back(fw.param_vars[pi].valid()
                            ? t.grad(fw.param_vars[pi])
                            : ad::Tensor::zeros(params.entries[pi].second.shape));
      adam_step(params, grads, adam, tcfg);
      loss_sum += loss_val * observed;
      loss_count += observed;
    }
    double train_mae = loss_count > 0 ? loss_sum / loss_count : 0.0;
    double val = validation_mae(params, mcfg, g, val_ds, tcfg.batch_size);
    res.history.push_back({epoch, train_mae, val, tcfg.learning_rate});
    res.epochs_run = epoch;
    if (val < res.best_val) {
      res.best_val = val;
      res.best_epoch = epoch;
      res.best_params = params;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (tcfg.stop_val_below >= 0.0 && res.best_val <= tcfg.stop_val_below) break;
    if (since_best >= tcfg.patience) break;
  }
  return res;
}

}  // namespace stsheaf
