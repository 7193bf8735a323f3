// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "stsheaf/model.hpp"
#include "stsheaf/spectral.hpp"
#include "stsheaf/training.hpp"

namespace stsheaf {

// Worker cap: STSHEAF_THREADS env var bounds the pool, default
// min(hardware, 4).
inline int worker_cap() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  int cap = std::min(hw, 4);
  if (const char* env = std::getenv("STSHEAF_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) cap = std::min(cap, v);
  }
  return cap;
}

// Runs f(i) for i in [0, n) on up to `threads` workers. Each index writes
// only its own result slot, so output is deterministic regardless of
// scheduling.
template <typename F>
inline void parallel_for_indexed(int n, int threads, F&& f) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          f(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---- oversmoothing benchmark (three curves, seed-averaged) ----

struct OversmoothCurves {
  int num_layers = 0;
  std::vector<double> sheaf_dist;   // gated sheaf layer stack
  std::vector<double> gcn_dist;     // plain normalized propagation
  std::vector<double> linear_dist;  // linear gradient flow on the same sheaf
};

inline ModelConfig oversmooth_model_config(int stalk_dim, int num_layers) {
  ModelConfig cfg;
  cfg.f_in = 1;
  cfg.f_out = 1;
  cfg.embed_dim = 8;
  cfg.stalk_dim = stalk_dim;
  cfg.num_heads = 1;
  cfg.num_layers = num_layers;
  cfg.horizon = 1;
  cfg.window = 1;
  cfg.variant = Variant::dynamic;
  return cfg;
}

// From one random h0: run the randomly initialized gated layer stack, the
// plain GCN propagation, and the linear sheaf gradient flow, all recording
// the connected-node distance metric per layer.
inline OversmoothCurves run_oversmooth(const Graph& g, int stalk_dim, int num_layers,
                                       int num_seeds, uint64_t seed0) {
  require(num_layers >= 1 && num_seeds >= 1, "oversmooth: layers and seeds must be >= 1");
  OversmoothCurves out;
  out.num_layers = num_layers;
  out.sheaf_dist.assign(num_layers + 1, 0.0);
  out.gcn_dist.assign(num_layers + 1, 0.0);
  out.linear_dist.assign(num_layers + 1, 0.0);
  ModelConfig cfg = oversmooth_model_config(stalk_dim, num_layers);
  std::vector<double> w = edge_norm_weights(g);

  for (int si = 0; si < num_seeds; ++si) {
    uint64_t seed = seed0 + static_cast<uint64_t>(si) * 1000003ull;
    ModelParams params = init_params(cfg, g.num_nodes, seed);
    Rng rng(seed ^ 0x483d83ull);
    Mat h0(g.num_nodes, stalk_dim);
    for (double& x : h0.data) x = rng.normal();

    Sheaf maps = restriction_maps_dynamic(params, cfg, h0, g);

    Mat h = h0;
    out.sheaf_dist[0] += oversmoothing_metric(g, h);
    for (int l = 0; l < num_layers; ++l) {
      h = sheaf_layer_apply(params, cfg, l, h, maps, w);
      out.sheaf_dist[l + 1] += oversmoothing_metric(g, h);
    }

    h = h0;
    out.gcn_dist[0] += oversmoothing_metric(g, h);
    for (int l = 0; l < num_layers; ++l) {
      h = gcn_diffuse_step(g, h);
      out.gcn_dist[l + 1] += oversmoothing_metric(g, h);
    }

    double lmax = spectrum(maps, w, SpectrumMethod::dense).lambda_max;
    if (lmax > 0.0) {
      DiffusionTrace tr = diffuse_flow(maps, w, h0, 0.9 * (2.0 / lmax), num_layers);
      for (int l = 0; l <= num_layers; ++l) out.linear_dist[l] += tr.pair_distances[l];
    } else {
      for (int l = 0; l <= num_layers; ++l) out.linear_dist[l] += oversmoothing_metric(g, h0);
    }
  }
  for (int l = 0; l <= num_layers; ++l) {
    out.sheaf_dist[l] /= num_seeds;
    out.gcn_dist[l] /= num_seeds;
    out.linear_dist[l] /= num_seeds;
  }
  return out;
}

// ---- ablation and stalk sweep ----

struct AblationCell {
  std::string variant;
  uint64_t seed = 0;
  std::vector<Metrics> per_horizon;
  Metrics overall;
  double best_val = 0.0;
  int epochs_run = 0;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // variant-major, seed-minor
  std::vector<std::string> variants;
  std::vector<uint64_t> seeds;

  double mean_overall_mae(const std::string& variant) const {
    double acc = 0.0;
    int n = 0;
    for (const AblationCell& c : cells)
      if (c.variant == variant) {
        acc += c.overall.mae;
        ++n;
      }
    return n ? acc / n : 0.0;
  }
};

inline std::vector<Metrics> per_horizon_metrics(std::span<const double> preds, const Dataset& ds) {
  std::vector<Metrics> out;
  size_t hn = static_cast<size_t>(ds.num_nodes) * ds.f;
  for (int h = 0; h < ds.horizon; ++h) {
    std::vector<double> p, t;
    std::vector<uint8_t> m;
    for (int w = 0; w < ds.num_windows; ++w) {
      size_t base = (static_cast<size_t>(w) * ds.horizon + h) * hn;
      p.insert(p.end(), preds.begin() + base, preds.begin() + base + hn);
      t.insert(t.end(), ds.targets_raw.begin() + base, ds.targets_raw.begin() + base + hn);
      m.insert(m.end(), ds.mask.begin() + base, ds.mask.begin() + base + hn);
    }
    out.push_back(evaluate(p, t, m));
  }
  return out;
}

inline AblationCell run_single_training(const std::string& variant_tag, Variant variant,
                                        uint64_t seed, const ModelConfig& base_cfg,
                                        const TrainConfig& base_tcfg, const Graph& g,
                                        const SplitDatasets& data) {
  ModelConfig cfg = base_cfg;
  cfg.variant = variant;
  TrainConfig tcfg = base_tcfg;
  tcfg.seed = seed;
  ModelParams params = init_params(cfg, g.num_nodes, seed);
  TrainResult tr = train_model(std::move(params), cfg, g, data.train, data.val, tcfg);
  std::vector<double> preds = predict(tr.best_params, cfg, g, data.test, tcfg.batch_size);

  AblationCell cell;
  cell.variant = variant_tag;
  cell.seed = seed;
  cell.per_horizon = per_horizon_metrics(preds, data.test);
  cell.overall = evaluate(preds, data.test.targets_raw, data.test.mask);
  cell.best_val = tr.best_val;
  cell.epochs_run = tr.epochs_run;
  return cell;
}

// Four variants x shared seeds on one dataset. Independent runs may fan out
// to the worker pool; output order is fixed.
inline AblationResult run_ablation(const Graph& g, const SplitDatasets& data,
                                   const ModelConfig& base_cfg, const TrainConfig& base_tcfg,
                                   const std::vector<uint64_t>& seeds, int threads) {
  AblationResult res;
  res.variants = {"full", "static_maps", "no_sheaf", "no_temporal"};
  res.seeds = seeds;
  std::vector<Variant> vmap = {Variant::dynamic, Variant::static_maps, Variant::no_sheaf,
                               Variant::no_temporal};
  int n = static_cast<int>(res.variants.size() * seeds.size());
  res.cells.resize(n);
  parallel_for_indexed(n, threads, [&](int i) {
    int vi = i / static_cast<int>(seeds.size());
    int si = i % static_cast<int>(seeds.size());
    res.cells[i] = run_single_training(res.variants[vi], vmap[vi], seeds[si], base_cfg,
                                       base_tcfg, g, data);
  });
  return res;
}

struct SweepRow {
  int stalk_dim = 0;
  int64_t param_count = 0;
  double epoch_seconds = 0.0;            // wall time, non-deterministic
  double mean_test_mae = -1.0;           // < 0 when MAE was not measured for this d
};

// Stalk-dimension sweep: parameter count and single-epoch wall time for
// every d, full training + test MAE (seed-averaged) for the dims listed in
// mae_dims. Timing runs are serialized.
inline std::vector<SweepRow> run_sweep(const Graph& g, const SplitDatasets& data,
                                       const ModelConfig& base_cfg, const TrainConfig& base_tcfg,
                                       const std::vector<int>& dims,
                                       const std::vector<int>& mae_dims,
                                       const std::vector<uint64_t>& seeds) {
  std::vector<SweepRow> rows;
  for (int d : dims) {
    ModelConfig cfg = base_cfg;
    cfg.stalk_dim = d;
    SweepRow row;
    row.stalk_dim = d;
    row.param_count = init_params(cfg, g.num_nodes, 1).param_count();

    TrainConfig one = base_tcfg;
    one.max_epochs = 1;
    one.seed = 1;
    ModelParams params = init_params(cfg, g.num_nodes, 1);
    auto t0 = std::chrono::steady_clock::now();
    train_model(std::move(params), cfg, g, data.train, data.val, one);
    auto t1 = std::chrono::steady_clock::now();
    row.epoch_seconds = std::chrono::duration<double>(t1 - t0).count();

    bool want_mae = std::find(mae_dims.begin(), mae_dims.end(), d) != mae_dims.end();
    if (want_mae) {
      double acc = 0.0;
      for (uint64_t seed : seeds) {
        AblationCell cell =
            run_single_training("full", Variant::dynamic, seed, cfg, base_tcfg, g, data);
        acc += cell.overall.mae;
      }
      row.mean_test_mae = acc / static_cast<double>(seeds.size());
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace stsheaf
