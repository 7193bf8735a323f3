// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: spectrum, diffuse, oversmooth, train, eval, ablate, gen.
// Exit codes: 0 success, 1 numerical failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stsheaf/config.hpp"
#include "stsheaf/experiments.hpp"

namespace fs = std::filesystem;
using namespace stsheaf;
using nlohmann::json;

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Tracks files written by a command so partial outputs can be removed when
// the command fails.
struct OutputSet {
  fs::path dir;
  std::vector<fs::path> written;

  explicit OutputSet(const std::string& out_dir) : dir(out_dir) {
    fs::create_directories(dir);
  }
  fs::path reg(const std::string& name) {
    written.push_back(dir / name);
    return written.back();
  }
  void discard_all() {
    for (const fs::path& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file: " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct CliOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
};

RunConfig load_config(const CliOptions& opt) {
  RunConfig rc = RunConfig::load(opt.config_path);
  if (opt.seed) rc.seed = *opt.seed;
  if (opt.out_dir) rc.out_dir = *opt.out_dir;
  return rc;
}

// ---- commands ----

int cmd_spectrum(const CliOptions& opt) {
  RunConfig rc = load_config(opt);
  Graph g = rc.build_graph();
  const json& sect = rc.section("spectrum");
  if (!sect.contains("sheaf")) throw ConfigError("config: spectrum.sheaf is required");
  Sheaf s = rc.build_sheaf(g, sect.at("sheaf"));
  std::vector<double> w = cfgdetail::get_or<std::string>(sect, "weights", "norm") == "ones"
                              ? unit_weights(g)
                              : edge_norm_weights(g);
  double rank_tol = cfgdetail::get_or<double>(sect, "rank_tol", kDefaultRankTol);
  int dense_cap = cfgdetail::get_or<int>(sect, "dense_cap", kDefaultDenseCap);
  long nd = static_cast<long>(g.num_nodes) * s.stalk_dim;
  SpectrumMethod method = nd <= 1024 ? SpectrumMethod::dense : SpectrumMethod::power;
  if (sect.contains("method"))
    method = sect.at("method").get<std::string>() == "power" ? SpectrumMethod::power
                                                             : SpectrumMethod::dense;

  SpectrumReport rep = spectrum(s, w, method, rank_tol, dense_cap);

  OutputSet out(rc.out_dir);
  json j{{"lambda_max", rep.lambda_max},
         {"lambda_min_pos", rep.lambda_min_pos},
         {"kernel_dim", rep.kernel_dim},
         {"stable_step_bound", rep.stable_step_bound},
         {"method", method == SpectrumMethod::dense ? "dense" : "power"},
         {"num_nodes", g.num_nodes},
         {"stalk_dim", s.stalk_dim}};
  try {
    write_json_file(out.reg("spectrum.json"), j);
  } catch (...) {
    out.discard_all();
    throw;
  }
  std::cout << "spectrum: lambda_max=" << rep.lambda_max << " kernel_dim=" << rep.kernel_dim
            << "\n";
  return 0;
}

int cmd_diffuse(const CliOptions& opt) {
  RunConfig rc = load_config(opt);
  Graph g = rc.build_graph();
  const json& sect = rc.section("diffuse");
  if (!sect.contains("sheaf")) throw ConfigError("config: diffuse.sheaf is required");
  Sheaf s = rc.build_sheaf(g, sect.at("sheaf"));
  std::vector<double> w = cfgdetail::get_or<std::string>(sect, "weights", "norm") == "ones"
                              ? unit_weights(g)
                              : edge_norm_weights(g);
  int steps = cfgdetail::get_or<int>(sect, "steps", 100);
  double step;
  if (!sect.contains("step") ||
      (sect.at("step").is_string() && sect.at("step").get<std::string>() == "auto")) {
    SpectrumReport rep = spectrum(s, w, SpectrumMethod::dense);
    if (rep.lambda_max <= 0.0) throw NumericError("diffuse: operator is zero, no auto step");
    step = 0.9 * rep.stable_step_bound;
  } else {
    step = sect.at("step").get<double>();
  }

  Rng rng(rc.seed ^ 0xd1f5ull);
  Mat h0(g.num_nodes, s.stalk_dim);
  for (double& x : h0.data) x = rng.normal();
  DiffusionTrace trace = diffuse_flow(s, w, h0, step, steps);

  OutputSet out(rc.out_dir);
  try {
    std::string csv = "step,energy,pair_distance\n";
    for (size_t i = 0; i < trace.energies.size(); ++i)
      csv += std::to_string(i) + "," + fmt(trace.energies[i]) + "," +
             fmt(trace.pair_distances[i]) + "\n";
    write_text(out.reg("trace.csv"), csv);
    if (cfgdetail::get_or<bool>(sect, "dump_states", false)) {
      json states = json::array();
      for (const Mat& m : trace.states) states.push_back(m.data);
      write_json_file(out.reg("states.json"),
                      json{{"rows", g.num_nodes}, {"cols", s.stalk_dim}, {"states", states}});
    }
  } catch (...) {
    out.discard_all();
    throw;
  }
  std::cout << "diffuse: " << steps << " steps, energy " << fmt(trace.energies.front()) << " -> "
            << fmt(trace.energies.back()) << "\n";
  return 0;
}

int cmd_oversmooth(const CliOptions& opt) {
  RunConfig rc = load_config(opt);
  // default benchmark graph: a regular swap-rewired ring; plain GCN
  // propagation collapses to the constant profile within ten steps
  Graph g = rc.has("graph") ? rc.build_graph()
                            : watts_strogatz(30, 12, 0.3, rc.seed, rc.eps,
                                             /*degree_preserving=*/true);
  int num_layers = 10, num_seeds = 5, stalk_dim = 16;
  if (rc.has("oversmooth")) {
    const json& sect = rc.section("oversmooth");
    num_layers = cfgdetail::get_or<int>(sect, "num_layers", num_layers);
    num_seeds = cfgdetail::get_or<int>(sect, "num_seeds", num_seeds);
    stalk_dim = cfgdetail::get_or<int>(sect, "stalk_dim", stalk_dim);
  }
  OversmoothCurves curves = run_oversmooth(g, stalk_dim, num_layers, num_seeds, rc.seed);

  OutputSet out(rc.out_dir);
  try {
    std::string csv =
        "layer,sheaf_dist,gcn_dist,linear_dist,sheaf_ratio,gcn_ratio,linear_ratio\n";
    for (int l = 0; l <= num_layers; ++l) {
      csv += std::to_string(l) + "," + fmt(curves.sheaf_dist[l]) + "," +
             fmt(curves.gcn_dist[l]) + "," + fmt(curves.linear_dist[l]) + "," +
             fmt(curves.sheaf_dist[l] / curves.sheaf_dist[0]) + "," +
             fmt(curves.gcn_dist[l] / curves.gcn_dist[0]) + "," +
             fmt(curves.linear_dist[l] / curves.linear_dist[0]) + "\n";
    }
    write_text(out.reg("oversmoothing.csv"), csv);
  } catch (...) {
    out.discard_all();
    throw;
  }
  std::cout << "oversmooth: layer-" << num_layers
            << " ratios sheaf=" << fmt(curves.sheaf_dist[num_layers] / curves.sheaf_dist[0])
            << " gcn=" << fmt(curves.gcn_dist[num_layers] / curves.gcn_dist[0]) << "\n";
  return 0;
}

std::string history_csv(const std::vector<EpochRow>& history) {
  std::string csv = "epoch,train_mae,val_mae,lr\n";
  for (const EpochRow& r : history)
    csv += std::to_string(r.epoch) + "," + fmt(r.train_mae) + "," + fmt(r.val_mae) + "," +
           fmt(r.lr) + "\n";
  return csv;
}

int cmd_train(const CliOptions& opt) {
  RunConfig rc = load_config(opt);
  Graph g = rc.build_graph();
  SeriesFile series = rc.build_series(g);
  ModelConfig mcfg = rc.build_model_config();
  TrainConfig tcfg = rc.build_train_config();
  if (opt.seed) tcfg.seed = *opt.seed;
  SplitDatasets data = make_windows(series, mcfg.window, mcfg.horizon, rc.build_split());

  ModelParams params = init_params(mcfg, g.num_nodes, tcfg.seed);
  TrainResult res = train_model(std::move(params), mcfg, g, data.train, data.val, tcfg);

  OutputSet out(rc.out_dir);
  try {
    write_json_file(out.reg("checkpoint.json"), checkpoint_to_json(res.best_params, mcfg));
    write_text(out.reg("history.csv"), history_csv(res.history));
  } catch (...) {
    out.discard_all();
    throw;
  }
  std::cout << "train: best val MAE " << fmt(res.best_val) << " at epoch " << res.best_epoch
            << " (" << res.epochs_run << " epochs run)\n";
  return 0;
}

json metrics_to_json(const Metrics& m) {
  return json{{"mae", m.mae}, {"rmse", m.rmse}, {"mape", m.mape}, {"count", m.count}};
}

int cmd_eval(const CliOptions& opt) {
  RunConfig rc = load_config(opt);
  const json& sect = rc.section("eval");
  std::ifstream in(sect.at("checkpoint").get<std::string>());
  if (!in) throw ConfigError("eval: cannot open checkpoint");
  json cj;
  try {
    in >> cj;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("eval: invalid checkpoint JSON: ") + e.what());
  }
  auto [params, mcfg] = checkpoint_from_json(cj);

  Graph g = rc.build_graph();
  SeriesFile series = rc.build_series(g);
  TrainConfig tcfg = rc.build_train_config();
  SplitDatasets data = make_windows(series, mcfg.window, mcfg.horizon, rc.build_split());

  std::vector<double> preds = predict(params, mcfg, g, data.test, tcfg.batch_size);
  Metrics overall = evaluate(preds, data.test.targets_raw, data.test.mask);
  std::vector<Metrics> per_h = per_horizon_metrics(preds, data.test);

  OutputSet out(rc.out_dir);
  try {
    json j{{"horizon", mcfg.horizon},
           {"mae", overall.mae},
           {"rmse", overall.rmse},
           {"mape", overall.mape}};
    json arr = json::array();
    for (size_t h = 0; h < per_h.size(); ++h) {
      json m = metrics_to_json(per_h[h]);
      m["horizon"] = static_cast<int>(h) + 1;
      arr.push_back(std::move(m));
    }
    j["per_horizon"] = std::move(arr);
    write_json_file(out.reg("metrics.json"), j);
  } catch (...) {
    out.discard_all();
    throw;
  }
  std::cout << "eval: test MAE " << fmt(overall.mae) << " RMSE " << fmt(overall.rmse) << " MAPE "
            << fmt(overall.mape) << "\n";
  return 0;
}

int cmd_ablate(const CliOptions& opt) {
  RunConfig rc = load_config(opt);
  Graph g = rc.build_graph();
  SeriesFile series = rc.build_series(g);
  ModelConfig mcfg = rc.build_model_config();
  TrainConfig tcfg = rc.build_train_config();
  SplitDatasets data = make_windows(series, mcfg.window, mcfg.horizon, rc.build_split());

  std::vector<uint64_t> seeds{1, 2, 3};
  std::vector<int> sweep_dims, sweep_mae_dims{1, 8};
  if (rc.has("ablate")) {
    const json& sect = rc.section("ablate");
    if (sect.contains("seeds")) seeds = sect.at("seeds").get<std::vector<uint64_t>>();
    if (sect.contains("sweep_dims")) sweep_dims = sect.at("sweep_dims").get<std::vector<int>>();
    if (sect.contains("sweep_mae_dims"))
      sweep_mae_dims = sect.at("sweep_mae_dims").get<std::vector<int>>();
    if (sect.contains("max_epochs")) tcfg.max_epochs = sect.at("max_epochs").get<int>();
  }
  if (seeds.empty()) throw ConfigError("ablate: needs at least one seed");

  AblationResult res = run_ablation(g, data, mcfg, tcfg, seeds, worker_cap());

  OutputSet out(rc.out_dir);
  try {
    std::string csv = "variant,horizon,mae,rmse,mape\n";
    for (const std::string& variant : res.variants)
      for (int h = 0; h < mcfg.horizon; ++h) {
        double mae = 0, rmse = 0, mape = 0;
        int n = 0;
        for (const AblationCell& c : res.cells)
          if (c.variant == variant) {
            mae += c.per_horizon[h].mae;
            rmse += c.per_horizon[h].rmse;
            mape += c.per_horizon[h].mape;
            ++n;
          }
        csv += variant + "," + std::to_string(h + 1) + "," + fmt(mae / n) + "," + fmt(rmse / n) +
               "," + fmt(mape / n) + "\n";
      }
    write_text(out.reg("ablation.csv"), csv);

    std::string per_seed = "variant,seed,horizon,mae,rmse,mape\n";
    for (const AblationCell& c : res.cells)
      for (int h = 0; h < mcfg.horizon; ++h)
        per_seed += c.variant + "," + std::to_string(c.seed) + "," + std::to_string(h + 1) + "," +
                    fmt(c.per_horizon[h].mae) + "," + fmt(c.per_horizon[h].rmse) + "," +
                    fmt(c.per_horizon[h].mape) + "\n";
    write_text(out.reg("ablation_per_seed.csv"), per_seed);

    if (!sweep_dims.empty()) {
      std::vector<SweepRow> rows = run_sweep(g, data, mcfg, tcfg, sweep_dims, sweep_mae_dims, seeds);
      std::string sweep = "stalk_dim,param_count,mean_test_mae\n";
      json timing = json::array();
      for (const SweepRow& r : rows) {
        sweep += std::to_string(r.stalk_dim) + "," + std::to_string(r.param_count) + "," +
                 (r.mean_test_mae >= 0 ? fmt(r.mean_test_mae) : std::string("")) + "\n";
        timing.push_back(json{{"stalk_dim", r.stalk_dim}, {"epoch_seconds", r.epoch_seconds}});
      }
      write_text(out.reg("sweep.csv"), sweep);
      // wall-clock timings are inherently non-deterministic; kept out of the
      // deterministic csv files
      write_json_file(out.reg("sweep_timing.json"), json{{"rows", timing}});
    }
  } catch (...) {
    out.discard_all();
    throw;
  }
  double dyn = res.mean_overall_mae("full");
  double sta = res.mean_overall_mae("static_maps");
  std::cout << "ablate: mean test MAE full=" << fmt(dyn) << " static=" << fmt(sta)
            << " no_sheaf=" << fmt(res.mean_overall_mae("no_sheaf"))
            << " no_temporal=" << fmt(res.mean_overall_mae("no_temporal")) << "\n";
  return 0;
}

int cmd_gen(const CliOptions& opt) {
  RunConfig rc = load_config(opt);
  Graph g = rc.build_graph();
  const json& sect = rc.section("series");
  if (!sect.contains("generator")) throw ConfigError("gen: series.generator is required");
  SeriesFile series = rc.build_series(g);

  OutputSet out(rc.out_dir);
  try {
    save_series_csv((out.reg("series.csv")).string(), series);
    json meta{{"generator", sect.at("generator")},
              {"seed", rc.seed},
              {"t_total", series.t_total},
              {"num_nodes", series.num_nodes}};
    if (rc.section("graph").contains("generator")) {
      save_edge_list((out.reg("graph.csv")).string(), g);
      meta["graph_generator"] = rc.section("graph").at("generator");
      meta["graph_edges"] = g.edges.size();
    }
    write_json_file(out.reg("series_meta.json"), meta);
  } catch (...) {
    out.discard_all();
    throw;
  }
  std::cout << "gen: wrote " << series.t_total << " x " << series.num_nodes << " series\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellular-sheaf diffusion experiments"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  CliOptions opt;
  uint64_t seed_flag = 0;
  std::string out_flag;
  app.add_option("--config", opt.config_path, "JSON run configuration")->required();
  CLI::Option* seed_opt = app.add_option("--seed", seed_flag, "override the config seed");
  CLI::Option* out_opt = app.add_option("--out", out_flag, "override the output directory");

  auto* c_spectrum = app.add_subcommand("spectrum", "eigenvalue report of the sheaf Laplacian");
  auto* c_diffuse = app.add_subcommand("diffuse", "gradient-flow diffusion trace");
  auto* c_oversmooth = app.add_subcommand("oversmooth", "sheaf vs GCN oversmoothing curves");
  auto* c_train = app.add_subcommand("train", "train the forecasting model");
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* c_ablate = app.add_subcommand("ablate", "variant ablation and stalk sweep");
  auto* c_gen = app.add_subcommand("gen", "generate synthetic data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_opt->count()) opt.seed = seed_flag;
  if (out_opt->count()) opt.out_dir = out_flag;

  try {
    if (c_spectrum->parsed()) return cmd_spectrum(opt);
    if (c_diffuse->parsed()) return cmd_diffuse(opt);
    if (c_oversmooth->parsed()) return cmd_oversmooth(opt);
    if (c_train->parsed()) return cmd_train(opt);
    if (c_eval->parsed()) return cmd_eval(opt);
    if (c_ablate->parsed()) return cmd_ablate(opt);
    if (c_gen->parsed()) return cmd_gen(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
