// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any criterion fails. Runs against the
// library and, where command behavior itself is under test, against the
// CLI binary.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stsheaf/config.hpp"
#include "stsheaf/experiments.hpp"

#include "../test_util.hpp"

using namespace stsheaf;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int idx, const std::string& name, bool pass, const std::string& detail,
            bool flag_only = false) {
  const char* tag = pass ? "[PASS]" : (flag_only ? "[FLAG]" : "[FAIL]");
  std::printf("%s criterion %d: %s (%s)\n", tag, idx, name.c_str(), detail.c_str());
  if (!pass && !flag_only) ++g_failures;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

int run_cli(const std::string& args) {
  std::string cmd =
      std::string(STSHEAF_CLI_PATH) + " " + args + " > acc_cli_out.txt 2> acc_cli_err.txt";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

// shared cascade benchmark: small-world graph, event-driven series
Graph benchmark_graph() { return watts_strogatz(30, 4, 0.2, 100); }

SeriesFile benchmark_series(const Graph& g, int t_total) {
  return gen_cascade_series(g, t_total, 0.15, 0.5, 2, 200);
}

ModelConfig benchmark_model(int stalk_dim) {
  ModelConfig c;
  c.f_in = 1;
  c.f_out = 1;
  c.embed_dim = 16;
  c.stalk_dim = stalk_dim;
  c.num_heads = 4;
  c.num_layers = 2;
  c.horizon = 3;
  c.window = 12;
  return c;
}

// ---- criteria ----

void criterion_1() {
  Timer timer;
  Rng rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(7));
    int d = 1 + static_cast<int>(rng.uniform_int(4));
    Graph g = testutil::random_connected_graph(n, static_cast<int>(rng.uniform_int(6)), rng);
    Sheaf s = make_random_sheaf(g, d, rng);
    std::vector<double> w(g.edges.size());
    for (double& x : w) x = rng.uniform(0.2, 1.5);
    Mat h = testutil::random_signal(n, d, rng);
    Mat got = sheaf_laplacian_apply(s, h, w);
    std::vector<double> want = testutil::dense_laplacian_matvec(s, w, h.data);
    worst = std::max(worst, testutil::rel_err(got.data, want));
  }
  double secs = timer.seconds();
  report(1, "Laplacian oracle equivalence",
         worst <= 1e-10 && secs <= 10.0,
         "200 instances, worst rel err " + fmt(worst) + ", " + fmt(secs) + " s");
}

void criterion_2() {
  Rng rng(1002);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(6));
    int d = 1 + static_cast<int>(rng.uniform_int(3));
    Graph g = testutil::random_connected_graph(n, static_cast<int>(rng.uniform_int(5)), rng);
    Sheaf s = make_random_sheaf(g, d, rng);
    std::vector<double> w(g.edges.size());
    for (double& x : w) x = rng.uniform(0.2, 1.5);
    Mat h = testutil::random_signal(n, d, rng);
    Mat analytic = sheaf_laplacian_apply(s, h, w);
    const double step = 1e-5;
    std::vector<double> fd(h.data.size());
    for (size_t i = 0; i < h.data.size(); ++i) {
      Mat hp = h, hm = h;
      hp.data[i] += step;
      hm.data[i] -= step;
      fd[i] = (sheaf_energy(s, hp, w) - sheaf_energy(s, hm, w)) / (2 * step);
    }
    worst = std::max(worst, testutil::rel_err(analytic.data, fd));
  }
  report(2, "energy gradient identity", worst <= 1e-5,
         "50 instances, worst rel err " + fmt(worst));
}

void criterion_3() {
  // Instances are rejection sampled to a numerically trivial kernel (dense
  // rank oracle) plus spectral gap lambda_min_pos / lambda_max >= 0.05: a
  // mode at ratio kappa retains about kappa (1 - 1.8 kappa)^200 of the
  // initial energy, so the stated 1e-6 bound is only attainable away from
  // the slow band. Restriction magnitudes are drawn in [0.5, 1.5].
  Rng rng(1003);
  int pass_contract = 0, pass_diverge = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    std::unique_ptr<Graph> g;
    Sheaf s;
    std::vector<double> w;
    SpectrumReport rep;
    for (;;) {
      int n = 3 + static_cast<int>(rng.uniform_int(6));
      int d = 1 + static_cast<int>(rng.uniform_int(3));
      g = std::make_unique<Graph>(testutil::random_connected_graph(
          n, 2 + static_cast<int>(rng.uniform_int(6)), rng));
      s = make_random_sheaf(*g, d, rng);
      w.assign(g->edges.size(), 0.0);
      for (double& x : w) x = rng.uniform(0.5, 1.5);
      rep = spectrum(s, w, SpectrumMethod::dense);
      if (rep.kernel_dim == 0 && rep.lambda_min_pos >= 0.05 * rep.lambda_max) break;
    }
    Mat h0 = testutil::random_signal(g->num_nodes, s.stalk_dim, rng);
    DiffusionTrace ok = diffuse_flow(s, w, h0, 0.9 * rep.stable_step_bound, 100);
    if (ok.energies.back() <= 1e-6 * ok.energies.front()) ++pass_contract;
    DiffusionTrace bad = diffuse_flow(s, w, h0, 1.1 * rep.stable_step_bound, 100);
    if (bad.energies.back() > bad.energies.front()) ++pass_diverge;
  }
  report(3, "step-size bound", pass_contract == trials && pass_diverge == trials,
         std::to_string(pass_contract) + "/" + std::to_string(trials) + " contract, " +
             std::to_string(pass_diverge) + "/" + std::to_string(trials) + " diverge");
}

void criterion_4() {
  Rng rng(1004);
  bool ok = true;
  std::string detail;

  for (int d : {1, 2, 3}) {
    Graph g = testutil::random_connected_graph(4 + d, 3, rng);
    Sheaf ident = make_identity_sheaf(g, d);
    int kd = kernel_dimension(ident, unit_weights(g), 1e-8);
    if (kd != d) {
      ok = false;
      detail += "identity d=" + std::to_string(d) + " got " + std::to_string(kd) + "; ";
    }
  }
  for (int n : {3, 5, 7}) {
    Graph tree = testutil::path_graph(n);
    Sheaf s = make_random_sheaf(tree, 1, rng, 0.5, 1.5, /*signed_entries=*/false);
    int kd = kernel_dimension(s, unit_weights(tree), 1e-8);
    if (kd != 1) {
      ok = false;
      detail += "tree n=" + std::to_string(n) + " got " + std::to_string(kd) + "; ";
    }
  }
  Graph c3 = testutil::cycle_graph(3);
  Sheaf inc;
  inc.graph = &c3;
  inc.stalk_dim = 1;
  inc.r_src = Mat(3, 1, {1.0, 1.0, 1.0});
  inc.r_dst = Mat(3, 1, {2.0, 2.0, 2.0});
  int kd = kernel_dimension(inc, unit_weights(c3), 1e-8);
  if (kd != 0) {
    ok = false;
    detail += "inconsistent C3 got " + std::to_string(kd) + "; ";
  }
  report(4, "kernel dimensions", ok, ok ? "identity=d, tree=1, inconsistent cycle=0" : detail);
}

void criterion_5() {
  Timer timer;
  Graph g = watts_strogatz(30, 12, 0.3, 42, 0.0, /*degree_preserving=*/true);
  OversmoothCurves curves = run_oversmooth(g, 16, 10, 5, 42);
  double sheaf_ratio = curves.sheaf_dist[10] / curves.sheaf_dist[0];
  double gcn_ratio = curves.gcn_dist[10] / curves.gcn_dist[0];
  double secs = timer.seconds();
  bool ok = gcn_ratio < 0.01 && sheaf_ratio >= 0.10 && sheaf_ratio / gcn_ratio >= 10.0 &&
            secs <= 60.0;
  report(5, "oversmoothing reproduction", ok,
         "gcn ratio " + fmt(gcn_ratio) + ", sheaf ratio " + fmt(sheaf_ratio) + ", ratio " +
             fmt(sheaf_ratio / gcn_ratio) + ", " + fmt(secs) + " s");
}

// gradient comparison with an absolute floor for exactly-zero gradients
bool grads_match(const std::vector<double>& analytic, const std::vector<double>& fd,
                 double tol = 1e-4) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < fd.size(); ++i) {
    num += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
    den += fd[i] * fd[i];
  }
  return std::sqrt(num) <= tol * std::max(std::sqrt(den), 1e-4);
}

void criterion_6() {
  Rng rng(1006);
  bool ok = true;
  std::string detail = "primitives";

  // every primitive through a scalar probe
  using ad::Tape;
  using ad::Tensor;
  using ad::Var;
  auto rt = [&](std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.data) x = rng.normal();
    t.requires_grad = true;
    return t;
  };
  struct Case {
    std::string name;
    std::vector<Tensor> inputs;
    std::function<Var(Tape&, const std::vector<Var>&)> f;
  };
  std::vector<Case> cases;
  cases.push_back({"matmul", {rt({3, 4}), rt({4, 2})}, [](Tape& t, const std::vector<Var>& v) {
                     return t.reduce_sum(t.matmul(v[0], v[1]));
                   }});
  cases.push_back(
      {"matmul_batched", {rt({2, 3, 4}), rt({2, 4, 2})}, [](Tape& t, const std::vector<Var>& v) {
         return t.reduce_sum(t.matmul(v[0], v[1]));
       }});
  cases.push_back({"add_sub_mul", {rt({3, 3}), rt({3, 3})}, [](Tape& t, const std::vector<Var>& v) {
                     return t.reduce_sum(
                         t.elementwise_mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
                   }});
  cases.push_back({"scalar_rowvec", {rt({4, 3}), rt({3})}, [](Tape& t, const std::vector<Var>& v) {
                     return t.reduce_mean(t.add_rowvec(t.mul_scalar(v[0], 1.7), v[1]));
                   }});
  cases.push_back({"concat_slice", {rt({2, 3}), rt({2, 2})}, [](Tape& t, const std::vector<Var>& v) {
                     Var c = t.concat({v[0], v[1]}, 1);
                     Var s = t.slice(c, 1, 1, 3);
                     return t.reduce_sum(t.elementwise_mul(s, s));
                   }});
  cases.push_back({"reshape_transpose", {rt({2, 3, 4})}, [](Tape& t, const std::vector<Var>& v) {
                     Var tr = t.transpose_last(v[0]);
                     Var r = t.reshape(tr, {4, 6});
                     return t.reduce_sum(t.elementwise_mul(r, r));
                   }});
  cases.push_back({"sigmoid_relu_abs", {rt({5, 3})}, [](Tape& t, const std::vector<Var>& v) {
                     return t.reduce_sum(t.abs_op(t.sub(t.sigmoid(v[0]), t.relu(v[0]))));
                   }});
  cases.push_back({"softmax", {rt({4, 5})}, [](Tape& t, const std::vector<Var>& v) {
                     Var y = t.softmax(v[0]);
                     return t.reduce_sum(t.elementwise_mul(y, y));
                   }});
  cases.push_back(
      {"layer_norm", {rt({4, 6}), rt({6}), rt({6})}, [](Tape& t, const std::vector<Var>& v) {
         Var y = t.layer_norm(v[0], v[1], v[2]);
         return t.reduce_sum(t.elementwise_mul(y, y));
       }});
  cases.push_back({"scatter_signed", {rt({4, 3})}, [](Tape& t, const std::vector<Var>& v) {
                     Var y = t.scatter_add_signed(v[0], {0, 2, 1, 0}, {1, 0, 2, 2}, 3);
                     return t.reduce_sum(t.elementwise_mul(y, y));
                   }});
  cases.push_back({"gather_rows", {rt({5, 3})}, [](Tape& t, const std::vector<Var>& v) {
                     Var y = t.gather_rows(v[0], {4, 0, 0, 2});
                     return t.reduce_sum(t.elementwise_mul(y, y));
                   }});
  cases.push_back({"reduce_mean", {rt({3, 4})}, [](Tape& t, const std::vector<Var>& v) {
                     return t.reduce_mean(t.elementwise_mul(v[0], v[0]));
                   }});

  for (const Case& c : cases) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : c.inputs) vars.push_back(tape.leaf(t));
    Var loss = c.f(tape, vars);
    tape.backward(loss);
    auto eval = [&](const std::vector<Tensor>& ins) {
      Tape t2;
      std::vector<Var> vs;
      for (const Tensor& t : ins) vs.push_back(t2.leaf(t));
      return t2.value(c.f(t2, vs)).data[0];
    };
    for (size_t pi = 0; pi < c.inputs.size() && ok; ++pi) {
      std::vector<double> fd(c.inputs[pi].data.size());
      for (size_t i = 0; i < fd.size(); ++i) {
        std::vector<Tensor> plus = c.inputs, minus = c.inputs;
        plus[pi].data[i] += 1e-5;
        minus[pi].data[i] -= 1e-5;
        fd[i] = (eval(plus) - eval(minus)) / 2e-5;
      }
      if (!grads_match(tape.grad(vars[pi]).data, fd)) {
        ok = false;
        detail = "primitive " + c.name + " input " + std::to_string(pi);
      }
    }
  }

  // full model (N=4, T=4, d=2, L=2) against finite differences
  if (ok) {
    ModelConfig cfg;
    cfg.embed_dim = 4;
    cfg.stalk_dim = 2;
    cfg.num_heads = 2;
    cfg.num_layers = 2;
    cfg.horizon = 2;
    cfg.window = 4;
    Graph g = testutil::random_connected_graph(4, 3, rng);
    ModelParams p = init_params(cfg, 4, 1006);
    Tensor x = Tensor::zeros({1, 4, 4, 1});
    for (double& v : x.data) v = rng.normal();
    Tensor probe = Tensor::zeros({1, 2, 4, 1});
    for (double& v : probe.data) v = rng.normal();

    auto loss_of = [&](const ModelParams& params) {
      ModelForward fw = model_forward(params, cfg, g, x);
      return fw.tape
          .value(fw.tape.reduce_sum(fw.tape.elementwise_mul(fw.output, fw.tape.constant(probe))))
          .data[0];
    };
    ModelForward fw = model_forward(p, cfg, g, x);
    ad::Var loss =
        fw.tape.reduce_sum(fw.tape.elementwise_mul(fw.output, fw.tape.constant(probe)));
    fw.tape.backward(loss);
    for (size_t pi = 0; pi < p.entries.size() && ok; ++pi) {
      std::vector<double> analytic = fw.param_vars[pi].valid()
                                         ? fw.tape.grad(fw.param_vars[pi]).data
                                         : std::vector<double>(p.entries[pi].second.numel(), 0.0);
      std::vector<double> fd(p.entries[pi].second.data.size());
      for (size_t i = 0; i < fd.size(); ++i) {
        ModelParams pp = p, pm = p;
        pp.entries[pi].second.data[i] += 1e-5;
        pm.entries[pi].second.data[i] -= 1e-5;
        fd[i] = (loss_of(pp) - loss_of(pm)) / 2e-5;
      }
      if (!grads_match(analytic, fd)) {
        ok = false;
        detail = "model param " + p.entries[pi].first;
      }
    }
    if (ok) detail = "all primitives + full model";
  }
  report(6, "autodiff soundness", ok, detail);
}

void criterion_7() {
  Timer timer;
  Graph g = benchmark_graph();
  SeriesFile series = benchmark_series(g, 2000);
  ModelConfig mcfg = benchmark_model(8);
  SplitDatasets data = make_windows(series, mcfg.window, mcfg.horizon, {0.6, 0.2, 0.2});

  int achieved = 0;
  std::string detail;
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    TrainConfig tcfg;  // section 4 defaults: lr 0.01, batch 12, patience 10
    tcfg.max_epochs = 50;
    tcfg.seed = seed;
    ModelParams params = init_params(mcfg, g.num_nodes, seed);
    double val0 = validation_mae(params, mcfg, g, data.val, tcfg.batch_size);
    tcfg.stop_val_below = 0.5 * val0;  // stop once the criterion is met
    TrainResult res = train_model(std::move(params), mcfg, g, data.train, data.val, tcfg);
    bool hit = res.best_val <= 0.5 * val0;
    achieved += hit;
    detail += "seed " + std::to_string(seed) + ": " + fmt(res.best_val / val0) + " of epoch-0 (" +
              std::to_string(res.epochs_run) + " ep); ";
  }
  double secs = timer.seconds();
  report(7, "end-to-end learnability", achieved == 3 && secs <= 900.0,
         detail + fmt(secs) + " s");
}

void criterion_8() {
  Graph g = benchmark_graph();
  SeriesFile series = benchmark_series(g, 800);
  ModelConfig mcfg = benchmark_model(8);
  TrainConfig tcfg;
  tcfg.max_epochs = 40;
  tcfg.patience = 10;
  SplitDatasets data = make_windows(series, mcfg.window, mcfg.horizon, {0.6, 0.2, 0.2});

  // the direction check needs only the two compared variants; the full
  // four-variant table is exercised through the command below
  double dyn = 0.0, sta = 0.0;
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    dyn += run_single_training("full", Variant::dynamic, seed, mcfg, tcfg, g, data).overall.mae;
    sta += run_single_training("static_maps", Variant::static_maps, seed, mcfg, tcfg, g, data)
               .overall.mae;
  }
  dyn /= 3.0;
  sta /= 3.0;

  // additionally exercise the command surface: all four variant rows
  fs::create_directories("acc_ablate");
  write_file("acc_ablate/cfg.json", R"({
    "seed": 1, "out_dir": "acc_ablate/out",
    "graph": {"generator": {"type": "watts_strogatz", "n": 12, "k": 4, "p": 0.2, "seed": 9}},
    "series": {"generator": {"type": "cascade", "t_total": 150, "event_rate": 0.3,
                              "affected_fraction": 0.5, "lag": 2, "seed": 10}},
    "model": {"embed_dim": 4, "stalk_dim": 2, "num_heads": 2, "num_layers": 1,
               "horizon": 3, "window": 6},
    "train": {"batch_size": 12, "max_epochs": 1, "patience": 1, "split": [0.6, 0.2, 0.2]},
    "ablate": {"seeds": [1]}
  })");
  bool rows_ok = run_cli("ablate --config acc_ablate/cfg.json") == 0;
  if (rows_ok) {
    std::string csv = slurp("acc_ablate/out/ablation.csv");
    int rows = -1;  // header
    for (char c : csv)
      if (c == '\n') ++rows;
    rows_ok = rows == 4 * 3;
    for (const char* v : {"full", "static_maps", "no_sheaf", "no_temporal"})
      rows_ok = rows_ok && csv.find(v) != std::string::npos;
  }

  std::string detail = "mean test MAE dynamic " + fmt(dyn) + " vs static " + fmt(sta) +
                       (rows_ok ? ", 4x3 rows ok" : ", ablation rows BAD");
  if (dyn <= sta && rows_ok) {
    report(8, "ablation direction", true, detail);
  } else if (rows_ok && dyn <= 1.02 * sta) {
    // inside the 2% band the run is flagged, not failed
    report(8, "ablation direction", false, detail + "; within 2% band, flagged", true);
  } else {
    report(8, "ablation direction", false, detail);
  }
}

void criterion_9() {
  Graph g = benchmark_graph();
  SeriesFile series = benchmark_series(g, 800);
  ModelConfig mcfg = benchmark_model(8);
  TrainConfig tcfg;
  tcfg.max_epochs = 40;
  tcfg.patience = 10;
  SplitDatasets data = make_windows(series, mcfg.window, mcfg.horizon, {0.6, 0.2, 0.2});

  std::vector<SweepRow> rows =
      run_sweep(g, data, mcfg, tcfg, {1, 4, 8, 16, 32}, {1, 8}, {1, 2, 3});
  bool params_inc = true, time_inc = true;
  for (size_t i = 1; i < rows.size(); ++i) {
    params_inc = params_inc && rows[i].param_count > rows[i - 1].param_count;
    time_inc = time_inc && rows[i].epoch_seconds > rows[i - 1].epoch_seconds;
  }
  double mae1 = -1, mae8 = -1;
  for (const SweepRow& r : rows) {
    if (r.stalk_dim == 1) mae1 = r.mean_test_mae;
    if (r.stalk_dim == 8) mae8 = r.mean_test_mae;
  }
  bool mae_ok = mae1 >= 0 && mae8 >= 0 && mae8 <= mae1;
  std::string detail = "params strictly increasing: " + std::string(params_inc ? "yes" : "NO") +
                       ", epoch time strictly increasing: " + std::string(time_inc ? "yes" : "NO") +
                       ", MAE d=8 " + fmt(mae8) + " vs d=1 " + fmt(mae1);
  report(9, "stalk-dimension sweep", params_inc && time_inc && mae_ok, detail);
}

void criterion_10() {
  fs::create_directories("acc_det");
  write_file("acc_det/cfg.json", R"({
    "seed": 21, "out_dir": "acc_det/a",
    "graph": {"generator": {"type": "watts_strogatz", "n": 10, "k": 4, "p": 0.2, "seed": 3}},
    "series": {"generator": {"type": "cascade", "t_total": 150, "event_rate": 0.2,
                              "affected_fraction": 0.5, "lag": 2, "seed": 5}},
    "model": {"embed_dim": 4, "stalk_dim": 2, "num_heads": 2, "num_layers": 1,
               "horizon": 2, "window": 6},
    "train": {"batch_size": 12, "max_epochs": 2, "patience": 2, "split": [0.6, 0.2, 0.2]},
    "spectrum": {"method": "dense", "sheaf": {"random": {"stalk_dim": 2}}}
  })");
  bool ok = true;
  std::string detail;

  ok = run_cli("gen --config acc_det/cfg.json") == 0 &&
       run_cli("gen --config acc_det/cfg.json --out acc_det/b") == 0;
  if (ok && slurp("acc_det/a/series.csv") != slurp("acc_det/b/series.csv")) {
    ok = false;
    detail += "gen differs; ";
  }
  if (ok) {
    ok = run_cli("train --config acc_det/cfg.json --out acc_det/t1") == 0 &&
         run_cli("train --config acc_det/cfg.json --out acc_det/t2") == 0;
    if (ok && (slurp("acc_det/t1/history.csv") != slurp("acc_det/t2/history.csv") ||
               slurp("acc_det/t1/checkpoint.json") != slurp("acc_det/t2/checkpoint.json"))) {
      ok = false;
      detail += "train differs; ";
    }
  }
  if (ok) {
    ok = run_cli("spectrum --config acc_det/cfg.json --out acc_det/s1") == 0 &&
         run_cli("spectrum --config acc_det/cfg.json --out acc_det/s2") == 0;
    if (ok && slurp("acc_det/s1/spectrum.json") != slurp("acc_det/s2/spectrum.json")) {
      ok = false;
      detail += "spectrum differs; ";
    }
  }
  if (ok) {
    ok = run_cli("oversmooth --config acc_det/cfg.json --out acc_det/o1") == 0 &&
         run_cli("oversmooth --config acc_det/cfg.json --out acc_det/o2") == 0;
    if (ok && slurp("acc_det/o1/oversmoothing.csv") != slurp("acc_det/o2/oversmoothing.csv")) {
      ok = false;
      detail += "oversmooth differs; ";
    }
  }
  report(10, "byte-identical reruns", ok,
         ok ? "gen/train/spectrum/oversmooth byte-identical" : detail);
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  Timer total;
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  std::printf("%d/10 criteria passed in %.1f s\n", 10 - g_failures, total.seconds());
  return g_failures == 0 ? 0 : 1;
}
