// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stsheaf/autodiff.hpp"
#include "stsheaf/graph.hpp"
#include "stsheaf/sheaf.hpp"

namespace stsheaf {

enum class Variant { dynamic, static_maps, no_sheaf, no_temporal };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::dynamic: return "dynamic";
    case Variant::static_maps: return "static_maps";
    case Variant::no_sheaf: return "no_sheaf";
    case Variant::no_temporal: return "no_temporal";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "dynamic") return Variant::dynamic;
  if (s == "static_maps") return Variant::static_maps;
  if (s == "no_sheaf") return Variant::no_sheaf;
  if (s == "no_temporal") return Variant::no_temporal;
  throw ConfigError("unknown model variant: " + s);
}

struct ModelConfig {
  int f_in = 1;
  int f_out = 1;
  int embed_dim = 16;    // D
  int stalk_dim = 16;    // d
  int num_heads = 4;
  int num_layers = 2;    // L
  int horizon = 3;       // H
  int window = 12;       // T
  double residual_scale = 0.1;  // scale on the restriction-map residual MLP
  Variant variant = Variant::dynamic;
};

inline void validate_model_config(const ModelConfig& c) {
  if (c.f_in < 1 || c.f_out < 1 || c.embed_dim < 1 || c.stalk_dim < 1 || c.num_heads < 1 ||
      c.num_layers < 1 || c.horizon < 1 || c.window < 1)
    throw ConfigError("model config: all dimensions must be >= 1");
  if (c.embed_dim % c.num_heads != 0)
    throw ConfigError("model config: embed_dim must be divisible by num_heads");
  if (c.residual_scale < 0.0)
    throw ConfigError("model config: residual_scale must be nonnegative");
}

// Named parameter tensors in a fixed order; the order determines optimizer
// state alignment and checkpoint layout.
struct ModelParams {
  std::vector<std::pair<std::string, ad::Tensor>> entries;

  ad::Tensor& at(const std::string& name) {
    for (auto& [n, t] : entries)
      if (n == name) return t;
    throw ConfigError("model params: missing parameter " + name);
  }
  const ad::Tensor& at(const std::string& name) const {
    return const_cast<ModelParams*>(this)->at(name);
  }
  bool has(const std::string& name) const {
    for (auto& [n, t] : entries)
      if (n == name) return true;
    return false;
  }
  int64_t param_count() const {
    int64_t n = 0;
    for (auto& [name, t] : entries) n += t.numel();
    return n;
  }
};

namespace detail {

inline ad::Tensor init_uniform(Rng& rng, std::vector<int> shape, double bound) {
  ad::Tensor t = ad::Tensor::zeros(std::move(shape));
  for (double& x : t.data) x = rng.uniform(-bound, bound);
  t.requires_grad = true;
  return t;
}

// fan-in scaled uniform: gain 6 ahead of relu, 3 for linear outputs
inline ad::Tensor init_he(Rng& rng, int fan_in, std::vector<int> shape) {
  return init_uniform(rng, std::move(shape), std::sqrt(6.0 / fan_in));
}
inline ad::Tensor init_linear(Rng& rng, int fan_in, std::vector<int> shape) {
  return init_uniform(rng, std::move(shape), std::sqrt(3.0 / fan_in));
}
inline ad::Tensor init_zero(std::vector<int> shape) {
  ad::Tensor t = ad::Tensor::zeros(std::move(shape));
  t.requires_grad = true;
  return t;
}

}  // namespace detail

inline bool variant_has_temporal(Variant v) { return v != Variant::no_temporal; }
inline bool variant_has_maps(Variant v) { return v != Variant::no_sheaf; }

inline ModelParams init_params(const ModelConfig& cfg, int num_nodes, uint64_t seed) {
  validate_model_config(cfg);
  Rng rng(seed);
  ModelParams p;
  auto put = [&](const std::string& name, ad::Tensor t) {
    p.entries.emplace_back(name, std::move(t));
  };
  int D = cfg.embed_dim, d = cfg.stalk_dim;

  put("temporal.embed.W", detail::init_linear(rng, cfg.f_in, {cfg.f_in, D}));
  put("temporal.embed.b", detail::init_zero({D}));
  if (variant_has_temporal(cfg.variant)) {
    for (const char* nm : {"Wq", "Wk", "Wv", "Wo"})
      put(std::string("temporal.attn.") + nm, detail::init_linear(rng, D, {D, D}));
    for (const char* nm : {"bq", "bk", "bv", "bo"})
      put(std::string("temporal.attn.") + nm, detail::init_zero({D}));
    put("temporal.ln.gain", ad::Tensor({D}, std::vector<double>(D, 1.0), true));
    put("temporal.ln.bias", detail::init_zero({D}));
    put("temporal.ffn.W1", detail::init_he(rng, D, {D, 2 * D}));
    put("temporal.ffn.b1", detail::init_zero({2 * D}));
    put("temporal.ffn.W2", detail::init_linear(rng, 2 * D, {2 * D, D}));
    put("temporal.ffn.b2", detail::init_zero({D}));
  }
  put("stalk.Wproj", detail::init_linear(rng, D, {D, d}));
  if (variant_has_maps(cfg.variant)) {
    put("maps.mlp.W1", detail::init_he(rng, 2 * d, {2 * d, 2 * d}));
    put("maps.mlp.b1", detail::init_zero({2 * d}));
    put("maps.mlp.W2", detail::init_linear(rng, 2 * d, {2 * d, 2 * d}));
    put("maps.mlp.b2", detail::init_zero({2 * d}));
    // residual map corrector starts near zero so early training stays close
    // to the base maps
    put("maps.res.W1", detail::init_he(rng, 2 * d, {2 * d, 2 * d}));
    put("maps.res.b1", detail::init_zero({2 * d}));
    put("maps.res.W2", detail::init_uniform(rng, {2 * d, 2 * d}, 1e-3));
    put("maps.res.b2", detail::init_zero({2 * d}));
  }
  if (cfg.variant == Variant::static_maps) {
    ad::Tensor emb = ad::Tensor::zeros({num_nodes, d});
    for (double& x : emb.data) x = rng.normal();
    emb.requires_grad = true;
    put("static.node_emb", std::move(emb));
  }
  for (int l = 0; l < cfg.num_layers; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    put(pre + "Wl", detail::init_he(rng, d, {d, d}));
    put(pre + "bl", detail::init_zero({d}));
    put(pre + "ffn.W1", detail::init_he(rng, d, {d, 2 * d}));
    put(pre + "ffn.b1", detail::init_zero({2 * d}));
    put(pre + "ffn.W2", detail::init_linear(rng, 2 * d, {2 * d, d}));
    put(pre + "ffn.b2", detail::init_zero({d}));
    put(pre + "Wg", detail::init_linear(rng, 2 * d, {2 * d, d}));
    put(pre + "bg", detail::init_zero({d}));  // gate starts at 0.5
  }
  put("decoder.W", detail::init_linear(rng, cfg.window * d, {cfg.window * d, cfg.horizon * cfg.f_out}));
  put("decoder.b", detail::init_zero({cfg.horizon * cfg.f_out}));
  return p;
}

// One model forward on a tape. Output shape (B, H, N, F_out). Handles to
// the parameter leaves (aligned with ModelParams order) and to the
// restriction-map blocks are kept for gradient extraction and inspection.
struct ModelForward {
  ad::Tape tape;
  ad::Var output;
  std::vector<ad::Var> param_vars;
  ad::Var r_src;   // (B*T*E, d) for map-bearing variants; invalid otherwise
  ad::Var r_dst;
  ad::Var stalk;   // (B*T*N, d) signal entering the diffusion layers
  ad::Var final_h; // (B*T*N, d) signal after the last diffusion layer
};

namespace detail {

struct ParamBinder {
  const ModelParams& params;
  ad::Tape& tape;
  std::vector<ad::Var>& vars;
  ad::Var operator()(const std::string& name) {
    for (size_t i = 0; i < params.entries.size(); ++i)
      if (params.entries[i].first == name) {
        if (!vars[i].valid()) vars[i] = tape.leaf(params.entries[i].second);
        return vars[i];
      }
    throw ConfigError("model forward: missing parameter " + name);
  }
};

inline ad::Var linear(ad::Tape& t, ad::Var x, ad::Var w, ad::Var b) {
  return t.add_rowvec(t.matmul(x, w), b);
}

// base MLP plus residual-scaled corrector MLP over concatenated endpoint
// features; output splits into (r_src, r_dst)
inline ad::Var restriction_mlp(ad::Tape& t, ParamBinder& P, ad::Var x, double residual_scale) {
  ad::Var h = t.relu(linear(t, x, P("maps.mlp.W1"), P("maps.mlp.b1")));
  ad::Var base = linear(t, h, P("maps.mlp.W2"), P("maps.mlp.b2"));
  ad::Var hr = t.relu(linear(t, x, P("maps.res.W1"), P("maps.res.b1")));
  ad::Var corr = linear(t, hr, P("maps.res.W2"), P("maps.res.b2"));
  return t.add(base, t.mul_scalar(corr, residual_scale));
}

}  // namespace detail

inline ModelForward model_forward(const ModelParams& params, const ModelConfig& cfg,
                                  const Graph& graph, const ad::Tensor& x) {
  validate_model_config(cfg);
  require(x.rank() == 4, "model forward: input must be (B, T, N, F_in)");
  int B = x.shape[0], T = x.shape[1], N = x.shape[2], Fin = x.shape[3];
  require(T == cfg.window, "model forward: input window does not match config");
  require(Fin == cfg.f_in, "model forward: input feature dim does not match config");
  require(N == graph.num_nodes, "model forward: node count does not match graph");
  int D = cfg.embed_dim, d = cfg.stalk_dim, L = cfg.num_layers;
  int E = static_cast<int>(graph.edges.size());
  int P = B * T;  // independent spatial problems

  ModelForward fw;
  ad::Tape& t = fw.tape;
  fw.param_vars.assign(params.entries.size(), ad::Var{});
  detail::ParamBinder bind{params, t, fw.param_vars};

  ad::Var xin = t.constant(x);
  ad::Var x2 = t.reshape(xin, {B * T * N, Fin});
  ad::Var e0 = detail::linear(t, x2, bind("temporal.embed.W"), bind("temporal.embed.b"));

  ad::Var zt;  // (B*T*N, D), ordered (b, t, n)
  if (variant_has_temporal(cfg.variant)) {
    // reorder to per-node sequences (b, n, t)
    std::vector<int> idx_seq(static_cast<size_t>(B) * N * T);
    for (int b = 0; b < B; ++b)
      for (int n = 0; n < N; ++n)
        for (int tt = 0; tt < T; ++tt)
          idx_seq[(static_cast<size_t>(b) * N + n) * T + tt] = (b * T + tt) * N + n;
    ad::Var zs = t.gather_rows(e0, idx_seq);

    ad::Var q = detail::linear(t, zs, bind("temporal.attn.Wq"), bind("temporal.attn.bq"));
    ad::Var k = detail::linear(t, zs, bind("temporal.attn.Wk"), bind("temporal.attn.bk"));
    ad::Var v = detail::linear(t, zs, bind("temporal.attn.Wv"), bind("temporal.attn.bv"));
    int dh = D / cfg.num_heads;
    ad::Var q3 = t.reshape(q, {B * N, T, D});
    ad::Var k3 = t.reshape(k, {B * N, T, D});
    ad::Var v3 = t.reshape(v, {B * N, T, D});
    std::vector<ad::Var> heads;
    for (int h = 0; h < cfg.num_heads; ++h) {
      ad::Var qh = t.slice(q3, 2, h * dh, dh);
      ad::Var kh = t.slice(k3, 2, h * dh, dh);
      ad::Var vh = t.slice(v3, 2, h * dh, dh);
      ad::Var scores = t.mul_scalar(t.matmul(qh, t.transpose_last(kh)), 1.0 / std::sqrt(dh));
      heads.push_back(t.matmul(t.softmax(scores), vh));
    }
    ad::Var o = t.reshape(t.concat(heads, 2), {B * N * T, D});
    ad::Var attn = detail::linear(t, o, bind("temporal.attn.Wo"), bind("temporal.attn.bo"));
    ad::Var z1 = t.add(attn, zs);
    ad::Var z2 = t.layer_norm(z1, bind("temporal.ln.gain"), bind("temporal.ln.bias"));
    ad::Var f1 = t.relu(detail::linear(t, z2, bind("temporal.ffn.W1"), bind("temporal.ffn.b1")));
    ad::Var f2 = detail::linear(t, f1, bind("temporal.ffn.W2"), bind("temporal.ffn.b2"));
    ad::Var z3 = t.add(f2, z2);

    std::vector<int> idx_btn(static_cast<size_t>(B) * T * N);
    for (int b = 0; b < B; ++b)
      for (int tt = 0; tt < T; ++tt)
        for (int n = 0; n < N; ++n)
          idx_btn[(static_cast<size_t>(b) * T + tt) * N + n] = (b * N + n) * T + tt;
    zt = t.gather_rows(z3, idx_btn);
  } else {
    zt = e0;
  }

  ad::Var h = t.matmul(zt, bind("stalk.Wproj"));  // (B*T*N, d)
  fw.stalk = h;

  // stacked edge endpoint indices across all (b, t) problems
  std::vector<int> src_glob(static_cast<size_t>(P) * E), dst_glob(static_cast<size_t>(P) * E);
  for (int p = 0; p < P; ++p)
    for (int e = 0; e < E; ++e) {
      src_glob[static_cast<size_t>(p) * E + e] = p * N + graph.edges[e].src;
      dst_glob[static_cast<size_t>(p) * E + e] = p * N + graph.edges[e].dst;
    }

  if (variant_has_maps(cfg.variant)) {
    // restriction maps from Algorithm 1: computed once, before the layer loop
    if (cfg.variant == Variant::static_maps) {
      ad::Var emb = bind("static.node_emb");
      std::vector<int> esrc(E), edst(E);
      for (int e = 0; e < E; ++e) {
        esrc[e] = graph.edges[e].src;
        edst[e] = graph.edges[e].dst;
      }
      ad::Var xin_e = t.concat({t.gather_rows(emb, esrc), t.gather_rows(emb, edst)}, 1);
      ad::Var r = detail::restriction_mlp(t, bind, xin_e, cfg.residual_scale);  // (E, 2d)
      std::vector<int> tile(static_cast<size_t>(P) * E);
      for (int p = 0; p < P; ++p)
        for (int e = 0; e < E; ++e) tile[static_cast<size_t>(p) * E + e] = e;
      ad::Var rt = t.gather_rows(r, tile);
      fw.r_src = t.slice(rt, 1, 0, d);
      fw.r_dst = t.slice(rt, 1, d, d);
    } else {
      ad::Var hu = t.gather_rows(h, src_glob);
      ad::Var hv = t.gather_rows(h, dst_glob);
      ad::Var xin_e = t.concat({hu, hv}, 1);  // (P*E, 2d)
      ad::Var r = detail::restriction_mlp(t, bind, xin_e, cfg.residual_scale);
      fw.r_src = t.slice(r, 1, 0, d);
      fw.r_dst = t.slice(r, 1, d, d);
    }
  }

  // constants shared by all layers
  std::vector<double> w = edge_norm_weights(graph);
  ad::Tensor wtile = ad::Tensor::zeros({P * E, d});
  for (int p = 0; p < P; ++p)
    for (int e = 0; e < E; ++e)
      for (int k = 0; k < d; ++k) wtile.data[(static_cast<size_t>(p) * E + e) * d + k] = w[e];
  ad::Var wconst = t.constant(std::move(wtile));
  ad::Var ones = t.constant(ad::Tensor::full({B * T * N, d}, 1.0));

  ad::Var ctile, selftile;  // GCN propagation constants (no_sheaf variant)
  if (cfg.variant == Variant::no_sheaf) {
    ad::Tensor ct = ad::Tensor::zeros({P * E, d});
    ad::Tensor st = ad::Tensor::zeros({B * T * N, d});
    for (int e = 0; e < E; ++e) {
      double c = 1.0 / std::sqrt((graph.degrees[graph.edges[e].src] + 1.0) *
                                 (graph.degrees[graph.edges[e].dst] + 1.0));
      for (int p = 0; p < P; ++p)
        for (int k = 0; k < d; ++k) ct.data[(static_cast<size_t>(p) * E + e) * d + k] = c;
    }
    for (int n = 0; n < N; ++n) {
      double c = 1.0 / (graph.degrees[n] + 1.0);
      for (int p = 0; p < P; ++p)
        for (int k = 0; k < d; ++k) st.data[(static_cast<size_t>(p) * N + n) * d + k] = c;
    }
    ctile = t.constant(std::move(ct));
    selftile = t.constant(std::move(st));
  }

  for (int l = 0; l < L; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    ad::Var m;
    if (cfg.variant == Variant::no_sheaf) {
      ad::Var hu = t.gather_rows(h, src_glob);
      ad::Var hv = t.gather_rows(h, dst_glob);
      ad::Var m1 = t.scatter_add_signed(t.elementwise_mul(hv, ctile), src_glob, {}, B * T * N);
      ad::Var m2 = t.scatter_add_signed(t.elementwise_mul(hu, ctile), dst_glob, {}, B * T * N);
      m = t.add(t.add(m1, m2), t.elementwise_mul(h, selftile));
    } else {
      ad::Var hu = t.gather_rows(h, src_glob);
      ad::Var hv = t.gather_rows(h, dst_glob);
      ad::Var delta = t.sub(t.elementwise_mul(fw.r_src, hu), t.elementwise_mul(fw.r_dst, hv));
      ad::Var dw = t.elementwise_mul(delta, wconst);
      m = t.scatter_add_signed(dw, src_glob, dst_glob, B * T * N);
    }
    ad::Var xc = t.add(t.relu(detail::linear(t, m, bind(pre + "Wl"), bind(pre + "bl"))), h);
    ad::Var f1 = t.relu(detail::linear(t, xc, bind(pre + "ffn.W1"), bind(pre + "ffn.b1")));
    ad::Var f2 = detail::linear(t, f1, bind(pre + "ffn.W2"), bind(pre + "ffn.b2"));
    ad::Var htil = t.add(xc, f2);
    ad::Var gate = t.sigmoid(
        detail::linear(t, t.concat({h, htil}, 1), bind(pre + "Wg"), bind(pre + "bg")));
    h = t.add(t.elementwise_mul(gate, htil), t.elementwise_mul(t.sub(ones, gate), h));
  }
  fw.final_h = h;

  // decoder: flatten each node's window of stalk vectors, one linear map
  std::vector<int> idx_dec(static_cast<size_t>(B) * N * T);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (int tt = 0; tt < T; ++tt)
        idx_dec[(static_cast<size_t>(b) * N + n) * T + tt] = (b * T + tt) * N + n;
  ad::Var hd = t.reshape(t.gather_rows(h, idx_dec), {B * N, T * d});
  ad::Var y1 = detail::linear(t, hd, bind("decoder.W"), bind("decoder.b"));  // (B*N, H*F_out)
  std::vector<int> idx_out(static_cast<size_t>(B) * cfg.horizon * N);
  for (int b = 0; b < B; ++b)
    for (int hh = 0; hh < cfg.horizon; ++hh)
      for (int n = 0; n < N; ++n)
        idx_out[(static_cast<size_t>(b) * cfg.horizon + hh) * N + n] = (b * N + n) * cfg.horizon + hh;
  ad::Var y2 = t.gather_rows(t.reshape(y1, {B * N * cfg.horizon, cfg.f_out}), idx_out);
  fw.output = t.reshape(y2, {B, cfg.horizon, N, cfg.f_out});
  return fw;
}

// ---- plain (tape-free) evaluation of the map builder and one sheaf layer,
// used by the spectral experiments and as the module-level contract ops ----

namespace detail {

// y = relu(x W1 + b1) W2 + b2 on a single row
inline void mlp2_row(const double* x, int in_dim, const ad::Tensor& w1, const ad::Tensor& b1,
                     const ad::Tensor& w2, const ad::Tensor& b2, std::vector<double>& hidden,
                     double* out) {
  int hid = w1.shape[1], out_dim = w2.shape[1];
  hidden.assign(hid, 0.0);
  for (int i = 0; i < in_dim; ++i) {
    double xi = x[i];
    if (xi == 0.0) continue;
    const double* wr = w1.data.data() + static_cast<size_t>(i) * hid;
    for (int j = 0; j < hid; ++j) hidden[j] += xi * wr[j];
  }
  for (int j = 0; j < hid; ++j) hidden[j] = std::max(0.0, hidden[j] + b1.data[j]);
  for (int j = 0; j < out_dim; ++j) out[j] = b2.data[j];
  for (int i = 0; i < hid; ++i) {
    double hi = hidden[i];
    if (hi == 0.0) continue;
    const double* wr = w2.data.data() + static_cast<size_t>(i) * out_dim;
    for (int j = 0; j < out_dim; ++j) out[j] += hi * wr[j];
  }
}

inline Sheaf maps_from_pairs(const ModelParams& p, const ModelConfig& cfg, const Graph& g,
                             const Mat& features) {
  int d = cfg.stalk_dim;
  int E = static_cast<int>(g.edges.size());
  Sheaf s;
  s.graph = &g;
  s.stalk_dim = d;
  s.r_src = Mat(E, d);
  s.r_dst = Mat(E, d);
  std::vector<double> xin(2 * d), base(2 * d), corr(2 * d), hidden;
  for (int e = 0; e < E; ++e) {
    const double* hu = features.row(g.edges[e].src);
    const double* hv = features.row(g.edges[e].dst);
    std::copy(hu, hu + d, xin.begin());
    std::copy(hv, hv + d, xin.begin() + d);
    mlp2_row(xin.data(), 2 * d, p.at("maps.mlp.W1"), p.at("maps.mlp.b1"), p.at("maps.mlp.W2"),
             p.at("maps.mlp.b2"), hidden, base.data());
    mlp2_row(xin.data(), 2 * d, p.at("maps.res.W1"), p.at("maps.res.b1"), p.at("maps.res.W2"),
             p.at("maps.res.b2"), hidden, corr.data());
    for (int k = 0; k < d; ++k) {
      s.r_src(e, k) = base[k] + cfg.residual_scale * corr[k];
      s.r_dst(e, k) = base[d + k] + cfg.residual_scale * corr[d + k];
    }
  }
  return s;
}

}  // namespace detail

// Signal-conditioned restriction maps: one MLP pass per edge over the
// concatenated endpoint vectors.
inline Sheaf restriction_maps_dynamic(const ModelParams& p, const ModelConfig& cfg, const Mat& h,
                                      const Graph& g) {
  require(h.rows == g.num_nodes && h.cols == cfg.stalk_dim,
          "restriction_maps_dynamic: signal shape mismatch");
  return detail::maps_from_pairs(p, cfg, g, h);
}

// Input-independent maps from learned per-node embeddings.
inline Sheaf restriction_maps_static(const ModelParams& p, const ModelConfig& cfg,
                                     const Graph& g) {
  if (!p.has("static.node_emb"))
    throw ConfigError("restriction_maps_static: params do not carry static node embeddings");
  const ad::Tensor& emb = p.at("static.node_emb");
  require(emb.shape[0] == g.num_nodes && emb.shape[1] == cfg.stalk_dim,
          "restriction_maps_static: embedding shape mismatch");
  return detail::maps_from_pairs(p, cfg, g, emb.to_mat());
}

// One gated sheaf diffusion layer on a single spatial problem. Mirrors the
// tape path exactly: signed scatter of weighted discrepancies, candidate
// x + FFN(x) with x = relu(W m) + h, sigmoid gate blend.
inline Mat sheaf_layer_apply(const ModelParams& p, const ModelConfig& cfg, int layer_idx,
                             const Mat& h, const Sheaf& s, std::span<const double> w) {
  check_sheaf(s);
  require(h.rows == s.graph->num_nodes && h.cols == cfg.stalk_dim,
          "sheaf_layer_apply: signal shape mismatch");
  check_weights(s, w);
  require(layer_idx >= 0 && layer_idx < cfg.num_layers, "sheaf_layer_apply: layer index range");
  const Graph& g = *s.graph;
  int d = cfg.stalk_dim, N = g.num_nodes;
  std::string pre = "layer" + std::to_string(layer_idx) + ".";

  Mat m(N, d);
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const double* hu = h.row(g.edges[e].src);
    const double* hv = h.row(g.edges[e].dst);
    const double* rs = s.r_src.row(static_cast<int>(e));
    const double* rd = s.r_dst.row(static_cast<int>(e));
    double* mu = m.row(g.edges[e].src);
    double* mv = m.row(g.edges[e].dst);
    for (int k = 0; k < d; ++k) {
      double delta = w[e] * (rs[k] * hu[k] - rd[k] * hv[k]);
      mu[k] += delta;
      mv[k] -= delta;
    }
  }

  const ad::Tensor& wl = p.at(pre + "Wl");
  const ad::Tensor& bl = p.at(pre + "bl");
  const ad::Tensor& f1w = p.at(pre + "ffn.W1");
  const ad::Tensor& f1b = p.at(pre + "ffn.b1");
  const ad::Tensor& f2w = p.at(pre + "ffn.W2");
  const ad::Tensor& f2b = p.at(pre + "ffn.b2");
  const ad::Tensor& wg = p.at(pre + "Wg");
  const ad::Tensor& bg = p.at(pre + "bg");

  Mat out(N, d);
  std::vector<double> xc(d), ffn(d), gin(2 * d), gate(d), hidden;
  for (int v = 0; v < N; ++v) {
    const double* hv = h.row(v);
    const double* mv = m.row(v);
    for (int k = 0; k < d; ++k) {
      double acc = bl.data[k];
      for (int i = 0; i < d; ++i) acc += mv[i] * wl.data[static_cast<size_t>(i) * d + k];
      xc[k] = std::max(0.0, acc) + hv[k];
    }
    detail::mlp2_row(xc.data(), d, f1w, f1b, f2w, f2b, hidden, ffn.data());
    for (int k = 0; k < d; ++k) ffn[k] += xc[k];  // candidate = x + FFN(x)
    std::copy(hv, hv + d, gin.begin());
    std::copy(ffn.begin(), ffn.end(), gin.begin() + d);
    for (int k = 0; k < d; ++k) {
      double acc = bg.data[k];
      for (int i = 0; i < 2 * d; ++i) acc += gin[i] * wg.data[static_cast<size_t>(i) * d + k];
      gate[k] = acc >= 0.0 ? 1.0 / (1.0 + std::exp(-acc)) : std::exp(acc) / (1.0 + std::exp(acc));
      out(v, k) = gate[k] * ffn[k] + (1.0 - gate[k]) * hv[k];
    }
  }
  return out;
}

// ---- checkpoint io ----

inline constexpr const char* kCheckpointMagic = "STSHEAF1";

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"f_in", c.f_in},
                        {"f_out", c.f_out},
                        {"embed_dim", c.embed_dim},
                        {"stalk_dim", c.stalk_dim},
                        {"num_heads", c.num_heads},
                        {"num_layers", c.num_layers},
                        {"horizon", c.horizon},
                        {"window", c.window},
                        {"residual_scale", c.residual_scale},
                        {"variant", variant_name(c.variant)}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.f_in = j.at("f_in").get<int>();
  c.f_out = j.at("f_out").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.stalk_dim = j.at("stalk_dim").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.horizon = j.at("horizon").get<int>();
  c.window = j.at("window").get<int>();
  c.residual_scale = j.at("residual_scale").get<double>();
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  validate_model_config(c);
  return c;
}

inline nlohmann::json checkpoint_to_json(const ModelParams& p, const ModelConfig& c) {
  nlohmann::json j;
  j["magic"] = kCheckpointMagic;
  j["config"] = config_to_json(c);
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : p.entries)
    params.push_back({{"name", name}, {"shape", t.shape}, {"data", t.data}});
  j["params"] = std::move(params);
  return j;
}

inline std::pair<ModelParams, ModelConfig> checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("magic") || j.at("magic").get<std::string>() != kCheckpointMagic)
    throw ConfigError("checkpoint: bad or missing magic string");
  ModelConfig cfg = config_from_json(j.at("config"));
  ModelParams p;
  for (const auto& entry : j.at("params")) {
    ad::Tensor t(entry.at("shape").get<std::vector<int>>(),
                 entry.at("data").get<std::vector<double>>(), true);
    p.entries.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return {std::move(p), cfg};
}

}  // namespace stsheaf
