// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stsheaf/core.hpp"
#include "stsheaf/graph.hpp"
#include "stsheaf/sheaf.hpp"
#include "stsheaf/spectral.hpp"

namespace stsheaf {

// T_total x N x F series with a missing-value mask. CSV ingestion uses F = 1
// (row = timestep, column = node); multi-feature data uses one file per
// feature.
struct SeriesFile {
  int t_total = 0;
  int num_nodes = 0;
  int f = 1;
  std::vector<double> values;    // t * (N*F) + n * F + k
  std::vector<uint8_t> missing;  // 1 = missing

  double at(int t, int n, int k = 0) const {
    return values[(static_cast<size_t>(t) * num_nodes + n) * f + k];
  }
  bool is_missing(int t, int n, int k = 0) const {
    return missing[(static_cast<size_t>(t) * num_nodes + n) * f + k] != 0;
  }
};

// Missing cells are empty fields or the token "nan" (case-insensitive).
inline SeriesFile load_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("series: cannot open file: " + path);
  SeriesFile s;
  std::string line;
  int lineno = 0;
  int cols = -1;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() && in.peek() == EOF) break;  // trailing newline
    std::vector<std::string> toks;
    std::string tok;
    std::stringstream ss(line);
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    if (!line.empty() && line.back() == ',') toks.push_back("");
    if (cols < 0)
      cols = static_cast<int>(toks.size());
    else if (static_cast<int>(toks.size()) != cols)
      throw ConfigError("series: ragged row at line " + std::to_string(lineno));
    for (const std::string& t : toks) {
      std::string v = t;
      size_t a = v.find_first_not_of(" \t");
      size_t b = v.find_last_not_of(" \t");
      v = (a == std::string::npos) ? "" : v.substr(a, b - a + 1);
      std::string lower = v;
      std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
      if (v.empty() || lower == "nan") {
        s.values.push_back(0.0);
        s.missing.push_back(1);
      } else {
        try {
          size_t pos = 0;
          double x = std::stod(v, &pos);
          if (pos != v.size()) throw std::invalid_argument("trailing");
          s.values.push_back(x);
          s.missing.push_back(0);
        } catch (const std::exception&) {
          throw ConfigError("series: non-numeric cell '" + v + "' at line " +
                            std::to_string(lineno));
        }
      }
    }
    ++s.t_total;
  }
  if (s.t_total == 0) throw ConfigError("series: empty file: " + path);
  s.num_nodes = cols;
  s.f = 1;
  return s;
}

inline void save_series_csv(const std::string& path, const SeriesFile& s) {
  require(s.f == 1, "series csv supports one feature per file");
  std::ofstream out(path);
  if (!out) throw ConfigError("series: cannot write file: " + path);
  out.precision(17);
  for (int t = 0; t < s.t_total; ++t) {
    for (int n = 0; n < s.num_nodes; ++n) {
      if (n) out << ",";
      if (s.is_missing(t, n))
        out << "nan";
      else
        out << s.at(t, n);
    }
    out << "\n";
  }
}

// Smooth heat-diffusion signal: x_{t+1} = (I - beta (D - A) / lambda_max) x_t
// plus Gaussian observation noise. beta = 0.5.
inline SeriesFile gen_heat_series(const Graph& g, int t_total, double noise_std, uint64_t seed) {
  require(t_total >= 1, "gen_heat_series: t_total must be >= 1");
  if (!is_connected(g)) throw ConfigError("gen_heat_series: graph must be connected");
  const double beta = 0.5;
  Sheaf ident = make_identity_sheaf(g, 1);
  std::vector<double> ones = unit_weights(g);
  double lmax = spectrum(ident, ones, SpectrumMethod::dense).lambda_max;
  double step = beta / lmax;

  Rng rng(seed);
  Rng noise_rng(seed ^ 0xabcdef1234567890ull);
  Mat x(g.num_nodes, 1);
  for (double& v : x.data) v = rng.normal();
  SeriesFile s;
  s.t_total = t_total;
  s.num_nodes = g.num_nodes;
  s.f = 1;
  s.values.reserve(static_cast<size_t>(t_total) * g.num_nodes);
  s.missing.assign(static_cast<size_t>(t_total) * g.num_nodes, 0);
  for (int t = 0; t < t_total; ++t) {
    for (int n = 0; n < g.num_nodes; ++n)
      s.values.push_back(x(n, 0) + (noise_std > 0.0 ? noise_rng.normal(0.0, noise_std) : 0.0));
    Mat lx = sheaf_laplacian_apply(ident, x, ones);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] -= step * lx.data[i];
  }
  return s;
}

inline constexpr double kCascadeNoiseStd = 0.05;
inline constexpr double kCascadeDropDepth = 2.0;
inline constexpr double kCascadeNeighborDepth = 1.6;
inline constexpr int kCascadeDropLen = 5;

// Shared-phase sinusoid baseline with Poisson-seeded drop events. Each event
// at source s propagates after `lag` steps to a fixed seeded subset of s's
// neighbors covering `affected_fraction` of them; the rest stay unaffected.
// Structure and noise use separate streams so a noise_std = 0 replay keeps
// identical events.
inline SeriesFile gen_cascade_series(const Graph& g, int t_total, double event_rate,
                                     double affected_fraction, int lag, uint64_t seed,
                                     double noise_std = kCascadeNoiseStd) {
  require(t_total >= 1, "gen_cascade_series: t_total must be >= 1");
  require(affected_fraction > 0.0 && affected_fraction < 1.0,
          "gen_cascade_series: affected_fraction must lie in (0, 1)");
  require(lag >= 1, "gen_cascade_series: lag must be >= 1");
  require(event_rate >= 0.0, "gen_cascade_series: event_rate must be nonnegative");
  int n = g.num_nodes;
  Rng structure(seed);
  Rng noise(seed ^ 0x5A5A5A5A5A5A5A5Aull);

  std::vector<std::vector<int>> neighbors(n);
  for (const Edge& e : g.edges) {
    neighbors[e.src].push_back(e.dst);
    neighbors[e.dst].push_back(e.src);
  }

  // per-node baseline: shared phase, node-specific amplitude and offset
  const double period = 24.0;
  std::vector<double> amp(n), offset(n);
  for (int v = 0; v < n; ++v) {
    amp[v] = structure.uniform(0.8, 1.2);
    offset[v] = structure.uniform(-0.5, 0.5);
  }

  // fixed per-source affected subsets
  std::vector<std::vector<int>> affected(n);
  for (int v = 0; v < n; ++v) {
    std::vector<int> nb = neighbors[v];
    structure.shuffle(nb);
    int deg = static_cast<int>(nb.size());
    if (deg == 0) continue;
    int k = std::clamp(static_cast<int>(std::llround(affected_fraction * deg)), 1, deg);
    affected[v].assign(nb.begin(), nb.begin() + k);
  }

  // drop[t * n + v] accumulates active event depressions
  std::vector<double> drop(static_cast<size_t>(t_total) * n, 0.0);
  auto apply_drop = [&](int start, int v, double depth) {
    for (int dt = 0; dt < kCascadeDropLen; ++dt) {
      int t = start + dt;
      if (t < 0 || t >= t_total) continue;
      drop[static_cast<size_t>(t) * n + v] -= depth;
    }
  };
  for (int t = 0; t < t_total; ++t) {
    // Poisson(event_rate) arrivals by inversion of the cdf
    int events = 0;
    if (event_rate > 0.0) {
      double u = structure.uniform();
      double p = std::exp(-event_rate), cdf = p;
      while (u > cdf && events < 100) {
        ++events;
        p *= event_rate / events;
        cdf += p;
      }
    }
    for (int ev = 0; ev < events; ++ev) {
      int src = static_cast<int>(structure.uniform_int(n));
      apply_drop(t, src, kCascadeDropDepth);
      for (int nb : affected[src]) apply_drop(t + lag, nb, kCascadeNeighborDepth);
    }
  }

  SeriesFile s;
  s.t_total = t_total;
  s.num_nodes = n;
  s.f = 1;
  s.values.resize(static_cast<size_t>(t_total) * n);
  s.missing.assign(static_cast<size_t>(t_total) * n, 0);
  for (int t = 0; t < t_total; ++t)
    for (int v = 0; v < n; ++v) {
      double base = offset[v] + amp[v] * std::sin(2.0 * M_PI * t / period);
      double nz = noise_std > 0.0 ? noise.normal(0.0, noise_std) : 0.0;
      s.values[static_cast<size_t>(t) * n + v] = base + drop[static_cast<size_t>(t) * n + v] + nz;
    }
  return s;
}

// Connected Watts-Strogatz rewired ring: n nodes, k nearest neighbors
// (k even), rewire probability p. Retries with a salted seed until the
// rewired graph is connected. With degree_preserving the rewiring uses
// double-edge swaps, so the result stays exactly k-regular.
inline Graph watts_strogatz(int n, int k, double p, uint64_t seed, double eps = 0.0,
                            bool degree_preserving = false) {
  require(n >= 3, "watts_strogatz: n must be >= 3");
  require(k >= 2 && k % 2 == 0 && k < n, "watts_strogatz: k must be even, >= 2, < n");
  require(p >= 0.0 && p <= 1.0, "watts_strogatz: p must lie in [0, 1]");
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(seed + attempt * 0x9e3779b9ull);
    std::set<std::pair<int, int>> edge_set;
    for (int v = 0; v < n; ++v)
      for (int j = 1; j <= k / 2; ++j) {
        int u = (v + j) % n;
        edge_set.insert(std::minmax(v, u));
      }
    std::vector<std::pair<int, int>> ring(edge_set.begin(), edge_set.end());
    for (const auto& [u, v] : ring) {
      if (rng.uniform() >= p) continue;
      if (!edge_set.count(std::minmax(u, v))) continue;  // already swapped away
      for (int tries = 0; tries < 100; ++tries) {
        if (degree_preserving) {
          // swap (u,v),(c,e) -> (u,e),(c,v)
          std::vector<std::pair<int, int>> pool(edge_set.begin(), edge_set.end());
          auto [c, e] = pool[rng.uniform_int(pool.size())];
          if (rng.uniform() < 0.5) std::swap(c, e);
          if (c == u || c == v || e == u || e == v) continue;
          if (edge_set.count(std::minmax(u, e)) || edge_set.count(std::minmax(c, v))) continue;
          edge_set.erase(std::minmax(u, v));
          edge_set.erase(std::minmax(c, e));
          edge_set.insert(std::minmax(u, e));
          edge_set.insert(std::minmax(c, v));
          break;
        }
        // move one endpoint to a uniform random node, avoiding self-loops/dups
        int w = static_cast<int>(rng.uniform_int(n));
        auto cand = std::minmax(u, w);
        if (w == u || edge_set.count(cand)) continue;
        edge_set.erase(std::minmax(u, v));
        edge_set.insert(cand);
        break;
      }
    }
    std::vector<Edge> edges;
    for (const auto& [u, v] : edge_set) edges.push_back({u, v});
    Graph g = make_graph(n, edges, eps);
    if (is_connected(g)) return g;
  }
  throw NumericError("watts_strogatz: failed to produce a connected graph");
}

// Generator provenance sidecar.
inline void write_series_meta(const std::string& path, const nlohmann::json& params) {
  std::ofstream out(path);
  if (!out) throw ConfigError("series: cannot write meta file: " + path);
  out << params.dump(2) << "\n";
}

}  // namespace stsheaf
