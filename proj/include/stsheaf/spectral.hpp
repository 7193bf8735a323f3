// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "stsheaf/sheaf.hpp"

namespace stsheaf {

struct SpectrumReport {
  double lambda_max = 0.0;
  double lambda_min_pos = 0.0;       // smallest nonzero eigenvalue
  int kernel_dim = 0;
  double stable_step_bound = 0.0;    // 2 / lambda_max, inf when lambda_max == 0
};

enum class SpectrumMethod { dense, power };

namespace detail {

inline double signal_norm(const Mat& h) {
  double acc = 0.0;
  for (double x : h.data) acc += x * x;
  return std::sqrt(acc);
}

// Power iteration for the largest eigenvalue, matrix-free through the
// edge-iterated apply. Throws NumericError with the last iterate on
// non-convergence.
inline double power_lambda_max(const Sheaf& s, std::span<const double> w, double rel_tol = 1e-8,
                               int max_iters = 10000, uint64_t seed = 0x5eedull) {
  Rng rng(seed);
  Mat v(s.graph->num_nodes, s.stalk_dim);
  for (double& x : v.data) x = rng.normal();
  double nrm = signal_norm(v);
  for (double& x : v.data) x /= nrm;
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Mat lv = sheaf_laplacian_apply(s, v, w);
    double next = 0.0;  // Rayleigh quotient <v, Lv> with ||v|| = 1
    for (size_t i = 0; i < v.data.size(); ++i) next += v.data[i] * lv.data[i];
    double lv_norm = signal_norm(lv);
    if (lv_norm < 1e-300) return 0.0;  // v in the kernel: operator is (numerically) zero on it
    for (size_t i = 0; i < lv.data.size(); ++i) lv.data[i] /= lv_norm;
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::max(std::abs(next), 1e-30)) {
      return next;
    }
    lambda = next;
    v = std::move(lv);
  }
  throw NumericError("power iteration did not converge; last estimate " + std::to_string(lambda));
}

}  // namespace detail

inline SpectrumReport spectrum(const Sheaf& s, std::span<const double> w,
                               SpectrumMethod method = SpectrumMethod::dense,
                               double rank_tol = kDefaultRankTol,
                               int dense_cap = kDefaultDenseCap) {
  check_sheaf(s);
  check_weights(s, w);
  SpectrumReport rep;
  long nd = static_cast<long>(s.graph->num_nodes) * s.stalk_dim;
  bool within_cap = nd <= dense_cap;

  if (method == SpectrumMethod::dense || within_cap) {
    std::vector<double> ev = dense_eigenvalues(s, w, method == SpectrumMethod::dense
                                                         ? dense_cap
                                                         : std::max<int>(dense_cap, static_cast<int>(nd)));
    double lmax_dense = ev.empty() ? 0.0 : std::max(0.0, ev.back());
    rep.lambda_max = lmax_dense;
    double cut = rank_tol * lmax_dense;
    rep.kernel_dim = 0;
    rep.lambda_min_pos = 0.0;
    for (double x : ev) {
      if (x <= cut)
        ++rep.kernel_dim;
      else if (rep.lambda_min_pos == 0.0)
        rep.lambda_min_pos = x;
    }
    if (method == SpectrumMethod::power)
      rep.lambda_max = detail::power_lambda_max(s, w);
  } else {
    // beyond the dense cap only lambda_max is available matrix-free
    rep.lambda_max = detail::power_lambda_max(s, w);
    rep.lambda_min_pos = std::numeric_limits<double>::quiet_NaN();
    rep.kernel_dim = -1;
  }
  rep.stable_step_bound =
      rep.lambda_max > 0.0 ? 2.0 / rep.lambda_max : std::numeric_limits<double>::infinity();
  return rep;
}

struct DiffusionTrace {
  std::vector<Mat> states;             // steps + 1 entries
  std::vector<double> energies;        // sheaf energy per state
  std::vector<double> pair_distances;  // oversmoothing metric per state
};

// Mean Euclidean distance between endpoint representations over edges.
inline double oversmoothing_metric(const Graph& g, const Mat& h) {
  require(h.rows == g.num_nodes, "oversmoothing_metric: signal row count mismatch");
  if (g.edges.empty()) throw ConfigError("oversmoothing_metric: graph has no edges");
  double acc = 0.0;
  for (const Edge& e : g.edges) {
    const double* hu = h.row(e.src);
    const double* hv = h.row(e.dst);
    double sq = 0.0;
    for (int k = 0; k < h.cols; ++k) {
      double diff = hu[k] - hv[k];
      sq += diff * diff;
    }
    acc += std::sqrt(sq);
  }
  return acc / static_cast<double>(g.edges.size());
}

// Discrete gradient flow h <- (I - alpha L) h, recording energy and the
// oversmoothing metric at every state. Divergence for oversized alpha is
// legitimate output, not an error.
inline DiffusionTrace diffuse_flow(const Sheaf& s, std::span<const double> w, const Mat& h0,
                                   double step, int steps) {
  check_sheaf(s);
  check_signal(s, h0);
  check_weights(s, w);
  require(steps >= 0, "diffuse_flow: steps must be nonnegative");
  DiffusionTrace trace;
  trace.states.reserve(steps + 1);
  Mat h = h0;
  trace.states.push_back(h);
  trace.energies.push_back(sheaf_energy(s, h, w));
  trace.pair_distances.push_back(oversmoothing_metric(*s.graph, h));
  for (int t = 0; t < steps; ++t) {
    Mat lh = sheaf_laplacian_apply(s, h, w);
    for (size_t i = 0; i < h.data.size(); ++i) h.data[i] -= step * lh.data[i];
    trace.states.push_back(h);
    trace.energies.push_back(sheaf_energy(s, h, w));
    trace.pair_distances.push_back(oversmoothing_metric(*s.graph, h));
  }
  return trace;
}

// One step of self-loop symmetric-normalized propagation
// h' = Dt^{-1/2} (A + I) Dt^{-1/2} h with Dt = D + I. No learned weights.
inline Mat gcn_diffuse_step(const Graph& g, const Mat& h) {
  require(h.rows == g.num_nodes, "gcn_diffuse_step: signal row count mismatch");
  Mat out(h.rows, h.cols);
  std::vector<double> inv_sqrt(g.num_nodes);
  for (int v = 0; v < g.num_nodes; ++v) inv_sqrt[v] = 1.0 / std::sqrt(g.degrees[v] + 1.0);
  for (int v = 0; v < g.num_nodes; ++v) {
    double c = inv_sqrt[v] * inv_sqrt[v];
    const double* hv = h.row(v);
    double* ov = out.row(v);
    for (int k = 0; k < h.cols; ++k) ov[k] = c * hv[k];
  }
  for (const Edge& e : g.edges) {
    double c = inv_sqrt[e.src] * inv_sqrt[e.dst];
    const double* hu = h.row(e.src);
    const double* hv = h.row(e.dst);
    double* ou = out.row(e.src);
    double* ov = out.row(e.dst);
    for (int k = 0; k < h.cols; ++k) {
      ou[k] += c * hv[k];
      ov[k] += c * hu[k];
    }
  }
  return out;
}

}  // namespace stsheaf
