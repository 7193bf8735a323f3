// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stsheaf/core.hpp"
#include "stsheaf/graph.hpp"

namespace stsheaf {

using NodeSignal = Mat;  // N x d, row u holds node u's stalk vector

inline constexpr int kDefaultDenseCap = 4096;
inline constexpr double kDefaultRankTol = 1e-8;

// Cellular sheaf with diagonal restriction maps: one length-d vector per
// edge endpoint. r_src row e restricts the stored source of edge e,
// r_dst the stored destination.
struct Sheaf {
  const Graph* graph = nullptr;
  int stalk_dim = 0;
  Mat r_src;  // E x d
  Mat r_dst;  // E x d
};

inline void check_sheaf(const Sheaf& s) {
  require(s.graph != nullptr, "sheaf: missing graph");
  require(s.stalk_dim > 0, "sheaf: stalk_dim must be positive");
  int e = static_cast<int>(s.graph->edges.size());
  require(s.r_src.rows == e && s.r_src.cols == s.stalk_dim, "sheaf: r_src shape mismatch");
  require(s.r_dst.rows == e && s.r_dst.cols == s.stalk_dim, "sheaf: r_dst shape mismatch");
}

inline void check_signal(const Sheaf& s, const Mat& h) {
  require(h.rows == s.graph->num_nodes && h.cols == s.stalk_dim,
          "node signal shape does not match graph/sheaf");
}

inline void check_weights(const Sheaf& s, std::span<const double> w) {
  require(w.size() == s.graph->edges.size(), "weight vector must have one entry per edge");
}

inline Sheaf make_identity_sheaf(const Graph& g, int d) {
  Sheaf s;
  s.graph = &g;
  s.stalk_dim = d;
  s.r_src = Mat(static_cast<int>(g.edges.size()), d);
  s.r_dst = Mat(static_cast<int>(g.edges.size()), d);
  std::fill(s.r_src.data.begin(), s.r_src.data.end(), 1.0);
  std::fill(s.r_dst.data.begin(), s.r_dst.data.end(), 1.0);
  return s;
}

// Random restriction vectors with magnitudes in [lo, hi]. signed_entries
// flips signs with probability 1/2; entries are kept away from zero so the
// edge never decouples numerically.
inline Sheaf make_random_sheaf(const Graph& g, int d, Rng& rng, double lo = 0.5, double hi = 1.5,
                               bool signed_entries = true) {
  Sheaf s = make_identity_sheaf(g, d);
  auto draw = [&](double& x) {
    x = rng.uniform(lo, hi);
    if (signed_entries && rng.uniform() < 0.5) x = -x;
  };
  for (double& x : s.r_src.data) draw(x);
  for (double& x : s.r_dst.data) draw(x);
  return s;
}

// Edge-level discrepancy (delta h)_e = r_dst . h_v - r_src . h_u for the
// stored orientation e = (u, v).
inline Mat coboundary(const Sheaf& s, const Mat& h) {
  check_sheaf(s);
  check_signal(s, h);
  const Graph& g = *s.graph;
  int d = s.stalk_dim;
  Mat out(static_cast<int>(g.edges.size()), d);
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const double* hu = h.row(g.edges[e].src);
    const double* hv = h.row(g.edges[e].dst);
    const double* rs = s.r_src.row(static_cast<int>(e));
    const double* rd = s.r_dst.row(static_cast<int>(e));
    double* o = out.row(static_cast<int>(e));
    for (int k = 0; k < d; ++k) o[k] = rd[k] * hv[k] - rs[k] * hu[k];
  }
  return out;
}

// Edge-iterated application of the weighted sheaf Laplacian
// delta^T diag(w) delta. Accumulation order is fixed (edge index order), so
// results are bit-reproducible.
inline Mat sheaf_laplacian_apply(const Sheaf& s, const Mat& h, std::span<const double> w) {
  check_sheaf(s);
  check_signal(s, h);
  check_weights(s, w);
  const Graph& g = *s.graph;
  int d = s.stalk_dim;
  Mat out(g.num_nodes, d);
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const double* hu = h.row(g.edges[e].src);
    const double* hv = h.row(g.edges[e].dst);
    const double* rs = s.r_src.row(static_cast<int>(e));
    const double* rd = s.r_dst.row(static_cast<int>(e));
    double* ou = out.row(g.edges[e].src);
    double* ov = out.row(g.edges[e].dst);
    for (int k = 0; k < d; ++k) {
      double disc = w[e] * (rs[k] * hu[k] - rd[k] * hv[k]);
      ou[k] += rs[k] * disc;
      ov[k] -= rd[k] * disc;
    }
  }
  return out;
}

// Dense Nd x Nd sheaf Laplacian assembled from the diagonal block formulas.
inline Mat assemble_dense_laplacian(const Sheaf& s, std::span<const double> w,
                                    int dense_cap = kDefaultDenseCap) {
  check_sheaf(s);
  check_weights(s, w);
  const Graph& g = *s.graph;
  int d = s.stalk_dim;
  long nd = static_cast<long>(g.num_nodes) * d;
  if (nd > dense_cap)
    throw ConfigError("dense Laplacian cap exceeded: N*d = " + std::to_string(nd) + " > " +
                      std::to_string(dense_cap));
  Mat L(static_cast<int>(nd), static_cast<int>(nd));
  for (size_t e = 0; e < g.edges.size(); ++e) {
    int u = g.edges[e].src, v = g.edges[e].dst;
    const double* rs = s.r_src.row(static_cast<int>(e));
    const double* rd = s.r_dst.row(static_cast<int>(e));
    for (int k = 0; k < d; ++k) {
      double a = rs[k], b = rd[k];
      L(u * d + k, u * d + k) += w[e] * a * a;
      L(v * d + k, v * d + k) += w[e] * b * b;
      L(u * d + k, v * d + k) -= w[e] * a * b;
      L(v * d + k, u * d + k) -= w[e] * a * b;
    }
  }
  return L;
}

inline double dirichlet_energy(const Graph& g, const Mat& h) {
  require(h.rows == g.num_nodes, "dirichlet_energy: signal row count mismatch");
  double acc = 0.0;
  for (const Edge& e : g.edges) {
    const double* hu = h.row(e.src);
    const double* hv = h.row(e.dst);
    for (int k = 0; k < h.cols; ++k) {
      double diff = hu[k] - hv[k];
      acc += diff * diff;
    }
  }
  return 0.5 * acc;
}

// 0.5 * sum_e w_e || r_src.h_u - r_dst.h_v ||^2; equals the quadratic form
// of the assembled Laplacian.
inline double sheaf_energy(const Sheaf& s, const Mat& h, std::span<const double> w) {
  check_sheaf(s);
  check_signal(s, h);
  check_weights(s, w);
  const Graph& g = *s.graph;
  double acc = 0.0;
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const double* hu = h.row(g.edges[e].src);
    const double* hv = h.row(g.edges[e].dst);
    const double* rs = s.r_src.row(static_cast<int>(e));
    const double* rd = s.r_dst.row(static_cast<int>(e));
    double sq = 0.0;
    for (int k = 0; k < s.stalk_dim; ++k) {
      double diff = rs[k] * hu[k] - rd[k] * hv[k];
      sq += diff * diff;
    }
    acc += w[e] * sq;
  }
  return 0.5 * acc;
}

inline Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
as_eigen(const Mat& m) {
  return {m.data.data(), m.rows, m.cols};
}

// Eigenvalues of the assembled Laplacian, ascending.
inline std::vector<double> dense_eigenvalues(const Sheaf& s, std::span<const double> w,
                                             int dense_cap = kDefaultDenseCap) {
  Mat L = assemble_dense_laplacian(s, w, dense_cap);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(as_eigen(L), Eigen::EigenvaluesOnly);
  std::vector<double> ev(solver.eigenvalues().data(),
                         solver.eigenvalues().data() + solver.eigenvalues().size());
  return ev;
}

// dim ker(L) = Nd - numerical rank, with rank counted as eigenvalues above
// rank_tol relative to the largest magnitude.
inline int kernel_dimension(const Sheaf& s, std::span<const double> w,
                            double rank_tol = kDefaultRankTol,
                            int dense_cap = kDefaultDenseCap) {
  std::vector<double> ev = dense_eigenvalues(s, w, dense_cap);
  double largest = 0.0;
  for (double x : ev) largest = std::max(largest, std::abs(x));
  if (largest == 0.0) return static_cast<int>(ev.size());
  int rank = 0;
  for (double x : ev)
    if (std::abs(x) > rank_tol * largest) ++rank;
  return static_cast<int>(ev.size()) - rank;
}

// JSON serialization aligned with the graph's stored edge order:
// {stalk_dim, r_src: [[...]], r_dst: [[...]]}
inline nlohmann::json sheaf_to_json(const Sheaf& s) {
  check_sheaf(s);
  nlohmann::json j;
  j["stalk_dim"] = s.stalk_dim;
  auto rows = [&](const Mat& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (int r = 0; r < m.rows; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
      arr.push_back(std::move(row));
    }
    return arr;
  };
  j["r_src"] = rows(s.r_src);
  j["r_dst"] = rows(s.r_dst);
  return j;
}

inline Sheaf sheaf_from_json(const Graph& g, const nlohmann::json& j) {
  if (!j.contains("stalk_dim") || !j.contains("r_src") || !j.contains("r_dst"))
    throw ConfigError("sheaf json: requires stalk_dim, r_src, r_dst");
  Sheaf s;
  s.graph = &g;
  s.stalk_dim = j.at("stalk_dim").get<int>();
  if (s.stalk_dim <= 0) throw ConfigError("sheaf json: stalk_dim must be positive");
  auto parse = [&](const nlohmann::json& arr) {
    if (arr.size() != g.edges.size())
      throw ConfigError("sheaf json: restriction rows must match edge count");
    Mat m(static_cast<int>(arr.size()), s.stalk_dim);
    for (size_t r = 0; r < arr.size(); ++r) {
      if (arr[r].size() != static_cast<size_t>(s.stalk_dim))
        throw ConfigError("sheaf json: restriction vector length must equal stalk_dim");
      for (int c = 0; c < s.stalk_dim; ++c) m(static_cast<int>(r), c) = arr[r][c].get<double>();
    }
    return m;
  };
  s.r_src = parse(j.at("r_src"));
  s.r_dst = parse(j.at("r_dst"));
  if (!all_finite(s.r_src.data) || !all_finite(s.r_dst.data))
    throw ConfigError("sheaf json: non-finite restriction entry");
  return s;
}

}  // namespace stsheaf
