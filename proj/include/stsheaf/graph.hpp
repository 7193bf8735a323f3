// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stsheaf/core.hpp"

namespace stsheaf {

struct Edge {
  int src = 0;
  int dst = 0;
};

// Undirected graph stored as an oriented edge list. Each undirected edge
// appears once, with the orientation of its first occurrence. Immutable
// after construction.
struct Graph {
  int num_nodes = 0;
  std::vector<Edge> edges;
  std::vector<int> degrees;
  double eps = 0.0;  // degree-smoothing constant for normalization weights
};

inline Graph make_graph(int num_nodes, const std::vector<Edge>& raw_edges, double eps = 0.0) {
  if (num_nodes <= 0) throw ConfigError("graph: num_nodes must be positive");
  if (eps < 0.0) throw ConfigError("graph: eps must be nonnegative");
  Graph g;
  g.num_nodes = num_nodes;
  g.eps = eps;
  g.degrees.assign(num_nodes, 0);
  std::set<std::pair<int, int>> seen;
  for (const Edge& e : raw_edges) {
    if (e.src < 0 || e.src >= num_nodes || e.dst < 0 || e.dst >= num_nodes)
      throw ConfigError("graph: edge index out of range: " + std::to_string(e.src) + "," +
                        std::to_string(e.dst));
    if (e.src == e.dst)
      throw ConfigError("graph: self-loop rejected at node " + std::to_string(e.src));
    auto key = std::minmax(e.src, e.dst);
    if (!seen.insert(key).second) continue;  // duplicate undirected edge: keep first orientation
    g.edges.push_back(e);
    g.degrees[e.src] += 1;
    g.degrees[e.dst] += 1;
  }
  return g;
}

// Parses "src,dst" or "src,dst,weight" lines; the weight column is ignored.
// A leading header line "src,dst[,weight]" is detected and skipped.
inline Graph load_edge_list(const std::string& path, int num_nodes, double eps = 0.0) {
  std::ifstream in(path);
  if (!in) throw ConfigError("graph: cannot open edge list file: " + path);
  std::vector<Edge> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip CR and surrounding whitespace
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;  // blank line
    line = line.substr(first);
    if (lineno == 1 && line.rfind("src", 0) == 0) continue;  // header
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    if (toks.size() != 2 && toks.size() != 3)
      throw ConfigError("graph: malformed line " + std::to_string(lineno) + ": '" + line + "'");
    Edge e;
    try {
      size_t pos = 0;
      e.src = std::stoi(toks[0], &pos);
      if (pos != toks[0].size()) throw std::invalid_argument("trailing");
      e.dst = std::stoi(toks[1], &pos);
      if (pos != toks[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("graph: malformed line " + std::to_string(lineno) + ": '" + line + "'");
    }
    if (e.src < 0 || e.src >= num_nodes || e.dst < 0 || e.dst >= num_nodes)
      throw ConfigError("graph: index out of range on line " + std::to_string(lineno));
    if (e.src == e.dst)
      throw ConfigError("graph: self-loop rejected on line " + std::to_string(lineno));
    edges.push_back(e);
  }
  return make_graph(num_nodes, edges, eps);
}

inline void save_edge_list(const std::string& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw ConfigError("graph: cannot write edge list file: " + path);
  out << "src,dst\n";
  for (const Edge& e : g.edges) out << e.src << "," << e.dst << "\n";
}

// Degree normalization per edge: w_e = ((deg(u)+eps)(deg(v)+eps))^(-1/2).
// With eps = 0 this is the plain symmetric degree normalization.
inline std::vector<double> edge_norm_weights(const Graph& g) {
  std::vector<double> w(g.edges.size());
  for (size_t i = 0; i < g.edges.size(); ++i) {
    double du = g.degrees[g.edges[i].src] + g.eps;
    double dv = g.degrees[g.edges[i].dst] + g.eps;
    if (du <= 0.0 || dv <= 0.0)
      throw NumericError("edge_norm_weights: zero degree with eps = 0");
    w[i] = 1.0 / std::sqrt(du * dv);
  }
  return w;
}

inline std::vector<double> unit_weights(const Graph& g) {
  return std::vector<double>(g.edges.size(), 1.0);
}

inline bool is_connected(const Graph& g) {
  if (g.num_nodes == 0) return false;
  std::vector<std::vector<int>> adj(g.num_nodes);
  for (const Edge& e : g.edges) {
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  std::vector<char> vis(g.num_nodes, 0);
  std::vector<int> stack{0};
  vis[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!vis[v]) {
        vis[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == g.num_nodes;
}

}  // namespace stsheaf
